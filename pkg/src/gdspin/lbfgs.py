"""Limited-memory BFGS with a strong-Wolfe line search.

Plain (unbounded) L-BFGS: the objectives here are smooth and 2pi-periodic in
every coordinate, so box constraints would never be active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# relative size of f changes treated as rounding noise by the line search
_F_NOISE = 1e-12
_HZ_DELTA = 0.1

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class LbfgsParams:
    memory: int = 10
    max_iters: int = 2000
    grad_tol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.max_iters < 0 or self.grad_tol < 0:
            raise ValueError("max_iters and grad_tol must be non-negative")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iters: int
    converged: bool
    linesearch_failed: bool = False
    history: list | None = None


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating (a, fa, ga), (b, fb, gb); None if undefined."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (gb + d2 - d1) / denom
    return t if math.isfinite(t) else None


def strong_wolfe(fun: Objective, x, f0, g0, p, params: LbfgsParams, alpha0=1.0):
    """Bracketing/zoom line search (Nocedal & Wright, Alg. 3.5-3.6).

    Returns ``(alpha, f, g)`` or ``None`` if no acceptable step was found.
    Once a step changes ``f`` only at rounding level, the sufficient-decrease
    test is replaced by the approximate Wolfe test of Hager & Zhang (2005),
    which tolerates an increase of ``f`` at that rounding level.
    """
    dg0 = float(g0 @ p)
    if dg0 >= 0:
        return None
    c1, c2 = params.c1, params.c2
    f_noise = _F_NOISE * abs(f0)

    def approx_ok(fa, da):
        return abs(fa - f0) <= f_noise and c2 * dg0 <= da <= -(1.0 - 2.0 * _HZ_DELTA) * dg0

    def phi(a):
        f, g = fun(x + a * p)
        return f, g, float(g @ p)

    def zoom(lo, flo, dlo, hi, fhi, dhi, evals):
        while evals < params.max_linesearch:
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            span = hi_b - lo_b
            if a is None or not (lo_b + 0.1 * span <= a <= hi_b - 0.1 * span):
                a = 0.5 * (lo + hi)
            fa, ga, da = phi(a)
            evals += 1
            if approx_ok(fa, da):
                return a, fa, ga
            if fa > f0 + c1 * a * dg0 or fa >= flo:
                hi, fhi, dhi = a, fa, da
            else:
                if abs(da) <= -c2 * dg0:
                    return a, fa, ga
                if da * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, fa, da
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dg0
    a = alpha0
    for k in range(params.max_linesearch):
        fa, ga, da = phi(a)
        if not math.isfinite(fa):
            a = 0.5 * (a_prev + a)
            continue
        if approx_ok(fa, da):
            return a, fa, ga
        if fa > f0 + c1 * a * dg0 or (k > 0 and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da, k + 1)
        if abs(da) <= -c2 * dg0:
            return a, fa, ga
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev, k + 1)
        a_prev, f_prev, d_prev = a, fa, da
        a = 2.0 * a
    return None


def minimize(fun: Objective, x0, params: LbfgsParams | None = None, *, record: bool = False) -> LbfgsResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    Stops when the sup-norm of the gradient drops to ``grad_tol`` or after
    ``max_iters`` iterations. On line-search failure the best point so far is
    returned with ``linesearch_failed=True``.
    """
    params = params or LbfgsParams()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    history = [f] if record else None
    it = 0
    failed = False
    while np.max(np.abs(g)) > params.grad_tol and it < params.max_iters:
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            q /= max(1.0, float(np.max(np.abs(g))))
        for (s, y, r), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        p = -q
        ls = strong_wolfe(fun, x, f, g, p, params)
        if ls is None and s_hist:
            # retry along steepest descent with a fresh memory
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            p = -g / max(1.0, float(np.max(np.abs(g))))
            ls = strong_wolfe(fun, x, f, g, p, params)
        if ls is None:
            failed = True
            break
        alpha, f_new, g_new = ls
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        x = x + s
        f, g = f_new, g_new
        it += 1
        if record:
            history.append(f)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > params.memory:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
    converged = bool(np.max(np.abs(g)) <= params.grad_tol)
    return LbfgsResult(x, float(f), g, it, converged, failed, history)


def gradient_descent(fun: Objective, x0, params: LbfgsParams | None = None) -> LbfgsResult:
    """Steepest descent with the same line search; used only as a comparison point."""
    params = params or LbfgsParams()
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    it = 0
    alpha = 1.0
    while np.max(np.abs(g)) > params.grad_tol and it < params.max_iters:
        ls = strong_wolfe(fun, x, f, g, -g, params, alpha0=alpha)
        if ls is None:
            return LbfgsResult(x, f, g, it, False, True)
        alpha, f, g_new = ls
        x = x - alpha * g
        g = g_new
        it += 1
    return LbfgsResult(x, float(f), g, it, bool(np.max(np.abs(g)) <= params.grad_tol))
