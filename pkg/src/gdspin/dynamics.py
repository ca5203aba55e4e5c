"""Gain-dissipative (GD / GD-mod) dynamics.

Each site carries a complex amplitude ``psi_i`` obeying

    dpsi_i/dt = psi_i (gamma_i - gamma_c - |psi_i|^2) + sum_j Delta_ij K_ij psi_j
                + sum_q h_qi conj(psi_i)^(q-1) + D xi_i
    dgamma_i/dt = eps (rho_th - |psi_i|^2)

With ``mode="dissipative"`` Delta_ij = 1 and K = J. With ``mode="gain"``
(GD-mod) Delta_ij = gamma_i + gamma_j and the couplings follow
``dK_ij/dt = eps_hat (J_ij - Delta_ij K_ij)``.

Integration is classical RK4 on the drift; the noise sample of a step is
drawn once and added Euler-Maruyama style (``sqrt(dt)`` scaling), with its
amplitude switched off as a site reaches the threshold density. Several
noise seeds are integrated side by side as columns of one ``(n, B)`` array.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import lbfgs
from .model import (
    TWO_PI,
    CouplingMatrix,
    DimensionError,
    FieldSpec,
    SpinConfiguration,
    as_coupling,
    discretize,
    energy_and_gradient,
    generalized_energy,
)
from .records import RunRecord

_NOISE_CHUNK = 256


class CouplingMode(str, Enum):
    DISSIPATIVE = "dissipative"
    GAIN = "gain"


class IntegrationError(FloatingPointError):
    """The integration produced non-finite values (usually: dt too large)."""


@dataclass(frozen=True)
class GdParams:
    """Numerical parameters of a GD / GD-mod run.

    Couplings and fields are rescaled so that ``max_i sum_j |J_ij| = 1``
    inside the dynamics when ``normalize`` is set; energies are always
    reported in the caller's units. ``window`` is in dimensionless time.
    """

    gamma_c: float = 1.0
    rho_th: float = 0.05
    eps: float = 0.05
    eps_hat: float = 0.1
    noise_D: float = 0.05
    dt: float = 0.2
    t_max: float = 2000.0
    window: float = 50.0
    tol_rho: float = 1e-3
    tol_theta: float = 1e-4
    k_max: float | None = None
    seed: int = 0
    clamp_gain: bool = True
    normalize: bool = True
    polish: bool = True
    time_budget: float | None = None
    record_every: int = 0

    def __post_init__(self):
        for name in ("rho_th", "eps", "eps_hat", "dt", "t_max", "tol_rho", "tol_theta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma_c", "noise_D", "window"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.k_max is not None and not self.k_max > 0:
            raise ValueError("k_max must be positive")
        if self.time_budget is not None and self.time_budget < 0:
            raise ValueError("time_budget must be non-negative")


@dataclass
class OscillatorState:
    """Amplitudes, injection rates and (GD-mod) adjustable couplings.

    Arrays are 1-D of length n for a single run; the batched engine uses the
    same fields with a trailing batch axis.
    """

    psi: np.ndarray
    gamma_inj: np.ndarray
    K: np.ndarray | None = None
    t: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        return self.psi.real ** 2 + self.psi.imag ** 2

    @property
    def theta(self) -> np.ndarray:
        return np.mod(np.angle(self.psi), TWO_PI)

    @classmethod
    def vacuum(cls, n: int, J: CouplingMatrix | None = None, mode=CouplingMode.DISSIPATIVE):
        K = None
        if CouplingMode(mode) is CouplingMode.GAIN:
            K = np.array(J.to_dense(), dtype=float)
        return cls(np.zeros(n, complex), np.zeros(n), K, 0.0)


def effective_loss(fields: FieldSpec, params: GdParams) -> float:
    """Loss rate used by a run: ``gamma_c`` raised by the largest resonant-field push.

    A q:1 field adds up to ``|h_q| rho_th^(q/2-1)`` to the density balance, which
    would demand a negative injection rate at the fixed point. With the
    injection clamped at zero the shift keeps every balance reachable;
    ``fields`` must already be in scaled units.
    """
    if not params.clamp_gain:
        return params.gamma_c
    push = sum(float(np.max(np.abs(h), initial=0.0)) * params.rho_th ** (q / 2.0 - 1.0)
               for q, h in fields.terms.items())
    return params.gamma_c + push


def coupling_scale(J: CouplingMatrix, params: GdParams) -> float:
    """Factor applied to couplings and fields inside the dynamics."""
    if not params.normalize:
        return 1.0
    m = float(J.abs_row_sums().max()) if J.n else 0.0
    return 1.0 / m if m > 0 else 1.0


# ---------------------------------------------------------------------------
# Vector field
# ---------------------------------------------------------------------------


def _real_matmul(op, z: np.ndarray) -> np.ndarray:
    """``op @ z`` for a real operator and complex ``z`` without complex upcasting."""
    z = np.ascontiguousarray(z)
    out = op @ z.view(np.float64)
    return np.ascontiguousarray(out).view(np.complex128)


class _System:
    """Drift of the batched state ``(psi, gamma, K)``; psi and gamma are (n, B)."""

    def __init__(self, J: CouplingMatrix, fields: FieldSpec, mode, params: GdParams):
        self.J = J
        self.n = J.n
        self.mode = CouplingMode(mode)
        self.p = params
        self.op = J.operator
        self.sparse = J.storage == "sparse"
        self.fields = [(q, h[:, None]) for q, h in fields.terms.items() if np.any(h)]
        self.k_max = params.k_max if params.k_max is not None else 10.0 * max(J.max_abs, 1e-300)
        if self.mode is CouplingMode.GAIN:
            if self.sparse:
                csr = J.operator
                self.er = np.repeat(np.arange(self.n), np.diff(csr.indptr))
                self.ec = csr.indices.astype(np.int64)
                self.jv = csr.data.copy()
                E = self.jv.size
                self.incidence = sp.csr_matrix((np.ones(E), (self.er, np.arange(E))), shape=(self.n, E))
            else:
                self.jd = np.asarray(J.to_dense())

    # K layout: dense (B, n, n); sparse (E, B) over the stored CSR entries
    def init_K(self, B: int):
        if self.mode is CouplingMode.DISSIPATIVE:
            return None
        if self.sparse:
            return np.repeat(self.jv[:, None], B, axis=1)
        return np.repeat(self.jd[None, :, :], B, axis=0)

    def K_from_dense(self, K: np.ndarray):
        if self.sparse:
            return np.asarray(K, float)[self.er, self.ec][:, None].copy()
        return np.asarray(K, float)[None, :, :].copy()

    def K_to_dense(self, K, b: int = 0) -> np.ndarray:
        if self.sparse:
            out = np.zeros((self.n, self.n))
            out[self.er, self.ec] = K[:, b]
            return out
        return K[b].copy()

    def select_K(self, K, keep):
        if K is None:
            return None
        return K[:, keep] if self.sparse else K[keep]

    def coupling(self, psi, gamma, K):
        if self.mode is CouplingMode.DISSIPATIVE:
            return _real_matmul(self.op, psi)
        if self.sparse:
            delta = gamma[self.er] + gamma[self.ec]
            return self.incidence @ (delta * K * psi[self.ec])
        x = np.ascontiguousarray(psi.T)
        g = gamma.T
        both = np.stack([x, g * x], axis=-1)
        kz = np.matmul(K, both.view(np.float64)).view(np.complex128)
        return (g * kz[..., 0] + kz[..., 1]).T

    def drift(self, psi, gamma, K, rho=None):
        p = self.p
        if rho is None:
            rho = psi.real ** 2 + psi.imag ** 2
        dpsi = psi * (gamma - p.gamma_c - rho) + self.coupling(psi, gamma, K)
        if self.fields:
            conj = np.conj(psi)
            for q, h in self.fields:
                if q == 1:
                    dpsi = dpsi + h
                    continue
                w = conj
                for _ in range(q - 2):
                    w = w * conj
                dpsi = dpsi + h * w
        dgamma = p.eps * (p.rho_th - rho)
        dK = None
        if K is not None:
            if self.sparse:
                delta = gamma[self.er] + gamma[self.ec]
                dK = p.eps_hat * (self.jv[:, None] - delta * K)
            else:
                g = gamma.T
                delta = g[:, :, None] + g[:, None, :]
                dK = p.eps_hat * (self.jd[None] - delta * K)
        return dpsi, dgamma, dK

    def rk4(self, psi, gamma, K, dt):
        k1 = self.drift(psi, gamma, K)
        h = 0.5 * dt
        k2 = self.drift(psi + h * k1[0], gamma + h * k1[1], None if K is None else K + h * k1[2])
        k3 = self.drift(psi + h * k2[0], gamma + h * k2[1], None if K is None else K + h * k2[2])
        k4 = self.drift(psi + dt * k3[0], gamma + dt * k3[1], None if K is None else K + dt * k3[2])
        s = dt / 6.0
        psi_n = psi + s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        gamma_n = gamma + s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        K_n = None if K is None else K + s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        return psi_n, gamma_n, K_n

    def step(self, psi, gamma, K, xi, quiet=None):
        """One RK4 step plus noise; ``quiet`` marks sites whose noise is off."""
        p = self.p
        rho0 = psi.real ** 2 + psi.imag ** 2
        # overflow surfaces as IntegrationError in the callers
        with np.errstate(over="ignore", invalid="ignore"):
            psi_n, gamma_n, K_n = self.rk4(psi, gamma, K, p.dt)
        if xi is not None and p.noise_D > 0:
            amp = np.maximum(0.0, (p.rho_th - rho0) / p.rho_th)
            if quiet is not None:
                amp[quiet] = 0.0
            psi_n = psi_n + (p.noise_D * math.sqrt(p.dt)) * amp * xi
        if p.clamp_gain:
            np.maximum(gamma_n, 0.0, out=gamma_n)
        if K_n is not None:
            np.clip(K_n, -self.k_max, self.k_max, out=K_n)
        return psi_n, gamma_n, K_n


def _check_state(state: OscillatorState, n: int):
    if state.psi.shape != (n,) or state.gamma_inj.shape != (n,):
        raise DimensionError(f"state arrays must have shape ({n},)")
    if state.K is not None and state.K.shape != (n, n):
        raise DimensionError(f"K must have shape ({n}, {n})")


def _prepare(J, fields):
    J = as_coupling(J)
    fields = fields if fields is not None else FieldSpec()
    fields.check_size(J.n)
    return J, fields


def rhs(state: OscillatorState, J, fields: FieldSpec | None, mode, params: GdParams,
        noise_sample=None):
    """Time derivatives ``(dpsi, dgamma, dK)`` of a single state.

    Couplings are used exactly as given (no normalisation). ``noise_sample``
    enters as ``D * xi``; ``dK`` is None in dissipative mode.
    """
    J, fields = _prepare(J, fields)
    _check_state(state, J.n)
    sys_ = _System(J, fields, mode, params)
    K = None
    if sys_.mode is CouplingMode.GAIN:
        K = sys_.K_from_dense(state.K if state.K is not None else J.to_dense())
        if not sys_.sparse:
            K = K  # (1, n, n)
    dpsi, dgamma, dK = sys_.drift(state.psi[:, None].astype(complex), state.gamma_inj[:, None].astype(float), K)
    dpsi = dpsi[:, 0]
    if noise_sample is not None:
        xi = np.asarray(noise_sample, complex).ravel()
        if xi.size != J.n:
            raise DimensionError("noise sample has wrong length")
        dpsi = dpsi + params.noise_D * xi
    if dK is not None:
        dK = sys_.K_to_dense(dK)
    return dpsi, dgamma[:, 0], dK


def step_rk4(state: OscillatorState, J, fields: FieldSpec | None, mode, params: GdParams,
             noise_sample=None) -> OscillatorState:
    """Advance a single state by ``params.dt`` (couplings used as given)."""
    J, fields = _prepare(J, fields)
    _check_state(state, J.n)
    sys_ = _System(J, fields, mode, params)
    K = None
    if sys_.mode is CouplingMode.GAIN:
        K = sys_.K_from_dense(state.K if state.K is not None else J.to_dense())
    xi = None if noise_sample is None else np.asarray(noise_sample, complex).reshape(J.n, 1)
    psi, gamma, K = sys_.step(state.psi.reshape(J.n, 1).astype(complex),
                              state.gamma_inj.reshape(J.n, 1).astype(float), K, xi)
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(gamma))):
        raise IntegrationError(f"non-finite state at t={state.t + params.dt:g}; reduce dt (now {params.dt:g})")
    return OscillatorState(psi[:, 0], gamma[:, 0], None if K is None else sys_.K_to_dense(K),
                           state.t + params.dt)


def fixed_point_residual(state: OscillatorState, J, fields: FieldSpec | None, params: GdParams) -> float:
    """Largest deviation from the stationary density balance

    ``rho_th = gamma_i - gamma_c + sum_j J_ij cos(theta_ij) + sum_q h_qi rho_th^(q/2-1) cos(q theta_i)``.

    ``J`` and ``fields`` must be in the units the dynamics used (see
    :func:`coupling_scale`).
    """
    J, fields = _prepare(J, fields)
    th = np.angle(state.psi)
    c, s = np.cos(th), np.sin(th)
    op = J.operator
    bal = state.gamma_inj - params.gamma_c + c * (op @ c) + s * (op @ s)
    for q, h in fields.terms.items():
        bal = bal + h * params.rho_th ** (q / 2.0 - 1.0) * np.cos(q * th)
    return float(np.max(np.abs(params.rho_th - bal)))


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _warn_dt(sys_: _System, fields: FieldSpec, params: GdParams):
    rate = 2.0 * params.rho_th + params.gamma_c + float(sys_.J.abs_row_sums().max(initial=0.0))
    for q, h in fields.terms.items():
        rate += float(np.max(np.abs(h), initial=0.0)) * max(q - 1, 1) * params.rho_th ** (q / 2.0 - 1.0)
    # classical RK4 is stable on the negative real axis up to dt * rate ~ 2.79
    if params.dt * rate > 2.5:
        warnings.warn(f"dt={params.dt:g} is large compared with the fastest rate ~{rate:.3g}; "
                      "the integration may become unstable", RuntimeWarning, stacklevel=3)


def _readout(theta, J, fields, params, tag):
    if tag != "xy":
        return discretize(SpinConfiguration(theta), tag)
    if params.polish:
        fun = lambda x: energy_and_gradient(J, x, fields=fields, rho_th=params.rho_th)
        res = lbfgs.minimize(fun, theta, lbfgs.LbfgsParams(grad_tol=1e-9 * max(1.0, J.max_abs)))
        theta = res.x
    return SpinConfiguration(theta, "xy")


def run_gd_batch(J, fields: FieldSpec | None = None, mode="dissipative", params: GdParams | None = None,
                 seeds: Sequence[int] | None = None, *, instance: str = "",
                 on_sample: Callable | None = None) -> list[RunRecord]:
    """Integrate one GD / GD-mod run per seed, side by side.

    Every run starts from the vacuum (psi = 0, gamma = 0) and stops when it
    has been stationary for ``params.window`` time units, at ``t_max`` or
    when ``time_budget`` seconds of wall time have elapsed for the batch.
    Each seed owns its own noise stream.
    """
    params = params or GdParams()
    J, fields = _prepare(J, fields)
    seeds = [params.seed] if seeds is None else [int(s) for s in seeds]
    mode = CouplingMode(mode)
    algo = "gd_mod" if mode is CouplingMode.GAIN else "gd"
    scale = coupling_scale(J, params)
    Js, fs = J.scaled(scale), fields.scaled(scale)
    p = replace(params, gamma_c=effective_loss(fs, params))
    sys_ = _System(Js, fs, mode, p)
    _warn_dt(sys_, fs, p)
    tag = fields.model_tag
    n, B = J.n, len(seeds)

    psi = np.zeros((n, B), complex)
    gamma = np.zeros((n, B))
    # noise of a site stays off once its density has reached the threshold
    quiet = np.zeros((n, B), bool)
    K = sys_.init_K(B)
    rngs = [np.random.default_rng(s) for s in seeds]
    active = np.arange(B)
    since = np.full(B, np.nan)
    buf = None
    traj = [[] for _ in range(B)] if p.record_every > 0 else None
    out: list[RunRecord | None] = [None] * B
    t0 = time.perf_counter()
    step = 0
    max_steps = int(math.ceil(p.t_max / p.dt - 1e-9))

    def finish(j_local, converged):
        b = int(active[j_local])
        th = np.mod(np.angle(psi[:, j_local]), TWO_PI)
        conf = _readout(th, J, fields, p, tag)
        state = OscillatorState(psi[:, j_local].copy(), gamma[:, j_local].copy(),
                                None if K is None else sys_.K_to_dense(K, j_local), step * p.dt)
        out[b] = RunRecord(
            algorithm=algo,
            best_energy=generalized_energy(J, fields, p.rho_th, conf),
            best_conf=conf,
            iterations=step,
            converged=bool(converged),
            feedback_updates=step,
            seed=seeds[b],
            instance=instance,
            wall_time=time.perf_counter() - t0,
            trajectory=None if traj is None else traj[b],
            extras={"coupling_scale": scale, "gamma_c": p.gamma_c, "t_final": step * p.dt},
            final_state=state,
        )

    while active.size:
        k = step % _NOISE_CHUNK
        if k == 0 and p.noise_D > 0:
            buf = np.stack([_noise_block(rngs[b], n) for b in active], axis=-1)
        xi = None if buf is None else buf[k]
        psi_old = psi
        psi, gamma, K = sys_.step(psi, gamma, K, xi, quiet)
        step += 1
        t = step * p.dt

        rho = psi.real ** 2 + psi.imag ** 2
        quiet |= rho >= p.rho_th
        if step % 64 == 0 and not np.all(np.isfinite(rho)):
            raise IntegrationError(f"non-finite amplitudes at t={t:g}; reduce dt (now {p.dt:g})")
        dth = np.abs(np.angle(psi * np.conj(psi_old))) / p.dt
        ok = (np.max(np.abs(rho - p.rho_th), axis=0) < p.tol_rho * p.rho_th) & \
             (np.max(dth, axis=0) < p.tol_theta)
        cur = since[active]
        cur = np.where(ok, np.where(np.isnan(cur), t, cur), np.nan)
        since[active] = cur
        done = ok & (t - cur >= p.window - 1e-9)

        if traj is not None and step % p.record_every == 0:
            th = np.mod(np.angle(psi), TWO_PI)
            for j, b in enumerate(active):
                traj[b].append([t, rho[:, j].tolist(), th[:, j].tolist(), gamma[:, j].tolist()])
        if on_sample is not None:
            on_sample(t, rho, np.mod(np.angle(psi), TWO_PI), gamma)

        out_of_time = step >= max_steps or (
            p.time_budget is not None and step % 16 == 0 and time.perf_counter() - t0 >= p.time_budget)
        if out_of_time:
            if not np.all(np.isfinite(rho)):
                raise IntegrationError(f"non-finite amplitudes at t={t:g}; reduce dt (now {p.dt:g})")
            for j in range(active.size):
                finish(j, done[j])
            break
        if done.any():
            if not np.all(np.isfinite(rho)):
                raise IntegrationError(f"non-finite amplitudes at t={t:g}; reduce dt (now {p.dt:g})")
            for j in np.flatnonzero(done):
                finish(j, True)
            keep = ~done
            active = active[keep]
            psi = np.ascontiguousarray(psi[:, keep])
            gamma = np.ascontiguousarray(gamma[:, keep])
            quiet = np.ascontiguousarray(quiet[:, keep])
            K = sys_.select_K(K, keep)
            if buf is not None:
                buf = np.ascontiguousarray(buf[:, :, keep])
    return out


def _noise_block(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples for the next chunk of steps."""
    z = rng.standard_normal((_NOISE_CHUNK, n, 2))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


def run_gd(J, fields: FieldSpec | None = None, mode="dissipative", params: GdParams | None = None,
           on_sample: Callable | None = None, *, instance: str = "") -> RunRecord:
    """Single GD / GD-mod run with the noise stream keyed by ``params.seed``.

    ``on_sample(t, rho, theta, gamma)`` receives (n, 1) arrays after every step.
    """
    params = params or GdParams()
    return run_gd_batch(J, fields, mode, params, [params.seed], instance=instance, on_sample=on_sample)[0]


def with_seed(params: GdParams, seed: int) -> GdParams:
    return replace(params, seed=int(seed))
