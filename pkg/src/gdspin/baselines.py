"""Comparison optimisers: multistart Monte Carlo and basin hopping over L-BFGS."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import lbfgs
from .lbfgs import LbfgsParams
from .model import TWO_PI, DimensionError, SpinConfiguration, as_coupling, energy_and_gradient, xy_energy
from .records import RunRecord

__all__ = ["LbfgsParams", "BasinHoppingParams", "LocalMinimum", "lbfgs_minimize",
           "mc_multistart", "basin_hopping"]


@dataclass(frozen=True)
class BasinHoppingParams:
    n_hops: int = 10
    step_size: float = 1.0
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_hops < 1:
            raise ValueError("n_hops must be >= 1")
        if not self.step_size > 0 or not self.temperature > 0:
            raise ValueError("step_size and temperature must be positive")


class LocalMinimum(NamedTuple):
    conf: SpinConfiguration
    energy: float
    iters: int
    ok: bool


def _objective(J, g, field_sign):
    if g is not None:
        g = np.asarray(g, dtype=float).ravel()
        if g.size != J.n:
            raise DimensionError(f"field has length {g.size}, expected {J.n}")
    return lambda x: energy_and_gradient(J, x, g=g, field_sign=field_sign), g


def lbfgs_minimize(J, g, theta0, params: LbfgsParams | None = None, *,
                   field_sign: float = 1.0) -> LocalMinimum:
    """Local minimum of the XY energy reached by L-BFGS from ``theta0``.

    ``ok`` is False when the iteration cap was hit or the line search failed;
    the best point reached is still returned.
    """
    J = as_coupling(J)
    th0 = theta0.theta if isinstance(theta0, SpinConfiguration) else np.asarray(theta0, float).ravel()
    if th0.size != J.n:
        raise DimensionError(f"theta0 has {th0.size} entries, expected {J.n}")
    fun, g = _objective(J, g, field_sign)
    res = lbfgs.minimize(fun, th0, params)
    conf = SpinConfiguration(res.x)
    return LocalMinimum(conf, xy_energy(J, g, conf, field_sign=field_sign), res.iters,
                        res.converged and not res.linesearch_failed)


def mc_multistart(J, g, n_starts: int, lbfgs_params: LbfgsParams | None = None, seed: int = 0, *,
                  field_sign: float = 1.0, instance: str = "") -> RunRecord:
    """Best of ``n_starts`` L-BFGS descents from uniform random phases.

    Every descent's final energy is kept in ``extras["start_energies"]``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    J = as_coupling(J)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    best = None
    energies, total_iters, all_ok = [], 0, True
    for _ in range(n_starts):
        loc = lbfgs_minimize(J, g, rng.uniform(0.0, TWO_PI, J.n), lbfgs_params, field_sign=field_sign)
        energies.append(loc.energy)
        total_iters += loc.iters
        all_ok &= loc.ok
        if best is None or loc.energy < best.energy:
            best = loc
    return RunRecord(
        algorithm="mc",
        best_energy=best.energy,
        best_conf=best.conf,
        iterations=total_iters,
        converged=all_ok,
        seed=seed,
        instance=instance,
        wall_time=time.perf_counter() - t0,
        extras={"start_energies": energies},
    )


def basin_hopping(J, g, theta0, bh: BasinHoppingParams | None = None,
                  lbfgs_params: LbfgsParams | None = None, *, field_sign: float = 1.0,
                  instance: str = "") -> RunRecord:
    """Basin hopping: perturb, descend, accept by the Metropolis rule.

    The initial descent from ``theta0`` is followed by ``n_hops`` hops; each
    perturbs the currently accepted phases uniformly in ``[-step, step]``.
    The best minimum visited is returned.
    """
    bh = bh or BasinHoppingParams()
    J = as_coupling(J)
    rng = np.random.default_rng(bh.seed)
    t0 = time.perf_counter()
    cur = lbfgs_minimize(J, g, theta0, lbfgs_params, field_sign=field_sign)
    best = cur
    total_iters, all_ok = cur.iters, cur.ok
    accepted = 0
    accepted_energies = [cur.energy]
    for _ in range(bh.n_hops):
        trial = np.mod(cur.conf.theta + rng.uniform(-bh.step_size, bh.step_size, J.n), TWO_PI)
        loc = lbfgs_minimize(J, g, trial, lbfgs_params, field_sign=field_sign)
        total_iters += loc.iters
        all_ok &= loc.ok
        dh = loc.energy - cur.energy
        u = rng.uniform()
        if metropolis_accept(dh, bh.temperature, u):
            cur = loc
            accepted += 1
            accepted_energies.append(loc.energy)
        if loc.energy < best.energy:
            best = loc
    return RunRecord(
        algorithm="bh",
        best_energy=best.energy,
        best_conf=best.conf,
        iterations=total_iters,
        converged=all_ok,
        seed=bh.seed,
        instance=instance,
        wall_time=time.perf_counter() - t0,
        extras={"accepted": accepted, "n_hops": bh.n_hops, "accepted_energies": accepted_energies},
    )


def metropolis_accept(dh: float, temperature: float, u: float) -> bool:
    """Metropolis rule with a supplied uniform variate ``u`` in [0, 1)."""
    return dh <= 0 or u < math.exp(-dh / temperature)
