"""Experiment harness: success probabilities, Max-Cut suites, scaling fits.

Success of a run means its energy matches the per-instance reference minimum
to a relative tolerance of 1e-9 (ten significant digits). The reference is by
default the lowest energy found by any of the methods run on that instance.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .baselines import BasinHoppingParams, LbfgsParams, basin_hopping, mc_multistart
from .dynamics import GdParams, run_gd, run_gd_batch
from .instances import EnsembleSpec, generate
from .model import TWO_PI, CouplingMatrix, FieldSpec, WeightedGraph, ising_from_maxcut, maxcut_value
from .records import RunRecord, write_records

ALGORITHMS = ("gd", "gd_mod", "mc", "bh")
SUCCESS_RTOL = 1e-9
# horizon for timing runs; dense N=800 instances settle near t = 17000
STATIONARY_T_MAX = 40_000.0


@dataclass(frozen=True)
class ExperimentSpec:
    """Success-probability experiment over an ensemble of random instances.

    ``runs`` maps algorithm -> runs per instance (GD seeds, MC starts or BH
    starts); algorithms missing from it use ``runs_per_instance``.
    """

    algorithms: tuple[str, ...] = ("gd", "bh", "mc")
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    n_instances: int = 20
    runs_per_instance: int = 100
    runs: Mapping[str, int] = field(default_factory=dict)
    reference_policy: str = "consensus"
    references: Mapping[str, float] = field(default_factory=dict)
    gd_params: GdParams = field(default_factory=GdParams)
    bh_params: BasinHoppingParams = field(default_factory=BasinHoppingParams)
    lbfgs_params: LbfgsParams = field(default_factory=LbfgsParams)
    rtol: float = SUCCESS_RTOL
    seed: int = 0
    jobs: int = 1
    output: str | None = None

    def __post_init__(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ValueError(f"unknown algorithms {bad}")
        if self.runs_per_instance < 1 or any(v < 1 for v in self.runs.values()):
            raise ValueError("runs per instance must be >= 1")
        if self.reference_policy not in ("consensus", "metadata"):
            raise ValueError("reference_policy must be 'consensus' or 'metadata'")
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")

    def n_runs(self, algorithm: str) -> int:
        return int(self.runs.get(algorithm, self.runs_per_instance))

    def instance_specs(self) -> list[tuple[str, EnsembleSpec]]:
        out = []
        for k in range(self.n_instances):
            spec = replace(self.ensemble, seed=self.ensemble.seed + k)
            out.append((f"{spec.kind}-n{spec.n}-s{spec.seed}", spec))
        return out


@dataclass
class SuccessStats:
    """Per-instance success probabilities for each method."""

    probabilities: dict[str, dict[str, float]]
    references: dict[str, float]
    best: dict[str, dict[str, float]]
    n_runs: dict[str, int]
    bins: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 11))
    errors: dict[str, str] = field(default_factory=dict)

    def mean(self, method: str) -> float:
        vals = list(self.probabilities[method].values())
        return float(np.mean(vals)) if vals else float("nan")

    def histogram(self, method: str) -> np.ndarray:
        vals = np.fromiter(self.probabilities[method].values(), float)
        counts, _ = np.histogram(vals, bins=self.bins)
        return counts

    def __eq__(self, other):
        if not isinstance(other, SuccessStats):
            return NotImplemented
        return (self.probabilities == other.probabilities and self.references == other.references
                and self.best == other.best and self.n_runs == other.n_runs)


def is_success(energy: float, reference: float, rtol: float = SUCCESS_RTOL) -> bool:
    return abs(energy - reference) <= rtol * abs(reference)


def _run_method(algorithm: str, J: CouplingMatrix, name: str, spec: ExperimentSpec, salt: int) -> list[RunRecord]:
    n_runs = spec.n_runs(algorithm)
    base = spec.seed * 1_000_003 + salt * 10_007
    if algorithm in ("gd", "gd_mod"):
        mode = "gain" if algorithm == "gd_mod" else "dissipative"
        return run_gd_batch(J, None, mode, spec.gd_params, [base + k for k in range(n_runs)], instance=name)
    recs = []
    for k in range(n_runs):
        s = base + k
        if algorithm == "mc":
            recs.append(mc_multistart(J, None, 1, spec.lbfgs_params, seed=s, instance=name))
        else:
            theta0 = np.random.default_rng([s, 1]).uniform(0.0, TWO_PI, J.n)
            recs.append(basin_hopping(J, None, theta0, replace(spec.bh_params, seed=s), spec.lbfgs_params,
                                      instance=name))
    return recs


def _unit(args):
    algorithm, name, ens, spec, salt = args
    J = generate(ens)
    return algorithm, name, _run_method(algorithm, J, name, spec, salt)


def run_experiment(spec: ExperimentSpec) -> tuple[SuccessStats, list[RunRecord]]:
    """Run every (instance, method) pair, fix the reference minima, score success.

    Units of work run in a process pool when ``spec.jobs > 1``; results are
    sorted before aggregation, so statistics do not depend on scheduling.
    """
    units = []
    for k, (name, ens) in enumerate(spec.instance_specs()):
        for a in spec.algorithms:
            units.append((a, name, ens, spec, k))
    results: dict[tuple[str, str], list[RunRecord]] = {}
    errors: dict[str, str] = {}
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futs = {pool.submit(_unit, u): u for u in units}
            for fut, u in futs.items():
                try:
                    a, name, recs = fut.result()
                    results[(name, a)] = recs
                except Exception as exc:  # noqa: BLE001 - reported per instance
                    errors[u[1]] = f"{type(exc).__name__}: {exc}"
    else:
        for u in units:
            try:
                a, name, recs = _unit(u)
                results[(name, a)] = recs
            except Exception as exc:  # noqa: BLE001
                errors[u[1]] = f"{type(exc).__name__}: {exc}"

    probs: dict[str, dict[str, float]] = {a: {} for a in spec.algorithms}
    best: dict[str, dict[str, float]] = {a: {} for a in spec.algorithms}
    refs: dict[str, float] = {}
    archive: list[RunRecord] = []
    for name, _ in spec.instance_specs():
        if name in errors:
            continue
        per = {a: results[(name, a)] for a in spec.algorithms}
        for a, recs in per.items():
            best[a][name] = min(r.best_energy for r in recs)
            archive.extend(recs)
        if spec.reference_policy == "metadata" and name in spec.references:
            ref = float(spec.references[name])
        else:
            ref = min(best[a][name] for a in spec.algorithms)
        refs[name] = ref
        for a, recs in per.items():
            probs[a][name] = sum(is_success(r.best_energy, ref, spec.rtol) for r in recs) / len(recs)
    stats = SuccessStats(probs, refs, best, {a: spec.n_runs(a) for a in spec.algorithms}, errors=errors)
    if spec.output:
        out = Path(spec.output)
        out.mkdir(parents=True, exist_ok=True)
        write_records(out / "runs.jsonl", archive)
        write_success_csv(stats, out / "success.csv")
        write_histogram_csv(stats, out / "success_hist.csv")
    return stats, archive


def write_success_csv(stats: SuccessStats, path) -> None:
    """Columns: method, instance, success_probability, n_runs, best_energy, reference_energy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "instance", "success_probability", "n_runs", "best_energy", "reference_energy"])
        for a in sorted(stats.probabilities):
            for name in sorted(stats.probabilities[a]):
                w.writerow([a, name, repr(stats.probabilities[a][name]), stats.n_runs[a],
                            repr(stats.best[a][name]), repr(stats.references[name])])


def write_histogram_csv(stats: SuccessStats, path) -> None:
    """Columns: method, bin_lo, bin_hi, count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "bin_lo", "bin_hi", "count"])
        for a in sorted(stats.probabilities):
            for lo, hi, c in zip(stats.bins[:-1], stats.bins[1:], stats.histogram(a)):
                w.writerow([a, f"{lo:.3g}", f"{hi:.3g}", int(c)])


# ---------------------------------------------------------------------------
# Max-Cut
# ---------------------------------------------------------------------------


@dataclass
class MaxcutResult:
    name: str
    n: int
    cuts: list[float]
    best_known: float | None
    records: list[RunRecord] = field(default_factory=list, repr=False)

    @property
    def best_cut(self) -> float:
        return max(self.cuts)

    @property
    def mean_cut(self) -> float:
        return float(np.mean(self.cuts))

    def deviation(self, cut: float) -> float | None:
        """Percentage shortfall of ``cut`` from the best-known value."""
        if not self.best_known:
            return None
        return 100.0 * (self.best_known - cut) / self.best_known

    @property
    def best_deviation(self) -> float | None:
        return self.deviation(self.best_cut)

    @property
    def mean_deviation(self) -> float | None:
        return self.deviation(self.mean_cut)


def ising_fields(J: CouplingMatrix, factor: float = 1.5) -> FieldSpec:
    """Constant q=2 resonant field ``h2 = factor * max_i sum_j |J_ij|``."""
    return FieldSpec.ising(J.n, factor * float(J.abs_row_sums().max()))


def run_maxcut_suite(graphs: Mapping[str, WeightedGraph], algorithm: str = "gd", *, runs: int = 20,
                     time_budget: float | None = None, metadata: Mapping[str, float] | None = None,
                     gd_params: GdParams | None = None, h2_factor: float = 1.5, seed: int = 0,
                     progress: Callable[[str, int, float], None] | None = None) -> list[MaxcutResult]:
    """Solve each graph's Max-Cut with GD (or GD-mod) through the Ising penalty.

    Each run is capped at ``time_budget`` seconds of wall time; a run stopped
    by the budget reports ``converged=False`` and the cut read out at that time.
    """
    if algorithm not in ("gd", "gd_mod"):
        raise ValueError("the Max-Cut suite runs 'gd' or 'gd_mod'")
    params = gd_params or GdParams()
    if time_budget is not None:
        params = replace(params, time_budget=time_budget)
    mode = "gain" if algorithm == "gd_mod" else "dissipative"
    metadata = metadata or {}
    out = []
    for name in sorted(graphs):
        g = graphs[name]
        J, _ = ising_from_maxcut(g)
        fields = ising_fields(J, h2_factor)
        recs, cuts = [], []
        for k in range(runs):
            rec = run_gd(J, fields, mode, replace(params, seed=seed + k), instance=name)
            cut = maxcut_value(g, rec.best_conf)
            rec.extras["cut"] = cut
            recs.append(rec)
            cuts.append(cut)
            if progress:
                progress(name, k, cut)
        out.append(MaxcutResult(name, g.n, cuts, metadata.get(name), recs))
    return out


def write_maxcut_csv(results: Sequence[MaxcutResult], path) -> None:
    """Columns: instance, n, runs, best_cut, mean_cut, best_known, best_dev_pct, mean_dev_pct."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "n", "runs", "best_cut", "mean_cut", "best_known", "best_dev_pct", "mean_dev_pct"])
        for r in results:
            w.writerow([r.name, r.n, len(r.cuts), r.best_cut, r.mean_cut,
                        "" if r.best_known is None else r.best_known,
                        "" if r.best_deviation is None else f"{r.best_deviation:.4f}",
                        "" if r.mean_deviation is None else f"{r.mean_deviation:.4f}"])


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------


@dataclass
class ScalingFit:
    """Least-squares line ``ln T = slope * ln N + intercept``."""

    algorithm: str
    sizes: list[int]
    times: list[float]
    slope: float
    intercept: float
    residuals: list[float]
    updates: list[float] = field(default_factory=list)
    converged: list[float] = field(default_factory=list)  # fraction of timed runs that reached stationarity

    def predict(self, n: float) -> float:
        return math.exp(self.intercept) * n ** self.slope


def fit_loglog(sizes: Sequence[float], times: Sequence[float]) -> tuple[float, float, np.ndarray]:
    x = np.log(np.asarray(sizes, float))
    y = np.log(np.asarray(times, float))
    if x.size < 2:
        raise ValueError("need at least two sizes")
    if np.any(np.diff(x) <= 0):
        raise ValueError("sizes must be strictly increasing")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept), y - (slope * x + intercept)


def _time_run(algorithm: str, J: CouplingMatrix, seed: int, gd_params: GdParams,
              bh_params: BasinHoppingParams, lbfgs_params: LbfgsParams) -> tuple[float, int, bool]:
    t0 = time.process_time()
    converged = True
    if algorithm in ("gd", "gd_mod"):
        rec = run_gd(J, None, "gain" if algorithm == "gd_mod" else "dissipative", replace(gd_params, seed=seed))
        updates, converged = rec.feedback_updates, rec.converged
    elif algorithm == "bh":
        theta0 = np.random.default_rng([seed, 1]).uniform(0.0, TWO_PI, J.n)
        basin_hopping(J, None, theta0, replace(bh_params, seed=seed), lbfgs_params)
        updates = 0
    else:
        mc_multistart(J, None, 1, lbfgs_params, seed=seed)
        updates = 0
    return time.process_time() - t0, updates, converged


def scaling_study(sizes: Sequence[int], algorithm: str = "gd", repeats: int = 3, *,
                  timer: Callable[[int, int], float] | None = None, gd_params: GdParams | None = None,
                  bh_params: BasinHoppingParams | None = None, lbfgs_params: LbfgsParams | None = None,
                  bound: float = 10.0, seed: int = 0) -> ScalingFit:
    """Mean process time per run versus problem size on dense instances.

    GD/GD-mod runs are timed to stationarity, so the default horizon is
    ``STATIONARY_T_MAX`` rather than the solver default; a BH run is ten hops.
    Runs are executed one at a time. ``timer(n, repeat)`` replaces the measurement
    (used to check the fit on synthetic data).
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ValueError("need at least two sizes")
    gd_params = gd_params or GdParams(t_max=STATIONARY_T_MAX)
    bh_params = bh_params or BasinHoppingParams(n_hops=10)
    lbfgs_params = lbfgs_params or LbfgsParams()
    times, updates, conv = [], [], []
    for n in sizes:
        ts, us, cs = [], [], []
        for r in range(repeats):
            if timer is not None:
                ts.append(float(timer(n, r)))
                continue
            J = generate(EnsembleSpec("dense", n, bound, seed=seed + 7919 * r + n))
            t, u, c = _time_run(algorithm, J, seed + r, gd_params, bh_params, lbfgs_params)
            ts.append(t)
            us.append(u)
            cs.append(c)
        times.append(float(np.mean(ts)))
        updates.append(float(np.mean(us)) if us else 0.0)
        conv.append(float(np.mean(cs)) if cs else 1.0)
    slope, intercept, res = fit_loglog(sizes, times)
    return ScalingFit(algorithm, sizes, times, slope, intercept, res.tolist(), updates, conv)


def write_scaling_csv(fits: Sequence[ScalingFit], path) -> None:
    """Columns: algorithm, n, time_s, mean_feedback_updates, converged_fraction, slope, intercept, residual."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "n", "time_s", "mean_feedback_updates", "converged_fraction", "slope",
                    "intercept", "residual"])
        for f in fits:
            ups = f.updates or [0.0] * len(f.sizes)
            conv = f.converged or [float("nan")] * len(f.sizes)
            for n, t, u, c, r in zip(f.sizes, f.times, ups, conv, f.residuals):
                w.writerow([f.algorithm, n, repr(t), repr(u), repr(c), repr(f.slope), repr(f.intercept), repr(r)])


# ---------------------------------------------------------------------------
# Hardware projection
# ---------------------------------------------------------------------------

FEEDBACK_LATENCY = 1e-4


def project_hw_time(record: RunRecord, feedback_latency: float = FEEDBACK_LATENCY) -> float:
    """Projected run time of a physical simulator: one latency per feedback update."""
    return record.feedback_updates * feedback_latency


def speedup_report(classical: ScalingFit, sizes: Sequence[float],
                   feedback_latency: float = FEEDBACK_LATENCY) -> list[dict[str, float]]:
    """Classical time per run versus projected hardware time, extrapolated to ``sizes``.

    The feedback-update count is extrapolated with its own power-law fit over
    the measured sizes.
    """
    if not classical.updates or min(classical.updates) <= 0:
        raise ValueError("the fit carries no feedback-update counts")
    us, ui, _ = fit_loglog(classical.sizes, classical.updates)
    rows = []
    for n in sizes:
        t_c = classical.predict(n)
        t_hw = math.exp(ui) * n ** us * feedback_latency
        rows.append({"n": float(n), "classical_s": t_c, "hardware_s": t_hw, "speedup": t_c / t_hw})
    return rows
