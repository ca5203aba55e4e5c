"""Command-line entry point: ``gdspin solve | gen | bench``.

Exit codes: 0 success, 2 usage or input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BasinHoppingParams, basin_hopping, mc_multistart
from .bench import (
    ExperimentSpec,
    run_experiment,
    run_maxcut_suite,
    scaling_study,
    speedup_report,
    write_maxcut_csv,
    write_scaling_csv,
)
from .dynamics import GdParams, IntegrationError, run_gd, run_gd_batch
from .instances import (
    EnsembleSpec,
    GsetParseError,
    bundled_path,
    data_dir,
    find_gset,
    generate,
    graph_from_couplings,
    load_instance,
    load_metadata,
    matrix_to_json,
    parse_gset,
    write_gset,
)
from .model import TWO_PI, DimensionError, FieldSpec, maxcut_value, parse_model_tag, xy_energy

EXIT_OK, EXIT_INPUT, EXIT_ABORT = 0, 2, 3
HELP_WIDTH = 100


class InputError(Exception):
    """Bad instance, data path or flag combination (exit code 2)."""


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _model(text):
    try:
        parse_model_tag(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _name_list(text):
    vals = [t.strip() for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdspin", formatter_class=_formatter,
                                description="Gain-dissipative minimisation of XY, Ising and Potts Hamiltonians.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="{solve,gen,bench}")

    s = sub.add_parser("solve", formatter_class=_formatter, help="minimise one instance",
                       description="Minimise one instance with GD, GD-mod, multistart L-BFGS or basin hopping.")
    s.add_argument("--input", required=True, metavar="PATH|gen:KIND:N:SEED",
                   help="JSON matrix or G-Set file, or an ensemble recipe such as gen:dense:20:0")
    s.add_argument("--model", type=_model, default="xy", help="xy, ising or potts:<q> (default: xy)")
    s.add_argument("--algo", choices=("gd", "gd-mod", "mc", "bh"), default="gd", help="solver (default: gd)")
    s.add_argument("--seed", type=int, default=0, help="first seed (default: 0)")
    s.add_argument("--runs", type=_positive_int, default=1,
                   help="GD seeds, MC starts or BH starts (default: 1)")
    s.add_argument("--time-budget", type=_positive_float, default=None, metavar="SEC",
                   help="wall-time cap per GD run in seconds")
    s.add_argument("--h-factor", type=_positive_float, default=1.5,
                   help="resonant field strength in units of the largest absolute row sum (default: 1.5)")
    s.add_argument("--hops", type=_positive_int, default=10, help="basin-hopping hops per start (default: 10)")
    s.add_argument("--out", metavar="FILE", help="write records and summary as JSON")
    s.add_argument("--config", metavar="FILE", help="key=value file merged under explicit flags")

    g = sub.add_parser("gen", formatter_class=_formatter, help="generate a random instance",
                       description="Generate a random coupling matrix from one of the ensembles.")
    g.add_argument("--kind", choices=("dense", "sparse3"), required=True, help="ensemble")
    g.add_argument("--n", type=int, required=True, help="number of spins")
    g.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    g.add_argument("--bound", type=_positive_float, default=10.0, help="coupling bound (default: 10)")
    g.add_argument("--weight-rule", choices=("endpoints", "band"), default="endpoints",
                   help="sparse3 weight rule (default: endpoints)")
    g.add_argument("--format", choices=("json", "gset"), default="json",
                   help="json matrix, or G-Set with w = -J (default: json)")
    g.add_argument("--out", metavar="FILE", help="output file (default: stdout)")
    g.add_argument("--config", metavar="FILE", help="key=value file merged under explicit flags")

    b = sub.add_parser("bench", formatter_class=_formatter, help="run an experiment",
                       description="Success-probability, Max-Cut and scaling experiments writing CSV artifacts.")
    b.add_argument("--experiment", choices=("success", "maxcut", "scaling"), required=True, help="experiment")
    b.add_argument("--kind", choices=("dense", "sparse3"), default="dense", help="success: ensemble (default: dense)")
    b.add_argument("--n", type=int, default=20, help="success: number of spins (default: 20)")
    b.add_argument("--instances", default=None, metavar="K|NAMES",
                   help="success: instance count (default: 20); maxcut: comma-separated names (default: toy6)")
    b.add_argument("--algos", type=_name_list, default=["gd", "bh", "mc"], metavar="A,B",
                   help="success: methods among gd, gd_mod, mc, bh (default: gd,bh,mc)")
    b.add_argument("--algo", choices=("gd", "gd_mod", "mc", "bh"), default="gd",
                   help="maxcut/scaling: method (default: gd)")
    b.add_argument("--runs", type=_positive_int, default=None,
                   help="runs per instance (default: 100 success, 20 maxcut)")
    b.add_argument("--time-budget", type=_positive_float, default=None, metavar="SEC",
                   help="maxcut: wall-time cap per run")
    b.add_argument("--sizes", type=_int_list, default=[100, 200, 400, 800], metavar="N1,N2",
                   help="scaling: sizes (default: 100,200,400,800)")
    b.add_argument("--repeats", type=_positive_int, default=3, help="scaling: runs per size (default: 3)")
    b.add_argument("--synthetic-exponent", type=float, default=None, metavar="X",
                   help="scaling: replace timings by 1e-7 * N**X (harness check)")
    b.add_argument("--project-sizes", type=_int_list, default=[10000], metavar="N1,N2",
                   help="scaling: sizes for the hardware projection report (default: 10000)")
    b.add_argument("--data", metavar="DIR", help="G-Set directory (default: $GDSPIN_DATA)")
    b.add_argument("--metadata", metavar="FILE", help="best-known cut table (default: bundled)")
    b.add_argument("--seed", type=int, default=0, help="base seed (default: 0)")
    b.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default: 1)")
    b.add_argument("--out", metavar="DIR", help="artifact directory")
    b.add_argument("--config", metavar="FILE", help="key=value file merged under explicit flags")
    return p


# ---------------------------------------------------------------------------
# Config overlay
# ---------------------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, quotes around values are dropped."""
    out = {}
    for k, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {k}: expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = val.strip("'\"")
    return out


def _subparser(parser, command):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[command]
    raise KeyError(command)


def _config_path(argv):
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Install config values as subcommand defaults, so explicit flags win."""
    path = _config_path(argv)
    command = next((t for t in argv if t in ("solve", "gen", "bench")), None)
    if path is None or command is None:
        return
    sp = _subparser(parser, command)
    try:
        cfg = parse_config(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    for key, val in cfg.items():
        act = actions[key]
        try:
            conv = act.type(val) if act.type else val
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise InputError(f"config {key}: {exc}") from None
        if act.choices is not None and conv not in act.choices:
            raise InputError(f"config {key}: {val!r} not in {sorted(act.choices)}")
        act.required = False
        sp.set_defaults(**{key: conv})


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _load(spec: str):
    if spec.startswith("gen:"):
        parts = spec.split(":")
        if len(parts) != 4:
            raise InputError("generator input must look like gen:KIND:N:SEED")
        try:
            ens = EnsembleSpec(parts[1], int(parts[2]), seed=int(parts[3]))
        except ValueError as exc:
            raise InputError(f"bad generator input: {exc}") from None
        return generate(ens), FieldSpec(), None
    path = Path(spec)
    if not path.is_file() and path.name == spec:
        try:
            cand = bundled_path(spec)
            if cand.is_file():
                path = Path(str(cand))
        except (ModuleNotFoundError, FileNotFoundError):
            pass
    try:
        return load_instance(path)
    except FileNotFoundError:
        raise InputError(f"no such instance file: {spec}") from None
    except (GsetParseError, DimensionError, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot load {spec}: {exc}") from None


def _solve_fields(J, file_fields: FieldSpec, model: str, factor: float) -> FieldSpec:
    terms = {q: h for q, h in file_fields.terms.items() if q == 1}
    q = parse_model_tag(model)
    if q is not None:
        hq = factor * float(J.abs_row_sums().max())
        terms[q] = np.full(J.n, hq)
    return FieldSpec(terms)


def cmd_solve(args) -> int:
    J, file_fields, graph = _load(args.input)
    fields = _solve_fields(J, file_fields, args.model, args.h_factor)
    params = GdParams(seed=args.seed, time_budget=args.time_budget)
    seeds = list(range(args.seed, args.seed + args.runs))
    if args.algo in ("mc", "bh") and args.model != "xy":
        raise InputError("mc and bh minimise the continuous XY model only; use --model xy")
    g = fields.external_field(params.rho_th)
    if args.algo in ("gd", "gd-mod"):
        mode = "gain" if args.algo == "gd-mod" else "dissipative"
        if args.time_budget is None:
            recs = run_gd_batch(J, fields, mode, params, seeds, instance=args.input)
        else:
            recs = [run_gd(J, fields, mode, replace(params, seed=s), instance=args.input) for s in seeds]
    elif args.algo == "mc":
        recs = [mc_multistart(J, g, args.runs, seed=args.seed, instance=args.input)]
    else:
        recs = []
        for s in seeds:
            theta0 = np.random.default_rng([s, 1]).uniform(0.0, TWO_PI, J.n)
            recs.append(basin_hopping(J, g, theta0, BasinHoppingParams(n_hops=args.hops, seed=s),
                                      instance=args.input))
    best = min(recs, key=lambda r: (r.best_energy, r.seed))
    energy = xy_energy(J, g, best.best_conf)
    summary = {
        "input": args.input,
        "model": args.model,
        "algorithm": args.algo,
        "runs": args.runs,
        "best_seed": best.seed,
        "hamiltonian_energy": energy,
        "objective": best.best_energy,
        "converged": best.converged,
        "converged_runs": sum(r.converged for r in recs),
        "theta": best.best_conf.theta.tolist(),
    }
    print(f"algorithm      {args.algo} ({args.runs} run{'s' if args.runs > 1 else ''})")
    print(f"model          {args.model}  n={J.n}")
    print(f"best energy    {energy!r}")
    if not fields.empty and fields.model_tag != "xy":
        print(f"objective      {best.best_energy!r}  (with resonant-field terms)")
    print(f"converged      {best.converged}  ({summary['converged_runs']}/{len(recs)} runs)")
    print(f"best seed      {best.seed}")
    if args.model == "ising":
        spins = best.best_conf.spins()
        print("spins          " + "".join("+" if s > 0 else "-" for s in spins[:80]) + ("..." if J.n > 80 else ""))
        if graph is not None:
            cut = maxcut_value(graph, spins)
            summary["cut"] = cut
            print(f"cut value      {cut:g}")
    else:
        shown = " ".join(f"{t:.4f}" for t in best.best_conf.theta[:8])
        print(f"phases         {shown}{' ...' if J.n > 8 else ''}")
    if args.out:
        doc = {"summary": summary, "records": [r.to_dict() for r in recs]}
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        ens = EnsembleSpec(args.kind, args.n, args.bound, args.seed, args.weight_rule)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    J = generate(ens)
    text = matrix_to_json(J) + "\n" if args.format == "json" else write_gset(graph_from_couplings(J))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.kind} n={args.n} seed={args.seed} ({J.nnz_pairs} couplings) to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _bench_success(args) -> int:
    k = 20 if args.instances is None else args.instances
    try:
        k = int(k)
        spec = ExperimentSpec(algorithms=tuple(args.algos), ensemble=EnsembleSpec(args.kind, args.n, seed=args.seed),
                              n_instances=k, runs_per_instance=args.runs or 100, seed=args.seed,
                              jobs=args.jobs, output=args.out)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    stats, _ = run_experiment(spec)
    print(f"{'method':8s} {'mean':>8s} {'min':>8s} {'max':>8s}")
    for a in spec.algorithms:
        vals = list(stats.probabilities[a].values())
        if vals:
            print(f"{a:8s} {np.mean(vals):8.3f} {min(vals):8.3f} {max(vals):8.3f}")
    for name, err in stats.errors.items():
        print(f"instance {name} failed: {err}", file=sys.stderr)
    if args.out:
        print(f"artifacts in {args.out}")
    return EXIT_OK


def _bench_maxcut(args) -> int:
    names = _name_list(args.instances) if args.instances else ["toy6"]
    meta = load_metadata(args.metadata) if args.metadata else load_metadata()
    directory = data_dir(args.data)
    graphs = {}
    for name in names:
        path = find_gset(name, directory)
        if path is None and name == "toy6":
            path = Path(str(bundled_path("toy6.gset")))
        if path is None:
            hint = "pass --data DIR or set GDSPIN_DATA to the directory holding the G-Set files"
            where = f" in {directory}" if directory else ""
            raise InputError(f"instance {name} not found{where}; {hint}")
        try:
            graphs[name] = parse_gset(path.read_text())
        except GsetParseError as exc:
            raise InputError(f"{path}: {exc}") from None
    if args.algo not in ("gd", "gd_mod"):
        raise InputError("the maxcut experiment runs gd or gd_mod")
    results = run_maxcut_suite(graphs, args.algo, runs=args.runs or 20, time_budget=args.time_budget,
                               metadata=meta, seed=args.seed)
    print(f"{'instance':10s} {'n':>6s} {'best':>10s} {'mean':>12s} {'known':>10s} {'best dev %':>10s}")
    for r in results:
        dev = "" if r.best_deviation is None else f"{r.best_deviation:.3f}"
        known = "" if r.best_known is None else f"{r.best_known:g}"
        print(f"{r.name:10s} {r.n:6d} {r.best_cut:10g} {r.mean_cut:12.2f} {known:>10s} {dev:>10s}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_maxcut_csv(results, Path(args.out) / "maxcut.csv")
    return EXIT_OK


def _bench_scaling(args) -> int:
    timer = None
    if args.synthetic_exponent is not None:
        x = args.synthetic_exponent
        timer = lambda n, r: 1e-7 * n ** x  # noqa: E731
    try:
        fit = scaling_study(args.sizes, args.algo, args.repeats, timer=timer, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    print(f"{'n':>6s} {'time per run [s]':>18s} {'converged':>10s}")
    for n, t, c in zip(fit.sizes, fit.times, fit.converged):
        print(f"{n:6d} {t:18.6g} {c:10.2f}")
    print(f"fit: ln T = {fit.slope:.4f} ln N {fit.intercept:+.4f}")
    if fit.updates and min(fit.updates) > 0:
        print("hardware projection (0.1 ms per feedback update):")
        for row in speedup_report(fit, args.project_sizes):
            print(f"  N={row['n']:.0f}: classical {row['classical_s']:.3g} s, "
                  f"hardware {row['hardware_s']:.3g} s, speed-up {row['speedup']:.3g}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_scaling_csv([fit], Path(args.out) / "scaling.csv")
    return EXIT_OK


def cmd_bench(args) -> int:
    return {"success": _bench_success, "maxcut": _bench_maxcut, "scaling": _bench_scaling}[args.experiment](args)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _apply_config(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        handler = {"solve": cmd_solve, "gen": cmd_gen, "bench": cmd_bench}[args.command]
        return handler(args)
    except InputError as exc:
        print(f"gdspin: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, FloatingPointError) as exc:
        print(f"gdspin: numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
