"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 diagnostic never activated,
4 divergence. Settings resolve as flags > ``--config`` file > defaults;
``SGDCONV_OUT`` and ``SGDCONV_WORKERS`` override the default output
directory and worker count.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, resample_points
from .diagnostic import default_burnin, run_pflug
from .errors import NumericError, UsageError
from .halving import HalvingConfig, run_sgd_half
from .manifest import RunManifest, now
from .model import LossModel
from .parallel import default_workers

EXIT_OK, EXIT_USAGE, EXIT_NO_ACTIVATION, EXIT_DIVERGED = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


# --- data resolution -------------------------------------------------------

def resolve_model(args):
    return LossModel.from_name(args.model)


def sim_spec(args, default_text: str = ""):
    from .harness.simulate import SimSpec

    text = args.simulate if args.simulate is not None else default_text
    overrides = {"model": "logistic" if args.model == "logistic" else "normal", "seed": args.seed}
    return SimSpec.parse(text, **overrides)


def load_data(args):
    """Return (training Dataset, theta_star or None, test Dataset or None, theta0 rng)."""
    from .harness.simulate import simulate_dataset

    if args.data is not None and args.simulate is not None:
        raise CliError("give either --data or --simulate, not both")
    if args.data is not None:
        from .harness.benchmark import load_benchmark

        bench = load_benchmark(args.data, args.format, args.label_rule, seed=args.seed)
        return bench.train, None, bench.test
    spec = sim_spec(args, "p=20,N=5000,sigma=3")
    data, truth = simulate_dataset(spec)
    return data, truth.theta_star, None


def start_point(args, data: Dataset, theta_star):
    if theta_star is None:
        return np.zeros(data.p)
    from .harness.simulate import draw_theta0

    spec = sim_spec(args, "p=20,N=5000,sigma=3")
    return draw_theta0(spec, np.random.default_rng([args.seed, 1]))


def test_error_fn(args, test):
    if test is None:
        return None
    from .harness.benchmark import holdout_error

    model = resolve_model(args)
    return lambda theta: holdout_error(model, theta, test)


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get("SGDCONV_OUT") or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- commands ---------------------------------------------------------------

def cmd_diagnose(args, out: Path):
    if not args.gamma > 0:
        raise CliError("--gamma must be positive")
    data, star, test = load_data(args)
    burnin = default_burnin(len(data)) if args.burnin is None else args.burnin
    cap = len(data) if args.max_iter is None else args.max_iter
    res = run_pflug(resolve_model(args), iter(data), args.gamma, burnin, theta0=start_point(args, data, star),
                    update=args.update, max_iterations=cap, theta_star=star, stride=args.stride,
                    test_error=test_error_fn(args, test))
    res.trace.write_csv(out / "trace.csv")
    if res.trace.diverged:
        print(f"diverged at iteration {res.trace.iterations}")
        code = EXIT_DIVERGED
    elif res.tau is None:
        print(f"no activation within {res.trace.iterations} iterations (S={res.S:.6g})")
        code = EXIT_NO_ACTIVATION
    else:
        print(f"tau={res.tau}")
        code = EXIT_OK
    return code, ["trace.csv"], {"burnin": burnin, "max_iter": cap}


def cmd_sgd_half(args, out: Path):
    if not args.gamma > 0:
        raise CliError("--gamma must be positive")
    data, star, test = load_data(args)
    burnin = default_burnin(len(data)) if args.burnin is None else args.burnin
    config = HalvingConfig(args.gamma, burnin, args.maxit, args.gamma_floor, args.update, args.halving_factor,
                           args.stride, args.seed)
    theta, ht = run_sgd_half(resolve_model(args), resample_points(data.X, data.y, args.seed), config,
                             theta0=start_point(args, data, star), theta_star=star,
                             test_error=test_error_fn(args, test))
    tr = ht.trace
    detected = {n for n, _ in ht.detections}
    cols = tr.columns()
    header = list(cols) + ["detection"]
    rows = [list(r) + [int(n in detected)] for n, r in zip(tr.n, zip(*cols.values()))]
    write_rows(out / "trace.csv", header, rows)
    result = {"theta": [float(v) for v in theta], "final_gamma": ht.final_gamma, "iterations": tr.iterations,
              "detections": [[n, g] for n, g in ht.detections], "cap_hit": ht.cap_hit, "diverged": tr.diverged}
    with open(out / "theta.json", "w") as fh:
        json.dump(result, fh, indent=1)
    print(f"detections={len(ht.detections)} final_gamma={ht.final_gamma:.6g} iterations={tr.iterations}"
          + (" cap_hit" if ht.cap_hit else "") + (" diverged" if tr.diverged else ""))
    return (EXIT_DIVERGED if tr.diverged else EXIT_OK), ["trace.csv", "theta.json"], {"burnin": burnin}


def cmd_region(args, out: Path):
    from .region import GridSpec, empirical_convergence_region, map_pflug_region

    if not args.gamma > 0:
        raise CliError("--gamma must be positive")
    grid = GridSpec.parse(args.grid)
    spec = sim_spec(args, "p=2,sigma=3")
    gen = spec.generator()
    model = resolve_model(args)
    region = empirical_convergence_region(model, gen, gen.theta_star, args.gamma, args.update, args.chains,
                                          args.steps, seed=args.seed, grid=grid)
    rmap = map_pflug_region(model, gen, grid, args.gamma, args.update, args.reps, args.seed,
                            occupancy_points=region.points)
    rmap.write_csv(out / "region.csv")
    region.write_csv(out / "region_overlay.csv")
    counts = {c: rmap.classes.count(c) for c in sorted(set(rmap.classes))}
    print(f"cells={len(rmap.classes)} " + " ".join(f"{k}={v}" for k, v in counts.items())
          + f" radius={region.radius:.4g}")
    return EXIT_OK, ["region.csv", "region_overlay.csv"], {}


def cmd_table1(args, out: Path):
    from .harness.table1 import TABLE1_GAMMAS, format_table, table1_experiment

    gammas = TABLE1_GAMMAS if args.gammas is None else tuple(float(g) for g in args.gammas.split(","))
    spec = sim_spec(args, "p=20,N=5000,sigma=3")
    rows = table1_experiment(gammas, args.runs, spec, args.seed, args.update, args.burnin, args.workers)
    write_rows(out / "table1_runs.csv", ["gamma", "tau", "E0", "E_half_tau", "E_two_tau", "extended"],
               [(r.gamma, r.tau, r.E0, r.E_half_tau, r.E_two_tau, r.extended) for row in rows for r in row.records])
    fits = []
    for row in rows:
        for which, fit in (("half_tau", row.fit_half), ("two_tau", row.fit_two)):
            if fit is None:
                fits.append((row.gamma, which, None, None, None, None, len(row.records), row.failures))
            else:
                k = fit.names.index("E0")
                fits.append((row.gamma, which, fit.coefficients[k], fit.std_errors[k], fit.t_stats[k],
                             fit.p_values[k], fit.n_obs, row.failures))
    write_rows(out / "table1_fits.csv", ["gamma", "response", "beta_E0", "std_err", "t", "p_value", "n_obs",
                                         "failures"], fits)
    print(format_table(rows))
    return EXIT_OK, ["table1_runs.csv", "table1_fits.csv"], {"gammas": list(gammas)}


def curve_rows(curves, extra=()):
    for r in curves.rows():
        yield list(extra) + [r["method"], r["seed"], r["passes"], r["value"], r["rate"]]


def parse_methods(text):
    from .harness.compare import METHODS

    methods = tuple(m.strip() for m in text.split(",")) if text else METHODS
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise CliError(f"unknown method(s) {bad}; choose from {METHODS}")
    return methods


def cmd_compare(args, out: Path):
    from .harness.compare import compare_methods
    from .harness.simulate import SimSpec

    methods = parse_methods(args.methods)
    if args.all_quadrants:
        quadrants = [(snr, p) for snr in (2.0, 5.0) for p in (10, 150)]
    else:
        quadrants = [(args.snr, args.p)]
    rows = []
    for snr, p in quadrants:
        spec = SimSpec(p=p, N=args.N, model="logistic" if args.model == "logistic" else "normal", snr=snr,
                       seed=args.seed)
        curves = compare_methods(spec, methods, args.passes, args.seeds, args.seed, workers=args.workers)
        rows.extend(curve_rows(curves, (args.model, snr, p)))
        for m in methods:
            print(f"snr={snr:g} p={p} {m}: rate={curves.rates[m]:g} "
                  f"median final error={np.nanmedian(curves.final(m)):.4g}")
    write_rows(out / "compare.csv", ["model", "snr", "p", "method", "seed", "passes", "sq_error", "rate"], rows)
    return EXIT_OK, ["compare.csv"], {"quadrants": quadrants}


def cmd_benchmark(args, out: Path):
    from .harness.benchmark import DEFAULT_RULES, benchmark_curves, load_benchmark

    if args.data is None:
        raise CliError("--data is required")
    rule = args.label_rule or DEFAULT_RULES.get(args.dataset or "", "binary")
    bench = load_benchmark(args.data, args.format, rule, args.seed, subsample=args.subsample)
    methods = parse_methods(args.methods)
    curves = benchmark_curves(bench, methods, args.passes, args.seeds, args.seed,
                              intercept=not args.no_intercept)
    write_rows(out / "benchmark.csv", ["method", "seed", "passes", "test_error", "rate"], curve_rows(curves))
    for m in methods:
        print(f"{m}: rate={curves.rates[m]:g} final test error={np.nanmedian(curves.final(m)):.4g}")
    return EXIT_OK, ["benchmark.csv"], {"label_rule": rule, "n_train": len(bench.train),
                                        "n_test": len(bench.test)}


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgdconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    def common(p, update, model="quadratic"):
        p.add_argument("--config", help="flat key=value file of defaults")
        p.add_argument("--model", choices=("quadratic", "logistic"), default=model)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory (default $SGDCONV_OUT or ./out)")
        p.add_argument("--implicit", dest="update", action="store_const", const="implicit", default=update)
        p.add_argument("--explicit", dest="update", action="store_const", const="explicit")
        p.add_argument("--workers", type=int, default=None)

    def data_flags(p):
        p.add_argument("--data", help="libsvm or CSV file")
        p.add_argument("--format", choices=("libsvm", "csv"))
        p.add_argument("--label-rule", default="binary")
        p.add_argument("--simulate", help="e.g. 'p=20,N=5000,sigma=3'")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", help="run the stationarity diagnostic")
    common(p, "explicit")
    data_flags(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--burnin", type=int)
    p.add_argument("--max-iter", type=int, help="iteration cap (default: one pass over the data)")
    p.add_argument("--stride", type=int, default=10)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sgd-half", help="SGD with rate halving on detection")
    common(p, "explicit")
    data_flags(p)
    p.add_argument("--gamma", type=float, help="initial rate")
    p.add_argument("--burnin", type=int)
    p.add_argument("--maxit", type=int)
    p.add_argument("--gamma-floor", type=float, default=1e-10)
    p.add_argument("--halving-factor", type=float, default=0.5)
    p.add_argument("--stride", type=int, default=10)
    p.set_defaults(func=cmd_sgd_half)

    p = sub.add_parser("region", help="drift sign map over a 2-D slice")
    common(p, "explicit")
    p.add_argument("--simulate", help="generator settings, default 'p=2,sigma=3'")
    p.add_argument("--grid", help="'i,j,min1,max1,min2,max2,res'")
    p.add_argument("--gamma", type=float)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--chains", type=int, default=200)
    p.add_argument("--steps", type=int, default=2000)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("table1", help="regression evaluation of the diagnostic")
    common(p, "implicit")
    p.add_argument("--simulate", help="default 'p=20,N=5000,sigma=3'")
    p.add_argument("--gammas", help="comma-separated rates")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--burnin", type=int)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("compare", help="ISGD^1/2 against baselines on simulated data")
    common(p, "implicit", "logistic")
    p.add_argument("--snr", type=float, default=5.0)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--N", type=int, default=5000)
    p.add_argument("--all-quadrants", action="store_true")
    p.add_argument("--passes", type=float, default=10)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--methods", help="comma-separated subset of the methods")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("benchmark", help="held-out error curves on a benchmark file")
    common(p, "implicit", "logistic")
    p.add_argument("--data")
    p.add_argument("--format", choices=("libsvm", "csv"))
    p.add_argument("--dataset", choices=("mnist", "covertype"), help="selects the default label rule")
    p.add_argument("--label-rule")
    p.add_argument("--subsample", type=int)
    p.add_argument("--passes", type=float, default=10)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--methods")
    p.add_argument("--no-intercept", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    return parser


REQUIRED = {"diagnose": ("gamma",), "sgd-half": ("gamma", "maxit"), "region": ("gamma", "grid")}
TRUE, FALSE = {"1", "true", "yes", "on"}, {"0", "false", "no", "off"}


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {}
        for a in sub._actions:
            for opt in a.option_strings:
                actions[opt.lstrip("-").replace("-", "_")] = a
        defaults = {}
        for key, value in read_config(args.config).items():
            a = actions.get(key)
            if a is None or a.dest in ("config", "help"):
                raise CliError(f"unknown config key {key!r} for {args.command}")
            if a.nargs == 0:
                v = value.lower()
                if v not in TRUE | FALSE:
                    raise CliError(f"config key {key!r} expects true/false")
                if v in TRUE:
                    defaults[a.dest] = a.const
            else:
                try:
                    defaults[a.dest] = value if a.type is None else a.type(value)
                except ValueError:
                    raise CliError(f"config key {key!r}: bad value {value!r}") from None
                if a.choices is not None and defaults[a.dest] not in a.choices:
                    raise CliError(f"config key {key!r}: {value!r} not in {list(a.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    for name in REQUIRED.get(args.command, ()):
        if getattr(args, name) is None:
            raise CliError(f"--{name.replace('_', '-')} is required")
    if args.workers is None:
        args.workers = default_workers()
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"sgdconv: error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:
        return int(exc.code or 0)
    out = None
    try:
        out = out_dir(args)
        manifest = RunManifest(args.command, {}, args.seed, version=__version__, argv=argv)
        code, outputs, extra = args.func(args, out)
    except (CliError, UsageError) as exc:
        print(f"sgdconv {args.command}: error: {exc}", file=sys.stderr)
        return getattr(exc, "code", EXIT_USAGE)
    except NumericError as exc:
        print(f"sgdconv {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config.update(extra)
    manifest.config = config
    manifest.outputs = outputs
    manifest.finished = now()
    manifest.exit_code = code
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
