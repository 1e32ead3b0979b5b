"""Command-line entry point.

Exit codes: 0 success, 2 usage, 3 data, 4 convergence, 5 degenerate model.
"""

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from ._random import GENERATOR_NAME, make_rng
from .errors import (
    DegenerateModelError,
    DomainError,
    EmptyDataError,
    InfeasibleSupportError,
    InsufficientDataError,
    NonConvergenceError,
    ParseError,
)
from .genprocess import (
    STUDY_COLUMNS,
    CrpConfig,
    generate_model_truth,
    run_study,
    simulate_attachment,
    simulate_reports,
)
from .io import atomic_write, dumps, file_digest, histogram_csv, parse_histogram
from .mle import FitConfig, bootstrap, fit
from .nmixture import ModelParams
from .powerlaw import loglog_points, loglog_slope
from .prevalence import estimate_prevalence

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE, EXIT_DEGENERATE = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _settings(text):
    out = []
    for item in text.split(","):
        try:
            s, p = item.split(":")
            out.append((float(s), float(p)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected s:p pairs, got {item!r}")
    return out


def _model_params(s, n_max, p):
    try:
        return ModelParams.of(s, n_max, p)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _manifest(command, argv, config, seed, input_path=None):
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "input_sha256": file_digest(input_path) if input_path else None,
        "tool_version": __version__,
        "generator": GENERATOR_NAME,
    }


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _sidecar(path, manifest):
    atomic_write(Path(str(path) + ".manifest.json"), dumps(manifest))


def cmd_fit(args, argv):
    if args.boot > 0 and args.seed is None:
        raise UsageError("--boot requires --seed")
    hist = parse_histogram(args.input)
    config = FitConfig(
        n_max_grid=args.nmax_grid or None,
        n_max_ceiling=args.nmax_ceiling,
        multistart_points=args.multistart,
        truncated=not args.no_truncation,
    )
    try:
        result = fit(hist, config)
    except NonConvergenceError as exc:
        doc = {"schema_version": SCHEMA_VERSION, "error": str(exc)}
        if exc.best is not None:
            doc["fit"] = exc.best.to_dict()
        _emit(dumps(doc), args.output)
        raise
    prev = estimate_prevalence(hist, result) if result.converged else None
    doc = {
        "schema_version": SCHEMA_VERSION,
        "fit": result.to_dict(),
        "prevalence": prev.to_dict() if prev else None,
    }
    if args.boot > 0 and result.converged:
        boot_config = replace(config, multistart_points=args.boot_multistart)
        boot = bootstrap(
            hist, result, boot_config, B=args.boot, seed=args.seed, level=args.level,
            workers=args.workers,
        )
        doc["bootstrap"] = boot.to_dict()
    doc["manifest"] = _manifest(
        "fit", argv, dict(config.to_dict(), boot=args.boot, boot_multistart=args.boot_multistart,
                           level=args.level), args.seed, args.input
    )
    _emit(dumps(doc), args.output)
    summary = f"s={result.s:.4g} p={result.p:.4g} n_max={result.n_max}"
    if prev:
        summary += f" P(K=0)={prev.p_zero:.4g} O={prev.o_hat:,.0f} T={prev.t_hat:,.0f} R={prev.r}"
    print(summary, file=sys.stderr)
    return EXIT_OK if result.converged else EXIT_CONVERGENCE


def cmd_simulate(args, argv):
    if args.kind == "attachment":
        truth = simulate_attachment(CrpConfig(args.q, args.steps), args.seed)
        config = {"kind": "attachment", "q": args.q, "steps": args.steps, "p": args.p}
    else:
        params = _model_params(args.s, args.nmax, args.p)
        truth = generate_model_truth(params, args.offenders, make_rng(args.seed, 0))
        config = {"kind": "model", "s": args.s, "n_max": args.nmax, "p": args.p,
                  "offenders": args.offenders}
    hist, zero_count = simulate_reports(truth, args.p, make_rng(args.seed, 1))
    manifest = _manifest("simulate", argv, config, args.seed)
    atomic_write(args.output, histogram_csv(hist))
    _sidecar(args.output, manifest)
    if args.loglog:
        atomic_write(args.loglog, _loglog_csv(hist))
    summary = dict(truth.summary(), zero_count=zero_count, R=hist.R, M=hist.M, manifest=manifest)
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def _loglog_csv(hist):
    x, y = loglog_points(hist)
    lines = ["log_value,log_count"] + [f"{a!r},{b!r}" for a, b in zip(x.tolist(), y.tolist())]
    return "\n".join(lines) + "\n"


def cmd_loglog(args, argv):
    hist = parse_histogram(args.input)
    line = loglog_slope(hist)
    doc = {"schema_version": SCHEMA_VERSION, **line._asdict()}
    if args.output:
        atomic_write(args.output, _loglog_csv(hist))
    else:
        x, y = loglog_points(hist)
        doc["points"] = [[a, b] for a, b in zip(x.tolist(), y.tolist())]
    doc["manifest"] = _manifest("loglog", argv, {}, None, args.input)
    sys.stdout.write(dumps(doc))
    return EXIT_OK


def _study_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STUDY_COLUMNS)
    for row in rows:
        d = row.to_dict()
        writer.writerow(
            [repr(d[c]) if isinstance(d[c], float) else d[c] for c in STUDY_COLUMNS[:-1]]
            + ["true" if row.converged else "false"]
        )
    return buf.getvalue()


def cmd_study(args, argv):
    config = FitConfig(n_max_grid=args.nmax_grid or None, multistart_points=args.multistart)
    for s, p in args.settings:
        _model_params(s, args.nmax, p)
    rows = run_study(
        args.settings, args.nmax, args.offenders, args.replicas, args.seed, config,
        workers=args.workers,
    )
    atomic_write(args.output, _study_csv(rows))
    manifest = _manifest(
        "study", argv,
        dict(config.to_dict(), settings=args.settings, n_max=args.nmax,
             offenders=args.offenders, replicas=args.replicas),
        args.seed,
    )
    _sidecar(args.output, manifest)
    failed = sum(not r.converged for r in rows)
    print(f"{len(rows)} rows, {failed} not converged", file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nmixprev", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a report histogram and estimate prevalence")
    f.add_argument("--input", required=True)
    f.add_argument("--nmax-grid", type=_int_list, default=None)
    f.add_argument("--nmax-ceiling", type=int, default=50_000)
    f.add_argument("--multistart", type=int, default=8)
    f.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 = off)")
    f.add_argument("--boot-multistart", type=int, default=0,
                   help="lattice starts per bootstrap refit, besides the fitted point")
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--workers", type=int, default=1)
    f.add_argument("--no-truncation", action="store_true",
                   help="use the untruncated likelihood sum k_i log f(i)")
    f.add_argument("--output", default=None)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a report histogram")
    s.add_argument("kind", choices=("attachment", "model"))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", required=True, help="histogram CSV path")
    s.add_argument("--loglog", default=None, help="optional log-log points CSV path")
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--steps", type=int, default=20_000)
    s.add_argument("--s", type=float, default=2.5)
    s.add_argument("--nmax", type=int, default=2_000)
    s.add_argument("--offenders", type=int, default=50_000)
    s.add_argument("--p", type=float, default=None,
                   help="reporting rate (default 1 for attachment, 0.1 for model)")
    s.set_defaults(func=cmd_simulate)

    st = sub.add_parser("study", help="parameter-recovery study")
    st.add_argument("--settings", type=_settings, required=True, help="e.g. 2.5:0.05,2.5:0.1")
    st.add_argument("--nmax", type=int, default=2_000)
    st.add_argument("--offenders", type=int, default=50_000)
    st.add_argument("--replicas", type=int, default=10)
    st.add_argument("--seed", type=int, required=True)
    st.add_argument("--nmax-grid", type=_int_list, default=None)
    st.add_argument("--multistart", type=int, default=8)
    st.add_argument("--workers", type=int, default=1)
    st.add_argument("--output", required=True)
    st.set_defaults(func=cmd_study)

    ll = sub.add_parser("loglog", help="log-log points and OLS slope of a histogram")
    ll.add_argument("--input", required=True)
    ll.add_argument("--output", default=None)
    ll.set_defaults(func=cmd_loglog)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "kind", None) is not None and args.p is None:
        args.p = 1.0 if args.kind == "attachment" else 0.1
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateModelError as exc:
        print(f"degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NonConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ParseError, EmptyDataError, DomainError, InfeasibleSupportError,
            InsufficientDataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
