"""Command-line front end: ``cpop detect | crops | simulate | estimate``.

Tables are read and written as CSV with a header row; fitted models are
written as JSON documents.  Floats are written with ``repr`` so every value
reads back to the identical double.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .crops import crops_run
from .diagnostics import (
    bic_score,
    elbow_table,
    estimate_variance_ddiff,
    fit_loglinear_variance,
    fitted_table,
    select_bic,
)
from .model import (
    CpopError,
    DataSeries,
    Grid,
    InternalError,
    Segmentation,
    SolverConfig,
    default_beta,
    evaluate_fit,
    residuals,
)
from .simulate import SlopeSpec, mean_function, simulate_y
from .solver import solve

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

logger = logging.getLogger("cpop")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- csv io


def _num(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r}")
    return value


def read_table(path: str, required=("x", "y"), optional=("sd",)) -> dict[str, np.ndarray]:
    """Read numeric columns by header name; line numbers in errors are 1-based."""
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
    wanted = [c for c in (*required, *optional) if c in header]
    cols = {c: [] for c in wanted}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        for c in wanted:
            cols[c].append(_num(row[header.index(c)].strip(), f"{path}: line {lineno}: column {c}"))
    return {c: np.array(v, dtype=float) for c, v in cols.items()}


def read_column(path: str) -> np.ndarray:
    """First column of a headed CSV."""
    try:
        rows = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if row and row[0].strip():
            out.append(_num(row[0].strip(), f"{path}: line {lineno}"))
    return np.array(out, dtype=float)


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path: str, header, columns) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    _write_text(path, buf.getvalue())


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8")


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


def _parse_list(text: str, name: str) -> np.ndarray:
    if text is None or text.strip() == "":
        return np.zeros(0)
    try:
        return np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"--{name}: expected a comma-separated list of numbers, got {text!r}") from None


# --------------------------------------------------------------- documents


def segmentation_doc(seg: Segmentation, series: DataSeries) -> dict:
    rows = fitted_table(seg, series)
    return {
        "changepoints": _floats(seg.changepoints),
        "knots": [[float(x), float(y)] for x, y in seg.knots],
        "segments": [
            {
                "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1,
                "gradient": r.gradient, "intercept": r.intercept, "RSS": r.rss,
            }
            for r in rows
        ],
        "rss": float(seg.rss),
        "cost": float(seg.cost),
    }


def result_document(result, series: DataSeries, config_echo: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "cpop", "n": series.n}
    doc["config"] = config_echo | {"beta": float(result.beta)}
    doc.update(segmentation_doc(result.segmentation, series))
    doc["approximate"] = bool(result.approximate)
    return doc


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def load_segmentation(path: str) -> Segmentation:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: malformed document: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path}: not a version {SCHEMA_VERSION} result document")
    if doc.get("kind") == "crops":
        doc = doc.get("selected")
        if not isinstance(doc, dict):
            raise DataError(f"{path}: path document has no selected model")
    try:
        knots = np.array(doc["knots"], dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 2:
            raise ValueError
        if not np.all(np.isfinite(knots)) or np.any(np.diff(knots[:, 0]) <= 0):
            raise ValueError
        cps = np.array(doc.get("changepoints", knots[1:-1, 0]), dtype=float)
    except (KeyError, TypeError, ValueError):
        raise DataError(f"{path}: malformed document: bad or missing knots") from None
    return Segmentation(cps, knots, float(doc.get("cost", np.nan)), float(doc.get("rss", np.nan)))


# ------------------------------------------------------------------ inputs


def load_series(args) -> DataSeries:
    want_sd_column = args.sd == "column"
    table = read_table(args.input)
    if want_sd_column:
        if "sd" not in table:
            raise DataError(f"{args.input}: sd column missing")
        sd = table["sd"]
    elif args.sd == "ddiff":
        sd = 1.0
    else:
        try:
            sd = float(args.sd)
        except ValueError:
            raise UsageError(f"--sd: expected a number, 'column' or 'ddiff', got {args.sd!r}") from None
    series = DataSeries(table["x"], table["y"], sd)
    if args.sd == "ddiff":
        var = estimate_variance_ddiff(series)
        if var <= 0:
            raise DataError("double-difference variance estimate is zero; give --sd explicitly")
        series = DataSeries(series.x, series.y, math.sqrt(var))
    return series


def parse_grid(spec: str, series: DataSeries) -> Grid | None:
    if spec == "data":
        return None
    if spec.startswith("even:"):
        try:
            size = int(spec[5:])
        except ValueError:
            raise UsageError(f"--grid: bad size in {spec!r}") from None
        if size < 2:
            raise UsageError("--grid: even:N needs N >= 2")
        return Grid.even(series, size)
    return Grid(np.unique(read_column(spec)))


def refine_grid(series: DataSeries, changepoints, radius: float) -> Grid | None:
    """Data locations within ``radius`` of any of ``changepoints``."""
    if len(changepoints) == 0:
        return Grid(series.x[[0, -1]])
    near = np.abs(series.x[:, None] - np.asarray(changepoints)[None, :]).min(axis=1) <= radius
    return Grid(series.x[near | (np.arange(series.n) == 0) | (np.arange(series.n) == series.n - 1)])


def _config_echo(args, series) -> dict:
    return {
        "minseglen": float(args.minseglen),
        "prune_approx": bool(args.prune_approx),
        "grid": args.grid,
        "refine_radius": None if args.refine_radius is None else float(args.refine_radius),
        "sd": args.sd if args.sd in ("column", "ddiff") else float(args.sd),
        "sd_value": float(series.sd[0]) if args.sd == "ddiff" else None,
    }


def _summary(result, series: DataSeries, out) -> None:
    seg = result.segmentation
    rows = fitted_table(seg, series)
    cps = ", ".join(f"{c:g}" for c in seg.changepoints) or "none"
    print(f"n = {series.n}", file=out)
    print(f"penalty (beta) = {result.beta:.7g}", file=out)
    print(f"changepoints: {seg.n_changepoints} ({cps})", file=out)
    print(f"{'x0':>12} {'y0':>12} {'x1':>12} {'y1':>12} {'gradient':>12} {'intercept':>12} {'RSS':>12}", file=out)
    for r in rows:
        print(" ".join(f"{v:12.6g}" for v in (r.x0, r.y0, r.x1, r.y1, r.gradient, r.intercept, r.rss)), file=out)
    print(f"overall RSS = {seg.rss:.7g}", file=out)
    print(f"cost = {seg.cost:.7g}", file=out)


# ---------------------------------------------------------------- commands


def cmd_detect(args) -> int:
    series = load_series(args)
    if args.beta is not None and not args.beta > 0:
        raise UsageError("--beta must be positive")
    beta = default_beta(series.n) if args.beta is None else args.beta
    config = SolverConfig(beta=beta, minseglen=args.minseglen, prune_approx=args.prune_approx)
    grid = parse_grid(args.grid, series)
    result = solve(series, grid, config)
    if args.refine_radius is not None:
        fine = refine_grid(series, result.changepoints, args.refine_radius)
        result = solve(series, fine, config)

    doc = result_document(result, series, _config_echo(args, series))
    human = sys.stderr if args.out == "-" else sys.stdout
    if not args.quiet:
        _summary(result, series, human)
    if args.fit_out:
        fitted = evaluate_fit(result.segmentation, series.x)
        write_csv(args.fit_out, ["x", "y", "fitted", "residual"],
                  [series.x, series.y, fitted, series.y - fitted])
    if args.variance_out:
        r = residuals(result.segmentation, series)
        model = fit_loglinear_variance(r, series.x)
        write_csv(args.variance_out, ["x", "y", "sd"], [series.x, series.y, np.sqrt(model(series.x))])
        logger.info("log-linear variance fit: a = %.6g, b = %.6g", model.a, model.b)
    _write_text(args.out, dump_document(doc))
    return EXIT_OK


def cmd_crops(args) -> int:
    series = load_series(args)
    grid = parse_grid(args.grid, series)
    lo = 1.5 * math.log(series.n) if args.beta_min is None else args.beta_min
    hi = 2.5 * math.log(series.n) if args.beta_max is None else args.beta_max
    if not (lo > 0 and lo <= hi):
        raise UsageError(f"invalid penalty range: [{lo}, {hi}]")
    path = crops_run(series, grid, lo, hi, minseglen=args.minseglen, prune_approx=args.prune_approx)

    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "crops",
        "n": series.n,
        "config": _config_echo(args, series) | {"beta_min": float(lo), "beta_max": float(hi)},
        "solver_calls": path.solver_calls,
        "records": [
            {
                "beta": rec.beta, "Qm": rec.Qm, "penalised_cost": rec.penalised_cost,
                "m": rec.m, "changepoints": list(rec.changepoints),
            }
            for rec in path.records
        ],
    }
    human = sys.stderr if args.out == "-" else sys.stdout
    if not args.quiet:
        print(f"{len(path.records)} segmentations for beta in [{lo:.7g}, {hi:.7g}]", file=human)
        for rec in path.records:
            print(f"  beta = {rec.beta:<12.7g} m = {rec.m:<4d} Qm = {rec.Qm:.7g}", file=human)
    if args.select == "bic":
        best, scores = select_bic(path, series)
        for rec, score in zip(doc["records"], scores):
            rec["bic"] = None if math.isinf(score) else float(score)
        model = path.models[best]
        sel = result_document(model, series, doc["config"])
        sel["bic"] = None if math.isinf(scores[best]) else float(scores[best])
        doc["selected"] = sel
        if not args.quiet:
            print(f"BIC selects m = {model.segmentation.n_changepoints}", file=human)
    elif args.select == "elbow-data":
        table = elbow_table(path)
        doc["elbow"] = [{"m": m, "Qm": q} for m, q in table]
        if args.elbow_out:
            write_csv(args.elbow_out, ["m", "Qm"], [[m for m, _ in table], [q for _, q in table]])
    _write_text(args.out, dump_document(doc))
    return EXIT_OK


def _read_x(spec: str) -> np.ndarray:
    if spec.startswith("even:"):
        try:
            n = int(spec[5:])
        except ValueError:
            raise UsageError(f"--x: bad size in {spec!r}") from None
        if n < 1:
            raise UsageError("--x: even:n needs n >= 1")
        return np.arange(n, dtype=float)
    return read_column(spec)


def cmd_simulate(args) -> int:
    x = _read_x(args.x)
    cps = _parse_list(args.changepoints, "changepoints")
    slopes = _parse_list(args.change_slope, "change-slope")
    if len(cps) != len(slopes):
        raise UsageError(
            f"--changepoints has {len(cps)} values but --change-slope has {len(slopes)}"
        )
    try:
        sd = float(args.sd)
    except ValueError:
        sd = read_column(args.sd)
        if len(sd) != len(x):
            raise DataError(f"{args.sd}: {len(sd)} sd values for {len(x)} locations")
    spec = SlopeSpec(cps, slopes, sd)
    y = simulate_y(spec, x, args.seed)
    mean = mean_function(spec, x)
    write_csv(args.out, ["x", "y", "mean"], [x, y, mean])
    return EXIT_OK


def cmd_estimate(args) -> int:
    seg = load_segmentation(args.document)
    if Path(args.at).is_file():
        at = read_column(args.at)
    else:
        at = _parse_list(args.at, "at")
    y_hat = evaluate_fit(seg, at)
    lo, hi = seg.knots[0, 0], seg.knots[-1, 0]
    outside = int(np.sum((at < lo) | (at > hi)))
    if outside:
        print(
            f"warning: {outside} location(s) outside the fitted range [{lo:g}, {hi:g}] were extrapolated",
            file=sys.stderr,
        )
    write_csv(args.out, ["x", "y_hat"], [at, y_hat])
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_fit_flags(p) -> None:
    p.add_argument("input", help="CSV with columns x, y and optionally sd ('-' for stdin)")
    p.add_argument("--sd", default="1",
                   help="noise sd: a number, 'column' to read the sd column, or 'ddiff' for the "
                        "double-difference estimate (default 1)")
    p.add_argument("--grid", default="data",
                   help="candidate changepoints: 'data', 'even:N' or a one-column CSV (default data)")
    p.add_argument("--refine-radius", type=float, default=None,
                   help="re-solve on the data locations within this distance of the first fit's changes")
    p.add_argument("--minseglen", type=float, default=0.0, help="minimum distance between changepoints")
    p.add_argument("--prune-approx", action="store_true",
                   help="keep PELT pruning with --minseglen (faster, may be sub-optimal)")
    p.add_argument("--out", default="-", help="result document path (default stdout)")
    p.add_argument("-q", "--quiet", action="store_true", help="no human-readable summary")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpop", description="Detect changes in slope with the CPOP algorithm.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="fit a single penalty")
    _add_fit_flags(p)
    p.add_argument("--beta", type=float, default=None, help="penalty per changepoint (default 2 log n)")
    p.add_argument("--fit-out", help="CSV of x, y, fitted, residual")
    p.add_argument("--variance-out",
                   help="CSV of x, y, sd from a log-linear variance fit to the residuals; "
                        "feed it back with --sd column for a second pass")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("crops", help="all optimal fits for penalties in a range")
    _add_fit_flags(p)
    p.add_argument("--beta-min", type=float, default=None, help="default 1.5 log n")
    p.add_argument("--beta-max", type=float, default=None, help="default 2.5 log n")
    p.add_argument("--select", choices=("none", "bic", "elbow-data"), default="none")
    p.add_argument("--elbow-out", help="CSV of m, Qm (with --select elbow-data)")
    p.set_defaults(func=cmd_crops)

    p = sub.add_parser("simulate", help="simulate change-in-slope data")
    p.add_argument("--x", required=True, help="'even:n' for 0..n-1 or a one-column CSV")
    p.add_argument("--changepoints", default="", help="comma-separated locations")
    p.add_argument("--change-slope", default="", help="comma-separated slope changes")
    p.add_argument("--sd", default="1", help="noise sd: a number or a one-column CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="evaluate a fitted mean")
    p.add_argument("document", help="result document from detect or crops --select bic")
    p.add_argument("--at", required=True, help="comma-separated locations or a one-column CSV")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cpop {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CpopError) as exc:
        print(f"cpop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cpop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InternalError as exc:
        print(f"cpop {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
