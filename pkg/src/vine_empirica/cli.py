"""Command-line front end.

Every subcommand writes its files into ``--out`` (default: the current
directory). Files are written to a temporary name and renamed, so a failed
run never leaves a half-written output behind.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, estimator, experiments, inference
from .exceptions import EstimationError, InvalidInputError, VineEmpiricaError
from .models import ParametricVineModel
from .ranks import Bandwidth
from .selection import select_structure
from .vine import deserialize, serialize, to_dot

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA = "vine-empirica/report"
SCHEMA_VERSION = 1
SEED_ENV = "VINE_EMPIRICA_SEED"
MISSING = {"", "na", "nan", "null", "none", "?"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------
# I/O helpers

def atomic_write(path: str, text: str) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class Dataset:
    """Numeric CSV with a header row; rows with missing cells are dropped."""

    def __init__(self, names, values, source, dropped=0):
        self.names = list(names)
        self.values = values
        self.source = source
        self.dropped = dropped

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def read_csv(path: str) -> Dataset:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path} is not UTF-8 text") from exc
    if not rows:
        raise InvalidInputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    d = len(header)
    if d < 2:
        raise InvalidInputError(f"{path}: need at least two columns, found {d}")
    data, dropped = [], 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d:
            raise InvalidInputError(f"{path}:{lineno}: expected {d} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        if any(c.lower() in MISSING for c in cells):
            dropped += 1
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise InvalidInputError(f"{path}:{lineno}: not a number: {bad!r}") from None
        if not all(math.isfinite(x) for x in vals):
            dropped += 1
            continue
        data.append(vals)
    values = np.array(data, dtype=float).reshape(-1, d)
    if values.shape[0] < 2:
        raise InvalidInputError(f"{path}: fewer than two complete rows")
    for k in range(d):
        if np.ptp(values[:, k]) == 0:
            raise InvalidInputError(f"{path}: column {header[k]!r} is constant")
    return Dataset(header, values, path, dropped)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def write_csv(path, header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return atomic_write(path, buf.getvalue())


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return "" if x is None else x


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# ----------------------------------------------------------------------
# configuration

def resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def parse_alpha(text: str) -> list:
    try:
        vals = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise UsageError(f"--alpha expects comma-separated numbers, got {text!r}") from None
    if not vals or not all(0 < a < 1 for a in vals):
        raise UsageError("--alpha values must lie in (0, 1)")
    return vals


def parse_point(text: str):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--point expects 'u,v', got {text!r}") from None
    if not (0 <= a <= 1 and 0 <= b <= 1):
        raise UsageError("--point coordinates must lie in [0, 1]")
    return (a, b)


def _bandwidth(text):
    try:
        return Bandwidth.parse(text)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _config(args) -> dict:
    return {"bandwidth": str(args.bandwidth), "B": args.B, "seed": args.seed,
            "alpha": args.alpha, "threads": args.threads}


def _header(command, args, ds=None, fitted=None) -> dict:
    out = {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "command": command,
           "version": __version__, "config": _config(args)}
    if ds is not None:
        out["data"] = {"source": os.path.basename(ds.source), "n": ds.n, "d": ds.d,
                       "columns": ds.names, "dropped_rows": ds.dropped}
    if fitted is not None:
        out["h"] = fitted.h
        out["ties"] = fitted.ties
    return out


def _out(args, name) -> str:
    return os.path.join(args.out, name)


def _load_fit(args):
    ds = read_csv(args.data)
    try:
        with open(args.vine, encoding="utf-8") as fh:
            vine = deserialize(fh.read())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {args.vine}: {exc.strerror}") from exc
    if vine.d != ds.d:
        raise InvalidInputError(f"vine has dimension {vine.d} but data has {ds.d} columns")
    fitted = estimator.fit(ds.values, vine, args.bandwidth)
    return ds, vine, fitted


def _edges(fitted, label):
    if label is None:
        return list(fitted.vine.edges())
    try:
        return [fitted.vine.edge(label)]
    except KeyError:
        raise InvalidInputError(f"edge {label!r} is not in the vine") from None


def _edge_seed(seed, k):
    return np.random.SeedSequence([int(seed), int(k)])


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _record(edge, method, estimate, interval=None, p_value=None, B=None, seed=None, **extra):
    rec = {"edge": edge.label, "level": edge.level, "method": method,
           "estimate": estimate, "interval": interval, "p_value": p_value, "B": B,
           "seed": seed}
    rec.update(extra)
    return rec


# ----------------------------------------------------------------------
# commands

def cmd_select(args):
    ds = read_csv(args.data)
    vine, fitted, trace = select_structure(
        ds.values, args.bandwidth, measure=args.measure, prune_alpha=args.prune_alpha,
        prune_replicates=args.mc, seed=args.seed)
    weights = {e.key: fitted.estimates[e.key].rho_s for e in vine.tree(1)}
    extra = {"total_weight": [trace.total_weight(lv) for lv in range(1, vine.d)],
             "pruned": trace.pruned}
    atomic_write(_out(args, "vine.json"), serialize(vine))
    atomic_write(_out(args, "trace.csv"), trace.to_csv())
    atomic_write(_out(args, "ground_tree.dot"), to_dot(vine, weights, ds.names))
    meta = _header("select", args, ds, fitted)
    meta.update(extra)
    atomic_write(_out(args, "select.json"), _json(meta))
    print(f"selected vine on {ds.d} variables ({ds.n} rows): "
          + ", ".join(e.label for e in vine.tree(1)))
    return EXIT_OK


def cmd_estimate(args):
    ds, vine, fitted = _load_fit(args)
    alpha = args.alpha[0]

    def one(item):
        k, e = item
        est = fitted.estimates[e.key]
        child = _edge_seed(args.seed, k)
        ci = inference.spearman_ci(est.pairs, alpha=alpha, B=args.B, seed=child)
        row = {"edge": e.label, "level": e.level, "rho_s": est.rho_s,
               "rho_interval": [ci.lower, ci.upper], "interval_level": 1 - alpha,
               "tied_inputs": est.ties}
        if e.level >= 2:
            res = inference.independence_test(est.pairs, replicates=args.mc, seed=args.seed)
            row["independence_p_value"] = res.p_value
            row["independent_at"] = {str(a): bool(res.p_value > a) for a in args.alpha}
        else:
            row["independence_p_value"] = None
            row["independent_at"] = None
        return row

    rows = _pmap(one, list(enumerate(vine.edges())), args.threads)
    report = _header("estimate", args, ds, fitted)
    report["mc_replicates"] = args.mc
    report["edges"] = rows
    atomic_write(_out(args, "report.json"), _json(report))
    for r in rows:
        p = r["independence_p_value"]
        print(f"{r['edge']:>12}  rho_S={r['rho_s']:+.4f}  "
              f"[{r['rho_interval'][0]:+.4f}, {r['rho_interval'][1]:+.4f}]"
              + ("" if p is None else f"  indep p={p:.4f}"))
    return EXIT_OK


def cmd_ci(args):
    ds, vine, fitted = _load_fit(args)
    point = args.point
    records = []
    for k, e in enumerate(_edges(fitted, args.edge)):
        pairs = fitted.estimates[e.key].pairs
        child = _edge_seed(args.seed, k)
        ens = inference.multiplier_resample(pairs, points=[point], B=args.B, seed=child)
        for a in args.alpha:
            ci = inference.confidence_interval(pairs, None, point, a, method=args.method,
                                               ensemble=ens)
            records.append(_record(e, args.method, ci.estimate, [ci.lower, ci.upper],
                                   None, args.B, args.seed, point=list(point),
                                   level_1_minus_alpha=ci.level))
    return _emit(args, "ci", ds, fitted, records)


def cmd_rho(args):
    ds, vine, fitted = _load_fit(args)
    records = []
    for k, e in enumerate(_edges(fitted, args.edge)):
        pairs = fitted.estimates[e.key].pairs
        reps = inference.spearman_resample(pairs, B=args.B, seed=_edge_seed(args.seed, k))
        for a in args.alpha:
            ci = inference.spearman_ci(pairs, alpha=a, method=args.method, replicates=reps)
            records.append(_record(e, args.method, ci.estimate, [ci.lower, ci.upper], None,
                                   args.B, args.seed, level_1_minus_alpha=ci.level,
                                   bootstrap_sd=float(np.std(reps, ddof=1))))
    return _emit(args, "rho", ds, fitted, records)


def cmd_indep(args):
    ds, vine, fitted = _load_fit(args)
    records = []
    for e in _edges(fitted, args.edge):
        res = inference.independence_test(fitted, e, replicates=args.mc, seed=args.seed)
        records.append(_record(e, "cramer-von-mises", res.statistic, None, res.p_value,
                               None, args.seed, mc_replicates=args.mc,
                               critical_values=res.to_dict()["critical_values"],
                               reject={str(a): res.reject(a) for a in args.alpha}))
    return _emit(args, "indep-test", ds, fitted, records)


def cmd_gof(args):
    ds, vine, fitted = _load_fit(args)
    records = []
    for k, e in enumerate(_edges(fitted, args.edge)):
        res = inference.gof_test(fitted, e, args.family, replicates=args.mc,
                                 seed=_edge_seed(args.seed, k), bootstrap=args.bootstrap)
        records.append(_record(e, f"gof-{args.family}", res.statistic, None, res.p_value,
                               None, args.seed, mc_replicates=args.mc, bootstrap=args.bootstrap,
                               critical_values=res.to_dict()["critical_values"],
                               reject={str(a): res.reject(a) for a in args.alpha}))
    return _emit(args, "gof", ds, fitted, records)


def _emit(args, command, ds, fitted, records):
    report = _header(command, args, ds, fitted)
    report["records"] = records
    name = command.replace("-", "_") + ".json"
    atomic_write(_out(args, name), _json(report))
    for r in records:
        parts = [f"{r['edge']:>12}", f"{r['method']}", f"estimate={r['estimate']:.6g}"]
        if r["interval"] is not None:
            parts.append(f"[{r['interval'][0]:.6g}, {r['interval'][1]:.6g}]")
        if r["p_value"] is not None:
            parts.append(f"p={r['p_value']:.4g}")
        print("  ".join(parts))
    return EXIT_OK


def cmd_simulate(args):
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = ParametricVineModel.from_json(fh.read())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {args.model}: {exc.strerror}") from exc
    if args.n < 1:
        raise UsageError("--n must be positive")
    u = model.sample(args.n, args.seed)
    header = [f"U{k + 1}" for k in range(model.d)]
    path = write_csv(_out(args, "samples.csv"), header, u.tolist())
    print(f"wrote {args.n} rows to {path}")
    return EXIT_OK


def cmd_reproduce(args):
    if args.scale <= 0:
        raise UsageError("--scale must be positive")
    kw = {}
    if args.table == "T2" and args.B_given:
        kw["B"] = args.B
    if args.table in ("T3", "gof") and args.mc_given:
        kw["null_reps" if args.table == "T3" else "boot"] = args.mc
    rows = experiments.run(args.table, args.scale, args.seed_given, args.threads, **kw)
    if args.table == "fig2":
        # three-column summary plus per-level detail
        header = ["level", "n", "mean_residual", "slope"]
    else:
        header = list(rows[0].keys())
    path = write_csv(_out(args, f"reproduce_{args.table}.csv"), header,
                     [[r.get(h) for h in header] for r in rows])
    _print_table(header, rows)
    print(f"wrote {path}")
    return EXIT_OK


def _print_table(header, rows):
    cells = [[str(_fmt(r.get(h))) for h in header] for r in rows]
    widths = [max(len(h), *(len(c[k]) for c in cells)) for k, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for c in cells:
        print("  ".join(x.rjust(w) for x, w in zip(c, widths)))


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--bandwidth", default="half-cuberoot",
                        help="half-cuberoot | fifthroot | quarterroot | fixed=<h>")
    common.add_argument("--B", type=int, default=None,
                        help="bootstrap replicates (default 1000; reproduce: study default)")
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (fallback: ${SEED_ENV}, then 0)")
    common.add_argument("--alpha", default="0.10,0.05,0.01",
                        help="comma-separated significance levels")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--mc", type=int, default=None,
                        help="Monte Carlo replicates for tests (default 2000; gof 200)")

    parser = _Parser(prog="vine-empirica", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", parents=[common], help="select a vine structure")
    p.add_argument("data")
    p.add_argument("--measure", choices=["spearman", "kendall"], default="spearman")
    p.add_argument("--prune-alpha", type=float, default=None,
                   help="fit edges with independence p-value above this as independent")
    p.set_defaults(func=cmd_select)

    def fitted_cmd(name, func, help_text, edge_required=False):
        q = sub.add_parser(name, parents=[common], help=help_text)
        q.add_argument("data")
        q.add_argument("vine")
        q.add_argument("--edge", required=edge_required, help="edge label such as 1,4|2,3")
        q.set_defaults(func=func)
        return q

    fitted_cmd("estimate", cmd_estimate, "fit a vine and report every edge")
    q = fitted_cmd("ci", cmd_ci, "confidence interval for a pair-copula value")
    q.add_argument("--point", default="0.5,0.5")
    q.add_argument("--method", choices=["percentile", "symmetric-normal", "plug-in"],
                   default="percentile")
    q = fitted_cmd("rho", cmd_rho, "Spearman rho with bootstrap intervals")
    q.add_argument("--method", choices=["percentile", "symmetric-normal"],
                   default="percentile")
    fitted_cmd("indep-test", cmd_indep, "conditional independence test")
    q = fitted_cmd("gof", cmd_gof, "goodness-of-fit test of a parametric family")
    q.add_argument("--family", choices=["gaussian", "student-t", "gumbel"], required=True)
    q.add_argument("--bootstrap", choices=list(inference.GOF_BOOTSTRAPS), default="pipeline",
                   help="resample the whole estimator (default) or the pair-copula only")

    p = sub.add_parser("simulate", parents=[common], help="sample from a parametric vine")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", parents=[common], help="run a scaled simulation study")
    p.add_argument("table", choices=list(experiments.TABLES))
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.seed_given = args.seed if args.seed is not None else (
            None if os.environ.get(SEED_ENV) is None else resolve_seed(None))
        args.seed = resolve_seed(args.seed)
        args.alpha = parse_alpha(args.alpha)
        args.bandwidth = _bandwidth(args.bandwidth)
        args.B_given = args.B is not None
        if args.B is None:
            args.B = 1000
        if getattr(args, "point", None) is not None:
            args.point = parse_point(args.point)
        if args.B < 1 or args.threads < 1:
            raise UsageError("--B and --threads must be at least 1")
        args.mc_given = args.mc is not None
        if args.mc is None:
            args.mc = 200 if args.command == "gof" else 2000
        if args.mc < 1:
            raise UsageError("--mc must be at least 1")
        needs_null = args.command in ("estimate", "indep-test") or (
            args.command == "select" and args.prune_alpha is not None)
        if needs_null and args.mc < 100:
            raise UsageError("--mc must be at least 100 for the independence test")
        return args.func(args)
    except UsageError as exc:
        print(f"vine-empirica: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, FloatingPointError) as exc:
        print(f"vine-empirica: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VineEmpiricaError, OSError) as exc:
        print(f"vine-empirica: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
