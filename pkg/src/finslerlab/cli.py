"""Command-line front end.

    finslerlab verify    --metric LABEL --change LABEL
    finslerlab classify  --metric LABEL [--change LABEL]
    finslerlab geodesic  --metric LABEL --change LABEL [--x0 ...] [--y0 ...]
    finslerlab catalog check [--catalog PATH]

Exit codes: 0 all checks pass, 1 an assertion failed, 2 usage error,
3 no admissible sample point.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import catalog as catmod
from . import change as chg
from . import classify as cls
from . import projective as proj
from .errors import CatalogError, FinslerLabError, SamplingError
from .finsler import fundamental, is_riemannian
from .sampling import COND_MAX, sample_points

SCHEMA_VERSION = 1
TOL_ENV = "FINSLERLAB_TOL"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NODATA = 0, 1, 2, 3

FLAG_NAMES = {
    "K3": "C-reducible",
    "eta3": "C2-like",
    "mu4": "S3-like",
    "zeta4": "S4-like",
    "semi": "semi-C-reducible",
    "quasi": "quasi-C-reducible",
    "riemannian": "Riemannian",
}
ALPHA_FAMILIES = ("randers", "generalized-randers", "kropina", "kropina-type")


class UsageError(Exception):
    pass


# -- deterministic JSON ------------------------------------------------------


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 0) -> str:
    """JSON with every float written as 17 significant digits; NaN and inf become null."""
    obj = _plain(obj)
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format(obj, ".16e") if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(report: dict, path) -> None:
    if path is None:
        return
    text = dumps(report) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- selection -----------------------------------------------------------------


def _load_catalog(args) -> catmod.Catalog:
    try:
        return catmod.load(args.catalog)
    except CatalogError as e:
        raise UsageError(str(e)) from e


def _metric_entries(cat, args) -> list:
    if args.metric is None:
        return sorted(cat.metrics, key=lambda m: m.label)
    try:
        return [cat.metric(args.metric)]
    except CatalogError:
        if args.metric in ("euclidean", "riemannian-diag", "quartic-minkowski"):
            n = args.dim or 2
            return [catmod.MetricEntry(f"{args.metric}{n}", n, args.metric)]
        raise UsageError(f"unknown metric {args.metric!r}")


def _change_entries(cat, args, required=False) -> list:
    if args.change is None:
        if required:
            raise UsageError("--change is required")
        return sorted(cat.changes, key=lambda c: c.label)
    try:
        return [cat.change(args.change)]
    except CatalogError:
        raise UsageError(f"unknown change {args.change!r}")


def _dim(entry, args) -> int:
    n = args.dim or entry.dim
    if n != entry.dim and (entry.kind == "expression" or entry.params is not None):
        raise UsageError(f"metric {entry.label!r} has fixed dimension {entry.dim}")
    if n < 1:
        raise UsageError("--dim must be positive")
    return n


def _sampling(cat, args) -> dict:
    count = args.samples if args.samples is not None else cat.sampling.count
    seed = args.seed if args.seed is not None else cat.sampling.seed
    if count < 1:
        raise UsageError("--samples must be positive")
    return {"count": count, "seed": seed, "x_box": list(cat.sampling.x_box), "r_range": list(cat.sampling.y_radius)}


def _tol_override(args):
    if args.tol is not None:
        return args.tol
    env = os.environ.get(TOL_ENV)
    if env:
        try:
            return float(env)
        except ValueError:
            raise UsageError(f"{TOL_ENV}={env!r} is not a number")
    return None


def _vector(text, n, name):
    if text is None:
        return None
    try:
        v = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--{name}: expected {n} numbers")
    if len(v) != n:
        raise UsageError(f"--{name}: expected {n} numbers, got {len(v)}")
    return np.array(v)


# -- verify --------------------------------------------------------------------


def verify_pair(m_entry, c_entry, dim, samp, tol_override):
    """One (metric, change) pair: worst residual per block over the admissible samples."""
    base = m_entry.build(dim)
    c = c_entry.build(dim)
    tm = chg.transformed_metric(c, base)
    out = {"metric": base.label, "change": c_entry.label, "label": tm.label}
    try:
        pts, filtered = sample_points(
            lambda x, y: chg.admissible(c, base, x, y, COND_MAX), dim, samp["count"], samp["seed"],
            tuple(samp["x_box"]), tuple(samp["r_range"]),
        )
    except SamplingError as e:
        out.update(status="no_data", samples=0, filtered=None, error=str(e))
        return out
    worst = {b: {} for b in chg.BLOCKS}
    errors = []
    for k, (x, y) in enumerate(pts):
        try:
            res = chg.pair_residuals(c, base, x, y)
        except (FinslerLabError, ArithmeticError) as e:
            errors.append(f"sample {k}: {type(e).__name__}: {e}")
            continue
        for block, fields in res.items():
            for name, v in fields.items():
                worst[block][name] = max(worst[block].get(name, 0.0), v)
    blocks = {}
    for block, default in chg.BLOCKS.items():
        tol = default if tol_override is None else tol_override
        fields = worst[block]
        mx = max(fields.values(), default=float("nan"))
        blocks[block] = {"max_residual": mx, "fields": fields, "tol": tol, "samples": len(pts) - len(errors),
                         "pass": bool(fields) and mx <= tol}
    ok = not errors and all(b["pass"] for b in blocks.values())
    out.update(status="pass" if ok else "fail", samples=len(pts), filtered=filtered, blocks=blocks, errors=errors)
    return out


def _run_pair(job):
    return verify_pair(*job)


def cmd_verify(args) -> tuple:
    cat = _load_catalog(args)
    metrics = _metric_entries(cat, args)
    changes = _change_entries(cat, args)
    samp = _sampling(cat, args)
    tol = _tol_override(args)
    jobs = [(m, c, _dim(m, args), samp, tol) for m in metrics for c in changes]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            pairs = list(ex.map(_run_pair, jobs))
    else:
        pairs = [_run_pair(j) for j in jobs]
    pairs.sort(key=lambda p: (p["metric"], p["change"]))
    counts = {s: sum(p["status"] == s for p in pairs) for s in ("pass", "fail", "no_data")}
    code = EXIT_NODATA if counts["no_data"] else (EXIT_FAIL if counts["fail"] else EXIT_OK)
    for p in pairs:
        if p["status"] == "no_data":
            print(f"{p['label']}: NO DATA ({p['error']})")
            continue
        parts = " ".join(f"{b}={v['max_residual']:.1e}{'' if v['pass'] else '!'}" for b, v in p["blocks"].items())
        print(f"{p['label']}: {p['status'].upper()}  {parts}  samples={p['samples']} filtered={p['filtered']}")
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "catalog": cat.source,
        "settings": {"samples": samp["count"], "seed": samp["seed"], "x_box": samp["x_box"],
                     "y_radius": samp["r_range"], "tol_override": tol},
        "pairs": pairs,
        "summary": counts,
        "exit_code": code,
    }
    return code, report


# -- classify -----------------------------------------------------------------


def _flag_line(verdicts) -> str:
    return ", ".join(f"{FLAG_NAMES.get(k, k)}={'true' if v else 'false'}" for k, v in verdicts.items())


def _b_table(rep: cls.BConditionReport) -> dict:
    return {"max_residual": rep.max_residual, "passed": rep.passed, "violations": rep.violations,
            "records": rep.records}


def classify_entry(base, c, samp, threshold) -> tuple:
    """Report block for a base metric, or for the transformed space when ``c`` is given."""
    kw = {"x_box": tuple(samp["x_box"]), "r_range": tuple(samp["r_range"])}
    n, seed = samp["count"], samp["seed"]
    failures = []
    if c is None:
        rep = cls.classify(base, n, seed, threshold, **kw)
        out = {"label": rep.label, "kind": "base", "threshold": threshold, "samples": len(rep.records),
               "verdicts": rep.verdicts, "absent": rep.absent, "records": rep.records}
        print(f"{rep.label}: {_flag_line(rep.verdicts)}")
        return out, failures
    rep = cls.classify(None, n, seed, threshold, change=c, base=base, **kw)
    out = {"label": rep.label, "kind": "transformed", "threshold": threshold, "samples": len(rep.records),
           "verdicts": rep.verdicts, "absent": rep.absent, "records": rep.records}
    print(f"{rep.label}: {_flag_line(rep.verdicts)}")

    pts, _ = cls._points(c, base, n, seed, **kw)
    if is_riemannian(fundamental(base, *pts[0])):
        a = cls.randers_kropina_alpha_check(c, base, n, seed, **kw)
        expected = c.family in ALPHA_FAMILIES
        out["alpha"] = {"max_alpha1": a.max_alpha1, "max_alpha2": a.max_alpha2,
                        "rel_alpha1": a.rel_alpha1, "rel_alpha2": a.rel_alpha2, "expected_zero": expected,
                        "passed": a.passed}
        print(f"  alpha1/alpha2 (relative): {a.rel_alpha1:.3e} / {a.rel_alpha2:.3e}")
        if expected and not a.passed:
            failures.append("alpha1/alpha2 nonzero for a Randers- or Kropina-type change")
    else:
        out["alpha"] = {"applicable": False, "reason": "base is not Riemannian"}

    e = cls.energy_equivalence(c, base, n, seed, **kw)
    out["energy_equivalence"] = e
    if e.applicable:
        detail = "trivial: q = 0" if e.trivial else f"k={e.k_fit:.6f}"
        print(f"  energy equivalence: {e.verdict} ({detail})")
        if not e.consistent:
            failures.append("energy equivalence criteria disagree")
    else:
        print(f"  energy equivalence: {e.verdict}")

    tm = chg.transformed_metric(c, base)
    b_base = cls.b_condition(base, c.b, threshold=threshold, points=pts)
    b_bar = cls.b_condition(tm, c.b, threshold=threshold, points=pts)
    out["b_condition"] = {"base": _b_table(b_base), "transformed": _b_table(b_bar)}
    print(f"  b-condition: base={'pass' if b_base.passed else 'fail'} transformed={'pass' if b_bar.passed else 'fail'}")
    failures += b_base.violations + b_bar.violations
    if c.family == "energy":
        flips = [k for k, (r0, r1) in enumerate(zip(b_base.records, b_bar.records)) if r0.passed != r1.passed]
        out["b_condition"]["energy_preserved"] = not flips
        if flips:
            failures.append(f"energy change flips the b-condition flag at samples {flips}")

    sweep = cls.consistency_sweep([(tm.label, c, base)], n, seed, threshold, **kw)
    out["sweep"] = {"checked": sweep.checked, "violations": sweep.violations}
    failures += sweep.violations
    return out, failures


def cmd_classify(args) -> tuple:
    cat = _load_catalog(args)
    metrics = _metric_entries(cat, args)
    changes = [] if args.change is None else _change_entries(cat, args)
    samp = _sampling(cat, args)
    threshold = args.threshold if args.threshold is not None else cls.THRESHOLD
    entries, failures, nodata = [], [], []
    for m in metrics:
        n = _dim(m, args)
        base = m.build(n)
        for c_entry in changes or [None]:
            c = c_entry.build(n) if c_entry is not None else None
            try:
                out, fails = classify_entry(base, c, samp, threshold)
            except SamplingError as e:
                label = base.label if c is None else chg.transformed_metric(c, base).label
                print(f"{label}: NO DATA ({e})")
                nodata.append(label)
                entries.append({"label": label, "status": "no_data", "error": str(e)})
                continue
            out["status"] = "fail" if fails else "pass"
            out["failures"] = fails
            failures += fails
            entries.append(out)
    code = EXIT_NODATA if nodata else (EXIT_FAIL if failures else EXIT_OK)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "classify",
        "catalog": cat.source,
        "settings": {"samples": samp["count"], "seed": samp["seed"], "threshold": threshold},
        "entries": entries,
        "exit_code": code,
    }
    return code, report


# -- geodesic -----------------------------------------------------------------


def cmd_geodesic(args) -> tuple:
    if args.steps <= 0:
        raise UsageError("--steps must be positive")
    if not args.t_end > 0:
        raise UsageError("--t-end must be positive")
    cat = _load_catalog(args)
    if args.metric is None:
        raise UsageError("--metric is required")
    m_entry = _metric_entries(cat, args)[0]
    c_entry = _change_entries(cat, args, required=True)[0]
    n = _dim(m_entry, args)
    base, c = m_entry.build(n), c_entry.build(n)
    x0, y0 = _vector(args.x0, n, "x0"), _vector(args.y0, n, "y0")
    samp = _sampling(cat, args)
    threshold = args.threshold if args.threshold is not None else 1e-7
    try:
        rep = proj.projective_suite(c, base, samp["count"], samp["seed"], threshold, x0, y0, args.t_end, args.steps,
                                    x_box=tuple(samp["x_box"]), r_range=tuple(samp["r_range"]))
    except SamplingError as e:
        print(f"{c_entry.label}({base.label}): NO DATA ({e})")
        return EXIT_NODATA, {"schema_version": SCHEMA_VERSION, "command": "geodesic", "error": str(e),
                             "exit_code": EXIT_NODATA}
    disagree = [r["index"] for r in rep.table if not r["agree"]]
    code = EXIT_FAIL if rep.verdict == "MIXED" or disagree else EXIT_OK
    print(f"{rep.label}: projective verdict {rep.verdict}")
    print(f"  max |phi|              {rep.max_phi:.3e}")
    print(f"  projective deviation   {rep.max_deviation:.3e}")
    print(f"  geodesic deviation     {rep.geodesic_deviation:.3e}")
    print(f"  Douglas norm           {rep.douglas_norm:.3e}")
    if rep.verdict != "PASS":
        print("  sample  |phi|       deviation")
        for r in rep.table:
            print(f"  {r['index']:6d}  {r['phi_norm']:.3e}   {r['deviation']:.3e}")
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "geodesic",
        "catalog": cat.source,
        "settings": {"samples": samp["count"], "seed": samp["seed"], "threshold": threshold,
                     "x0": None if x0 is None else x0, "y0": None if y0 is None else y0,
                     "t_end": args.t_end, "steps": args.steps},
        "result": rep,
        "disagreeing_samples": disagree,
        "exit_code": code,
    }
    return code, report


# -- catalog check ------------------------------------------------------------


def cmd_catalog(args) -> tuple:
    if args.action != "check":
        raise UsageError(f"unknown catalog action {args.action!r}")
    cat = _load_catalog(args)
    worst = catmod.validate(cat)
    for label, w in worst.items():
        print(f"metric {label}: homogeneity residual {w:.1e}")
    for c in cat.changes:
        print(f"change {c.label}: {c.family}")
    print(f"catalog ok: {len(cat.metrics)} metrics, {len(cat.changes)} changes")
    report = {"schema_version": SCHEMA_VERSION, "command": "catalog check", "catalog": cat.source,
              "metrics": [m.label for m in cat.metrics], "changes": [c.label for c in cat.changes],
              "homogeneity": worst, "exit_code": EXIT_OK}
    return EXIT_OK, report


# -- entry point ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--catalog", help="catalog file (default: the bundled catalog)")
    common.add_argument("--metric", help="metric label, or euclidean | riemannian-diag | quartic-minkowski")
    common.add_argument("--change", help="change label")
    common.add_argument("--dim", type=int, help="dimension for built-in metric kinds")
    common.add_argument("--samples", type=int, help="admissible points per pair")
    common.add_argument("--seed", type=int)
    common.add_argument("--json", dest="json_path", metavar="PATH", help="write the JSON report here ('-' = stdout)")

    p = _Parser(prog="finslerlab", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("verify", parents=[common], help="closed forms vs direct computation")
    v.add_argument("--tol", type=float, help=f"tolerance for every block (default: per block, or ${TOL_ENV})")
    v.add_argument("--jobs", type=int, default=1, help="worker processes")
    c = sub.add_parser("classify", parents=[common], help="defect tensors and class flags")
    c.add_argument("--threshold", type=float)
    g = sub.add_parser("geodesic", parents=[common], help="projectivity criteria and geodesic comparison")
    g.add_argument("--threshold", type=float)
    g.add_argument("--x0")
    g.add_argument("--y0")
    g.add_argument("--t-end", type=float, default=1.0)
    g.add_argument("--steps", type=int, default=1000)
    k = sub.add_parser("catalog", parents=[common], help="catalog maintenance")
    k.add_argument("action", choices=["check"])
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        handler = {"verify": cmd_verify, "classify": cmd_classify, "geodesic": cmd_geodesic,
                   "catalog": cmd_catalog}[args.command]
        code, report = handler(args)
    except UsageError as e:
        print(f"finslerlab: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CatalogError as e:
        print(f"finslerlab: {e}", file=sys.stderr)
        return EXIT_USAGE
    _emit(report, args.json_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
