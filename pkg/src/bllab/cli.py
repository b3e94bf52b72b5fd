"""Command-line entry point: ``bl <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 a check fell outside its budget.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .solver import BLDatum, ScalingError, SolverOptions

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


class InputError(Exception):
    pass


# -- input ----------------------------------------------------------------------

def load_json(path: str | None, what: str) -> dict:
    if path is None:
        raise InputError(f"missing --{what}")
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read {what} ({exc.strerror or exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None


def _is_matrix(obj) -> bool:
    return isinstance(obj, list) and all(isinstance(r, list) and all(isinstance(v, (int, float)) for v in r)
                                         for r in obj)


def nonlinear_from_json(obj: dict):
    """Polynomial datum, or a linear datum given as plain matrices."""
    from .polynomial import NonlinearDatum, PolynomialMap
    if obj.get("maps") and all(_is_matrix(m) for m in obj["maps"]):
        lin = BLDatum.from_json(obj)
        return NonlinearDatum(tuple(PolynomialMap.linear(L) for L in lin.maps), lin.exponents)
    return NonlinearDatum.from_json(obj)


def _box(obj, n: int) -> np.ndarray:
    box = np.asarray(obj, dtype=float).reshape(-1, 2)
    if box.shape[0] != n:
        raise InputError(f"box has {box.shape[0]} intervals, datum lives in R^{n}")
    return box


def _opts(args, cfg: dict) -> SolverOptions:
    return SolverOptions(max_iter=int(args.max_iter or cfg.get("max_iter", 10000)),
                         tol=float(cfg.get("solver_tol", 1e-12)),
                         seed=int(args.seed))


# -- output ---------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def emit_json(report: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def emit_csv(rows: list, columns: list, config: dict, out: str | None) -> None:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_jsonable(v))
    return v


def _config(args, **resolved) -> dict:
    base = {"subcommand": args.command, "seed": args.seed, "out": args.out,
            "datum": getattr(args, "datum", None), "config": getattr(args, "config", None),
            "max_iter": args.max_iter, "tolerance": args.tolerance}
    base.update(resolved)
    return base


# -- subcommands ----------------------------------------------------------------

def cmd_compute(args) -> int:
    from .solver import bl_constant
    cfg = load_json(args.config, "config") if args.config else {}
    datum = BLDatum.from_json(load_json(args.datum, "datum"))
    opts = _opts(args, cfg)
    res = bl_constant(datum, opts)
    report = res.to_json()
    report["config"] = _config(args, solver=vars(opts))
    emit_json(report, args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    from .solver import critical_split_check, factorization_check
    cfg = load_json(args.config, "config") if args.config else {}
    datum = BLDatum.from_json(load_json(args.datum, "datum"))
    opts = _opts(args, cfg)
    tol = float(args.tolerance if args.tolerance is not None else cfg.get("tolerance", 1e-6))
    fn = factorization_check if args.identity == "factorization" else critical_split_check
    rep = fn(datum, opts)
    rep["budget"] = tol
    rep["ok"] = bool(rep["discrepancy"] < tol)
    rep["config"] = _config(args, identity=args.identity, tolerance=tol, solver=vars(opts))
    emit_json(rep, args.out)
    return EXIT_OK if rep["ok"] else EXIT_CHECK


def emit_weight_grid(datum, box, resolution: int, out: str | None, config: dict,
                     opts: SolverOptions | None = None) -> None:
    from .polynomial import WeightField
    if datum.n != 2:
        raise InputError("weight grids are for data on R^2")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = WeightField(datum, opts=opts or SolverOptions()).weights(pts)
    rows = [{"x": float(a), "y": float(b), "weight": float(c)} for (a, b), c in zip(pts, w)]
    emit_csv(rows, ["x", "y", "weight"], config, out)


def cmd_weight(args) -> int:
    cfg = load_json(args.config, "config") if args.config else {}
    datum = nonlinear_from_json(load_json(args.datum, "datum"))
    box = _box(cfg.get("box", [[-1, 1], [-1, 1]]), datum.n)
    res = int(cfg.get("resolution", 101))
    opts = _opts(args, cfg)
    emit_weight_grid(datum, box, res, args.out,
                     _config(args, box=box, resolution=res, solver=vars(opts)), opts)
    return EXIT_OK


def _test_functions(cfg: dict, datum) -> list:
    from .integrate import TestFunction
    if "functions" not in cfg:
        raise InputError("config needs a 'functions' list, one per map")
    fs = [TestFunction.from_json(f) for f in cfg["functions"]]
    if len(fs) != len(datum.maps):
        raise InputError(f"{len(fs)} functions given for {len(datum.maps)} maps")
    return fs


def cmd_integrate(args) -> int:
    from .integrate import IntegrationSpec, inequality_report
    cfg = load_json(args.config, "config")
    datum = nonlinear_from_json(load_json(args.datum, "datum"))
    fs = _test_functions(cfg, datum)
    boxes = cfg.get("boxes") or [cfg.get("box")]
    if boxes == [None]:
        raise InputError("config needs 'box' or 'boxes'")
    budget = float(args.tolerance if args.tolerance is not None else cfg.get("budget", 1.0))
    rows, ok = [], True
    for b in boxes:
        spec = IntegrationSpec(_box(b, datum.n), method=cfg.get("method", "monte-carlo"),
                               order=int(cfg.get("order", 200)), samples=int(cfg.get("samples", 100000)),
                               seed=int(args.seed))
        rep = inequality_report(datum, fs, spec, budget)
        ok &= rep["ok"]
        rows.append(rep)
    emit_csv(rows, ["lhs", "stderr", "rhs", "ratio", "ratio_err", "budget", "seed", "method", "box", "ok"],
             _config(args, boxes=boxes, budget=budget, method=cfg.get("method", "monte-carlo"),
                     samples=cfg.get("samples", 100000), order=cfg.get("order", 200)), args.out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_discretize(args) -> int:
    from .integrate import IntegrationSpec
    from .lab.balls import BallCollection, delta_ladder
    cfg = load_json(args.config, "config")
    datum = nonlinear_from_json(load_json(args.datum, "datum"))
    try:
        centers = [np.asarray(c, dtype=float).reshape(-1, k) for c, k in zip(cfg["centers"], datum.dims)]
        deltas = [float(d) for d in cfg["deltas"]]
        box = _box(cfg["box"], datum.n)
    except KeyError as exc:
        raise InputError(f"config is missing {exc.args[0]!r}") from None
    if len(centers) != len(datum.maps):
        raise InputError("one list of ball centres per map is required")
    factor = float(args.tolerance if args.tolerance is not None else cfg.get("max_spread", 2.0))
    lad = delta_ladder(datum, lambda d: [BallCollection(k, c, d) for c, k in zip(centers, datum.dims)],
                       deltas, lambda d: IntegrationSpec(box, method=cfg.get("method", "monte-carlo"),
                                                         order=int(cfg.get("order", 200)),
                                                         samples=int(cfg.get("samples", 200000)),
                                                         seed=int(args.seed)))
    rows = [dict(r, budget=factor) for r in lad["rows"]]
    emit_csv(rows, ["delta", "lhs", "error", "rhs", "ratio", "ratio_err", "budget"],
             _config(args, deltas=deltas, box=box, max_spread=factor, spread=lad["spread"]), args.out)
    return EXIT_OK if lad["spread"] < factor else EXIT_CHECK


def _group_function(obj: dict):
    from .groups import GroupFunction
    kind = obj.get("kind", "bump")
    if kind == "bump":
        f = GroupFunction.bump(obj["center"], obj["radius"])
    elif kind == "gaussian-in-chart":
        f = GroupFunction.gaussian(obj["center"], obj["sigma"], obj.get("cut", 9.0))
    elif kind == "grid-sampled":
        f = GroupFunction("grid-sampled", {"axes": [np.asarray(a, dtype=float) for a in obj["axes"]],
                                           "values": np.asarray(obj["values"], dtype=float)})
    else:
        raise InputError(f"unknown group function kind {kind!r}")
    return f.scaled(float(obj.get("scale", 1.0)))


def cmd_young(args) -> int:
    from .groups import QuadSpec, get_model, mass_identity, young_report
    cfg = load_json(args.config, "config")
    G = get_model(args.group)
    try:
        fs = [_group_function(f) for f in cfg["functions"]]
        p = cfg["p"]
    except KeyError as exc:
        raise InputError(f"config is missing {exc.args[0]!r}") from None
    r = cfg.get("r", 1.0)
    r = math.inf if r in ("inf", "infinity") else float(r)
    quad = QuadSpec(float(cfg.get("h", 0.02)))
    budget = float(args.tolerance if args.tolerance is not None else cfg.get("budget", 1.0))
    rep = young_report(G, fs, p, r, quad)
    row = {"run": "young", "group": G.name, "p": rep["p"], "r": rep["r"], "lhs": rep["lhs"],
           "rhs": rep["rhs"], "ratio": rep["ratio"], "predicted": "", "budget": budget,
           "ok": bool(rep["ratio"] <= budget)}
    rows = [row]
    cols = ["run", "group", "p", "r", "lhs", "rhs", "ratio", "predicted", "budget", "ok"]
    if len(fs) == 2 and cfg.get("mass_identity", True):
        # int f*g against int f * int g: exact once g carries Delta^{-1}, off by
        # int g Delta / int g without it
        m = mass_identity(G, fs[0], fs[1], quad)
        prod = m["mass_f"] * m["mass_g"]
        tol = 1e-3
        rows.append({"run": "mass identity, weighted", "group": G.name, "p": rep["p"], "r": 1.0,
                     "lhs": m["weighted_ratio"] * prod, "rhs": prod, "ratio": m["weighted_ratio"],
                     "predicted": 1.0, "budget": tol, "ok": abs(m["weighted_ratio"] - 1) <= tol})
        rows.append({"run": "mass identity, unweighted", "group": G.name, "p": rep["p"], "r": 1.0,
                     "lhs": m["mass_fg"], "rhs": prod, "ratio": m["unweighted_ratio"],
                     "predicted": m["predicted_ratio"], "budget": tol,
                     "ok": abs(m["unweighted_ratio"] / m["predicted_ratio"] - 1) <= tol})
    emit_csv(rows, cols, _config(args, group=args.group, p=p, r=r, h=quad.h, budget=budget), args.out)
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_CHECK


def cmd_suite(args) -> int:
    from .suite import CRITERIA, run_suite, status_line
    numbers = None
    if not args.all:
        if not args.only:
            raise InputError("pass --all or --only N[,N...]")
        try:
            numbers = {int(x) for x in args.only.split(",")}
        except ValueError:
            raise InputError(f"bad --only list {args.only!r}") from None
        if not numbers <= {c.number for c in CRITERIA}:
            raise InputError("criteria are numbered 1 to 12")
    results = run_suite(int(args.seed), numbers,
                        progress=lambda r: print(status_line(r), file=sys.stderr, flush=True))
    report = {"config": _config(args, all=bool(args.all), only=sorted(numbers) if numbers else None),
              "criteria": results,
              "passed": all(r["passed"] for r in results)}
    emit_json(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_CHECK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--datum", help="datum JSON file")
    common.add_argument("--config", help="run configuration JSON file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    common.add_argument("--max-iter", type=int, default=None, help="fixed-point iteration cap")
    common.add_argument("--tolerance", type=float, default=None, help="override the check budget")

    ap = argparse.ArgumentParser(prog="bl", description="Brascamp-Lieb numerical laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("compute", parents=[common], help="BL constant of a linear datum")
    chk = sub.add_parser("check", parents=[common], help="factorization or critical-split identity")
    chk.add_argument("identity", choices=["factorization", "critical-split"])
    sub.add_parser("weight", parents=[common], help="CSV grid of the weight field on R^2")
    sub.add_parser("integrate", parents=[common], help="global nonlinear inequality report")
    sub.add_parser("discretize", parents=[common], help="discrete inequality over a delta ladder")
    y = sub.add_parser("young", parents=[common], help="weighted Young inequality on a group")
    y.add_argument("--group", required=True, help="R1, R2, Rpos, axb or heisenberg")
    s = sub.add_parser("suite", parents=[common], help="acceptance suite")
    s.add_argument("--all", action="store_true", help="run every criterion")
    s.add_argument("--only", help="comma-separated criterion numbers")
    return ap


COMMANDS = {"compute": cmd_compute, "check": cmd_check, "weight": cmd_weight,
            "integrate": cmd_integrate, "discretize": cmd_discretize, "young": cmd_young,
            "suite": cmd_suite}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"bl: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScalingError, ValueError, KeyError, TypeError) as exc:
        print(f"bl: error: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
