"""Command-line entry point.

Exit codes: 0 all checks pass, 1 a validation or tolerance gate failed,
2 usage or input parse error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import algebra, graph, measure, metric, splitting
from .algebra import SpecError

STOCHASTIC = {"jacobian", "blowup", "area"}


class UsageError(Exception):
    pass


# -- input resolution ----------------------------------------------------------------------

def _load_group(name: str):
    """Fixture name or JSON path -> (algebra, raw document)."""
    if name in algebra.FIXTURES:
        return algebra.fixture(name), {"fixture": name}
    path = Path(name)
    if not path.exists():
        raise UsageError(f"unknown group {name!r}: not a fixture and no such file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top level must be an object")
    try:
        return algebra.algebra_from_dict(doc), doc
    except SpecError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _parse_vector(text: str, size: int | None = None) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None
    if size is not None and v.size != size:
        raise UsageError(f"vector {text!r} needs {size} entries")
    return v


def _subgroup_vectors(alg, doc, name):
    subs = doc.get("subgroups", {}) if isinstance(doc, dict) else {}
    if name in subs:
        return np.asarray(subs[name], dtype=float)
    eye = np.eye(alg.dim)
    if name == "vertical":
        return eye[1:]
    if name == "horizontal":
        return eye[:1]
    raise UsageError(f"unknown subgroup {name!r}")


def _parse_couple(items):
    if not items:
        return "vertical", "horizontal"
    pairs = dict(item.split("=", 1) for item in items if "=" in item)
    if set(pairs) != {"W", "V"}:
        raise UsageError("--couple expects W=<name> V=<name>")
    return pairs["W"], pairs["V"]


def _distance(alg, doc, name):
    if name is None and isinstance(doc, dict) and "distance" in doc:
        return metric.make_distance(alg, doc["distance"])
    try:
        return metric.make_distance(alg, name or "dinf")
    except SpecError as exc:
        raise UsageError(str(exc)) from None


def _level_function(name: str):
    key = name.replace(" ", "").replace("^", "").lower()
    if key == "x":
        return lambda g: np.asarray(g)[..., :1]
    if key in ("x+y2", "x+yy"):
        return lambda g: (np.asarray(g)[..., 0] + np.asarray(g)[..., 1] ** 2)[..., None]
    raise UsageError(f"unknown level function {name!r}; expected 'x' or 'x+y^2'")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


# -- commands --------------------------------------------------------------------------------

def cmd_validate(args):
    alg, doc = _load_group(args.group)
    out = {"spec": algebra.validate_spec(alg).to_dict()}
    ok = out["spec"]["ok"]
    wname, vname = _parse_couple(args.couple)
    subs = {}
    for role, name in (("W", wname), ("V", vname)):
        vecs = _subgroup_vectors(alg, doc, name)
        rep = splitting.validate_subgroup(alg, vecs)
        out[f"subgroup_{role}"] = {"name": name, **rep.to_dict()}
        ok &= rep.ok
        if rep.ok:
            subs[role] = splitting.HomogeneousSubgroup(alg, vecs, name=name)
    if len(subs) == 2:
        try:
            couple = splitting.ComplementaryCouple(subs["W"], subs["V"])
            out["couple"] = {"ok": True, "layer_table": couple.layer_table}
        except SpecError as exc:
            out["couple"] = {"ok": False, "error": str(exc)}
            ok = False
    d = _distance(alg, doc, args.dist)
    dist_rep = metric.validate_homogeneous_distance(d, n=args.samples or 10000, seed=args.seed or 0)
    dist_ok = dist_rep.get("triangle_violation", 0.0) <= 1e-9
    out["distance"] = {"params": d.params(), "ok": dist_ok, **dist_rep}
    ok &= dist_ok
    return bool(ok), out


def _couple_from_args(args):
    alg, doc = _load_group(args.group)
    wname, vname = _parse_couple(args.couple)
    try:
        W = splitting.HomogeneousSubgroup(alg, _subgroup_vectors(alg, doc, wname), name=wname)
        V = splitting.HomogeneousSubgroup(alg, _subgroup_vectors(alg, doc, vname), name=vname)
        return alg, doc, splitting.ComplementaryCouple(W, V)
    except SpecError as exc:
        raise UsageError(str(exc)) from None


def cmd_project(args):
    alg, _, couple = _couple_from_args(args)
    if args.point is None:
        raise UsageError("project needs --point")
    g = _parse_vector(args.point, alg.dim)
    w, v = couple.project(g)
    err = float(np.abs(alg.multiply(w, v) - g).max())
    return err <= 1e-10, {"w": w, "v": v, "round_trip_error": err}


def _phi(args):
    try:
        return graph.phi_fixture(args.phi or "zero")
    except SpecError as exc:
        raise UsageError(str(exc)) from None


def cmd_jacobian(args):
    phi = _phi(args)
    couple = phi.couple
    at = _parse_vector(args.at or "0,0,0", couple.alg.dim)
    c = couple.W.to_coords(at)
    grad = phi.gradient(c)
    L = graph.IntrinsicLinearMap.from_matrix(couple, grad)
    wedge_val = graph.jacobian_wedge(couple, L)
    minors_val = graph.jacobian_minors(grad)
    box = (-np.ones(couple.W.dim), np.ones(couple.W.dim))
    mc = graph.jacobian_measure_mc(couple, L, box, n=args.samples or 100000, seed=args.seed)
    ok = abs(wedge_val - minors_val) <= 1e-9 and abs(mc.value - wedge_val) <= max(3 * mc.std_error, 0.02 * wedge_val)
    return ok, {"at": at, "gradient": grad, "wedge": wedge_val, "minors": minors_val,
                "monte_carlo": mc.to_dict()}


def _t_schedule(args):
    if args.t_schedule is None:
        return None
    ts = _parse_vector(args.t_schedule)
    if np.any(ts <= 0) or np.any(np.diff(ts) >= 0):
        raise UsageError("--t-schedule must be positive and strictly decreasing")
    return ts


def _blowup_kw(args):
    kw = {}
    ts = _t_schedule(args)
    if ts is not None:
        kw["t_schedule"] = ts
    if args.centers is not None:
        kw["centers_per_t"] = args.centers
    if args.samples:
        kw["n_mc"] = args.samples
    return kw


def _beta_kw(args):
    return {} if args.starts is None else {"starts": args.starts}


def cmd_spherical_factor(args):
    alg, doc = _load_group(args.group)
    name = args.subspace or "vertical"
    try:
        S = splitting.HomogeneousSubgroup(alg, _subgroup_vectors(alg, doc, name), name=name)
    except SpecError as exc:
        raise UsageError(str(exc)) from None
    if S.dim > 3 and args.seed is None:
        raise UsageError("--seed is required: this slice is measured by Monte Carlo")
    d = _distance(alg, doc, args.dist)
    kw = _beta_kw(args)
    if args.samples:
        kw["n_final"] = args.samples
    sf = measure.spherical_factor(S, d, seed=args.seed or 0, **kw)
    ok = sf.value >= sf.center_value
    return ok, {"subspace": name, "distance": d.params(), **sf.to_dict()}


def cmd_blowup(args):
    phi = _phi(args)
    d = _distance(phi.alg, {}, args.dist)
    point = _parse_vector(args.point or "0,0,0", phi.alg.dim)
    rep = measure.federer_density(phi, point, d, seed=args.seed, beta_kw=_beta_kw(args), **_blowup_kw(args))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "value", "std_error"])
            for row in rep.per_t:
                wr.writerow([repr(row["t"]), repr(row["value"]), repr(row["std_error"])])
    return rep.relative_gap <= args.tol, rep.to_dict()


def cmd_area(args):
    phi = _phi(args)
    d = _distance(phi.alg, {}, args.dist)
    r = _parse_vector(args.region or "-1,1,-1,1")
    if r.size != 2 * phi.couple.W.dim:
        raise UsageError("--region expects lo,hi pairs for every W coordinate")
    region = (r[0::2], r[1::2])
    rep = measure.area_check(phi, region, d, n=args.samples or 100000, seed=args.seed,
                             gap_tol=args.tol, n_family=args.family, blowup_kw=_blowup_kw(args),
                             beta_kw=_beta_kw(args))
    return rep["pass"], rep


def cmd_level_set(args):
    couple = graph.heisenberg_couple()
    alg = couple.alg
    f = _level_function(args.f or "x+y^2")
    at = _parse_vector(args.at or "0,1,0", alg.dim)
    w = couple.pi_W(at)
    sol = measure.solve_implicit(f, couple, w)
    x = alg.multiply(w, sol.point)
    ratio = measure.level_set_jacobian_ratio(f, couple.V, couple.W, x, alg)
    phi = measure.implicit_map(f, couple, box=([-4, -4], [4, 4]))
    c = couple.W.to_coords(w)
    grad = graph.intrinsic_gradient(phi, c)
    minors = graph.jacobian_minors(grad)
    ok = sol.residual <= 1e-10 and abs(ratio - minors) <= 1e-4
    return ok, {"w": w, "phi": sol.point, "residual": sol.residual, "ratio": ratio,
                "intrinsic_gradient": grad, "minors": minors}


COMMANDS = {
    "validate": cmd_validate,
    "project": cmd_project,
    "jacobian": cmd_jacobian,
    "spherical-factor": cmd_spherical_factor,
    "blowup": cmd_blowup,
    "area": cmd_area,
    "level-set": cmd_level_set,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homarea", description="Computations on homogeneous groups.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--group", default="heisenberg1", help="fixture name or JSON spec path")
        p.add_argument("--couple", nargs="*", help="W=<name> V=<name>")
        p.add_argument("--phi", help="zero, linear:a or parabola")
        p.add_argument("--dist", help="dinf, cygan_koranyi")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--point")
        p.add_argument("--at")
        p.add_argument("--subspace")
        p.add_argument("--region", help="lo1,hi1,lo2,hi2,... in W-coordinates")
        p.add_argument("--f", help="level function: x or x+y^2")
        p.add_argument("--tol", type=float, default=0.10)
        p.add_argument("--csv", help="blowup: per-scale table")
        p.add_argument("--t-schedule", help="blowup/area: decreasing scales, comma separated")
        p.add_argument("--centers", type=int, help="blowup/area: sampled centres per scale")
        p.add_argument("--starts", type=int, help="optimizer starts for spherical factors")
        p.add_argument("--family", type=int, default=10, help="area: random family members for the symmetry test")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in STOCHASTIC and args.seed is None:
        parser.error(f"{args.command} is stochastic: --seed is required")
    for flag in ("samples", "centers", "starts", "family"):
        value = getattr(args, flag)
        if value is not None and value <= 0:
            parser.error(f"--{flag} must be positive")
    config = {k: v for k, v in sorted(vars(args).items()) if v is not None}
    try:
        ok, results = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"homarea {args.command}: error: {exc}", file=sys.stderr)
        return 2
    report = _jsonable({"command": args.command, "config": config, "pass": bool(ok), "results": results})
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
