"""Command-line front end.

    overdet verify-family  --config scenario.ini
    overdet extract-neumann --config scenario.ini
    overdet check-solution --config scenario.ini
    overdet index-audit    --config scenario.ini
    overdet solve          --config scenario.ini
    overdet render         --config scenario.ini
    overdet suite          --dir scenarios/ --out results/

A suite run executes every scenario in a directory with the subcommand named
by its [run] command key (followed by render when it has a [render] section)
and writes suite.json with the exit status of each.

Exit status: 0 completed/pass, 1 check failed (report still written),
2 bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .canonical import CanonicalFamily, verify_property_star
from .config import Scenario, parse_floats, split_params
from .equations import anisotropy, get_equation, sphere_function
from .errors import ConfigError, OverdetError, ParseError
from .expressions import BUILDERS, closed_form
from .field import GridSpec, LevelCurve, LineField, ScalarField, trace_zero_level
from .index import ShapeAnalysis, analysis_grid, audit, sample_line_field
from .overdetermined import NeumannData, boundary_identities, check_solution, extract_neumann
from .qd import FIXTURES, circle_tangency, doubled_sphere_audit, fixture, qd_disk_audit, qd_sphere_audit
from .render import render_svg
from .solver import DirichletProblem, nodal_error, smooth_noise, solve_dirichlet

SUBCOMMANDS = ("verify-family", "extract-neumann", "check-solution", "index-audit", "solve", "render")


# ---------------------------------------------------------------------------
# output helpers


def clean(obj, digits=10):
    """JSON-ready copy with floats rounded to a fixed number of significant digits."""
    if isinstance(obj, dict):
        return {str(k): clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        v = float(f"{v:.{digits}g}")
        return 0.0 if v == 0 else v
    return obj


def dumps(obj):
    return json.dumps(clean(obj), indent=2, ensure_ascii=False) + "\n"


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# scenario -> objects


class Context:
    def __init__(self, sc, args):
        self.sc = sc
        self.args = args
        out = args.out or sc.section("output").get("dir", "out")
        self.out = out if args.out else sc.resolve(str(out))
        run = sc.section("run")
        self.seed = int(args.seed if args.seed is not None else run.get("seed", 0))
        self.tol_scale = float(args.tol_scale) if args.tol_scale is not None else 1.0
        self.grid_n = args.grid

    def path(self, name):
        return os.path.join(self.out, name)

    def write(self, name, text):
        write_atomic(self.path(name), text)
        return self.path(name)

    # -- catalog objects ------------------------------------------------

    def equation(self):
        sec = self.sc.section("equation")
        name = self.sc.require("equation", "name")
        plain, groups = split_params(sec, reserved=("name", "sphere", "anisotropy"))
        f = sphere_function(sec["sphere"], **groups.get("sphere", {})) if "sphere" in sec else None
        H = anisotropy(sec["anisotropy"], **groups.get("anisotropy", {})) if "anisotropy" in sec else None
        try:
            return get_equation(name, f=f, H=H, **plain)
        except TypeError as exc:
            raise self.sc.error("equation", "name", f"bad operator parameters: {exc}") from exc

    def _closed_form(self, section, name_key, reserved):
        sec = self.sc.section(section)
        name = self.sc.require(section, name_key)
        plain, _ = split_params(sec, reserved=reserved)
        if name not in BUILDERS:
            raise self.sc.error(section, name_key, f"unknown closed form {name!r}; known: {sorted(BUILDERS)}")
        return closed_form(name, **plain)

    def family(self):
        if not self.sc.has("family"):
            return None
        sec = self.sc.section("family")
        cf = self._closed_form("family", "base", ("base", "kind", "box", "t_range"))
        kw = {}
        if "box" in sec:
            kw["box"] = parse_floats(sec["box"], 4, "family.box")
        if "t_range" in sec:
            kw["t_range"] = parse_floats(sec["t_range"], 2, "family.t_range")
        try:
            return CanonicalFamily(self.equation(), cf, kind=sec.get("kind", "translation"), **kw)
        except ValueError as exc:
            raise self.sc.error("family", "kind", str(exc)) from exc

    def _grid_h(self, bbox, h):
        if self.grid_n:
            return max(bbox[1] - bbox[0], bbox[3] - bbox[2]) / self.grid_n
        return h

    def candidate(self):
        """ScalarField for the candidate u."""
        sec = self.sc.section("candidate")
        src = sec.get("source", "closed-form")
        if src == "closed-form":
            cf = self._closed_form("candidate", "name", ("source", "name", "bbox", "h"))
            bbox = parse_floats(sec.get("bbox", "-2,2,-2,2"), 4, "candidate.bbox")
            h = self._grid_h(bbox, float(sec.get("h", 0.02)))
            return ScalarField.from_closed_form(cf, GridSpec.covering(*bbox, h))
        if src == "grid":
            path = self.sc.resolve(str(self.sc.require("candidate", "file")))
            try:
                with open(path, encoding="utf-8") as fh:
                    return ScalarField.from_csv(fh.read())
            except OSError as exc:
                raise self.sc.error("candidate", "file", f"cannot read grid file: {exc}") from exc
        if src == "solve":
            return self.solve()[0].field
        raise self.sc.error("candidate", "source", f"unknown candidate source {src!r}")

    def tolerances(self):
        sec = self.sc.section("tolerances")
        return {k: float(v) * self.tol_scale for k, v in sec.items()}

    def neumann(self, u=None):
        if not self.sc.has("neumann"):
            return None
        sec = self.sc.section("neumann")
        src = sec.get("source", "candidate")
        if src == "constant":
            return NeumannData.constant(float(self.sc.require("neumann", "value")))
        if src == "file":
            path = self.sc.resolve(str(self.sc.require("neumann", "file")))
            try:
                with open(path, encoding="utf-8") as fh:
                    return NeumannData.from_csv(fh.read(), provenance=os.path.basename(path))
            except OSError as exc:
                raise self.sc.error("neumann", "file", f"cannot read Neumann table: {exc}") from exc
        if src == "candidate":
            return extract_neumann(u)[0]
        if src == "family":
            fam = self.family()
            if fam is None:
                raise self.sc.error("neumann", "source", "neumann source 'family' needs a [family] section")
            member = fam.member(float(sec.get("t", 0.0)))
            bbox = parse_floats(sec.get("bbox", "-3,3,-3,3"), 4, "neumann.bbox")
            grid = GridSpec.covering(*bbox, float(sec.get("h", 0.02)))
            return extract_neumann(ScalarField.from_closed_form(member, grid))[0]
        raise self.sc.error("neumann", "source", f"unknown Neumann source {src!r}")

    def solve(self):
        eq = self.equation()
        dom = self._closed_form("domain", "name", ("name", "bbox"))
        bbox = parse_floats(self.sc.require("domain", "bbox"), 4, "domain.bbox")
        sec = self.sc.section("solve")
        plain, groups = split_params(sec, reserved=("data", "h", "tol", "max_iter", "continuation", "initial",
                                                    "noise", "exact"))
        data_name = sec.get("data", 0.0)
        if isinstance(data_name, str):
            if data_name not in BUILDERS:
                raise self.sc.error("solve", "data", f"unknown closed form {data_name!r}")
            data = closed_form(data_name, **groups.get("data", {}))
        else:
            data = float(data_name)
        h = 1.0 / self.grid_n if self.grid_n else float(sec.get("h", 1 / 32))
        prob = DirichletProblem(eq, dom, tuple(bbox), data=data, h=h, tol=float(sec.get("tol", 1e-10)),
                                max_iter=int(sec.get("max_iter", 40)),
                                continuation=int(sec.get("continuation", 0)))
        initial = sec.get("initial")
        if isinstance(initial, str) and initial in BUILDERS:
            base = closed_form(initial, **groups.get("initial", {}))
            amp = float(sec.get("noise", 0.0))
            if amp:
                noise = smooth_noise(self.seed, amp, radius=float(groups.get("noise", {}).get("radius", 1.0)))
                initial = lambda x, y, b=base, n=noise: b.value(x, y) + n(x, y)  # noqa: E731
            else:
                initial = base
        elif isinstance(initial, (int, float)) and not isinstance(initial, bool):
            initial = float(initial)
        res = solve_dirichlet(prob, initial=initial)
        exact = None
        if "exact" in sec:
            exact = closed_form(sec["exact"], **groups.get("exact", {}))
        return res, exact, prob


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify_family(ctx):
    fam = ctx.family()
    if fam is None:
        raise ConfigError("verify-family needs a [family] section", key="family")
    run = ctx.sc.section("run")
    rep = verify_property_star(fam, n_samples=int(run.get("samples", 2000)), seed=ctx.seed,
                               n_searches=int(run.get("searches", 200)))
    rep = {"family": fam.name, "equation": fam.equation.name, "seed": ctx.seed, **rep}
    ctx.write("verify-family.json", dumps(rep))
    return 0 if rep["pass"] else 1


def cmd_extract_neumann(ctx):
    u = ctx.candidate()
    g, curve = extract_neumann(u)
    ctx.write("neumann.csv", g.to_csv())
    ctx.write("curve.csv", curve.to_csv())
    probes = {"(1,0)": (1, 0), "(0,1)": (0, 1), "(-1,0)": (-1, 0), "(0,-1)": (0, -1)}
    rep = {
        "source": g.provenance,
        "vertices": len(curve.vertices),
        "length": curve.length,
        "gMin": float(g.values.min()),
        "gMax": float(g.values.max()),
        "gAtNormal": {k: float(g(np.array(v, float))) for k, v in probes.items()},
        "kappaMin": float(curve.kappa.min()),
        "kappaMax": float(curve.kappa.max()),
    }
    ctx.write("neumann.json", dumps(rep))
    return 0


def cmd_check_solution(ctx):
    u = ctx.candidate()
    eq = ctx.equation()
    fam = ctx.family()
    curve = trace_zero_level(u)
    g = ctx.neumann(u)
    tols = ctx.tolerances()
    tol = {k: tols[k] for k in ("pde", "dirichlet", "neumann", "canonicality") if k in tols} or None
    if tol is None and ctx.tol_scale != 1.0:
        from .overdetermined import default_tolerance

        tol = default_tolerance(u) * ctx.tol_scale
    rep = check_solution(u, curve, eq, g=g, fam=fam, tol=tol)
    bi = boundary_identities(u, curve, g)
    rep = {"equation": eq.name, "family": None if fam is None else fam.name,
           "neumann": None if g is None else g.provenance, **rep, "boundaryIdentities": bi["max"]}
    ctx.write("check-solution.json", dumps(rep))
    ctx.write("curve.csv", curve.to_csv())
    return 1 if rep["verdict"] == "not-a-solution" else 0


def _circle_curve(n=360):
    phi = 2 * np.pi * np.arange(n + 1) / n
    pts = np.column_stack([np.cos(phi), np.sin(phi)])
    w = np.column_stack([-np.sin(phi), np.cos(phi)])
    return LevelCurve(pts, phi, w, -pts, np.ones(n + 1))


def _qd_audit(ctx):
    sec = ctx.sc.section("candidate")
    name = str(ctx.sc.require("candidate", "fixture"))
    if name not in FIXTURES:
        raise ctx.sc.error("candidate", "fixture", f"unknown fixture {name!r}; known: {sorted(FIXTURES)}")
    plain, _ = split_params(sec, reserved=("source", "fixture", "foliation", "audit", "assume_tangent", "ticks"))
    q = fixture(name, **plain)
    fol = sec.get("foliation", "horizontal")
    mode = sec.get("audit", "sphere")
    extra = {}
    if mode == "sphere":
        rep = qd_sphere_audit(q, fol)
        sings = rep.interior
        curve = None
    elif mode == "disk":
        rep = qd_disk_audit(q, fol, assume_tangent=bool(sec.get("assume_tangent", False)))
        sings = rep.interior
        curve = _circle_curve()
    elif mode == "doubled":
        rep, seam = doubled_sphere_audit(q, fol)
        disk = qd_disk_audit(q, fol)
        extra = {"seamMismatch": seam, "diskSumDirect": disk.disk_sum, "tangencyMax": circle_tangency(q, fol)}
        sings = [e for e in rep.interior if not e.get("mirror")]
        curve = _circle_curve()
    else:
        raise ctx.sc.error("candidate", "audit", f"unknown audit {mode!r}")
    n = int(sec.get("ticks", 25))
    xs = np.linspace(-1.5, 1.5, n)
    xx, yy = np.meshgrid(xs, xs)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    th, ok = q.angles(pts, fol)
    lf = LineField(pts[:, 0], pts[:, 1], th, ok)
    out = {"fixture": q.name or name, "foliation": fol, "audit": mode, **rep.to_dict(), **extra}
    return out, lf, curve, sings, rep.contradiction


def cmd_index_audit(ctx):
    src = ctx.sc.section("candidate").get("source", "closed-form")
    if src == "quadratic-differential":
        rep, lf, curve, sings, bad = _qd_audit(ctx)
    else:
        u = ctx.candidate()
        fam = ctx.family()
        if fam is None:
            raise ConfigError("index-audit needs a [family] section", key="family")
        curve = trace_zero_level(u)
        tols = ctx.tolerances()
        kw = {}
        if "umbilic" in tols:
            kw["tau"] = tols["umbilic"]
        if "tangent" in tols:
            kw["tangent_tol"] = tols["tangent"]
        r = audit(u, fam, curve, **kw)
        rep = {"family": fam.name, "candidate": getattr(u.closed_form, "name", "grid field"), **r.to_dict()}
        bad = r.contradiction
        sings = r.interior + r.boundary
        n = int(ctx.sc.section("output").get("ticks", 25))
        lo, hi = curve.points.min(0), curve.points.max(0)
        xs, ys = np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)
        xx, yy = np.meshgrid(xs, ys)
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        from .field import points_in_polygon

        pts = pts[points_in_polygon(pts, curve.vertices)]
        lf = sample_line_field(ShapeAnalysis(u, fam), pts, ctx.sc.section("output").get("field", "Z1"))
    ctx.write("index.json", dumps(rep))
    ctx.write("linefield.csv", lf.to_csv())
    if curve is not None:
        ctx.write("curve.csv", curve.to_csv())
    ctx.write("singularities.json", dumps([{"x": s.get("x"), "y": s.get("y"), "index": s.get("index")}
                                            for s in sings]))
    return 1 if bad else 0


def cmd_solve(ctx):
    res, exact, prob = ctx.solve()
    ctx.write("solution.csv", res.field.to_csv())
    ctx.write("convergence.json", dumps(res.residuals))
    rep = {
        "equation": prob.equation.name,
        "h": prob.h,
        "unknowns": int(res.disc.inside.sum()),
        "iterations": len(res.log) - 1,
        "finalResidual": res.residuals[-1],
        "log": res.log,
    }
    if exact is not None:
        rep["maxError"] = nodal_error(res, exact)
        rep["maxErrorOverH2"] = rep["maxError"] / prob.h**2
    ctx.write("solve.json", dumps(rep))
    return 0


def _read(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {what}: {exc}") from exc


def cmd_render(ctx):
    sec = ctx.sc.section("render")
    lf_path = sec.get("linefield")
    lf_path = ctx.sc.resolve(str(lf_path)) if lf_path else ctx.path("linefield.csv")
    lf = LineField.from_csv(_read(lf_path, "line field"))
    curve = None
    cpath = sec.get("curve")
    cpath = ctx.sc.resolve(str(cpath)) if cpath else ctx.path("curve.csv")
    if sec.get("curve") or os.path.exists(cpath):
        curve = LevelCurve.from_csv(_read(cpath, "curve"))
    sings = []
    spath = sec.get("singularities")
    spath = ctx.sc.resolve(str(spath)) if spath else ctx.path("singularities.json")
    if sec.get("singularities") or os.path.exists(spath):
        try:
            sings = json.loads(_read(spath, "singularities"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed singularities JSON: {exc}") from exc
    svg = render_svg(lf, curve, sings, title=str(sec.get("title", "")))
    ctx.write(str(sec.get("file", "linefield.svg")), svg)
    return 0


COMMANDS = {
    "verify-family": cmd_verify_family,
    "extract-neumann": cmd_extract_neumann,
    "check-solution": cmd_check_solution,
    "index-audit": cmd_index_audit,
    "solve": cmd_solve,
    "render": cmd_render,
}


def _run_one(command, path, args):
    sc = Scenario.load(path)
    ctx = Context(sc, args)
    try:
        return COMMANDS[command](ctx)
    except (ConfigError, ParseError):
        raise
    except OverdetError as exc:
        ctx.write(f"{command}.error.json", dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1


def cmd_suite(args):
    """Run every *.ini under args.dir; exit 1 when any status differs from its [run] expect."""
    try:
        paths = sorted(p for p in os.listdir(args.dir) if p.endswith(".ini"))
    except OSError as exc:
        raise ConfigError(f"cannot list scenario directory: {exc}") from exc
    if not paths:
        raise ConfigError(f"no scenario files in {args.dir}")
    root = args.out or "out"
    rows = {}
    for name in paths:
        path = os.path.join(args.dir, name)
        stem = name[:-4]
        sc = Scenario.load(path)
        command = sc.section("run").get("command")
        if command not in COMMANDS:
            raise sc.error("run", "command", f"{name}: [run] command must be one of {', '.join(SUBCOMMANDS)}")
        sub = argparse.Namespace(out=os.path.join(root, stem), seed=args.seed, tol_scale=args.tol_scale,
                                 grid=args.grid)
        status = _run_one(command, path, sub)
        if sc.has("render") and command != "render":
            _run_one("render", path, sub)
        expect = int(sc.section("run").get("expect", 0))
        rows[stem] = {"command": command, "exit": status, "expected": expect}
    ok = all(r["exit"] == r["expected"] for r in rows.values())
    write_atomic(os.path.join(root, "suite.json"), dumps({"scenarios": rows, "pass": ok}))
    return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="overdet", description="Audits of natural overdetermined elliptic problems.")
    ap.add_argument("--version", action="version", version=f"overdet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario INI file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
        p.add_argument("--tol-scale", type=float, dest="tol_scale", help="multiply every tolerance")
        p.add_argument("--grid", type=int, help="grid resolution N (h = span / N, or 1/N for solves)")
    p = sub.add_parser("suite")
    p.add_argument("--dir", required=True, help="directory of scenario INI files")
    p.add_argument("--out", help="output root; each scenario writes to OUT/<name>")
    p.add_argument("--seed", type=int, help="random seed for every scenario")
    p.add_argument("--tol-scale", type=float, dest="tol_scale", help="multiply every tolerance")
    p.add_argument("--grid", type=int, help="grid resolution N for every scenario")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "suite":
            return cmd_suite(args)
        sc = Scenario.load(args.config)
        ctx = Context(sc, args)
        return COMMANDS[args.command](ctx)
    except (ConfigError, ParseError) as exc:
        print(f"overdet: input error: {exc}", file=sys.stderr)
        return 2
    except OverdetError as exc:
        # the computation ran but the check could not be completed
        print(f"overdet: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.command == "suite":
            return 1
        try:
            ctx.write(f"{args.command}.error.json", dumps({"error": type(exc).__name__, "message": str(exc)}))
        except (OSError, NameError):
            pass
        return 1


if __name__ == "__main__":
    sys.exit(main())
