"""Canonical families of solutions and the jet-matching machinery built on them.

A family is either a translation family ``u0 + t`` (for operators that do
not see z) or a parametric family ``u(x, y, tau)``. Translating members in
the plane gives the five-parameter family indexed by jets
alpha = (x, y, z, p, q); ``lookup`` inverts that indexing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .equations import residual
from .errors import MixedSignature, NoConvergence, OutOfRange
from .field import X, Y, ClosedForm, Jet2, SymForm2, eval_jet, forms_sign

TAU = sp.Symbol("tau", real=True)


def _lam(expr, syms):
    fn = sp.lambdify(syms, expr, "numpy")

    def call(*args):
        args = [np.asarray(a, float) for a in args]
        with np.errstate(all="ignore"):
            out = np.asarray(fn(*args), float)
        return np.broadcast_to(out, np.broadcast(*args).shape).copy()

    return call


@dataclass
class FamilyIndex:
    """Resolved parameters of the family member matching a jet alpha."""

    alpha: np.ndarray
    t: float
    shift: np.ndarray
    matched: np.ndarray
    residual: float


class CanonicalFamily:
    """A canonical family of solutions of ``equation``.

    Parameters
    ----------
    equation : EquationDef
    base : ClosedForm, sympy expression or str
        The base solution u0 (translation kind) or u(x, y, tau) (parametric kind).
    kind : {"translation", "parametric"}
    domain : callable (x, y) -> bool array, optional
        Domain of the base solution; Newton iterates leaving it raise OutOfRange.
    box : (xmin, xmax, ymin, ymax)
        Sampling box used by the property checks.
    t_range : (lo, hi)
        Parameter range sampled by the property checks.
    """

    def __init__(self, equation, base, kind="translation", domain=None, box=(-2.0, 2.0, -2.0, 2.0),
                 t_range=(-1.0, 1.0), name=None, tol=1e-12, max_iter=50, max_step=1.0):
        if kind not in ("translation", "parametric"):
            raise ValueError(f"unknown family kind {kind!r}")
        if isinstance(base, ClosedForm):
            name = name or base.name
            base = base.expr
        elif isinstance(base, str):
            base = sp.sympify(base, locals={"x": X, "y": Y, "tau": TAU})
        if kind == "translation":
            if equation.depends_z:
                raise ValueError("translation families need an operator that does not depend on z")
            expr = base + TAU
        else:
            expr = base
        self.equation = equation
        self.kind = kind
        self.expr = expr
        self.name = name or str(base)
        self.domain = domain
        self.box = tuple(float(v) for v in box)
        self.t_range = tuple(float(v) for v in t_range)
        self.tol = tol
        self.max_iter = max_iter
        self.max_step = max_step
        syms = (X, Y, TAU)
        ux, uy = sp.diff(expr, X), sp.diff(expr, Y)
        ders = {
            "z": expr, "p": ux, "q": uy,
            "r": sp.diff(ux, X), "s": sp.diff(ux, Y), "t": sp.diff(uy, Y),
            "zt": sp.diff(expr, TAU), "pt": sp.diff(ux, TAU), "qt": sp.diff(uy, TAU),
        }
        self._d = {k: _lam(v, syms) for k, v in ders.items()}

    def __repr__(self):
        return f"CanonicalFamily({self.name!r}, kind={self.kind!r})"

    # -- members ----------------------------------------------------------

    def jet(self, x, y, t):
        """Jet of the family member u_t at (x, y)."""
        return Jet2(*(self._d[k](x, y, t) for k in ("z", "p", "q", "r", "s", "t")))

    def member(self, t=0.0):
        return ClosedForm(self.expr.subs(TAU, t), name=f"{self.name}[t={t}]")

    def _in_domain(self, x, y):
        ok = np.isfinite(x) & np.isfinite(y)
        if self.domain is not None:
            ok &= np.asarray(self.domain(x, y), bool)
        return ok

    # -- matching ---------------------------------------------------------

    def _solve_gradient(self, target, start, t):
        """Damped Newton for Du_t(x) = target, vectorised over rows."""
        x = np.array(start, float)
        scale = 1.0 + np.hypot(target[:, 0], target[:, 1])
        for _ in range(self.max_iter):
            j = self.jet(x[:, 0], x[:, 1], t)
            res = j.grad() - target
            rn = np.hypot(res[:, 0], res[:, 1])
            if np.all(rn <= self.tol * scale):
                return x, rn
            H = j.hessian()
            step = -np.linalg.solve(H, res[..., None])[..., 0]
            sn = np.hypot(step[:, 0], step[:, 1])
            step *= np.minimum(1.0, self.max_step / np.maximum(sn, 1e-300))[:, None]
            lam = np.ones(len(x))
            for _ in range(30):
                trial = x + lam[:, None] * step
                jt = self.jet(trial[:, 0], trial[:, 1], t)
                rt = jt.grad() - target
                good = (np.hypot(rt[:, 0], rt[:, 1]) < rn) | (rn <= self.tol * scale)
                good &= self._in_domain(trial[:, 0], trial[:, 1])
                if good.all():
                    break
                lam = np.where(good, lam, lam / 2)
            x = x + lam[:, None] * step
            if not np.all(self._in_domain(x[:, 0], x[:, 1])):
                raise OutOfRange("Newton iterate left the family domain")
        j = self.jet(x[:, 0], x[:, 1], t)
        rn = np.hypot(*(j.grad() - target).T)
        if np.all(rn <= 1e3 * self.tol * scale):
            return x, rn
        raise NoConvergence(f"gradient matching did not converge (residual {rn.max():.3e})")

    def _solve_parametric(self, alpha, start, t0):
        v = np.column_stack([start, t0]).astype(float)
        tgt = alpha[:, 2:5]
        scale = 1.0 + np.abs(tgt).max(axis=1)

        def F(v):
            j = self.jet(v[:, 0], v[:, 1], v[:, 2])
            return np.column_stack([j.z, j.p, j.q]) - tgt, j

        for _ in range(self.max_iter):
            res, j = F(v)
            rn = np.abs(res).max(axis=1)
            if np.all(rn <= self.tol * scale):
                return v, rn
            zt = self._d["zt"](v[:, 0], v[:, 1], v[:, 2])
            pt = self._d["pt"](v[:, 0], v[:, 1], v[:, 2])
            qt = self._d["qt"](v[:, 0], v[:, 1], v[:, 2])
            J = np.stack([
                np.column_stack([j.p, j.q, zt]),
                np.column_stack([j.r, j.s, pt]),
                np.column_stack([j.s, j.t, qt]),
            ], axis=1)
            step = -np.linalg.solve(J, res[..., None])[..., 0]
            sn = np.abs(step).max(axis=1)
            step *= np.minimum(1.0, self.max_step / np.maximum(sn, 1e-300))[:, None]
            lam = np.ones(len(v))
            for _ in range(30):
                trial = v + lam[:, None] * step
                rt, _ = F(trial)
                good = (np.abs(rt).max(axis=1) < rn) | (rn <= self.tol * scale)
                good &= self._in_domain(trial[:, 0], trial[:, 1])
                if good.all():
                    break
                lam = np.where(good, lam, lam / 2)
            v = v + lam[:, None] * step
            if not np.all(self._in_domain(v[:, 0], v[:, 1])):
                raise OutOfRange("Newton iterate left the family domain")
        res, _ = F(v)
        rn = np.abs(res).max(axis=1)
        if np.all(rn <= 1e3 * self.tol * scale):
            return v, rn
        raise NoConvergence(f"jet matching did not converge (residual {rn.max():.3e})")

    def lookup_many(self, alpha, start=None):
        """Vectorised lookup: returns (t, matched points, residuals) for rows of alpha."""
        alpha = np.atleast_2d(np.asarray(alpha, float))
        start = alpha[:, :2] if start is None else np.atleast_2d(np.asarray(start, float))
        if self.kind == "translation":
            xs, rn = self._solve_gradient(alpha[:, 3:5], start, 0.0)
            t = alpha[:, 2] - self._d["z"](xs[:, 0], xs[:, 1], 0.0)
        else:
            t0 = np.full(len(alpha), 0.5 * sum(self.t_range))
            v, rn = self._solve_parametric(alpha, start, t0)
            xs, t = v[:, :2], v[:, 2]
        return t, xs, rn

    def gamma_many(self, alpha, start=None):
        """Hessians of the matched members at the jets' base points, shape (N, 2, 2)."""
        t, xs, _ = self.lookup_many(alpha, start)
        return self.jet(xs[:, 0], xs[:, 1], t).hessian()

    def value_alpha(self, alpha, pts):
        """Evaluate the matched member u^alpha at points (same for every row of pts)."""
        t, xs, _ = self.lookup_many(alpha)
        shift = xs - np.atleast_2d(alpha)[:, :2]
        pts = np.atleast_2d(pts)
        return self._d["z"](pts[None, :, 0] + shift[:, None, 0], pts[None, :, 1] + shift[:, None, 1], t[:, None])


def lookup(fam, alpha):
    """Resolve the unique member of the translated family matching alpha = (x, y, z, p, q)."""
    alpha = np.asarray(alpha, float)
    t, xs, rn = fam.lookup_many(alpha[None, :])
    return FamilyIndex(alpha, float(t[0]), xs[0] - alpha[:2], xs[0], float(rn[0]))


def gamma(fam, alpha):
    """Hessian of the matched member u^alpha at (x, y)."""
    return SymForm2.from_matrix(fam.gamma_many(np.asarray(alpha, float)[None, :])[0])


def jets_to_alpha(pts, jet):
    pts = np.atleast_2d(pts)
    return np.column_stack([pts[:, 0], pts[:, 1], jet.z, jet.p, jet.q])


def lambda_field(fam, u, pts, jet=None):
    """Comparison metric Lambda = Gamma(x, y, u, Du) at each point.

    Returns the (N, 2, 2) array and the common definiteness sign (+1/-1).
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    jet = eval_jet(u, pts) if jet is None else jet
    lam = fam.gamma_many(jets_to_alpha(pts, jet))
    sgn = forms_sign(lam)
    signs = set(np.unique(sgn).tolist())
    if 0 in signs or len(signs) > 1:
        raise MixedSignature(f"comparison metric is not of one definite sign (signs seen: {sorted(signs)})")
    return lam, int(sgn[0])


def verify_property_star(fam, n_samples=2000, seed=0, n_searches=200):
    """Sampled audit of the canonical-family axioms.

    Checks the sign of det D^2 u_t, the PDE residual, injectivity of the
    gradient map (Newton searches for a second preimage from random
    starts) and uniqueness of the matching parameter. Failures are
    collected in the report rather than raised.
    """
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = fam.box
    pts = np.column_stack([rng.uniform(x0, x1, 4 * n_samples), rng.uniform(y0, y1, 4 * n_samples)])
    pts = pts[fam._in_domain(pts[:, 0], pts[:, 1])][:n_samples]
    ts = rng.uniform(*fam.t_range, len(pts)) if fam.kind == "parametric" else np.zeros(len(pts))
    jet = fam.jet(pts[:, 0], pts[:, 1], ts)
    det = jet.r * jet.t - jet.s**2
    res = np.abs(residual(fam.equation, jet, check=False))
    findings = []
    scale = max(1.0, float(np.abs(det).max()))
    if det.min() <= 1e-12 * scale:
        findings.append(f"det D^2u_t reaches {det.min():.6g}: gradient map not orientation preserving")
    if not np.all(np.isfinite(res)) or res.max() > 1e-8:
        findings.append(f"PDE residual reaches {np.nanmax(res):.6g}")

    # second-preimage search for the gradient map
    k = min(n_searches, len(pts))
    a = pts[:k]
    starts = np.column_stack([rng.uniform(x0, x1, k), rng.uniform(y0, y1, k)])
    inj_fail = 0
    for i in range(k):
        target = fam.jet(a[i, 0], a[i, 1], ts[i]).grad()[None, :]
        try:
            xs, _ = fam._solve_gradient(target, starts[i : i + 1], ts[i])
        except (NoConvergence, OutOfRange, np.linalg.LinAlgError):
            continue
        if np.hypot(*(xs[0] - a[i])) > 1e-6 * (1 + np.hypot(*a[i])):
            inj_fail += 1
    if inj_fail:
        findings.append(f"{inj_fail} gradient collisions found")

    # uniqueness of the matching parameter from independent starts
    checked, uniq_fail = 0, 0
    alphas = jets_to_alpha(a, fam.jet(a[:, 0], a[:, 1], ts[:k]))
    for i in range(k):
        found = []
        for s in (alphas[i, :2], starts[i], starts[(i + 1) % k]):
            try:
                t, _, _ = fam.lookup_many(alphas[i : i + 1], start=s)
            except (NoConvergence, OutOfRange, np.linalg.LinAlgError):
                continue
            found.append(float(t[0]))
        if len(found) >= 2:
            checked += 1
            if max(found) - min(found) > 1e-6 * (1 + max(abs(v) for v in found)):
                uniq_fail += 1
    if uniq_fail:
        findings.append(f"{uniq_fail} jets matched by more than one family parameter")

    return {
        "detRange": [float(det.min()), float(det.max())],
        "residualMax": float(np.nanmax(res)),
        "injectivityFailures": inj_fail,
        "uniquenessChecks": {"checked": checked, "failures": uniq_fail},
        "findings": findings,
        "pass": not findings,
    }


def rigidity_margin(fam, lambdas, n_jets=100, seed=0, box=None):
    """Residual of jets whose Hessian is lambda times the matched Gamma.

    For random alpha = (x, y, z, p, q) the matched member supplies Gamma;
    the jet (z, p, q, lambda Gamma) keeps the value-matching constraints.
    Returns the lambdas with margin(lambda) = min over jets of |F|; a
    solution can only share the jet when lambda = 1.
    """
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = fam.box if box is None else box
    pts = np.column_stack([rng.uniform(x0, x1, 4 * n_jets), rng.uniform(y0, y1, 4 * n_jets)])
    pts = pts[fam._in_domain(pts[:, 0], pts[:, 1])][:n_jets]
    ts = rng.uniform(*fam.t_range, len(pts)) if fam.kind == "parametric" else rng.uniform(-1, 1, len(pts))
    base = fam.jet(pts[:, 0], pts[:, 1], ts)
    alpha = jets_to_alpha(pts, base)
    # move the base point so that the match is a genuine translation
    alpha[:, :2] += rng.normal(0, 0.25, (len(pts), 2))
    gam = fam.gamma_many(alpha, start=pts)
    lambdas = np.asarray(lambdas, float)
    margins = []
    for lam in lambdas:
        jet = Jet2(alpha[:, 2], alpha[:, 3], alpha[:, 4], lam * gam[:, 0, 0], lam * gam[:, 0, 1], lam * gam[:, 1, 1])
        margins.append(float(np.min(np.abs(residual(fam.equation, jet, check=False)))))
    return {"lambda": lambdas.tolist(), "margin": margins, "nJets": len(pts)}
