"""Natural Neumann data, boundary identities and audits of candidate (u, domain) pairs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .canonical import jets_to_alpha
from .equations import residual
from .errors import IncompleteCoverage, NotClosed, NotConvex, ParseError
from .field import eval_jet, eval_value, points_in_polygon, trace_zero_level

TWO_PI = 2 * np.pi


@dataclass
class NeumannData:
    """Neumann datum g as a periodic C^1 function of the normal angle."""

    angles: np.ndarray
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        a = np.asarray(self.angles, float)
        v = np.asarray(self.values, float)
        order = np.argsort(a)
        a, v = a[order], v[order]
        if np.any(np.diff(a) <= 0):
            raise ValueError("Neumann table angles must be strictly increasing")
        self.angles, self.values = a, v
        if len(a) == 1 or np.ptp(v) == 0:
            self._spline = None
        else:
            self._spline = CubicSpline(np.append(a, a[0] + TWO_PI), np.append(v, v[0]), bc_type="periodic")

    @classmethod
    def constant(cls, value, provenance="constant"):
        return cls(np.array([0.0]), np.array([float(value)]), provenance)

    def _angle(self, nu_or_angle):
        x = np.asarray(nu_or_angle, float)
        if x.ndim and x.shape[-1] == 2:
            x = np.arctan2(x[..., 1], x[..., 0])
        return np.mod(x - self.angles[0], TWO_PI) + self.angles[0]

    def __call__(self, nu_or_angle):
        phi = self._angle(nu_or_angle)
        if self._spline is None:
            return np.full(np.shape(phi), self.values[0])
        return self._spline(phi)

    def derivative(self, nu_or_angle):
        """dg/dphi."""
        phi = self._angle(nu_or_angle)
        if self._spline is None:
            return np.zeros(np.shape(phi))
        return self._spline(phi, 1)

    def differential(self, nu, w):
        """(dg)_nu(w) for unit normals nu and tangent vectors w at them."""
        nu = np.asarray(nu, float)
        tangent = np.stack([-nu[..., 1], nu[..., 0]], -1)
        return self.derivative(nu) * np.sum(np.asarray(w) * tangent, axis=-1)

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["angle", "g", "dg"])
        for a, v, d in zip(self.angles, self.values, self.derivative(self.angles)):
            wr.writerow([repr(float(a)), repr(float(v)), repr(float(d))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, provenance="csv"):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]][:2] != ["angle", "g"]:
            raise ParseError("Neumann CSV must start with header angle,g,dg")
        try:
            a = np.array([[float(c) for c in r[:2]] for r in rows[1:] if r], float)
        except ValueError as exc:
            raise ParseError(f"malformed Neumann CSV: {exc}") from exc
        return cls(a[:, 0], a[:, 1], provenance)


def extract_neumann(u0, kappa_min=None, near=None):
    """Natural Neumann data g(nu) = <nu, Du0> read off the zero level curve of u0.

    Returns ``(NeumannData, LevelCurve)``. The curve must be strictly
    convex so that its normal angle winds exactly once.
    """
    try:
        curve = trace_zero_level(u0, near=near)
    except NotClosed as exc:
        raise NotConvex(f"zero level set does not bound a convex domain: {exc}") from exc
    pts = curve.vertices
    diam = float(np.max(np.ptp(pts, axis=0)))
    kmin = 1e-6 / diam if kappa_min is None else kappa_min
    kappa = curve.kappa[:-1]
    if np.any(kappa <= kmin):
        raise NotConvex(f"curvature drops to {kappa.min():.3e} <= {kmin:.3e}")
    nu = curve.nu[:-1]
    phi = np.unwrap(np.arctan2(nu[:, 1], nu[:, 0]))
    steps = np.diff(np.append(phi, phi[0] + TWO_PI))
    if np.any(steps <= 0) or abs(phi[-1] - phi[0] + steps[-1] - TWO_PI) > 1e-6:
        raise IncompleteCoverage("normal angle does not wind monotonically once around the circle")
    du = eval_jet(u0, pts).grad()
    g = np.einsum("ij,ij->i", nu, du)
    name = getattr(u0.closed_form, "name", "grid field")
    return NeumannData(np.mod(phi, TWO_PI), g, provenance=name), curve


def boundary_identities(u, curve, g=None):
    """Per-vertex residuals of the boundary identities along a curve where u = 0.

    ``be1`` is <w, Du>; ``be3`` is D^2u(w, w) + kappa <nu, Du>, valid for
    any function vanishing on the curve. With Neumann data ``g`` present,
    ``be3g`` replaces <nu, Du> by g(nu) and ``be5`` is
    D^2u(w, nu) + kappa (dg)_nu(w).
    """
    pts, w, nu, kappa = curve.vertices, curve.w[:-1], curve.nu[:-1], curve.kappa[:-1]
    jet = eval_jet(u, pts)
    du, hess = jet.grad(), jet.hessian()
    dww = np.einsum("ni,nij,nj->n", w, hess, w)
    dwn = np.einsum("ni,nij,nj->n", w, hess, nu)
    out = {
        "be1": np.einsum("ij,ij->i", w, du),
        "be3": dww + kappa * np.einsum("ij,ij->i", nu, du),
    }
    if g is not None:
        out["be3g"] = dww + kappa * g(nu)
        out["be5"] = dwn + kappa * g.differential(nu, w)
    out["max"] = {k: float(np.max(np.abs(v))) for k, v in out.items()}
    return out


def eigen_lambda_ratio(u, fam, curve, vertices=None):
    """Ratio kappa / kappa_xi at boundary vertices and the residual of the eigenline relation.

    For each vertex p the member u^xi with xi = (p, 0, Du(p)) is matched;
    kappa_xi is the curvature of its zero level curve at p. The deviation
    is max over Y in {w, nu} of |lambda D^2u^xi(w, Y) - D^2u(w, Y)|.
    """
    idx = np.arange(len(curve.vertices)) if vertices is None else np.atleast_1d(vertices)
    pts = curve.vertices[idx]
    w, nu, kappa = curve.w[idx], curve.nu[idx], curve.kappa[idx]
    jet = eval_jet(u, pts)
    du = jet.grad()
    alpha = jets_to_alpha(pts, jet)
    alpha[:, 2] = 0.0
    gam = fam.gamma_many(alpha)
    gnorm = np.hypot(du[:, 0], du[:, 1])
    sgn = np.sign(np.einsum("ij,ij->i", du, nu))
    what = np.column_stack([-du[:, 1], du[:, 0]]) / gnorm[:, None]
    kappa_xi = -np.einsum("ni,nij,nj->n", what, gam, what) / (sgn * gnorm)
    lam = kappa / kappa_xi
    hess = jet.hessian()
    dev_w = lam * np.einsum("ni,nij,nj->n", w, gam, w) - np.einsum("ni,nij,nj->n", w, hess, w)
    dev_n = lam * np.einsum("ni,nij,nj->n", w, gam, nu) - np.einsum("ni,nij,nj->n", w, hess, nu)
    dev = np.maximum(np.abs(dev_w), np.abs(dev_n))
    if vertices is not None and np.ndim(vertices) == 0:
        return float(lam[0]), float(dev[0])
    return lam, dev


def interior_samples(u, curve, max_points=4000, include_jets=True):
    """Grid nodes of u strictly inside the curve, thinned deterministically."""
    xx, yy = u.grid.mesh()
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    box_lo, box_hi = curve.points.min(0), curve.points.max(0)
    pre = np.all((pts >= box_lo) & (pts <= box_hi), axis=1)
    pts = pts[pre]
    pts = pts[points_in_polygon(pts, curve.vertices)]
    if len(pts) > max_points:
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(int)]
    if not include_jets:
        return pts
    jet = eval_jet(u, pts, strict=False)
    ok = np.all(np.isfinite(np.stack(jet.as_tuple())), axis=0)
    return pts[ok], jet.take(ok)


DEFAULT_CLOSED_TOL = 1e-6


def default_tolerance(u):
    return DEFAULT_CLOSED_TOL if u.closed_form is not None else 10 * u.grid.h**2


def check_solution(u, curve, eq, g=None, fam=None, tol=None, n_matches=16, index=False, **audit_kw):
    """Score a candidate pair (u, domain) against the natural overdetermined problem.

    Returns a report with the PDE residual on the domain, the Dirichlet and
    Neumann residuals on its boundary, the canonicality score
    max |u - u^xi| over sampled jet matches, and a verdict:
    ``canonical`` when everything is within tolerance, ``non-canonical``
    when u solves the problem but differs from every family member (an
    index audit is attached), ``not-a-solution`` otherwise.
    """
    base = default_tolerance(u)
    tols = {"pde": base, "dirichlet": base, "neumann": base, "canonicality": base}
    if isinstance(tol, dict):
        tols.update(tol)
    elif tol is not None:
        tols = {k: float(tol) for k in tols}

    pts, jet = interior_samples(u, curve)
    res = residual(eq, jet, check=False)
    pde = float(np.max(np.abs(res))) if np.all(np.isfinite(res)) else float("inf")
    bpts = curve.vertices
    dirichlet = float(np.max(np.abs(eval_value(u, bpts))))
    neumann = None
    if g is not None:
        bj = eval_jet(u, bpts)
        nu = curve.nu[:-1]
        neumann = float(np.max(np.abs(np.einsum("ij,ij->i", nu, bj.grad()) - g(nu))))
    canon = None
    if fam is not None and len(pts):
        pick = np.linspace(0, len(pts) - 1, min(n_matches, len(pts))).astype(int)
        alpha = jets_to_alpha(pts[pick], jet.take(pick))
        vals = fam.value_alpha(alpha, pts)
        canon = float(np.max(np.abs(vals - np.asarray(jet.z)[None, :])))

    solves = pde <= tols["pde"] and dirichlet <= tols["dirichlet"] and (neumann is None or neumann <= tols["neumann"])
    if not solves:
        verdict = "not-a-solution"
    elif canon is not None and canon > tols["canonicality"]:
        verdict = "non-canonical"
    else:
        verdict = "canonical"
    report = {
        "pdeResidualMax": pde,
        "dirichletMax": dirichlet,
        "neumannMax": neumann,
        "canonicalityScore": canon,
        "verdict": verdict,
        "tolerances": tols,
        "indexAudit": None,
    }
    if fam is not None and (index or verdict == "non-canonical"):
        from .index import audit

        report["indexAudit"] = audit(u, fam, curve, **audit_kw).to_dict()
    return report
