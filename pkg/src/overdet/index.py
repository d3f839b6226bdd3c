"""Shape tensor, umbilics, line fields, half-integer indices and Poincare-Hopf audits.

For a candidate u and a canonical family the comparison metric Lambda is
the Hessian of the family member matching u's first-order jet. The shape
tensor S solves Lambda(S X, Y) = D^2u(X, Y) and the deviation form is
sigma = D^2u - Lambda. Umbilics are points where S = Id; away from them S
has two Lambda-orthogonal eigenlines, and near them sigma is indefinite
with two null lines.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize

from .canonical import jets_to_alpha, lambda_field
from .errors import InsufficientSampling, SingularLambda
from .field import eval_jet, line_angle_diff, points_in_polygon, wrap_line_angle


# ---------------------------------------------------------------------------
# pointwise algebra on stacks of 2x2 forms


def _sym_major_angle(m):
    """Angle of the eigenvector of the larger eigenvalue of symmetric 2x2 forms."""
    a, b, c = m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]
    return 0.5 * np.arctan2(2 * b, a - c)


def _sym_eigvals(m):
    a, b, c = m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]
    mid = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return mid - rad, mid + rad


def _chol2(m):
    """Lower Cholesky factor of SPD 2x2 stacks."""
    l11 = np.sqrt(m[..., 0, 0])
    l21 = m[..., 1, 0] / l11
    l22 = np.sqrt(m[..., 1, 1] - l21**2)
    L = np.zeros(m.shape)
    L[..., 0, 0], L[..., 1, 0], L[..., 1, 1] = l11, l21, l22
    return L


def shape_from_forms(lam, hess):
    """S = Lambda^{-1} D^2u per node."""
    det = lam[..., 0, 0] * lam[..., 1, 1] - lam[..., 0, 1] * lam[..., 1, 0]
    scale = np.abs(lam).max(axis=(-1, -2))
    if np.any(np.abs(det) <= 1e-14 * np.maximum(scale, 1e-300) ** 2):
        raise SingularLambda("comparison metric is singular")
    return np.linalg.solve(lam, hess)


def eigenline_angles(lam, hess, sign):
    """Angles of the eigenlines (Z1, Z2) of S = Lambda^{-1} D^2u and the eigenvalue gap.

    Uses the positive form |Lambda| = sign * Lambda; Z1 carries the larger
    eigenvalue of S.
    """
    pos = sign * lam
    L = _chol2(pos)
    Linv = np.linalg.inv(L)
    M = Linv @ hess @ np.swapaxes(Linv, -1, -2)
    lo, hi = _sym_eigvals(M)
    th_hi = _sym_major_angle(M)
    y_hi = np.stack([np.cos(th_hi), np.sin(th_hi)], -1)
    y_lo = np.stack([-np.sin(th_hi), np.cos(th_hi)], -1)
    LinvT = np.swapaxes(Linv, -1, -2)
    v_hi = np.einsum("...ij,...j->...i", LinvT, y_hi)
    v_lo = np.einsum("...ij,...j->...i", LinvT, y_lo)
    a_hi = np.arctan2(v_hi[..., 1], v_hi[..., 0])
    a_lo = np.arctan2(v_lo[..., 1], v_lo[..., 0])
    # eigenvalues of S are sign * eigenvalues of |Lambda|^{-1} D^2u
    z1 = np.where(sign > 0, a_hi, a_lo)
    z2 = np.where(sign > 0, a_lo, a_hi)
    return wrap_line_angle(z1), wrap_line_angle(z2), hi - lo


def null_line_angles(sigma):
    """Null directions (U, V) of indefinite symmetric forms; valid where det < 0."""
    lo, hi = _sym_eigvals(sigma)
    th = _sym_major_angle(sigma)
    valid = (hi > 0) & (lo < 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.arctan(np.sqrt(np.where(valid, hi / -lo, np.nan)))
    return wrap_line_angle(th + beta), wrap_line_angle(th - beta), valid


def metric_angle(directions, lam_pos):
    """Angle of directions measured in a Lambda-orthonormal frame."""
    v = np.stack([np.cos(directions), np.sin(directions)], -1)
    L = _chol2(lam_pos)
    w = np.einsum("...ji,...j->...i", L, v)
    return np.arctan2(w[..., 1], w[..., 0])


def bisection_deviation(z1, u, v, lam_pos):
    """|Lambda|-angle mismatch between (Z1 -> U) and (V -> Z1), taken mod pi."""
    a1, au, av = (metric_angle(x, lam_pos) for x in (z1, u, v))
    return np.abs(line_angle_diff(line_angle_diff(a1, au), line_angle_diff(av, a1)))


# ---------------------------------------------------------------------------
# shape analysis of a candidate against a family


@dataclass
class ShapeTensorField:
    """Pointwise S with its companion Lambda and D^2u."""

    points: np.ndarray
    S: np.ndarray
    lam: np.ndarray
    hess: np.ndarray
    sign: int

    @property
    def sigma(self):
        return self.hess - self.lam

    @property
    def lam_pos(self):
        return self.sign * self.lam

    def umbilic_distance(self):
        """Frobenius norm of S - Id."""
        return np.linalg.norm(self.S - np.eye(2), axis=(-2, -1))

    def reconstruction_residual(self):
        return np.abs(self.lam @ self.S - self.hess).max()

    def eigenlines(self):
        return eigenline_angles(self.lam, self.hess, self.sign)

    def null_lines(self):
        return null_line_angles(self.sigma)


def shape_tensor(u, fam, pts, jet=None):
    """Shape tensor S = Lambda^{-1} D^2u at points."""
    pts = np.atleast_2d(np.asarray(pts, float))
    jet = eval_jet(u, pts) if jet is None else jet
    lam, sign = lambda_field(fam, u, pts, jet=jet)
    hess = jet.hessian()
    return ShapeTensorField(pts, shape_from_forms(lam, hess), lam, hess, sign)


class ShapeAnalysis:
    """Line fields of a candidate u relative to a family, evaluable anywhere."""

    def __init__(self, u, fam):
        self.u = u
        self.fam = fam

    def at(self, pts):
        return shape_tensor(self.u, self.fam, pts)

    def angle_fn(self, which):
        """Callable pts -> (theta, valid) for which in {Z1, Z2, U, V}."""

        def fn(pts):
            st = self.at(pts)
            if which in ("Z1", "Z2"):
                z1, z2, gap = st.eigenlines()
                return (z1 if which == "Z1" else z2), gap > 0
            u_, v_, ok = st.null_lines()
            return (u_ if which == "U" else v_), ok

        return fn

    def det_sigma(self, pts):
        s = self.at(pts).sigma
        return s[:, 0, 0] * s[:, 1, 1] - s[:, 0, 1] * s[:, 1, 0]


# ---------------------------------------------------------------------------
# winding


@dataclass
class LoopIndex:
    index: float
    raw: float
    snap_distance: float
    snapped: bool
    samples: int


def _circle(center, radius, n):
    phi = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)])


def _subdivide(poly):
    mid = 0.5 * (poly + np.roll(poly, -1, axis=0))
    out = np.empty((2 * len(poly), 2))
    out[0::2], out[1::2] = poly, mid
    return out


def line_index(angle_fn, loop, n=64, max_refine=10, snap_tol=0.1):
    """Index of a line field around a counter-clockwise loop.

    ``loop`` is either a closed polyline (N, 2) or a ``(center, radius)``
    pair. The doubled angle is unwrapped along the loop; sampling is
    refined until every increment of the doubled angle is below pi/2.
    The result is snapped to the nearest multiple of 1/2 when within
    ``snap_tol``.
    """
    circle = isinstance(loop, tuple) and len(loop) == 2 and np.ndim(loop[1]) == 0
    poly = _circle(np.asarray(loop[0], float), float(loop[1]), n) if circle else np.asarray(loop, float)
    if not circle and np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    for _ in range(max_refine + 1):
        theta, valid = angle_fn(poly)
        if not np.all(valid):
            raise InsufficientSampling("loop passes through points where the line field is undefined")
        d = np.angle(np.exp(2j * (np.roll(theta, -1) - theta)))
        if np.max(np.abs(d)) < np.pi / 2:
            raw = float(np.sum(d) / (4 * np.pi))
            snap = round(2 * raw) / 2
            dist = abs(raw - snap)
            ok = dist <= snap_tol
            return LoopIndex(snap if ok else raw, raw, dist, ok, len(poly))
        poly = _circle(np.asarray(loop[0], float), float(loop[1]), 2 * len(poly)) if circle else _subdivide(poly)
    raise InsufficientSampling(f"doubled-angle increments stay above pi/2 with {len(poly)} samples")


def line_field_sampler(lf):
    """Nearest-sample lookup turning a LineField dump into an angle function."""
    from scipy.spatial import cKDTree

    tree = cKDTree(np.column_stack([lf.x, lf.y]))

    def fn(pts):
        _, k = tree.query(pts)
        return lf.theta[k], lf.valid[k]

    return fn


# ---------------------------------------------------------------------------
# umbilics


@dataclass
class Umbilic:
    x: float
    y: float
    distance: float
    indices: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    loop_radius: float = float("nan")
    det_sigma_max: float = float("nan")
    loop_invariant: bool | None = None
    boundary: bool = False

    @property
    def degree_estimate(self):
        z1 = self.indices.get("Z1")
        return None if z1 is None else int(round(2 - 2 * z1))


@dataclass
class UmbilicSet:
    points: list
    canonical_region: bool
    region_fraction: float
    threshold: float


def detect_umbilics(analysis, grid_pts, shape, h, tau=1e-4, isolation_cap=10):
    """Locate points where S = Id.

    ``grid_pts`` are nodes of a regular grid (``shape`` = (ny, nx), NaN
    rows outside the region). Local minima of |S - Id| are refined by
    Nelder-Mead and kept when the refined value is at most ``tau``. A
    sub-threshold component wider than ``isolation_cap`` isolation radii
    (3h) marks an identically canonical region.
    """
    ok = np.all(np.isfinite(grid_pts), axis=1)
    m = np.full(len(grid_pts), np.nan)
    st = analysis.at(grid_pts[ok])
    m[ok] = st.umbilic_distance()
    M = m.reshape(shape)
    filled = np.where(np.isfinite(M), M, np.inf)

    sub = filled <= tau
    labels, nlab = ndimage.label(sub, structure=np.ones((3, 3)))
    canonical = False
    frac = float(sub.sum() / max(np.isfinite(M).sum(), 1))
    pts2 = grid_pts.reshape(*shape, 2)
    for k in range(1, nlab + 1):
        comp = pts2[labels == k]
        diam = float(np.max(np.ptp(comp, axis=0))) if len(comp) > 1 else 0.0
        if diam > isolation_cap * 3 * h:
            canonical = True
    if canonical:
        return UmbilicSet([], True, frac, tau)

    local_min = (filled == ndimage.minimum_filter(filled, size=3, mode="constant", cval=np.inf)) & np.isfinite(M)
    ring = ndimage.maximum_filter(np.where(np.isfinite(M), M, -np.inf), size=5, mode="constant", cval=-np.inf)
    cand = local_min & ((filled <= 100 * tau) | (filled <= 0.25 * ring))
    found = []

    def obj(x):
        try:
            return float(analysis.at(x[None, :]).umbilic_distance()[0])
        except Exception:  # noqa: BLE001 - leaving the evaluable region
            return np.inf

    for p in pts2[cand]:
        res = optimize.minimize(
            obj, p, method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-300, "maxiter": 2000,
                     "initial_simplex": np.array([p, p + [h / 2, 0], p + [0, h / 2]])},
        )
        if res.fun <= tau and np.hypot(*(res.x - p)) <= 2 * h:
            if all(np.hypot(res.x[0] - q.x, res.x[1] - q.y) > 2 * h for q in found):
                found.append(Umbilic(float(res.x[0]), float(res.x[1]), float(res.fun)))
    return UmbilicSet(found, False, frac, tau)


def classify_umbilic(analysis, umb, h, fields=("Z1", "Z2", "U", "V"), max_radius=None):
    """Pick an isolation loop with det sigma < 0 and measure the four line-field indices."""
    c = np.array([umb.x, umb.y])
    radii = [3 * h, 4.5 * h, 6 * h, 2 * h, h, h / 2, h / 4, h / 8]
    if max_radius is not None:
        radii = [r for r in radii if r <= max_radius] or [max_radius]
    chosen = None
    for rho in radii:
        try:
            ds = analysis.det_sigma(_circle(c, rho, 128))
        except Exception:  # noqa: BLE001 - loop leaves the evaluable region
            continue
        if np.all(ds < 0):
            chosen, dmax = rho, float(ds.max())
            break
    if chosen is None:
        return umb
    umb.loop_radius, umb.det_sigma_max = chosen, dmax
    for f in fields:
        li = line_index(analysis.angle_fn(f), (c, chosen))
        umb.indices[f] = li.index
        umb.raw[f] = li.raw
    try:
        ds2 = analysis.det_sigma(_circle(c, 2 * chosen, 128))
        if np.all(ds2 < 0):
            li2 = line_index(analysis.angle_fn("Z1"), (c, 2 * chosen))
            umb.loop_invariant = li2.index == umb.indices.get("Z1")
    except Exception:  # noqa: BLE001
        umb.loop_invariant = None
    return umb


# ---------------------------------------------------------------------------
# boundary tangency and the Poincare-Hopf audit


def boundary_tangency(angle_pairs, curve, tau=1e-4):
    """Per-vertex angle between the better-aligned eigenline and the boundary tangent.

    ``angle_pairs`` is a callable pts -> (z1, z2, gap); vertices whose
    eigenvalue gap is at most ``tau`` are umbilic and skipped.
    """
    pts = curve.vertices
    w = curve.w[:-1]
    tw = np.arctan2(w[:, 1], w[:, 0])
    z1, z2, gap = angle_pairs(pts)
    d1 = np.abs(line_angle_diff(z1, tw))
    d2 = np.abs(line_angle_diff(z2, tw))
    live = gap > tau
    if not live.any():
        return {"deviation": np.full(len(pts), np.nan), "max": None, "mean": None,
                "field": None, "umbilicBoundary": True, "umbilicFraction": 1.0}
    best = np.minimum(d1, d2)
    pick = "Z1" if np.sum(d1[live] <= d2[live]) >= np.sum(d2[live] < d1[live]) else "Z2"
    dev = np.where(live, best, np.nan)
    return {
        "deviation": dev,
        "max": float(np.nanmax(dev)),
        "mean": float(np.nanmean(dev)),
        "field": pick,
        "umbilicBoundary": False,
        "umbilicFraction": float(1 - live.mean()),
    }


@dataclass
class IndexReport:
    interior: list
    boundary: list
    tangency_max: float | None
    disk_sum: float | None
    sphere_sum: float | None
    contradiction: bool
    not_applicable_reason: str | None
    tangency_assumed: bool = False
    identically_canonical: bool = False

    def to_dict(self):
        return {
            "interior": self.interior,
            "boundary": self.boundary,
            "tangencyMax": self.tangency_max,
            "diskSum": self.disk_sum,
            "sphereSum": self.sphere_sum,
            "contradiction": self.contradiction,
            "notApplicableReason": self.not_applicable_reason,
            "tangencyAssumed": self.tangency_assumed,
            "identicallyCanonical": self.identically_canonical,
        }


def _is_half_integer(v):
    return v is not None and abs(2 * v - round(2 * v)) < 1e-9


def ph_audit(interior, boundary=(), tangency_max=None, tangent_tol=1e-3, assume_tangent=False):
    """Disk-with-tangent-boundary index accounting.

    ``interior`` entries carry an ``index``; ``boundary`` entries carry
    their full index, of which half counts for the disk. When the field is
    tangent to the boundary, doubling the disk gives a sphere field whose
    index sum must be 2, i.e. the disk sum must equal 1; any other value
    sets the contradiction flag.
    """
    interior = [dict(e) for e in interior]
    boundary = [dict(e) for e in boundary]
    for b in boundary:
        b["boundaryIndex"] = 0.5 * b["index"]
    indices = [e["index"] for e in interior] + [b["index"] for b in boundary]
    if not all(_is_half_integer(v) for v in indices):
        reason = "unsnapped index: winding not within snap tolerance of a half-integer"
        return IndexReport(interior, boundary, tangency_max, None, None, False, reason, assume_tangent)
    disk = sum(e["index"] for e in interior) + sum(b["boundaryIndex"] for b in boundary)
    tangent = assume_tangent or (tangency_max is not None and tangency_max <= tangent_tol)
    if not tangent:
        reason = "not applicable - field not tangent to the boundary"
        if tangency_max is None:
            reason = "not applicable - tangency undefined (umbilic boundary)"
        return IndexReport(interior, boundary, tangency_max, disk, None, False, reason, assume_tangent)
    return IndexReport(interior, boundary, tangency_max, disk, 2 * disk, abs(disk - 1) > 1e-9, None, assume_tangent)


def sphere_audit(indices):
    """Sum of indices of a line field on the sphere; Poincare-Hopf requires 2."""
    total = float(sum(e["index"] for e in indices))
    return IndexReport(list(indices), [], None, None, total, abs(total - 2) > 1e-9, None)


# ---------------------------------------------------------------------------
# full audit of a candidate


def analysis_grid(curve, h, collar=3):
    lo = curve.points.min(0) - collar * h
    hi = curve.points.max(0) + collar * h
    xs = np.arange(np.floor(lo[0] / h), np.ceil(hi[0] / h) + 1) * h
    ys = np.arange(np.floor(lo[1] / h), np.ceil(hi[1] / h) + 1) * h
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()]), xx.shape


def _dist_to_curve(pts, curve):
    from scipy.spatial import cKDTree

    d, _ = cKDTree(curve.vertices).query(pts)
    return d


def audit(u, fam, curve, h=None, tau=None, tangent_tol=1e-3, assume_tangent=False):
    """Index audit of a candidate u on the domain bounded by ``curve``."""
    if h is None:
        h = float(np.max(np.ptp(curve.points, axis=0))) / 64 if u.closed_form is not None else u.grid.h
    if tau is None:
        tau = 1e-4 if u.closed_form is not None else max(1e-3, 10 * u.grid.h**2)
    pts, shape = analysis_grid(curve, h)
    region = points_in_polygon(pts, curve.vertices) | (_dist_to_curve(pts, curve) <= 3 * h)
    if u.closed_form is None:
        jet = eval_jet(u, pts, strict=False)
        region &= np.all(np.isfinite(np.stack(jet.as_tuple())), axis=0)
    gp = np.where(region[:, None], pts, np.nan)
    analysis = ShapeAnalysis(u, fam)
    umbs = detect_umbilics(analysis, gp, shape, h, tau=tau)
    if umbs.canonical_region:
        rep = IndexReport([], [], None, None, None, False,
                          "identically canonical: S = Id on an open region, no isolated singularities")
        rep.identically_canonical = True
        return rep
    interior, boundary = [], []
    for umb in umbs.points:
        classify_umbilic(analysis, umb, h)
        d = float(_dist_to_curve(np.array([[umb.x, umb.y]]), curve)[0])
        inside = bool(points_in_polygon(np.array([[umb.x, umb.y]]), curve.vertices)[0])
        if not inside and d > 3 * h:
            continue
        entry = {
            "x": umb.x, "y": umb.y,
            "index": umb.indices.get("Z1"),
            "degreeEstimate": umb.degree_estimate,
            "fieldIndices": dict(umb.indices),
            "loopRadius": umb.loop_radius,
            "detSigmaMax": umb.det_sigma_max,
            "loopInvariant": umb.loop_invariant,
        }
        (boundary if d <= 3 * h else interior).append(entry)

    def pairs(p):
        st = analysis.at(p)
        return st.eigenlines()

    tang = boundary_tangency(pairs, curve, tau=tau)
    if any(e["index"] is None for e in interior + boundary):
        return IndexReport(interior, boundary, tang["max"], None, None, False,
                           "umbilic without an indefinite isolation loop")
    return ph_audit(interior, boundary, tang["max"], tangent_tol=tangent_tol, assume_tangent=assume_tangent)


def sample_line_field(analysis, pts, which="Z1"):
    """LineField dump of one of the four fields at points."""
    from .field import LineField

    theta, valid = analysis.angle_fn(which)(pts)
    return LineField(pts[:, 0], pts[:, 1], theta, valid)
