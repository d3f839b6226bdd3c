"""Scalar fields on masked grids, second-order jets, zero-level tracing and line fields."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import sympy as sp
from skimage import measure

from .errors import (
    DegenerateGradient,
    NoZeroSet,
    NonFinite,
    NotClosed,
    OutOfDomain,
    ParseError,
)

X, Y = sp.symbols("x y", real=True)

JET_KEYS = ("z", "p", "q", "r", "s", "t")


@dataclass(frozen=True)
class Jet2:
    """Second-order jet (z, p, q, r, s, t) = (u, u_x, u_y, u_xx, u_xy, u_yy).

    Fields may be floats or equally shaped arrays; every operator in the
    toolkit broadcasts over them.
    """

    z: np.ndarray | float
    p: np.ndarray | float
    q: np.ndarray | float
    r: np.ndarray | float
    s: np.ndarray | float
    t: np.ndarray | float

    def grad(self):
        return np.stack(np.broadcast_arrays(self.p, self.q), axis=-1)

    def hessian(self):
        r, s, t = np.broadcast_arrays(self.r, self.s, self.t)
        return np.stack([np.stack([r, s], -1), np.stack([s, t], -1)], -2)

    def replace(self, **kw):
        vals = {k: getattr(self, k) for k in JET_KEYS}
        vals.update(kw)
        return Jet2(**vals)

    def take(self, idx):
        return Jet2(*(np.asarray(getattr(self, k))[idx] for k in JET_KEYS))

    def as_tuple(self):
        return tuple(getattr(self, k) for k in JET_KEYS)

    @classmethod
    def from_hessian(cls, z, grad, hess):
        grad = np.asarray(grad, float)
        hess = np.asarray(hess, float)
        return cls(z, grad[..., 0], grad[..., 1], hess[..., 0, 0], hess[..., 0, 1], hess[..., 1, 1])


@dataclass(frozen=True)
class SymForm2:
    """Symmetric bilinear form on R^2."""

    a11: float
    a12: float
    a22: float

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, float)
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    @property
    def matrix(self):
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12**2

    @property
    def trace(self):
        return self.a11 + self.a22

    @property
    def sign(self):
        """+1 positive definite, -1 negative definite, 0 otherwise."""
        if self.det <= 0:
            return 0
        return 1 if self.trace > 0 else -1

    def __call__(self, v, w):
        return np.asarray(v) @ self.matrix @ np.asarray(w)


def forms_sign(m):
    """Definiteness sign of a stack of symmetric 2x2 matrices (+1, -1 or 0)."""
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] ** 2
    tr = m[..., 0, 0] + m[..., 1, 1]
    return np.where(det > 0, np.sign(tr), 0).astype(int)


# ---------------------------------------------------------------------------
# closed forms


class ClosedForm:
    """A symbolic function of (x, y) with exact first and second derivatives."""

    def __init__(self, expr, name=None, params=None):
        if isinstance(expr, str):
            expr = sp.sympify(expr, locals={"x": X, "y": Y})
        self.expr = expr
        self.name = name or str(expr)
        self.params = dict(params or {})
        d = {
            "z": expr,
            "p": sp.diff(expr, X),
            "q": sp.diff(expr, Y),
        }
        d["r"] = sp.diff(d["p"], X)
        d["s"] = sp.diff(d["p"], Y)
        d["t"] = sp.diff(d["q"], Y)
        self._exprs = d
        self._fns = {k: sp.lambdify((X, Y), v, "numpy") for k, v in d.items()}

    def __repr__(self):
        return f"ClosedForm({self.name!r})"

    def _eval(self, key, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        with np.errstate(all="ignore"):
            out = np.asarray(self._fns[key](x, y), dtype=float)
        return np.broadcast_to(out, np.broadcast(x, y).shape).copy()

    def value(self, x, y):
        return self._eval("z", x, y)

    def jet(self, x, y):
        return Jet2(*(self._eval(k, x, y) for k in JET_KEYS))


# ---------------------------------------------------------------------------
# grids and scalar fields


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid: node (i, j) sits at (x0 + i*h, y0 + j*h)."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")

    @classmethod
    def covering(cls, xmin, xmax, ymin, ymax, h):
        """Grid with spacing h whose nodes cover the box; nodes land on multiples of h."""
        i0 = int(np.floor(xmin / h))
        i1 = int(np.ceil(xmax / h))
        j0 = int(np.floor(ymin / h))
        j1 = int(np.ceil(ymax / h))
        return cls(i0 * h, j0 * h, h, i1 - i0 + 1, j1 - j0 + 1)

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.xs, self.ys)


class ScalarField:
    """Node values on a GridSpec with NaN outside the mask.

    When ``closed_form`` is given, jets are exact and the node values only
    serve for locating level sets.
    """

    def __init__(self, grid, values, closed_form=None):
        values = np.asarray(values, float)
        if values.shape != (grid.ny, grid.nx):
            raise ValueError(f"values shape {values.shape} does not match grid {(grid.ny, grid.nx)}")
        self.grid = grid
        self.values = values
        self.closed_form = closed_form

    @classmethod
    def from_closed_form(cls, cf, grid, mask=None):
        xx, yy = grid.mesh()
        vals = cf.value(xx, yy)
        if mask is not None:
            vals = np.where(mask, vals, np.nan)
        return cls(grid, vals, closed_form=cf)

    @property
    def mask(self):
        return np.isfinite(self.values)

    @cached_property
    def scale(self):
        v = np.abs(self.values[self.mask])
        return float(v.max()) if v.size and v.max() > 0 else 1.0

    @cached_property
    def node_derivatives(self):
        """Fourth-order centred differences at nodes; NaN where the stencil is incomplete."""
        u = self.values
        h = self.grid.h
        return {
            "z": u,
            "p": _d1(u, 1) / h,
            "q": _d1(u, 0) / h,
            "r": _d2(u, 1) / h**2,
            "s": _d1(_d1(u, 1), 0) / h**2,
            "t": _d2(u, 0) / h**2,
        }

    def node_jets(self):
        """Jets at every grid node (exact for closed forms)."""
        if self.closed_form is not None:
            xx, yy = self.grid.mesh()
            return self.closed_form.jet(xx, yy)
        d = self.node_derivatives
        return Jet2(*(d[k] for k in JET_KEYS))

    # -- io ---------------------------------------------------------------

    def to_csv(self):
        g = self.grid
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nx", "ny", "h", "x0", "y0"])
        w.writerow([g.nx, g.ny, repr(g.h), repr(g.x0), repr(g.y0)])
        for row in self.values:
            w.writerow(["nan" if not np.isfinite(v) else repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        try:
            if [c.strip() for c in rows[0]] != ["nx", "ny", "h", "x0", "y0"]:
                raise ParseError("scalar field CSV must start with header nx,ny,h,x0,y0")
            nx, ny = int(rows[1][0]), int(rows[1][1])
            h, x0, y0 = (float(c) for c in rows[1][2:5])
            vals = np.array([[float(c) for c in r] for r in rows[2 : 2 + ny]], float)
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed scalar field CSV: {exc}") from exc
        if vals.shape != (ny, nx):
            raise ParseError(f"expected {ny}x{nx} values, got {vals.shape}")
        return cls(GridSpec(x0, y0, h, nx, ny), vals)


def _shift(u, k, axis):
    out = np.full_like(u, np.nan)
    n = u.shape[axis]
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if k >= 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = u[tuple(src)]
    return out


def _d1(u, axis):
    return (-_shift(u, 2, axis) + 8 * _shift(u, 1, axis) - 8 * _shift(u, -1, axis) + _shift(u, -2, axis)) / 12.0


def _d2(u, axis):
    return (
        -_shift(u, 2, axis) + 16 * _shift(u, 1, axis) - 30 * u + 16 * _shift(u, -1, axis) - _shift(u, -2, axis)
    ) / 12.0


def _lagrange4(t):
    # cubic Lagrange weights on nodes -1, 0, 1, 2
    return np.stack(
        [
            -t * (t - 1) * (t - 2) / 6.0,
            (t + 1) * (t - 1) * (t - 2) / 2.0,
            -(t + 1) * t * (t - 2) / 2.0,
            (t + 1) * t * (t - 1) / 6.0,
        ],
        axis=-1,
    )


def _interp_grid(field, arrays, pts):
    """Bicubic (4x4 Lagrange) interpolation of several node arrays at points."""
    g = field.grid
    fx = (pts[:, 0] - g.x0) / g.h
    fy = (pts[:, 1] - g.y0) / g.h
    i = np.floor(fx).astype(int)
    j = np.floor(fy).astype(int)
    wx = _lagrange4(fx - i)
    wy = _lagrange4(fy - j)
    ii = i[:, None] + np.arange(-1, 3)[None, :]
    jj = j[:, None] + np.arange(-1, 3)[None, :]
    inside = (ii.min(1) >= 0) & (ii.max(1) < g.nx) & (jj.min(1) >= 0) & (jj.max(1) < g.ny)
    iic = np.clip(ii, 0, g.nx - 1)
    jjc = np.clip(jj, 0, g.ny - 1)
    w = wy[:, :, None] * wx[:, None, :]
    out = []
    ok = inside.copy()
    for a in arrays:
        block = a[jjc[:, :, None], iic[:, None, :]]
        block = np.where(w == 0.0, 0.0, block)
        val = np.einsum("nij,nij->n", w, block)
        ok &= np.isfinite(val)
        out.append(val)
    return out, ok


def eval_jet(field, points, strict=True):
    """Second-order jet of ``field`` at one point or an (N, 2) array of points.

    Closed-form fields return exact derivatives. Grid fields use fourth-order
    centred differences at nodes and bicubic interpolation between them.
    With ``strict=False`` points lacking a full stencil get NaN instead of
    raising OutOfDomain.
    """
    pts = np.asarray(points, float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if field.closed_form is not None:
        jet = field.closed_form.jet(pts[:, 0], pts[:, 1])
        bad = ~np.all(np.isfinite(np.stack(jet.as_tuple())), axis=0)
        if bad.any():
            raise NonFinite(f"closed form not finite at {pts[bad][0].tolist()}")
    else:
        d = field.node_derivatives
        vals, ok = _interp_grid(field, [d[k] for k in JET_KEYS], pts)
        if not ok.all():
            if strict:
                raise OutOfDomain(f"incomplete finite-difference stencil at {pts[~ok][0].tolist()}")
            vals = [np.where(ok, v, np.nan) for v in vals]
        jet = Jet2(*vals)
    if single:
        return Jet2(*(float(np.asarray(v)[0]) for v in jet.as_tuple()))
    return jet


def eval_value(field, points):
    pts = np.atleast_2d(np.asarray(points, float))
    if field.closed_form is not None:
        return field.closed_form.value(pts[:, 0], pts[:, 1])
    (v,), ok = _interp_grid(field, [field.values], pts)
    if not ok.all():
        raise OutOfDomain(f"point outside the field mask: {pts[~ok][0].tolist()}")
    return v


# ---------------------------------------------------------------------------
# level curves


@dataclass
class LevelCurve:
    """Closed polyline on a zero level set with jet-derived frame.

    ``points`` repeats the first vertex at the end; the per-vertex arrays
    have the same length. Orientation is counter-clockwise, ``nu`` is the
    inner unit normal and ``kappa`` the curvature (positive when convex).
    """

    points: np.ndarray
    s: np.ndarray
    w: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    scale: float = 1.0
    meta: dict = dc_field(default_factory=dict)

    @property
    def vertices(self):
        """Vertices without the closing duplicate."""
        return self.points[:-1]

    @property
    def length(self):
        return float(self.s[-1])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "s", "wx", "wy", "nux", "nuy", "kappa"])
        for k in range(len(self.points)):
            w.writerow([repr(float(v)) for v in (*self.points[k], self.s[k], *self.w[k], *self.nu[k], self.kappa[k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        try:
            a = np.array([[float(c) for c in r] for r in rows[1:] if r], float)
            return cls(a[:, 0:2], a[:, 2], a[:, 3:5], a[:, 5:7], a[:, 7])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed curve CSV: {exc}") from exc


def signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(pts, poly):
    """Even-odd rule; ``poly`` may or may not repeat its first vertex."""
    pts = np.atleast_2d(pts)
    px, py = pts[:, 0][:, None], pts[:, 1][:, None]
    ax, ay = poly[:, 0][None, :], poly[:, 1][None, :]
    bx, by = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    return (np.sum(crosses & (px < xint), axis=1) % 2) == 1


def _polish(field, pts, tol, max_iter=40):
    pts = pts.copy()
    for _ in range(max_iter):
        jet = eval_jet(field, pts)
        g = jet.grad()
        g2 = np.sum(g * g, axis=1)
        z = np.asarray(jet.z)
        if np.all(np.abs(z) <= tol):
            break
        pts -= (z / np.where(g2 > 0, g2, 1.0))[:, None] * g
    return pts


def trace_zero_level(field, near=None, gradient_floor=1e-8, polish_tol=1e-10):
    """Trace the closed component of {u = 0}.

    Marching squares on the node values gives a polyline, each vertex is
    Newton-polished onto the level set along the gradient, and segments are
    subdivided until no edge exceeds the grid spacing. The returned frame
    (w, nu, kappa) comes from the field's jets. ``near`` picks the
    component closest to a point; otherwise the longest closed one is used.
    """
    vals = field.values
    finite = vals[np.isfinite(vals)]
    if finite.size == 0 or not (finite.min() < 0 < finite.max()):
        raise NoZeroSet("field has no sign change on its mask")
    g = field.grid
    contours = measure.find_contours(vals, 0.0)
    if not contours:
        raise NoZeroSet("no zero-level contour found")
    polys = [np.column_stack([g.x0 + c[:, 1] * g.h, g.y0 + c[:, 0] * g.h]) for c in contours]
    closed = [p for p in polys if len(p) > 3 and np.allclose(p[0], p[-1])]
    if near is not None:
        near = np.asarray(near, float)
        pick = min(polys, key=lambda p: np.min(np.hypot(*(p - near).T)))
        if not any(pick is c for c in closed):
            raise NotClosed("zero-level component near the requested point leaves the mask")
    else:
        if not closed:
            raise NotClosed("zero-level set has no closed component inside the mask")
        pick = max(closed, key=lambda p: np.sum(np.hypot(*np.diff(p, axis=0).T)))
    poly = pick[:-1]
    # drop near-duplicate vertices produced at grid corners
    keep = np.hypot(*(np.roll(poly, -1, axis=0) - poly).T) > 1e-6 * g.h
    poly = poly[keep]
    if signed_area(poly) < 0:
        poly = poly[::-1]
    tol = polish_tol * field.scale
    poly = _polish(field, poly, tol)
    for _ in range(8):
        nxt = np.roll(poly, -1, axis=0)
        seg = np.hypot(*(nxt - poly).T)
        if np.all(seg <= g.h):
            break
        pieces = []
        for a, b, L in zip(poly, nxt, seg):
            k = int(np.ceil(L / g.h))
            frac = np.arange(k)[:, None] / k
            pieces.append(a + frac * (b - a))
        poly = _polish(field, np.vstack(pieces), tol)
    return _frame(field, poly, gradient_floor)


def _frame(field, poly, gradient_floor):
    jet = eval_jet(field, poly)
    du = jet.grad()
    norm = np.hypot(du[:, 0], du[:, 1])
    if np.any(norm < gradient_floor * field.scale):
        bad = poly[np.argmin(norm)]
        raise DegenerateGradient(f"|Du| below floor on the level curve near {bad.tolist()}")
    w = np.column_stack([-du[:, 1], du[:, 0]]) / norm[:, None]
    chord = np.roll(poly, -1, axis=0) - np.roll(poly, 1, axis=0)
    if np.sum(np.einsum("ij,ij->i", w, chord)) < 0:
        w = -w
    nu = np.column_stack([-w[:, 1], w[:, 0]])
    hess = jet.hessian()
    dww = np.einsum("ni,nij,nj->n", w, hess, w)
    kappa = -dww / np.einsum("ij,ij->i", nu, du)
    closed = np.vstack([poly, poly[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
    close = lambda a: np.concatenate([a, a[:1]])  # noqa: E731
    return LevelCurve(closed, s, close(w), close(nu), close(kappa), scale=field.scale)


def curve_from_points(field, poly, gradient_floor=1e-8):
    """Frame an already-located closed polyline (no closing duplicate) with the field's jets."""
    poly = np.asarray(poly, float)
    if signed_area(poly) < 0:
        poly = poly[::-1]
    return _frame(field, poly, gradient_floor)


# ---------------------------------------------------------------------------
# line fields


def line_angle_diff(theta1, theta2):
    """Representative of theta2 - theta1 (mod pi) in (-pi/2, pi/2]."""
    d = np.mod(np.asarray(theta2, float) - np.asarray(theta1, float), np.pi)
    return np.where(d > np.pi / 2, d - np.pi, d)


def wrap_line_angle(theta):
    """Representative in [0, pi)."""
    w = np.mod(theta, np.pi)
    # np.mod rounds tiny negative angles up to exactly pi
    return np.where(w >= np.pi, 0.0, w)


@dataclass
class LineField:
    """Unoriented directions at sample points; angles are taken mod pi."""

    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.theta = np.where(self.valid, wrap_line_angle(self.theta), np.nan)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "theta", "valid"])
        for x, y, th, v in zip(self.x, self.y, self.theta, self.valid):
            w.writerow([repr(float(x)), repr(float(y)), "nan" if not v else repr(float(th)), int(bool(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "y", "theta", "valid"]:
            raise ParseError("line field CSV must start with header x,y,theta,valid")
        try:
            a = np.array([[float(c) for c in r] for r in rows[1:] if r], float).reshape(-1, 4)
        except ValueError as exc:
            raise ParseError(f"malformed line field CSV: {exc}") from exc
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3] > 0.5)
