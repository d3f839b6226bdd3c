"""Newton finite-difference Dirichlet solver for F[u] = 0 on curved planar domains.

Nodes strictly inside the implicit domain phi > 0 carry unknowns. Second
derivatives along the x, y and both diagonal directions use
Shortley-Weller three-point differences, shortened at cut cells where the
neighbour lies outside, with the boundary value taken at the crossing.
The mixed derivative is half the difference of the two diagonal second
derivatives. Every derivative is therefore an affine map D_k u = A_k u + b_k
and the Newton matrix is sum_k diag(F_k) A_k.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .equations import ellipticity_margin
from .errors import InadmissibleIterate, NoConvergence
from .field import ClosedForm, GridSpec, Jet2, ScalarField

_DIRS = {"x": (1, 0), "y": (0, 1), "d1": (1, 1), "d2": (1, -1)}


def _as_callable(f):
    if f is None:
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)
    if isinstance(f, ClosedForm):
        return f.value
    if callable(f):
        return f
    c = float(f)
    return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, c)


@dataclass
class DirichletProblem:
    """F[u] = 0 in {phi > 0}, u = data on {phi = 0}."""

    equation: object
    domain: ClosedForm
    bbox: tuple
    data: object = 0.0
    h: float = 1 / 32
    tol: float = 1e-10
    max_iter: int = 40
    damping: float = 1.0
    continuation: int = 0
    clamp: float = 1e-3
    meta: dict = field(default_factory=dict)


@dataclass
class Discretization:
    grid: GridSpec
    inside: np.ndarray  # (ny, nx) bool
    index: np.ndarray  # (ny, nx) int, -1 outside
    points: np.ndarray  # (N, 2)
    ops: dict  # key -> (A, boundary points, boundary weights) per derivative
    bpoints: np.ndarray  # all boundary crossing points
    min_fraction: float


def _crossing(phi, x0, y0, dx, dy, iters=60):
    """Fraction in (0, 1] along the segment where phi changes sign, by bisection."""
    lo, hi = np.zeros(len(x0)), np.ones(len(x0))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = phi(x0 + mid * dx, y0 + mid * dy) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def discretize(prob):
    x0, x1, y0, y1 = prob.bbox
    h = prob.h
    grid = GridSpec.covering(x0 - 2 * h, x1 + 2 * h, y0 - 2 * h, y1 + 2 * h, h)
    xx, yy = grid.mesh()
    phi = prob.domain.value
    inside = np.asarray(phi(xx, yy), float) > 0
    index = -np.ones(inside.shape, int)
    index[inside] = np.arange(inside.sum())
    jj, ii = np.nonzero(inside)
    pts = np.column_stack([xx[inside], yy[inside]])
    n = len(pts)
    rows = np.arange(n)

    bpts = []
    ops = {}
    min_frac = 1.0
    for name, (di, dj) in _DIRS.items():
        step = h * np.hypot(di, dj)
        ends = {}
        for sgn in (1, -1):
            ti, tj = ii + sgn * di, jj + sgn * dj
            ok = (ti >= 0) & (ti < grid.nx) & (tj >= 0) & (tj < grid.ny)
            nbr = np.full(n, -1)
            nbr[ok] = index[tj[ok], ti[ok]]
            cut = nbr < 0
            frac = np.ones(n)
            if cut.any():
                frac[cut] = _crossing(phi, pts[cut, 0], pts[cut, 1], sgn * di * h, sgn * dj * h)
                min_frac = min(min_frac, float(frac[cut].min()))
            bp = pts + (frac * sgn)[:, None] * np.array([di * h, dj * h])
            ends[sgn] = (nbr, cut, frac * step, bp)
        (nf, cf, a, bpf), (nbk, cb, b, bpb) = ends[1], ends[-1]
        # second derivative along the direction: 2/(a+b) [ (u_f-u0)/a + (u_b-u0)/b ]
        wf, wb, w0 = 2 / (a * (a + b)), 2 / (b * (a + b)), -2 / (a * b)
        # first derivative: (b^2 u_f - a^2 u_b - (b^2 - a^2) u0) / (a b (a + b))
        gf, gb, g0 = b / (a * (a + b)), -a / (b * (a + b)), (a - b) / (a * b)
        for key, (cf_w, cb_w, c0) in (("dd_" + name, (wf, wb, w0)), ("d_" + name, (gf, gb, g0))):
            if key.startswith("d_") and name not in ("x", "y"):
                continue
            r_, c_, v_ = [rows], [rows], [c0]
            bcoef = []
            for nbr, cut, w, bp in ((nf, cf, cf_w, bpf), (nbk, cb, cb_w, bpb)):
                keep = ~cut
                r_.append(rows[keep]); c_.append(nbr[keep]); v_.append(w[keep])
                bcoef.append((rows[cut], bp[cut], w[cut]))
            A = sps.csr_matrix((np.concatenate(v_), (np.concatenate(r_), np.concatenate(c_))), shape=(n, n))
            ops[key] = (A, bcoef)
        bpts.extend([bpf[cf], bpb[cb]])
    bpts = np.concatenate(bpts) if bpts else np.zeros((0, 2))
    return Discretization(grid, inside, index, pts, ops, bpts, min_frac)


class _Stencils:
    """Affine derivative maps for the current boundary data."""

    def __init__(self, disc, data):
        self.disc = disc
        n = len(disc.points)
        self.A, self.b = {}, {}

        def bvec(bcoef):
            out = np.zeros(n)
            for rows, bp, w in bcoef:
                if len(rows):
                    np.add.at(out, rows, w * data(bp[:, 0], bp[:, 1]))
            return out

        ddx, ddy = disc.ops["dd_x"], disc.ops["dd_y"]
        dd1, dd2 = disc.ops["dd_d1"], disc.ops["dd_d2"]
        dx, dy = disc.ops["d_x"], disc.ops["d_y"]
        self.A["z"], self.b["z"] = sps.identity(n, format="csr"), np.zeros(n)
        self.A["p"], self.b["p"] = dx[0], bvec(dx[1])
        self.A["q"], self.b["q"] = dy[0], bvec(dy[1])
        self.A["r"], self.b["r"] = ddx[0], bvec(ddx[1])
        self.A["t"], self.b["t"] = ddy[0], bvec(ddy[1])
        self.A["s"] = ((dd1[0] - dd2[0]) * 0.5).tocsr()
        self.b["s"] = 0.5 * (bvec(dd1[1]) - bvec(dd2[1]))

    def jet(self, u):
        return Jet2(*(self.A[k] @ u + self.b[k] for k in ("z", "p", "q", "r", "s", "t")))


def _clamped(jet, floor):
    """Jet whose Hessian has eigenvalues raised to at least ``floor``."""
    H = jet.hessian()
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, floor)
    Hc = np.einsum("nij,nj,nkj->nik", V, w, V)
    return jet.replace(r=Hc[:, 0, 0], s=Hc[:, 0, 1], t=Hc[:, 1, 1])


def _coefficients(eq, jet, clamp):
    convex = eq.family in ("monge-ampere", "minkowski")
    cj = _clamped(jet, clamp) if convex and clamp is not None else jet
    return {k: np.asarray(eq.partial(k, cj), float) * np.ones(len(jet.z)) for k in ("z", "p", "q", "r", "s", "t")}


def jacobian(eq, st, u, clamp=1e-3, coef=None):
    """Discrete linearization sum_k diag(F_k) A_k at u."""
    coef = _coefficients(eq, st.jet(u), clamp) if coef is None else coef
    J = sps.csr_matrix(st.A["z"].shape)
    for k, c in coef.items():
        if np.any(c):
            J = J + sps.diags(c) @ st.A[k]
    return J.tocsc()


def _admissible(eq, jet):
    ok = np.asarray(eq.admissible(jet), bool)
    if not ok.all():
        return False
    m = ellipticity_margin(eq, jet, check=False)
    return bool(np.all(m > 0))


def _newton(eq, st, u, prob, log, stage):
    res = eq.F(st.jet(u))
    rn = float(np.max(np.abs(res)))
    log.append({"stage": stage, "iter": 0, "residual": rn, "step": 0.0})
    lu, last = None, None
    tol = max(prob.tol, roundoff_floor(eq, st, u, prob.h))
    for it in range(1, prob.max_iter + 1):
        if rn <= tol:
            return u
        coef = _coefficients(eq, st.jet(u), prob.clamp)
        # linear operators keep their coefficients, so one factorization serves every step
        if lu is None or any(not np.array_equal(coef[k], last[k]) for k in coef):
            lu, last = splu(jacobian(eq, st, u, coef=coef)), coef
        du = lu.solve(-res)
        if not np.all(np.isfinite(du)):
            raise NoConvergence("linear solve produced non-finite update")
        was_ok = _admissible(eq, st.jet(u))
        lam = prob.damping
        for _ in range(40):
            trial = u + lam * du
            tj = st.jet(trial)
            tres = eq.F(tj)
            tn = float(np.max(np.abs(tres)))
            if np.isfinite(tn) and tn < rn and (not was_ok or _admissible(eq, tj)):
                break
            lam *= 0.5
        else:
            if np.max(np.abs(du)) <= 1e-10 * (1 + np.max(np.abs(u))):
                # the update is below round-off: the residual has reached its floor
                log.append({"stage": stage, "iter": it, "residual": rn, "step": 0.0})
                return u
            if was_ok:
                raise InadmissibleIterate(f"no admissible decrease after damping at iteration {it}")
            raise NoConvergence(f"line search failed at iteration {it} (residual {rn:.3e})")
        u, res, rn = trial, tres, tn
        log.append({"stage": stage, "iter": it, "residual": rn, "step": lam})
    if rn <= tol:
        return u
    raise NoConvergence(f"Newton stopped at residual {rn:.3e} after {prob.max_iter} iterations")


def roundoff_floor(eq, st, u, h, safety=100.0):
    """Residual level set by cancellation in the second differences: eps |u| / h^2 times |dF/dD^2u|."""
    coef = _coefficients(eq, st.jet(u), None)
    gain = max(float(np.max(np.abs(coef[k]))) for k in "rst")
    return safety * np.finfo(float).eps * (1 + float(np.max(np.abs(u)))) / h**2 * gain


@dataclass
class SolveResult:
    field: ScalarField
    log: list
    disc: Discretization

    @property
    def residuals(self):
        return [e["residual"] for e in self.log]


def solve_dirichlet(prob, initial=None):
    """Solve the problem, optionally starting from ``initial`` (callable, ClosedForm or constant).

    With ``continuation = m > 0`` the boundary data move in m stages from
    the trace of the initial guess to the target data.
    """
    disc = discretize(prob)
    eq = prob.equation
    target = _as_callable(prob.data)
    log = []
    if initial is None and eq.family == "monge-ampere":
        initial = "poisson"
    if isinstance(initial, str) and initial == "poisson":
        u = poisson_start(disc, eq, target, log)
        guess = target
    else:
        guess = _as_callable(initial)
        u = np.asarray(guess(disc.points[:, 0], disc.points[:, 1]), float).copy()
    stages = max(int(prob.continuation), 0)
    for k in range(1, stages + 1):
        s = k / (stages + 1)

        def blend(x, y, s=s):
            return (1 - s) * guess(x, y) + s * target(x, y)

        u = _newton(eq, _Stencils(disc, blend), u, prob, log, stage=k)
    st = _Stencils(disc, target)
    u = _newton(eq, st, u, prob, log, stage=stages + 1)
    vals = np.full(disc.inside.shape, np.nan)
    vals[disc.inside] = u
    return SolveResult(ScalarField(disc.grid, vals), log, disc)


def poisson_start(disc, eq, data, log):
    """Solve u_xx + u_yy = 2 sqrt(k) with the target data; a convex start for det D^2u = k."""
    st = _Stencils(disc, data)
    rhs = 2 * np.sqrt(float(eq.params.get("k", 1.0)))
    L = (st.A["r"] + st.A["t"]).tocsc()
    u = splu(L).solve(rhs - st.b["r"] - st.b["t"])
    log.append({"stage": 0, "iter": 0, "residual": float(np.max(np.abs(eq.F(st.jet(u))))), "step": 1.0})
    return u


def nodal_error(result, exact):
    """max |u - exact| over unknown nodes."""
    f = _as_callable(exact)
    u = result.field.values[result.disc.inside]
    p = result.disc.points
    return float(np.max(np.abs(u - f(p[:, 0], p[:, 1]))))


def observed_orders(hs, errors):
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])


def smooth_noise(seed=0, amplitude=0.1, modes=3, radius=1.0):
    """Deterministic smooth perturbation vanishing on the circle of given radius."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(modes, modes))
    a /= np.abs(a).sum()

    def f(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        acc = np.zeros(np.broadcast(x, y).shape)
        for i in range(modes):
            for j in range(modes):
                acc += a[i, j] * np.cos(i * x + 0.3) * np.cos(j * y + 0.7)
        return amplitude * (1 - (x**2 + y**2) / radius**2) * acc

    return f


def linearization_check(eq, st, u, eps=1e-6, seed=0):
    """Relative gap between the unclamped Jacobian and a difference quotient of the residual."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=len(u))
    J = jacobian(eq, st, u, clamp=None)
    fd = (eq.F(st.jet(u + eps * v)) - eq.F(st.jet(u - eps * v))) / (2 * eps)
    jv = J @ v
    return float(np.max(np.abs(fd - jv)) / max(np.max(np.abs(jv)), 1e-300))
