"""Catalog of fully nonlinear elliptic operators F(z, p, q, r, s, t).

Every operator is assembled as a sympy expression so the partial
derivatives used for ellipticity checks and Newton linearisation are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp
from scipy.special import roots_legendre

from .errors import BadAnisotropy, ConfigError, InadmissibleJet, NonPositiveF
from .field import JET_KEYS, Jet2

Z, P, Q, R, S, T = sp.symbols("z p q r s t", real=True)
XI1, XI2 = sp.symbols("xi1 xi2", real=True)
X1, X2, X3 = sp.symbols("x1 x2 x3", real=True)
_JET_SYMS = (Z, P, Q, R, S, T)


def _lambdify(expr, syms):
    fn = sp.lambdify(syms, expr, "numpy")

    def call(*args):
        args = [np.asarray(a, float) for a in args]
        with np.errstate(all="ignore"):
            out = np.asarray(fn(*args), float)
        return np.broadcast_to(out, np.broadcast(*args).shape).copy()

    return call


# ---------------------------------------------------------------------------
# admissible regions


def _everything(jet):
    return np.ones(np.broadcast(*jet.as_tuple()).shape, bool)


def _convex(jet):
    r, s, t = (np.asarray(v) for v in (jet.r, jet.s, jet.t))
    return (r > 0) & (r * t - s * s > 0)


def _nonzero_gradient(jet):
    return np.hypot(jet.p, jet.q) > 1e-12


def _both(a, b):
    return lambda jet: a(jet) & b(jet)


def _sample_free(rng, n, scale=2.0):
    return Jet2(*(rng.normal(0, scale, n) for _ in JET_KEYS))


def _sample_convex(rng, n, lo=0.1, hi=5.0):
    base = _sample_free(rng, n)
    ang = rng.uniform(0, np.pi, n)
    l1, l2 = rng.uniform(lo, hi, n), rng.uniform(lo, hi, n)
    c, s_ = np.cos(ang), np.sin(ang)
    r = l1 * c * c + l2 * s_ * s_
    t = l1 * s_ * s_ + l2 * c * c
    s = (l1 - l2) * c * s_
    return base.replace(r=r, s=s, t=t)


def _away_from_zero_gradient(sampler, floor=0.1):
    def sample(rng, n):
        jet = sampler(rng, n)
        g = np.hypot(jet.p, jet.q)
        bump = np.where(g < floor, floor / np.maximum(g, 1e-300), 1.0)
        bump = np.where(g == 0, 0.0, bump)
        p = np.where(g == 0, floor, jet.p * bump)
        return jet.replace(p=p, q=jet.q * bump)

    return sample


# ---------------------------------------------------------------------------
# operators


@dataclass
class EquationDef:
    """An elliptic operator with exact partial derivatives.

    ``region`` documents the admissible jet set on which the ellipticity
    margin 4 F_r F_t - F_s^2 is positive; ``admissible`` tests it and
    ``sample`` draws random jets from it.
    """

    name: str
    family: str
    expr: sp.Expr
    region: str
    admissible: Callable[[Jet2], np.ndarray] = _everything
    sample: Callable = _sample_free
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self._F = _lambdify(self.expr, _JET_SYMS)
        self._dF = {k: _lambdify(sp.diff(self.expr, sym), _JET_SYMS) for k, sym in zip(JET_KEYS, _JET_SYMS)}
        free = self.expr.free_symbols
        self.depends_z = Z in free
        self.depends_pq = bool({P, Q} & free)

    def __repr__(self):
        return f"EquationDef({self.name!r})"

    def F(self, jet):
        return self._F(*jet.as_tuple())

    def partial(self, key, jet):
        """dF/d(key) for key in z, p, q, r, s, t."""
        return self._dF[key](*jet.as_tuple())

    def check(self, jet):
        ok = self.admissible(jet)
        if not np.all(ok):
            raise InadmissibleJet(f"{self.name}: jet outside admissible region ({self.region})")


def residual(eq, jet, check=True):
    """F evaluated at the jet; zero on solutions."""
    if check:
        eq.check(jet)
    val = eq.F(jet)
    if not np.all(np.isfinite(val)):
        raise InadmissibleJet(f"{eq.name}: operator not finite at jet")
    return val


def ellipticity_margin(eq, jet, check=True):
    """4 F_r F_t - F_s^2; positive exactly where the operator is elliptic."""
    if check:
        eq.check(jet)
    fr, fs, ft = (eq.partial(k, jet) for k in "rst")
    m = 4 * fr * ft - fs * fs
    if not np.all(np.isfinite(m)):
        raise InadmissibleJet(f"{eq.name}: derivatives not finite at jet")
    return m


def serrin_laplace(c=1.0):
    return EquationDef("serrin-laplace", "laplace", R + T + c, "all jets", params={"c": c})


def aniso_linear(a=1.0, b=4.0, c=1.0):
    if a <= 0 or b <= 0:
        raise ConfigError("aniso-linear needs positive coefficients", key="aniso-linear")
    return EquationDef(
        "aniso-linear", "linear", a * R + b * T + c, "all jets", params={"a": a, "b": b, "c": c}
    )


def monge_ampere(k=4.0):
    return EquationDef(
        "monge-ampere-4",
        "monge-ampere",
        R * T - S**2 - k,
        "convex Hessians: r > 0, rt - s^2 > 0",
        admissible=_convex,
        sample=_sample_convex,
        params={"k": k},
    )


# -- sphere functions f and the induced W on gradients ------------------------


@dataclass
class SphereFunction:
    """A positive function on the unit sphere given as an expression in x1, x2, x3."""

    name: str
    expr: sp.Expr

    def __post_init__(self):
        self._f = _lambdify(self.expr, (X1, X2, X3))

    def __call__(self, pts):
        pts = np.asarray(pts, float)
        return self._f(pts[..., 0], pts[..., 1], pts[..., 2])

    def W(self):
        """W(p, q) = f((p, q, 1)/|(p, q, 1)|): gnomonic pull-back to gradients."""
        n = sp.sqrt(1 + P**2 + Q**2)
        return self.expr.subs({X1: P / n, X2: Q / n, X3: 1 / n}, simultaneous=True)


def sphere_function(name, **params):
    if name == "constant":
        value = params.get("value", 1.0)
        return SphereFunction(f"constant({value})", sp.Float(value) + 0 * X3)
    if name == "zonal":
        c, k = params.get("c", 0.5), int(params.get("k", 1))
        return SphereFunction(f"zonal({c},{k})", 1 + c * X3**k)
    if name == "expr":
        e = sp.sympify(params["text"], locals={"x1": X1, "x2": X2, "x3": X3})
        return SphereFunction(params["text"], e)
    raise ConfigError(f"unknown sphere function {name!r}", key=name)


def minkowski_ma(f):
    W = f.W()
    return EquationDef(
        "minkowski-ma",
        "minkowski",
        R * T - S**2 - W * (1 + P**2 + Q**2) ** 2,
        "convex Hessians: r > 0, rt - s^2 > 0",
        admissible=_convex,
        sample=_sample_convex,
        params={"f": f.name},
    )


def pmc(f):
    W = f.W()
    w = sp.sqrt(1 + P**2 + Q**2)
    div = ((1 + Q**2) * R - 2 * P * Q * S + (1 + P**2) * T) / w**3
    return EquationDef("pmc", "pmc", div - 2 * W, "all jets", params={"f": f.name})


# -- anisotropies ------------------------------------------------------------


@dataclass
class AnisotropyDef:
    """A norm H on R^2 with V = H^2/2 and its Hessian D^2 V."""

    name: str
    H: sp.Expr
    quadratic: bool = False

    def __post_init__(self):
        self.V = self.H**2 / 2
        hess = sp.hessian(self.V, (XI1, XI2))
        self.hess_expr = sp.simplify(hess) if self.quadratic else hess
        self._H = _lambdify(self.H, (XI1, XI2))
        self._hess = [[_lambdify(self.hess_expr[i, j], (XI1, XI2)) for j in range(2)] for i in range(2)]

    def __call__(self, xi):
        xi = np.asarray(xi, float)
        return self._H(xi[..., 0], xi[..., 1])

    def hess_V(self, xi):
        xi = np.asarray(xi, float)
        a, b = xi[..., 0], xi[..., 1]
        return np.stack(
            [np.stack([self._hess[0][0](a, b), self._hess[0][1](a, b)], -1),
             np.stack([self._hess[1][0](a, b), self._hess[1][1](a, b)], -1)],
            -2,
        )

    def validate(self, n=256, seed=0):
        """Sampled homogeneity, positivity and convexity checks; raises BadAnisotropy."""
        rng = np.random.default_rng(seed)
        xi = rng.normal(size=(n, 2))
        h = self(xi)
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise BadAnisotropy(f"{self.name}: H must be positive off the origin")
        for lam in (0.5, 2.0, 3.7):
            if not np.allclose(self(lam * xi), lam * h, rtol=1e-10, atol=0):
                raise BadAnisotropy(f"{self.name}: H is not positively 1-homogeneous")
        m = self.hess_V(xi)
        det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
        if np.any(det <= 0) or np.any(m[:, 0, 0] <= 0):
            raise BadAnisotropy(f"{self.name}: D^2 V is not positive definite")
        return self


def anisotropy(name, **params):
    norm = sp.sqrt(XI1**2 + XI2**2)
    if name == "euclidean":
        return AnisotropyDef("euclidean", norm, quadratic=True).validate()
    if name == "ellipse":
        a, b = params.get("a", 1.0), params.get("b", 1.0)
        ang = params.get("angle", 0.0)
        c, s = sp.cos(ang), sp.sin(ang)
        e1 = c * XI1 + s * XI2
        e2 = -s * XI1 + c * XI2
        return AnisotropyDef(f"ellipse({a},{b})", sp.sqrt(a**2 * e1**2 + b**2 * e2**2), quadratic=True).validate()
    if name == "trig":
        k, eps = int(params.get("k", 3)), params.get("eps", 0.05)
        re_k = sp.re(sp.expand((XI1 + sp.I * XI2) ** k))
        H = norm + eps * sp.expand(re_k) / norm ** (k - 1)
        return AnisotropyDef(f"trig({k},{eps})", H).validate()
    if name == "expr":
        H = sp.sympify(params["text"], locals={"xi1": XI1, "xi2": XI2})
        return AnisotropyDef(params["text"], H).validate()
    raise ConfigError(f"unknown anisotropy {name!r}", key=name)


def _aniso_matrix(H):
    return H.hess_expr.subs({XI1: P, XI2: Q}, simultaneous=True)


def aniso_q(H, c=1.0):
    A = _aniso_matrix(H)
    expr = A[0, 0] * R + (A[0, 1] + A[1, 0]) * S + A[1, 1] * T + c
    adm = _everything if H.quadratic else _nonzero_gradient
    sample = _sample_free if H.quadratic else _away_from_zero_gradient(_sample_free)
    return EquationDef(
        "aniso-Q", "anisotropic", expr,
        "all jets" if H.quadratic else "jets with Du != 0",
        admissible=adm, sample=sample, params={"H": H.name, "c": c},
    )


def aniso_r(H, c=1.0):
    A = _aniso_matrix(H)
    detA = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    expr = detA * (R * T - S**2) - c
    adm = _convex if H.quadratic else _both(_convex, _nonzero_gradient)
    sample = _sample_convex if H.quadratic else _away_from_zero_gradient(_sample_convex)
    return EquationDef(
        "aniso-R", "anisotropic", expr,
        "convex Hessians" + ("" if H.quadratic else " with Du != 0"),
        admissible=adm, sample=sample, params={"H": H.name, "c": c},
    )


NAMES = ("serrin-laplace", "aniso-linear", "monge-ampere-4", "minkowski-ma", "pmc", "aniso-Q", "aniso-R")


def get_equation(name, f=None, H=None, **params):
    """Look up one operator by identifier; ``f``/``H`` feed the W- and H-based entries."""
    if name == "serrin-laplace":
        return serrin_laplace(**params)
    if name == "aniso-linear":
        return aniso_linear(**params)
    if name == "monge-ampere-4":
        return monge_ampere(**params)
    if name in ("minkowski-ma", "pmc"):
        f = f if f is not None else sphere_function("constant")
        return minkowski_ma(f) if name == "minkowski-ma" else pmc(f)
    if name in ("aniso-Q", "aniso-R"):
        H = H if H is not None else anisotropy("euclidean")
        return aniso_q(H, **params) if name == "aniso-Q" else aniso_r(H, **params)
    raise ConfigError(f"unknown equation {name!r}; known: {list(NAMES)}", key=name)


def catalog(f=None, H=None):
    """Every operator named in the catalog, built with the given f and H."""
    return [get_equation(n, f=f, H=H) for n in NAMES]


# ---------------------------------------------------------------------------
# Minkowski solvability condition


def sphere_quadrature(n_polar=64, n_azimuth=128):
    """Gauss-Legendre in cos(polar) times trapezoid in azimuth: (points, weights)."""
    mu, wmu = roots_legendre(n_polar)
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    M, PH = np.meshgrid(mu, phi, indexing="ij")
    rho = np.sqrt(1 - M**2)
    pts = np.stack([rho * np.cos(PH), rho * np.sin(PH), M], -1).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_azimuth, 2 * np.pi / n_azimuth)[None, :]).reshape(-1)
    return pts, w


def minkowski_balance(f, order=(64, 128)):
    """Quadrature estimate of the vector integral of x / f(x) over the unit sphere."""
    pts, w = sphere_quadrature(*order)
    vals = np.asarray(f(pts), float)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise NonPositiveF("f must be positive on the sphere")
    return (w[:, None] * pts / vals[:, None]).sum(axis=0)
