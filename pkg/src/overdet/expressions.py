"""Named closed-form functions used as canonical solutions, candidates and domains."""
import sympy as sp

from .errors import ConfigError
from .field import X, Y, ClosedForm


def _r2(cx, cy):
    return (X - cx) ** 2 + (Y - cy) ** 2


def _re_zeta(n):
    return sp.expand(sp.re(sp.expand((X + sp.I * Y) ** int(n))))


def paraboloid(t=0.0, cx=0.0, cy=0.0):
    return _r2(cx, cy) + t


def serrin(a=0.0, cx=0.0, cy=0.0):
    return a - _r2(cx, cy) / 4


def u_a(a=1.0):
    return a - X**2 / 4 - Y**2 / 16


def perturbed_serrin(a=1.0, eps=0.01, n=3):
    return a - (X**2 + Y**2) / 4 + eps * _re_zeta(n)


def perturbed_u_a(a=1.0, eps=0.01, n=3):
    # harmonic perturbation in the coordinates (x, y/2), where u_xx + 4u_yy is the Laplacian
    zeta = sp.expand((X + sp.I * Y / 2) ** int(n))
    return a - X**2 / 4 - Y**2 / 16 + eps * sp.expand(sp.re(zeta))


def saddle(c=1.0):
    return X**2 - Y**2 + c


def disk(radius=1.0, cx=0.0, cy=0.0):
    return radius**2 - _r2(cx, cy)


def ellipse(a=2.0, b=1.0):
    """Positive inside the ellipse x^2/a^2 + y^2/b^2 < 1."""
    return 1 - X**2 / a**2 - Y**2 / b**2


def serrin_harmonic(radius=1.0, eps=0.1):
    """Solution of u_xx + u_yy + 1 = 0 that is not a polynomial."""
    return (radius**2 - X**2 - Y**2) / 4 + eps * sp.exp(X) * sp.cos(Y)


def aniso_harmonic(a=1.0, eps=0.05):
    """Solution of u_xx + 4u_yy + 1 = 0 that is not a polynomial."""
    return a - X**2 / 4 - Y**2 / 16 + eps * sp.exp(X / 2) * sp.cos(Y / 4)


def ma_radial(c=1.0, cx=-2.0, cy=0.0):
    """Radial solution of det D^2 u = 4 centred at (cx, cy); smooth away from the centre."""
    r = sp.sqrt(_r2(cx, cy))
    return r / 2 * sp.sqrt(4 * r**2 + c) + c / 4 * sp.asinh(2 * r / sp.sqrt(c))


def expr(text):
    return sp.sympify(text, locals={"x": X, "y": Y})


BUILDERS = {
    "paraboloid": paraboloid,
    "serrin": serrin,
    "u_a": u_a,
    "perturbed-serrin": perturbed_serrin,
    "perturbed-u_a": perturbed_u_a,
    "saddle": saddle,
    "disk": disk,
    "ellipse": ellipse,
    "serrin-harmonic": serrin_harmonic,
    "aniso-harmonic": aniso_harmonic,
    "ma-radial": ma_radial,
    "expr": expr,
}


def closed_form(name, **params):
    """Build a ClosedForm from a catalog identifier and parameters."""
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown closed form {name!r}; known: {sorted(BUILDERS)}", key=name) from None
    try:
        e = builder(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for closed form {name!r}: {exc}", key=name) from exc
    return ClosedForm(e, name=name, params=params)
