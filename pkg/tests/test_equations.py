import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overdet.equations import (
    NAMES, anisotropy, catalog, ellipticity_margin, get_equation, minkowski_balance, residual,
    sphere_function,
)
from overdet.errors import BadAnisotropy, ConfigError, InadmissibleJet, NonPositiveF
from overdet.field import JET_KEYS, Jet2

# 2 pi (4 - 4 ln 3): third component of the sphere integral of x / (1 + x3/2), by quadrature oracle
ZONAL_BALANCE = -2.4783971330672774


def test_catalog_has_seven_operators_in_six_families():
    eqs = catalog()
    assert [e.name for e in eqs] == list(NAMES)
    assert len({e.family for e in eqs}) == 6


@pytest.mark.parametrize("name", NAMES)
def test_ellipticity_on_sampled_admissible_jets(name):
    eq = get_equation(name)
    jet = eq.sample(np.random.default_rng(0), 10_000)
    assert np.all(eq.admissible(jet))
    assert np.all(ellipticity_margin(eq, jet) > 0)


@pytest.mark.parametrize("name", NAMES)
def test_partials_match_central_differences(name):
    eq = get_equation(name)
    jet = eq.sample(np.random.default_rng(1), 200)
    for key in JET_KEYS:
        h = 1e-6 * (1 + np.abs(getattr(jet, key)))
        up = eq.F(jet.replace(**{key: getattr(jet, key) + h}))
        dn = eq.F(jet.replace(**{key: getattr(jet, key) - h}))
        fd = (up - dn) / (2 * h)
        exact = eq.partial(key, jet) * np.ones_like(fd)
        np.testing.assert_allclose(exact, fd, rtol=1e-5, atol=1e-6)


def test_monge_ampere_margin_value():
    eq = get_equation("monge-ampere-4")
    jet = Jet2(0.0, 0.0, 0.0, 2.0, 0.0, 2.0)
    assert ellipticity_margin(eq, jet) == 16.0
    assert residual(eq, jet) == 0.0


def test_monge_ampere_rejects_nonconvex_jets():
    eq = get_equation("monge-ampere-4")
    with pytest.raises(InadmissibleJet):
        residual(eq, Jet2(0.0, 0.0, 0.0, -2.0, 0.0, -2.0))


def test_pmc_is_linear_in_the_hessian_at_zero_gradient():
    eq = get_equation("pmc")
    f1 = eq.F(Jet2(0.0, 0.0, 0.0, 1.0, 0.0, 1.0))
    f3 = eq.F(Jet2(0.0, 0.0, 0.0, 3.0, 0.0, 3.0))
    assert abs((f3 - f1) - 4.0) < 1e-12  # 2 rho - 2 W(0)


def test_example_linear_operator():
    eq = get_equation("aniso-linear")
    assert eq.F(Jet2(0, 0, 0, -0.5, 0, -0.125)) == 0


def test_aniso_q_with_ellipse_norm_is_constant_coefficient():
    eq = get_equation("aniso-Q", H=anisotropy("ellipse", a=1.0, b=2.0))
    rng = np.random.default_rng(2)
    jet = Jet2(*(rng.normal(size=50) for _ in range(6)))
    np.testing.assert_allclose(eq.F(jet), jet.r + 4 * jet.t + 1, atol=1e-12)


def test_bad_anisotropy_rejected():
    with pytest.raises(BadAnisotropy):
        anisotropy("expr", text="sqrt(xi1**2 + xi2**2) + 1.1*xi1")  # negative somewhere
    with pytest.raises(BadAnisotropy):
        anisotropy("expr", text="xi1**2 + xi2**2")  # not 1-homogeneous
    with pytest.raises(BadAnisotropy):
        anisotropy("trig", k=4, eps=0.5)  # loses convexity


def test_minkowski_balance_oracles():
    np.testing.assert_allclose(minkowski_balance(sphere_function("zonal", c=0.5, k=1))[2], ZONAL_BALANCE,
                               rtol=1e-10)
    np.testing.assert_allclose(minkowski_balance(sphere_function("zonal", c=0.5, k=2)), 0, atol=1e-12)
    np.testing.assert_allclose(minkowski_balance(sphere_function("constant")), 0, atol=1e-12)
    with pytest.raises(NonPositiveF):
        minkowski_balance(sphere_function("zonal", c=2.0, k=1))


def test_unknown_names():
    with pytest.raises(ConfigError):
        get_equation("heat")
    with pytest.raises(ConfigError):
        anisotropy("hexagon")


ANISO_R = get_equation("aniso-R", H=anisotropy("trig", k=3, eps=0.05))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, np.pi))
def test_aniso_r_elliptic_on_convex_jets(p, q, l1, l2, ang):
    eq = ANISO_R
    c, s = np.cos(ang), np.sin(ang)
    jet = Jet2(0.0, p, q, l1 * c * c + l2 * s * s, (l1 - l2) * c * s, l1 * s * s + l2 * c * c)
    if np.hypot(p, q) < 1e-3:
        return
    assert ellipticity_margin(eq, jet) > 0
