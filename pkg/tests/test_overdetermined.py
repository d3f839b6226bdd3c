import numpy as np
import pytest

from overdet.canonical import CanonicalFamily
from overdet.equations import get_equation
from overdet.errors import NotConvex, ParseError
from overdet.expressions import closed_form
from overdet.field import ClosedForm, GridSpec, ScalarField, trace_zero_level
from overdet.overdetermined import (
    NeumannData, boundary_identities, check_solution, eigen_lambda_ratio, extract_neumann,
)

from conftest import sampled


def test_example_neumann_values(ua_field):
    g, curve = extract_neumann(ua_field)
    assert abs(g(np.array([-1.0, 0.0])) - 1.0) < 1e-6
    assert abs(g(np.array([0.0, -1.0])) - 0.5) < 1e-6
    assert abs(g(np.array([1.0, 0.0])) - 1.0) < 1e-6
    assert len(curve.vertices) == len(g.angles)


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_serrin_family_gives_constant_data(radius):
    u = ScalarField.from_closed_form(closed_form("serrin", a=radius**2 / 4),
                                     GridSpec.covering(-radius - 0.5, radius + 0.5, -radius - 0.5, radius + 0.5, 0.05))
    g, _ = extract_neumann(u)
    np.testing.assert_allclose(g.values, radius / 2, atol=1e-8)
    assert abs(g(0.123) - radius / 2) < 1e-8


def test_non_convex_domain_rejected():
    u = ScalarField.from_closed_form(ClosedForm("1 - (x**2+y**2)**2 + 1.5*x**2 - 0.5*y**2 - 0.9"),
                                     GridSpec.covering(-2.5, 2.5, -2.5, 2.5, 0.05))
    with pytest.raises(NotConvex):
        extract_neumann(u)


def test_neumann_csv_roundtrip(ua_field):
    g, _ = extract_neumann(ua_field)
    back = NeumannData.from_csv(g.to_csv())
    phi = np.linspace(0, 2 * np.pi, 50)
    np.testing.assert_allclose(back(phi), g(phi), atol=1e-12)
    with pytest.raises(ParseError):
        NeumannData.from_csv("a,b\n1,2\n")


def test_neumann_differential_matches_angle_derivative(ua_field):
    g, _ = extract_neumann(ua_field)
    phi = 0.7
    nu = np.array([np.cos(phi), np.sin(phi)])
    tangent = np.array([-np.sin(phi), np.cos(phi)])
    fd = (g(phi + 1e-6) - g(phi - 1e-6)) / 2e-6
    assert abs(g.differential(nu, tangent) - fd) < 1e-5


def test_boundary_identities_closed_form(ua_field):
    g, curve = extract_neumann(ua_field)
    bi = boundary_identities(ua_field, curve, g)
    assert bi["max"]["be1"] <= 1e-8
    assert bi["max"]["be3"] <= 1e-8
    assert bi["max"]["be3g"] <= 1e-8
    assert bi["max"]["be5"] <= 1e-5  # spline derivative of the tabulated data


def test_eigen_lambda_ratio_on_canonical_boundary(ua_field, ua_family):
    _, curve = extract_neumann(ua_field)
    lam, dev = eigen_lambda_ratio(ua_field, ua_family, curve)
    np.testing.assert_allclose(lam, 1.0, atol=1e-10)
    assert dev.max() < 1e-10
    l0, d0 = eigen_lambda_ratio(ua_field, ua_family, curve, vertices=0)
    assert isinstance(l0, float)


def test_check_solution_verdicts(ua_field, ua_family):
    eq = get_equation("aniso-linear")
    g, curve = extract_neumann(ua_field)
    rep = check_solution(ua_field, curve, eq, g=g, fam=ua_family)
    assert rep["verdict"] == "canonical"
    assert rep["pdeResidualMax"] < 1e-12
    rep = check_solution(ua_field, curve, eq, g=NeumannData.constant(0.5), fam=ua_family)
    assert rep["verdict"] == "not-a-solution"
    assert rep["neumannMax"] > 0.4


def test_non_canonical_verdict_carries_index_audit(serrin_family):
    u = sampled("perturbed-serrin", (-1.5, 1.5, -1.5, 1.5), a=0.25, eps=0.01, n=3)
    curve = trace_zero_level(u)
    rep = check_solution(u, curve, get_equation("serrin-laplace"), fam=serrin_family)
    assert rep["verdict"] == "non-canonical"
    assert rep["canonicalityScore"] > 1e-4
    audit = rep["indexAudit"]
    assert [e["index"] for e in audit["interior"]] == [-0.5]
