import numpy as np
import pytest

from overdet.canonical import CanonicalFamily
from overdet.equations import get_equation
from overdet.expressions import closed_form
from overdet.field import GridSpec, ScalarField


def sampled(name, bbox, h=0.05, **params):
    return ScalarField.from_closed_form(closed_form(name, **params), GridSpec.covering(*bbox, h))


@pytest.fixture(scope="session")
def serrin_family():
    return CanonicalFamily(get_equation("serrin-laplace"), closed_form("serrin"), box=(-1, 1, -1, 1))


@pytest.fixture(scope="session")
def ua_family():
    return CanonicalFamily(get_equation("aniso-linear"), closed_form("u_a", a=0.0))


@pytest.fixture(scope="session")
def paraboloid_family():
    return CanonicalFamily(get_equation("monge-ampere-4"), "x**2 + y**2")


@pytest.fixture(scope="session")
def ua_field():
    return sampled("u_a", (-2.5, 2.5, -4.5, 4.5), a=1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
