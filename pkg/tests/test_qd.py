import numpy as np
import pytest

from overdet.field import line_angle_diff
from overdet.index import line_index
from overdet.qd import (
    FIXTURES, QuadraticDifferential, circle_tangency, doubled_sphere_audit, fixture, qd_disk_audit,
    qd_sphere_audit,
)


@pytest.mark.parametrize("name", sorted(FIXTURES))
@pytest.mark.parametrize("foliation", ["horizontal", "vertical", "null+"])
def test_sphere_sums_are_two(name, foliation):
    rep = qd_sphere_audit(fixture(name), foliation)
    assert rep.sphere_sum == 2 and not rep.contradiction
    for e in rep.interior:
        assert e["index"] == e["expected"]
        assert abs(e["raw"] - e["index"]) < 1e-9


def test_monomial_indices_in_both_charts():
    rep = qd_sphere_audit(QuadraticDifferential.monomial(1))
    got = {e["atInfinity"]: e["index"] for e in rep.interior}
    assert got == {False: -0.5, True: 2.5}


def test_pushforward_matches_chart_at_infinity():
    q = fixture("shifted")
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (200, 2))
    for fol in ("horizontal", "vertical", "null-"):
        a, _ = q.pushforward_to_infinity(fol)(pts)
        b, _ = q.angle_fn(fol, "inf")(pts)
        assert np.max(np.abs(line_angle_diff(a, b))) < 1e-9


def test_singularity_clustering():
    q = QuadraticDifferential([1, -2, 1], 0)  # (zeta - 1)^2
    sing = q.singularities()
    finite = [s for s in sing if s.point is not None]
    assert len(finite) == 1 and finite[0].order == 2
    assert QuadraticDifferential([0, 0, 1], 1).pole_order == 0  # zeta^2 / zeta = zeta


@pytest.mark.parametrize("name", ["tangent-pole", "log-circle"])
def test_doubling_identity(name):
    q = fixture(name)
    assert circle_tangency(q, "vertical") < 1e-12
    disk = qd_disk_audit(q, "vertical")
    doubled, seam = doubled_sphere_audit(q, "vertical")
    assert seam < 1e-9
    assert doubled.sphere_sum == 2 * disk.disk_sum == 2
    assert not disk.contradiction


def test_disk_audit_of_z_dz2():
    q = QuadraticDifferential.monomial(1)
    rep = qd_disk_audit(q, "vertical")
    assert rep.not_applicable_reason and rep.tangency_max > 0.5
    rep = qd_disk_audit(q, "vertical", assume_tangent=True)
    assert rep.disk_sum == -0.5 and rep.contradiction and rep.tangency_assumed


def test_shifted_zeros_indices():
    q = fixture("shifted", c=0.3)
    rep = qd_sphere_audit(q, "horizontal")
    finite = sorted(e["index"] for e in rep.interior if not e["atInfinity"])
    assert finite == [-0.5, -0.5]
