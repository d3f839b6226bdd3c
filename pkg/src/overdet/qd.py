"""Line fields of meromorphic quadratic differentials q = P(zeta) / zeta^m dzeta^2.

These fields have singularities with known half-integer indices (a zero
of order k has index -k/2, a pole of order k has index +k/2), which makes
them exact fixtures for the index machinery on the disk and on the
Riemann sphere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import line_angle_diff, wrap_line_angle
from .index import IndexReport, line_index, ph_audit, sphere_audit

FOLIATIONS = ("horizontal", "vertical", "null+", "null-")
_OFFSET = {"horizontal": 0.0, "vertical": np.pi / 2, "null+": np.pi / 4, "null-": -np.pi / 4}


def _angle_from_arg(arg_q, foliation):
    return wrap_line_angle(-0.5 * arg_q + _OFFSET[foliation])


@dataclass
class Singularity:
    point: complex | None  # None marks the point at infinity
    order: int  # >0 zero, <0 pole

    @property
    def index(self):
        return -self.order / 2

    @property
    def label(self):
        return "inf" if self.point is None else f"{self.point.real:.6g}{self.point.imag:+.6g}i"


class QuadraticDifferential:
    """q = P(zeta) / zeta^m dzeta^2 with P given by ascending coefficients."""

    def __init__(self, coeffs, pole_order=0, name=""):
        c = np.trim_zeros(np.asarray(coeffs, complex), "b")
        if not len(c):
            raise ValueError("zero quadratic differential")
        # cancel common powers of zeta between P and the pole
        while len(c) > 1 and c[0] == 0 and pole_order > 0:
            c, pole_order = c[1:], pole_order - 1
        self.coeffs = c
        self.pole_order = int(pole_order)
        self.name = name

    @classmethod
    def monomial(cls, k):
        """zeta^k dzeta^2."""
        return cls([0] * k + [1], 0, name=f"zeta^{k}")

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, z):
        z = np.asarray(z, complex)
        with np.errstate(all="ignore"):
            return np.polynomial.polynomial.polyval(z, self.coeffs) / z**self.pole_order

    def at_infinity(self, w):
        """Coefficient in the chart w = 1/zeta: q(1/w) / w^4."""
        w = np.asarray(w, complex)
        with np.errstate(all="ignore"):
            return self(1 / w) / w**4

    @property
    def order_at_infinity(self):
        return self.pole_order - self.degree - 4

    def singularities(self, cluster_tol=1e-6):
        out = []
        lead = 0
        while self.coeffs[lead] == 0:
            lead += 1
        net0 = lead - self.pole_order
        if net0:
            out.append(Singularity(0j, net0))
        roots = np.polynomial.polynomial.polyroots(self.coeffs[lead:]) if self.degree > lead else np.array([])
        used = np.zeros(len(roots), bool)
        for i, r in enumerate(roots):
            if used[i]:
                continue
            near = (np.abs(roots - r) < cluster_tol) & ~used
            used |= near
            out.append(Singularity(complex(np.mean(roots[near])), int(near.sum())))
        if self.order_at_infinity:
            out.append(Singularity(None, self.order_at_infinity))
        return out

    # -- line fields --------------------------------------------------------

    def angles(self, pts, foliation="horizontal"):
        z = pts[:, 0] + 1j * pts[:, 1]
        q = self(z)
        return _angle_from_arg(np.angle(q), foliation), np.isfinite(q) & (q != 0)

    def angle_fn(self, foliation="horizontal", chart="zeta"):
        """pts -> (theta, valid) in the plane chart or the chart at infinity."""
        f = self if chart == "zeta" else self.at_infinity

        def fn(pts):
            q = f(pts[:, 0] + 1j * pts[:, 1])
            return _angle_from_arg(np.angle(q), foliation), np.isfinite(q) & (q != 0)

        return fn

    def pushforward_to_infinity(self, foliation="horizontal"):
        """Field in the chart at infinity by pushing plane angles through w = 1/zeta.

        dw = -dzeta / zeta^2 rotates directions by pi + 2 arg w, which the
        explicit formula uses; it must agree with ``angle_fn(chart="inf")``.
        """
        base = self.angle_fn(foliation)

        def fn(pts):
            w = pts[:, 0] + 1j * pts[:, 1]
            z = 1 / w
            th, ok = base(np.column_stack([z.real, z.imag]))
            return wrap_line_angle(th + np.pi + 2 * np.angle(w)), ok

        return fn

    def measured_indices(self, foliation="horizontal", n=64):
        """Winding index around every singularity, including infinity, via its chart."""
        sing = self.singularities()
        finite = [s.point for s in sing if s.point is not None]
        out = []
        for s in sing:
            if s.point is None:
                inv = [abs(1 / p) for p in finite if p != 0]
                rad = 0.3 * min(inv) if inv else 0.5
                li = line_index(self.angle_fn(foliation, "inf"), ((0.0, 0.0), rad), n=n)
            else:
                others = [abs(p - s.point) for p in finite if p != s.point]
                if s.point != 0:
                    others.append(abs(s.point))  # keep the origin pole outside
                rad = 0.3 * min(others) if others else 0.5
                li = line_index(self.angle_fn(foliation), ((s.point.real, s.point.imag), rad), n=n)
            out.append({
                "x": None if s.point is None else float(s.point.real),
                "y": None if s.point is None else float(s.point.imag),
                "atInfinity": s.point is None,
                "order": s.order,
                "index": li.index,
                "raw": li.raw,
                "expected": s.index,
            })
        return out


def unit_circle(n=720):
    phi = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(phi), np.sin(phi)]), phi


def circle_tangency(qd, foliation="vertical", n=720):
    """Max mod-pi angle between the field and the unit circle tangent."""
    pts, phi = unit_circle(n)
    th, ok = qd.angles(pts, foliation)
    dev = np.abs(line_angle_diff(th, phi + np.pi / 2))
    return float(np.max(dev[ok])) if ok.any() else None


def qd_sphere_audit(qd, foliation="horizontal"):
    return sphere_audit(qd.measured_indices(foliation))


def qd_disk_audit(qd, foliation="vertical", assume_tangent=False, tangent_tol=1e-3):
    """Disk formula on the unit disk; singularities on the circle are not supported."""
    interior = [e for e in qd.measured_indices(foliation)
                if not e["atInfinity"] and np.hypot(e["x"], e["y"]) < 1]
    tang = circle_tangency(qd, foliation)
    rep = ph_audit(interior, [], tang, tangent_tol=tangent_tol, assume_tangent=assume_tangent)
    rep.tangency_assumed = assume_tangent
    return rep


def reflected_angle_fn(qd, foliation="vertical", chart="zeta"):
    """Field doubled across the unit circle: the original inside, its mirror outside.

    Under zeta -> 1/conj(zeta) a line at angle theta at 1/conj(zeta) maps to
    pi - theta + 2 arg zeta; in the chart at infinity the mirrored field is
    -theta(conj(w)).
    """
    base = qd.angle_fn(foliation)

    def mirror(z):
        src = 1 / np.conj(z)
        th, ok = base(np.column_stack([src.real, src.imag]))
        return wrap_line_angle(np.pi - th + 2 * np.angle(z)), ok

    def fn(pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        if chart == "inf":
            th, ok = base(np.column_stack([z.real, -z.imag]))
            return wrap_line_angle(-th), ok
        inside = np.abs(z) <= 1
        th_in, ok_in = base(pts)
        th_out, ok_out = mirror(z)
        return np.where(inside, th_in, th_out), np.where(inside, ok_in, ok_out)

    return fn


def doubled_sphere_audit(qd, foliation="vertical", n=128):
    """Index sum of the doubled field on the sphere, with the seam mismatch on the circle."""
    pts, _ = unit_circle(720)
    th_in, _ = qd.angles(pts, foliation)
    th_out, _ = reflected_angle_fn(qd, foliation)(pts * (1 + 1e-12))
    seam = float(np.max(np.abs(line_angle_diff(th_in, th_out))))
    inner = [s for s in qd.singularities() if s.point is not None and abs(s.point) < 1]
    pts_all = [s.point for s in inner]
    entries = []
    for s in inner:
        others = [abs(p - s.point) for p in pts_all if p != s.point] + [1 - abs(s.point)]
        if s.point != 0:
            others.append(abs(s.point))
        rad = 0.3 * min(others)
        c = (s.point.real, s.point.imag)
        li = line_index(reflected_angle_fn(qd, foliation), (c, rad), n=n)
        entries.append({"x": c[0], "y": c[1], "atInfinity": False, "index": li.index, "mirror": False})
        if s.point == 0:
            li2 = line_index(reflected_angle_fn(qd, foliation, "inf"), ((0.0, 0.0), rad), n=n)
            entries.append({"x": None, "y": None, "atInfinity": True, "index": li2.index, "mirror": True})
        else:
            m = 1 / np.conj(s.point)
            rad_m = 0.3 * min([abs(m - 1 / np.conj(p)) for p in pts_all if p != s.point and p != 0]
                              + [abs(m) - 1])
            li2 = line_index(reflected_angle_fn(qd, foliation), ((m.real, m.imag), rad_m), n=n)
            entries.append({"x": float(m.real), "y": float(m.imag), "atInfinity": False,
                            "index": li2.index, "mirror": True})
    rep = sphere_audit(entries)
    return rep, seam


FIXTURES = {
    "zeta1": lambda: QuadraticDifferential.monomial(1),
    "zeta2": lambda: QuadraticDifferential.monomial(2),
    "shifted": lambda c=0.3: QuadraticDifferential([c, 0, 1], 0, name=f"zeta^2+{c}"),
    "tangent-pole": lambda c=0.3: QuadraticDifferential([c, 1, c], 3, name=f"(c z^2+z+c)/z^3, c={c}"),
    "log-circle": lambda: QuadraticDifferential([1], 2, name="dz^2/z^2"),
}


def fixture(name, **params):
    return FIXTURES[name](**params)


def report_dict(rep: IndexReport):
    return rep.to_dict()
