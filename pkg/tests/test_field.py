"""Closed-form field math against independent oracles.

The quadrature oracle integrates the half-space Poisson kernel
(z/2pi) * dA / |r - r'|^3 over the electrode with adaptive quadrature,
independently of the arctangent / solid-angle / edge-sum closed forms it
checks.
"""

from __future__ import annotations

import io

import numpy as np
import pytest
from scipy import integrate

from junctionforge.field import (
    FieldDomainError,
    VoltageAssignment,
    dump_grid_cache,
    polygon_grad,
    polygon_hess,
    polygon_phi,
    rect_grad,
    rect_hess,
    rect_phi,
    superpose,
)
from junctionforge.layout import FingerParams, add_finger

RECT = (-40.0, -40.0, 40.0, 40.0)
RECT_POLY = np.array([(-40.0, -40.0), (40.0, -40.0), (40.0, 40.0), (-40.0, 40.0)])


def quad_rect(x1, y1, x2, y2, p, tol=1e-11):
    """Adaptive quadrature of the plane kernel over a rectangle."""
    x, y, z = p

    def integrand(yy, xx):
        return 1.0 / ((x - xx) ** 2 + (y - yy) ** 2 + z * z) ** 1.5

    val, _err = integrate.dblquad(integrand, x1, x2, y1, y2, epsabs=tol, epsrel=tol)
    return z / (2.0 * np.pi) * val


def _ear_clip(poly):
    """Triangulate a simple CCW polygon by ear clipping (oracle helper)."""
    idx = list(range(len(poly)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def inside(p, a, b, c):
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return (d1 >= -1e-12) and (d2 >= -1e-12) and (d3 >= -1e-12)

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-12:
                continue
            if any(
                inside(poly[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append((a, b, c))
            idx.pop(k)
            break
        else:
            raise RuntimeError("ear clipping failed")
    tris.append(tuple(poly[i] for i in idx))
    return tris


def quad_polygon(poly, p, tol=1e-11):
    """Adaptive quadrature of the plane kernel over a simple polygon."""
    x, y, z = p
    total = 0.0
    for a, b, c in _ear_clip([tuple(q) for q in np.asarray(poly)]):
        jac = abs(
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        )

        def integrand(v, u):
            xx = a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0])
            yy = a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1])
            return jac / ((x - xx) ** 2 + (y - yy) ** 2 + z * z) ** 1.5

        val, _err = integrate.dblquad(
            integrand, 0.0, 1.0, 0.0, lambda u: 1.0 - u, epsabs=tol, epsrel=tol
        )
        total += val
    return z / (2.0 * np.pi) * total


def rect_phi_one(p):
    return float(
        rect_phi(
            np.array([RECT[0]]), np.array([RECT[1]]), np.array([RECT[2]]), np.array([RECT[3]]),
            np.atleast_2d(p),
        )[0, 0]
    )


class TestRectClosedForm:
    def test_far_field_decay(self):
        assert rect_phi_one((0.0, 0.0, 1e9)) < 1e-12

    def test_near_surface_limit(self):
        assert rect_phi_one((0.0, 0.0, 1e-6)) == pytest.approx(1.0, abs=1e-6)

    def test_quadrature_oracle_center_height(self):
        p = (0.0, 0.0, 50.0)
        assert rect_phi_one(p) == pytest.approx(quad_rect(*RECT, p), abs=1e-8)

    def test_quadrature_oracle_random_points(self, rng):
        for _ in range(20):
            p = (rng.uniform(-120, 120), rng.uniform(-120, 120), rng.uniform(10, 200))
            assert rect_phi_one(p) == pytest.approx(quad_rect(*RECT, p), abs=1e-8)

    def test_domain_error_below_plane(self, basis):
        with pytest.raises(FieldDomainError):
            basis.phi([[0.0, 0.0, -1.0]])


class TestPolygonClosedForm:
    def test_rectangle_equivalence_on_probe_grid(self):
        xs = np.linspace(-90, 90, 5)
        zs = np.linspace(15, 180, 5)
        pts = np.array([(x, y, z) for x in xs for y in xs[:5] for z in zs])
        x1, y1, x2, y2 = (np.array([v]) for v in RECT)
        a = rect_phi(x1, y1, x2, y2, pts)[:, 0]
        b = polygon_phi(RECT_POLY, pts)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_disjoint_triangle_additivity(self):
        tri1 = np.array([(-40.0, -40.0), (40.0, -40.0), (40.0, 40.0)])
        tri2 = np.array([(-40.0, -40.0), (40.0, 40.0), (-40.0, 40.0)])
        pts = np.array([[13.0, -7.0, 42.0], [0.0, 0.0, 55.0], [-80.0, 60.0, 30.0]])
        s = polygon_phi(tri1, pts) + polygon_phi(tri2, pts)
        whole = polygon_phi(RECT_POLY, pts)
        assert np.max(np.abs(s - whole)) < 1e-10

    def test_finger_polygon_against_quadrature(self, baseline_layout):
        lay = add_finger(baseline_layout, FingerParams(alpha=12.6, b=60.0, d1=34.0))
        finger = next(e for e in lay.electrodes if e.group == "f" and e.centroid()[0] > 0)
        poly = finger.as_array()
        for p in ((30.0, 30.0, 50.0), (0.0, 0.0, 70.0), (90.0, 40.0, 35.0)):
            got = float(polygon_phi(poly, np.atleast_2d(p))[0])
            assert got == pytest.approx(quad_polygon(poly, p), abs=1e-8)

    def test_self_intersecting_polygon_rejected(self):
        bowtie = np.array([(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)])
        with pytest.raises(FieldDomainError):
            polygon_phi(bowtie, np.array([[1.0, 1.0, 5.0]]))


class TestDerivatives:
    def test_gradient_vs_finite_differences(self, rng):
        h = 1e-3
        pts = np.column_stack(
            [rng.uniform(-150, 150, 100), rng.uniform(-150, 150, 100), rng.uniform(20, 200, 100)]
        )
        x1, y1, x2, y2 = (np.array([v]) for v in RECT)
        g = rect_grad(x1, y1, x2, y2, pts)[:, 0]
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            fd = (
                rect_phi(x1, y1, x2, y2, pts + dp)[:, 0]
                - rect_phi(x1, y1, x2, y2, pts - dp)[:, 0]
            ) / (2 * h)
            denom = np.maximum(np.abs(g[:, k]), np.abs(g).max(axis=1) * 1e-3)
            assert np.max(np.abs(g[:, k] - fd) / denom) < 1e-6

    def test_polygon_gradient_vs_finite_differences(self, rng):
        h = 1e-3
        pts = np.column_stack(
            [rng.uniform(-120, 120, 40), rng.uniform(-120, 120, 40), rng.uniform(20, 200, 40)]
        )
        g = polygon_grad(RECT_POLY, pts)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            fd = (polygon_phi(RECT_POLY, pts + dp) - polygon_phi(RECT_POLY, pts - dp)) / (2 * h)
            denom = np.maximum(np.abs(g[:, k]), np.abs(g).max(axis=1) * 1e-3)
            assert np.max(np.abs(g[:, k] - fd) / denom) < 1e-6

    def test_hessian_vs_gradient_differences(self, rng):
        h = 1e-3
        pts = np.column_stack(
            [rng.uniform(-120, 120, 40), rng.uniform(-120, 120, 40), rng.uniform(20, 200, 40)]
        )
        H = polygon_hess(RECT_POLY, pts)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            fd = (polygon_grad(RECT_POLY, pts + dp) - polygon_grad(RECT_POLY, pts - dp)) / (2 * h)
            scale = np.abs(H).max(axis=(1, 2))
            assert np.max(np.abs(H[:, :, k] - fd) / scale[:, None]) < 1e-5

    def test_laplacian_residual(self, rng):
        pts = np.column_stack(
            [rng.uniform(-150, 150, 200), rng.uniform(-150, 150, 200), rng.uniform(20, 200, 200)]
        )
        x1, y1, x2, y2 = (np.array([v]) for v in RECT)
        Hr = rect_hess(x1, y1, x2, y2, pts)[:, 0]
        Hp = polygon_hess(RECT_POLY, pts)
        for H in (Hr, Hp):
            tr = np.trace(H, axis1=1, axis2=2)
            scale = np.abs(H).max(axis=(1, 2))
            assert np.max(np.abs(tr) / scale) < 1e-6

    def test_hessian_symmetry(self, rng):
        pts = np.column_stack(
            [rng.uniform(-120, 120, 50), rng.uniform(-120, 120, 50), rng.uniform(15, 200, 50)]
        )
        H = polygon_hess(RECT_POLY, pts)
        assert np.max(np.abs(H - H.transpose(0, 2, 1)) / np.abs(H).max()) < 1e-9


class TestBasisEvaluator:
    def test_one_evaluator_per_rf_electrode(self, basis):
        assert basis.n_electrodes == 36
        assert basis.phi(np.array([[0.0, 0.0, 56.0]])).shape == (1, 36)

    def test_purity_bitwise(self, basis):
        p = np.array([[12.0, -34.0, 78.0]])
        a = basis.phi(p)
        b = basis.phi(p)
        assert np.array_equal(a, b)
        E1, H1 = basis.field_and_hessian_weighted(np.ones(36), p)
        E2, H2 = basis.field_and_hessian_weighted(np.ones(36), p)
        assert np.array_equal(E1, E2) and np.array_equal(H1, H2)

    def test_partition_bound_at_junction(self, basis):
        s = basis.phi(np.array([[0.0, 0.0, 56.0]])).sum()
        assert 0.0 < s < 1.0

    def test_layout_hash_matches(self, basis, baseline_layout):
        assert basis.layout_hash == baseline_layout.layout_hash()


class TestSuperpose:
    def test_zero_amplitudes_zero_field(self, basis, baseline_layout, drive):
        v = VoltageAssignment.uniform(baseline_layout, 0.0, drive)
        s = superpose(basis, v, [10.0, 20.0, 60.0])
        assert s.phi == 0.0
        assert np.all(s.E == 0.0)

    def test_linearity(self, basis, baseline_layout, drive, rng):
        groups = baseline_layout.groups()
        a1 = {g: float(rng.uniform(0, 150)) for g in groups}
        a2 = {g: float(rng.uniform(0, 150)) for g in groups}
        v1 = VoltageAssignment(a1, drive)
        v2 = VoltageAssignment(a2, drive)
        v12 = VoltageAssignment({g: a1[g] + a2[g] for g in groups}, drive)
        p = [33.0, -21.0, 64.0]
        s1, s2, s12 = (superpose(basis, v, p) for v in (v1, v2, v12))
        assert s12.phi == pytest.approx(s1.phi + s2.phi, rel=1e-12)
        np.testing.assert_allclose(s12.E, s1.E + s2.E, rtol=1e-12)
        np.testing.assert_allclose(s12.H, s1.H + s2.H, rtol=1e-12)

    def test_amplitude_scaling(self, basis, uniform_100, rng):
        p = [45.0, 10.0, 70.0]
        s1 = superpose(basis, uniform_100, p)
        s3 = superpose(basis, uniform_100.scaled(3.0), p)
        np.testing.assert_allclose(s3.E, 3.0 * s1.E, rtol=1e-12)

    def test_missing_group_raises(self, basis, drive):
        from junctionforge.field import AssignmentError

        v = VoltageAssignment({"e": 100.0}, drive)
        with pytest.raises(AssignmentError):
            superpose(basis, v, [0.0, 0.0, 60.0])

    def test_hessian_trace_and_symmetry_sample(self, basis, uniform_100):
        s = superpose(basis, uniform_100, [120.0, 15.0, 66.0])
        assert abs(np.trace(s.H)) / np.abs(s.H).max() < 1e-6
        assert np.max(np.abs(s.H - s.H.T)) / np.abs(s.H).max() < 1e-9

    def test_mirror_symmetry_linear_ties(self, basis, baseline_layout, drive, rng):
        from junctionforge.layout import symmetry_ties

        ties = symmetry_ties(baseline_layout, "linear")
        amps = {}
        for cls in ties.classes:
            val = float(rng.uniform(20, 150))
            for g in cls:
                amps[g] = val
        v = VoltageAssignment(amps, drive)
        for _ in range(10):
            x, y, z = rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(25, 150)
            a = superpose(basis, v, [x, y, z]).phi
            b = superpose(basis, v, [-x, y, z]).phi
            assert a == pytest.approx(b, rel=1e-9)

    def test_mirror_symmetry_corner_ties(self, basis, baseline_layout, drive, rng):
        from junctionforge.layout import symmetry_ties

        ties = symmetry_ties(baseline_layout, "corner")
        amps = {}
        for cls in ties.classes:
            val = float(rng.uniform(20, 150))
            for g in cls:
                amps[g] = val
        v = VoltageAssignment(amps, drive)
        for _ in range(10):
            x, y, z = rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(25, 150)
            a = superpose(basis, v, [x, y, z]).phi
            b = superpose(basis, v, [y, x, z]).phi
            assert a == pytest.approx(b, rel=1e-9)

    def test_null_height_on_axis_vs_dense_scan(self, basis, uniform_100):
        z = np.arange(20.0, 180.0, 0.01)
        pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
        w = basis.electrode_weights(uniform_100)
        E, _ = basis.field_and_hessian_weighted(w, pts)
        z_scan = z[int(np.argmin(np.sum(E * E, axis=1)))]
        # the scan is the oracle for the on-axis null height
        assert 120.0 < z_scan < 170.0
        # |E| at the scan minimum is far below the off-null field scale
        f = np.sum(E * E, axis=1)
        assert f.min() < 1e-6 * f.max()


class TestGridCache:
    def test_dump_and_reparse(self, basis):
        fh = io.StringIO()
        xs, ys, zs = [0.0, 50.0], [0.0], [40.0, 80.0]
        dump_grid_cache(basis, xs, ys, zs, fh)
        text = fh.getvalue().splitlines()
        assert text[0].startswith(f"# layout_hash={basis.layout_hash}")
        assert text[1] == "ix,iy,iz,group,phi,Ex_frac,Ey_frac,Ez_frac"
        rows = [ln.split(",") for ln in text[2:] if ln]
        assert len(rows) == 2 * 1 * 2 * len(basis.groups)
        # spot-check one value against a direct evaluation
        r0 = rows[0]
        gi = basis.groups.index(r0[3])
        pts = np.array([[xs[0], ys[0], zs[0]]])
        phi = basis.phi(pts)
        group_phi = sum(
            phi[0, ei] for ei, g in enumerate(basis.group_of_electrode) if g == r0[3]
        )
        assert float(r0[4]) == pytest.approx(group_phi, rel=1e-12)
