"""Closed-form gapless-plane electrostatics for planar electrodes.

Every electrode polygon sits in the z=0 plane at unit potential with the rest
of the plane grounded; the half-space potential is then the polygon's solid
angle over 2*pi. Axis-aligned rectangles use the four-corner arctangent form;
arbitrary simple polygons use the signed solid angle for the potential and a
per-edge closed form for the field, with the Hessian obtained by analytic
differentiation of the edge form.

Geometry is in micrometres. Potentials are dimensionless fractions of the
applied volt; gradients and Hessians are returned in SI (1/m, 1/m^2).
"""

from __future__ import annotations

import datetime as _dt
import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .layout import Layout

UM_TO_M = 1e-6
GRAD_UM_TO_M = 1e6  # d(phi)/d(um) -> d(phi)/d(m)
HESS_UM_TO_M = 1e12

# observation points closer than this (um) to an edge's vertical plane get the
# finite-difference Hessian fallback (removable singularities above edges)
EDGE_GUARD_UM = 1e-6


class FieldDomainError(ValueError):
    """Raised for evaluation requests outside z > 0."""


class AssignmentError(KeyError):
    """Raised when a voltage assignment does not cover every RF group."""


@dataclass(frozen=True)
class DriveConfig:
    """RF drive: angular frequency (rad/s) and common phase (rad, fixed 0)."""

    omega_rf: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.omega_rf <= 0:
            raise ValueError(f"omega_rf must be positive, got {self.omega_rf}")

    @classmethod
    def from_mhz(cls, f_mhz: float) -> "DriveConfig":
        return cls(omega_rf=2.0 * np.pi * f_mhz * 1e6)


@dataclass(frozen=True)
class VoltageAssignment:
    """Per-group RF amplitudes (volts) under one shared drive. GND is implicit 0."""

    amplitudes: dict[str, float]
    drive: DriveConfig

    def __post_init__(self) -> None:
        for g, v in self.amplitudes.items():
            if v < 0:
                raise ValueError(f"amplitude for {g} must be >= 0, got {v}")

    def scaled(self, factor: float) -> "VoltageAssignment":
        return VoltageAssignment(
            {g: v * factor for g, v in self.amplitudes.items()}, self.drive
        )

    @classmethod
    def uniform(cls, layout: Layout, volts: float, drive: DriveConfig) -> "VoltageAssignment":
        return cls({g: volts for g in layout.groups()}, drive)


@dataclass(frozen=True)
class FieldSample:
    """Superposed potential (V), field E (V/m) and potential Hessian (V/m^2)."""

    phi: float
    E: np.ndarray
    H: np.ndarray


def _check_points(points: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {p.shape}")
    if np.any(p[:, 2] <= 0):
        raise FieldDomainError("field evaluation requires z > 0 (above the electrode plane)")
    return p


# ---------------------------------------------------------------------------
# rectangle closed forms
#
# phi = (1/2pi) * sum_{corners} s_ij * t(a, b, z),  t = atan(a*b / (z*R)),
# a = xc - x, b = yc - y, R = sqrt(a^2+b^2+z^2), s = +1 for (x2,y2),(x1,y1)
# and -1 for the mixed corners. Each corner term is harmonic, so all
# derivatives below are exact analytic expressions.


def _rect_corner_arrays(x1, y1, x2, y2, pts):
    """Broadcast helper: per-corner a, b for points (N,3) and rects (R,)."""
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    z = pts[:, 2][:, None]
    a1 = x1[None, :] - x
    a2 = x2[None, :] - x
    b1 = y1[None, :] - y
    b2 = y2[None, :] - y
    return a1, a2, b1, b2, z


def rect_phi(x1, y1, x2, y2, pts) -> np.ndarray:
    """Unit-potential fraction of axis-aligned rectangles. Returns (N, R)."""
    a1, a2, b1, b2, z = _rect_corner_arrays(x1, y1, x2, y2, pts)

    def t(a, b):
        return np.arctan2(a * b, z * np.sqrt(a * a + b * b + z * z))

    return (t(a2, b2) - t(a1, b2) - t(a2, b1) + t(a1, b1)) / (2.0 * np.pi)


def _rect_t_derivs(a, b, z, order):
    """First/second derivatives of t(a,b,z) wrt its own arguments."""
    R2 = a * a + b * b + z * z
    R = np.sqrt(R2)
    az = a * a + z * z
    bz = b * b + z * z
    if order == 1:
        ta = z * b / (R * az)
        tb = z * a / (R * bz)
        tz = -a * b * (R2 + z * z) / (R * az * bz)
        return ta, tb, tz
    R3 = R * R2
    taa = -a * b * z * (az + 2.0 * R2) / (R3 * az * az)
    tbb = -a * b * z * (bz + 2.0 * R2) / (R3 * bz * bz)
    tab = z / R3
    ab2 = a * a + b * b
    taz = b * (ab2 * az - 2.0 * z * z * R2) / (R3 * az * az)
    tbz = a * (ab2 * bz - 2.0 * z * z * R2) / (R3 * bz * bz)
    # t_z = N/D with N = -a b (R^2 + z^2), D = R az bz
    N = -a * b * (R2 + z * z)
    D = R * az * bz
    Nz = -4.0 * a * b * z
    Dz = z * (az * bz / R + 2.0 * R * bz + 2.0 * R * az)
    tzz = (Nz * D - N * Dz) / (D * D)
    return taa, tab, taz, tbb, tbz, tzz


def rect_grad(x1, y1, x2, y2, pts) -> np.ndarray:
    """Gradient of the rectangle potential fraction, (N, R, 3) in 1/um."""
    a1, a2, b1, b2, z = _rect_corner_arrays(x1, y1, x2, y2, pts)
    gx = np.zeros_like(a1)
    gy = np.zeros_like(a1)
    gz = np.zeros_like(a1)
    for a, b, s in ((a2, b2, 1.0), (a1, b2, -1.0), (a2, b1, -1.0), (a1, b1, 1.0)):
        ta, tb, tz = _rect_t_derivs(a, b, z, order=1)
        gx -= s * ta  # da/dx = -1
        gy -= s * tb
        gz += s * tz
    out = np.stack([gx, gy, gz], axis=-1)
    out /= 2.0 * np.pi
    return out


def rect_hess(x1, y1, x2, y2, pts) -> np.ndarray:
    """Hessian of the rectangle potential fraction, (N, R, 3, 3) in 1/um^2."""
    a1, a2, b1, b2, z = _rect_corner_arrays(x1, y1, x2, y2, pts)
    H = np.zeros(a1.shape + (3, 3))
    for a, b, s in ((a2, b2, 1.0), (a1, b2, -1.0), (a2, b1, -1.0), (a1, b1, 1.0)):
        taa, tab, taz, tbb, tbz, tzz = _rect_t_derivs(a, b, z, order=2)
        H[..., 0, 0] += s * taa
        H[..., 1, 1] += s * tbb
        H[..., 2, 2] += s * tzz
        H[..., 0, 1] += s * tab
        H[..., 1, 0] += s * tab
        H[..., 0, 2] -= s * taz
        H[..., 2, 0] -= s * taz
        H[..., 1, 2] -= s * tbz
        H[..., 2, 1] -= s * tbz
    H /= 2.0 * np.pi
    return H


# ---------------------------------------------------------------------------
# general polygon forms


def _require_simple(vertices: np.ndarray) -> None:
    from shapely.geometry import Polygon as _SP

    if len(vertices) < 3 or not _SP(vertices).is_valid:
        raise FieldDomainError("polygon must be simple (no self-intersection)")


def polygon_phi(vertices: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Unit-potential fraction of one simple CCW polygon. Returns (N,).

    Signed solid angle via a triangle fan from vertex 0 (Van Oosterom &
    Strackee), valid for convex and non-convex simple polygons.
    """
    _require_simple(vertices)
    v = np.asarray(vertices, dtype=float)
    nv = v.shape[0]
    rel = np.zeros((pts.shape[0], nv, 3))
    rel[:, :, 0] = v[None, :, 0] - pts[:, 0][:, None]
    rel[:, :, 1] = v[None, :, 1] - pts[:, 1][:, None]
    rel[:, :, 2] = -pts[:, 2][:, None]
    norms = np.linalg.norm(rel, axis=2)
    omega = np.zeros(pts.shape[0])
    r0 = rel[:, 0, :]
    n0 = norms[:, 0]
    for k in range(1, nv - 1):
        r1, r2 = rel[:, k, :], rel[:, k + 1, :]
        n1, n2 = norms[:, k], norms[:, k + 1]
        num = np.einsum("ij,ij->i", r0, np.cross(r1, r2))
        den = (
            n0 * n1 * n2
            + np.einsum("ij,ij->i", r0, r1) * n2
            + np.einsum("ij,ij->i", r0, r2) * n1
            + np.einsum("ij,ij->i", r1, r2) * n0
        )
        omega += 2.0 * np.arctan2(num, den)
    return np.abs(omega) / (2.0 * np.pi)


def _edge_arrays(vertices: np.ndarray):
    v = np.asarray(vertices, dtype=float)
    xo, yo = v[:, 0], v[:, 1]
    xt, yt = np.roll(xo, -1), np.roll(yo, -1)
    return xo, yo, xt, yt


def polygon_grad(vertices: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Gradient of the polygon potential fraction, (N, 3) in 1/um."""
    xo, yo, xt, yt = _edge_arrays(vertices)
    gx, gy, gz = _edge_grad_sum(xo, yo, xt, yt, pts)
    return np.stack([gx, gy, gz], axis=-1)


def _edge_geometry(xo, yo, xt, yt, pts):
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    z = pts[:, 2][:, None]
    dox = x - xo[None, :]
    doy = y - yo[None, :]
    dtx = x - xt[None, :]
    dty = y - yt[None, :]
    ro = np.sqrt(dox * dox + doy * doy + z * z)
    rt = np.sqrt(dtx * dtx + dty * dty + z * z)
    l2 = ((xt - xo) ** 2 + (yt - yo) ** 2)[None, :]
    S = ro + rt
    D = ro * rt * (S * S - l2)
    n = S / D
    return x, y, z, dox, doy, dtx, dty, ro, rt, l2, S, D, n


def _edge_coeffs(xo, yo, xt, yt):
    dx = (xt - xo)[None, :]
    dy = (yo - yt)[None, :]
    c = (xt * yo - xo * yt)[None, :]
    return dx, dy, c


def _edge_grad_sum(xo, yo, xt, yt, pts):
    """Per-edge closed-form gradient, summed over edges. Units 1/um."""
    x, y, z, *_rest = _edge_geometry(xo, yo, xt, yt, pts)
    n = _rest[-1]
    dx, dy, c = _edge_coeffs(xo, yo, xt, yt)
    gx = (dy * z * n).sum(axis=1)
    gy = (dx * z * n).sum(axis=1)
    gz = ((c - dx * y - dy * x) * n).sum(axis=1)
    scale = 1.0 / np.pi
    return scale * gx, scale * gy, scale * gz


def polygon_hess(vertices: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Hessian of the polygon potential fraction, (N, 3, 3) in 1/um^2.

    Analytic differentiation of the per-edge gradient; points within
    EDGE_GUARD_UM of an edge's vertical plane fall back to central finite
    differences of the analytic gradient.
    """
    xo, yo, xt, yt = _edge_arrays(vertices)
    x, y, z, dox, doy, dtx, dty, ro, rt, l2, S, D, n = _edge_geometry(xo, yo, xt, yt, pts)
    dx, dy, c = _edge_coeffs(xo, yo, xt, yt)

    # dn/du for u in {x, y, z}
    ro_d = (dox / ro, doy / ro, z / ro)
    rt_d = (dtx / rt, dty / rt, z / rt)
    q = c - dx * y - dy * x
    H = np.zeros((pts.shape[0], 3, 3))
    n_d = []
    for k in range(3):
        S_u = ro_d[k] + rt_d[k]
        D_u = (ro_d[k] * rt + ro * rt_d[k]) * (S * S - l2) + ro * rt * 2.0 * S * S_u
        n_d.append((S_u * D - S * D_u) / (D * D))
    nx, ny, nz = n_d

    scale = 1.0 / np.pi
    H[:, 0, 0] = scale * (dy * z * nx).sum(axis=1)
    H[:, 0, 1] = scale * (dy * z * ny).sum(axis=1)
    H[:, 0, 2] = scale * (dy * (n + z * nz)).sum(axis=1)
    H[:, 1, 0] = scale * (dx * z * nx).sum(axis=1)
    H[:, 1, 1] = scale * (dx * z * ny).sum(axis=1)
    H[:, 1, 2] = scale * (dx * (n + z * nz)).sum(axis=1)
    H[:, 2, 0] = scale * (-dy * n + q * nx).sum(axis=1)
    H[:, 2, 1] = scale * (-dx * n + q * ny).sum(axis=1)
    H[:, 2, 2] = scale * (q * nz).sum(axis=1)

    # edge-plane guard: in-plane distance to any edge segment below threshold
    guard = _near_edge_mask(xo, yo, xt, yt, pts)
    if np.any(guard):
        H[guard] = _fd_hessian(vertices, pts[guard])
    return H


def _near_edge_mask(xo, yo, xt, yt, pts) -> np.ndarray:
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    ex = (xt - xo)[None, :]
    ey = (yt - yo)[None, :]
    l2 = np.maximum(ex * ex + ey * ey, 1e-300)
    t = ((x - xo[None, :]) * ex + (y - yo[None, :]) * ey) / l2
    t = np.clip(t, 0.0, 1.0)
    px = xo[None, :] + t * ex - x
    py = yo[None, :] + t * ey - y
    d2 = px * px + py * py
    return (d2 < EDGE_GUARD_UM**2).any(axis=1)


def _fd_hessian(vertices: np.ndarray, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
    h = min(h, float(pts[:, 2].min()) / 2.0)
    out = np.zeros((pts.shape[0], 3, 3))
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = h
        gp = polygon_grad(vertices, pts + dp)
        gm = polygon_grad(vertices, pts - dp)
        out[:, :, k] = (gp - gm) / (2.0 * h)
    return 0.5 * (out + out.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# basis evaluator


@dataclass
class BasisEvaluator:
    """Per-electrode unit-voltage evaluators for one validated layout.

    Built once per geometry: stores flattened rectangle-corner and polygon-edge
    arrays so superposed fields reduce to one weighted sum. Immutable after
    construction and safe for concurrent evaluation.
    """

    layout: Layout
    layout_hash: str
    built_at: str
    groups: list[str]
    # rectangles
    rect_idx: np.ndarray  # electrode index per rect
    rx1: np.ndarray
    ry1: np.ndarray
    rx2: np.ndarray
    ry2: np.ndarray
    # polygon edges
    poly_idx: np.ndarray  # electrode index per edge
    exo: np.ndarray
    eyo: np.ndarray
    ext: np.ndarray
    eyt: np.ndarray
    poly_electrodes: dict[int, np.ndarray] = field(default_factory=dict)
    group_of_electrode: list[str] = field(default_factory=list)

    @property
    def n_electrodes(self) -> int:
        return len(self.group_of_electrode)

    # -- per-electrode basis values -------------------------------------

    def phi(self, points) -> np.ndarray:
        """Unit-voltage potential fraction per electrode, (N, n_electrodes)."""
        pts = _check_points(points)
        out = np.zeros((pts.shape[0], self.n_electrodes))
        if self.rect_idx.size:
            out[:, self.rect_idx] = rect_phi(self.rx1, self.ry1, self.rx2, self.ry2, pts)
        for ei, verts in self.poly_electrodes.items():
            out[:, ei] = polygon_phi(verts, pts)
        return out

    def grad(self, points) -> np.ndarray:
        """Unit-voltage potential gradient per electrode, (N, n, 3) in 1/m."""
        pts = _check_points(points)
        out = np.zeros((pts.shape[0], self.n_electrodes, 3))
        if self.rect_idx.size:
            out[:, self.rect_idx, :] = rect_grad(self.rx1, self.ry1, self.rx2, self.ry2, pts)
        for ei, verts in self.poly_electrodes.items():
            out[:, ei, :] = polygon_grad(verts, pts)
        return out * GRAD_UM_TO_M

    def hessian(self, points) -> np.ndarray:
        """Unit-voltage potential Hessian per electrode, (N, n, 3, 3) in 1/m^2."""
        pts = _check_points(points)
        out = np.zeros((pts.shape[0], self.n_electrodes, 3, 3))
        if self.rect_idx.size:
            out[:, self.rect_idx, :, :] = rect_hess(self.rx1, self.ry1, self.rx2, self.ry2, pts)
        for ei, verts in self.poly_electrodes.items():
            out[:, ei, :, :] = polygon_hess(verts, pts)
        return out * HESS_UM_TO_M

    # -- superposition ----------------------------------------------------

    def electrode_weights(self, v: VoltageAssignment) -> np.ndarray:
        try:
            return np.array([v.amplitudes[g] for g in self.group_of_electrode])
        except KeyError as exc:
            raise AssignmentError(f"assignment missing amplitude for group {exc.args[0]!r}") from exc

    def potential(self, v: VoltageAssignment, points) -> np.ndarray:
        """Superposed potential (V) at points, shape (N,)."""
        w = self.electrode_weights(v)
        return self.phi(points) @ w

    def field_and_hessian(self, v: VoltageAssignment, points) -> tuple[np.ndarray, np.ndarray]:
        """Superposed E (V/m) and potential Hessian (V/m^2): ((N,3), (N,3,3))."""
        pts = _check_points(points)
        return self.field_and_hessian_weighted(self.electrode_weights(v), pts)

    def field_and_hessian_weighted(self, w: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Same as field_and_hessian but with a raw per-electrode weight vector."""
        pts = np.ascontiguousarray(pts, dtype=float)
        grad = np.zeros((pts.shape[0], 3))
        hess = np.zeros((pts.shape[0], 3, 3))
        if _kernels.HAVE_NUMBA:
            if self.rect_idx.size:
                _kernels.rect_EH_weighted(
                    self.rx1, self.ry1, self.rx2, self.ry2, w[self.rect_idx], pts, grad, hess
                )
            if self.poly_idx.size:
                _kernels.poly_EH_weighted(
                    self.exo, self.eyo, self.ext, self.eyt, w[self.poly_idx], pts, grad, hess
                )
                near = _near_edge_mask(self.exo, self.eyo, self.ext, self.eyt, pts)
                if np.any(near):
                    self._patch_poly_hessians(w, pts, near, hess)
        else:
            if self.rect_idx.size:
                wr = w[self.rect_idx]
                grad += np.einsum(
                    "nrk,r->nk", rect_grad(self.rx1, self.ry1, self.rx2, self.ry2, pts), wr
                )
                hess += np.einsum(
                    "nrkl,r->nkl", rect_hess(self.rx1, self.ry1, self.rx2, self.ry2, pts), wr
                )
            for ei, verts in self.poly_electrodes.items():
                wi = w[ei]
                if wi == 0.0:
                    continue
                grad += wi * polygon_grad(verts, pts)
                hess += wi * polygon_hess(verts, pts)
        E = -grad * GRAD_UM_TO_M
        return E, hess * HESS_UM_TO_M

    def _patch_poly_hessians(self, w, pts, near, hess) -> None:
        """Recompute Hessian rows for points too close to a polygon edge's
        vertical plane, using the finite-difference fallback for those terms."""
        sub = np.ascontiguousarray(pts[near])
        h = np.zeros((sub.shape[0], 3, 3))
        if self.rect_idx.size:
            wr = w[self.rect_idx]
            h += np.einsum("nrkl,r->nkl", rect_hess(self.rx1, self.ry1, self.rx2, self.ry2, sub), wr)
        for ei, verts in self.poly_electrodes.items():
            wi = w[ei]
            if wi == 0.0:
                continue
            h += wi * _fd_hessian(verts, sub)
        hess[near] = h

    def sample(self, v: VoltageAssignment, point) -> FieldSample:
        pts = _check_points(point)
        phi = float(self.potential(v, pts)[0])
        E, H = self.field_and_hessian(v, pts)
        return FieldSample(phi=phi, E=E[0], H=H[0])


def superpose(basis: BasisEvaluator, v: VoltageAssignment, point) -> FieldSample:
    """Linear superposition of the per-electrode basis under an assignment."""
    return basis.sample(v, point)


def build_basis(layout: Layout) -> BasisEvaluator:
    """Construct the per-electrode closed-form evaluators for a layout."""
    from .layout import validate

    diagnostics = validate(layout)
    if diagnostics:
        raise ValueError(
            "layout failed validation: " + "; ".join(d.message for d in diagnostics)
        )
    rf = layout.rf_electrodes()
    rect_idx: list[int] = []
    rx1: list[float] = []
    ry1: list[float] = []
    rx2: list[float] = []
    ry2: list[float] = []
    poly_electrodes: dict[int, np.ndarray] = {}
    for i, e in enumerate(rf):
        if e.is_rectangle():
            v = e.as_array()
            rect_idx.append(i)
            rx1.append(v[:, 0].min())
            ry1.append(v[:, 1].min())
            rx2.append(v[:, 0].max())
            ry2.append(v[:, 1].max())
        else:
            poly_electrodes[i] = e.as_array()

    if poly_electrodes:
        exo = np.concatenate([_edge_arrays(v)[0] for v in poly_electrodes.values()])
        eyo = np.concatenate([_edge_arrays(v)[1] for v in poly_electrodes.values()])
        ext = np.concatenate([_edge_arrays(v)[2] for v in poly_electrodes.values()])
        eyt = np.concatenate([_edge_arrays(v)[3] for v in poly_electrodes.values()])
        poly_idx = np.concatenate(
            [np.full(len(v), ei) for ei, v in poly_electrodes.items()]
        )
    else:
        exo = eyo = ext = eyt = np.zeros(0)
        poly_idx = np.zeros(0, dtype=int)

    return BasisEvaluator(
        layout=layout,
        layout_hash=layout.layout_hash(),
        built_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        groups=layout.groups(),
        rect_idx=np.array(rect_idx, dtype=int),
        rx1=np.array(rx1),
        ry1=np.array(ry1),
        rx2=np.array(rx2),
        ry2=np.array(ry2),
        poly_idx=poly_idx,
        exo=exo,
        eyo=eyo,
        ext=ext,
        eyt=eyt,
        poly_electrodes=poly_electrodes,
        group_of_electrode=[e.group for e in rf],
    )


# ---------------------------------------------------------------------------
# grid cache


def dump_grid_cache(basis: BasisEvaluator, xs, ys, zs, fh: io.TextIOBase) -> None:
    """CSV dump of per-group phi and field fractions on a rectilinear grid.

    Header carries the grid spec and layout hash; rows are
    ix, iy, iz, group, phi, Ex_frac, Ey_frac, Ez_frac (fractions in 1/m).
    """
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (xs, ys, zs))
    fh.write(
        f"# layout_hash={basis.layout_hash} nx={len(xs)} ny={len(ys)} nz={len(zs)} "
        f"x={xs[0]}:{xs[-1]} y={ys[0]}:{ys[-1]} z={zs[0]}:{zs[-1]}\n"
    )
    fh.write("ix,iy,iz,group,phi,Ex_frac,Ey_frac,Ez_frac\n")
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    phi = basis.phi(pts)
    grad = basis.grad(pts)
    group_index = {g: i for i, g in enumerate(basis.groups)}
    n_groups = len(basis.groups)
    gphi = np.zeros((pts.shape[0], n_groups))
    ggrad = np.zeros((pts.shape[0], n_groups, 3))
    for ei, g in enumerate(basis.group_of_electrode):
        gi = group_index[g]
        gphi[:, gi] += phi[:, ei]
        ggrad[:, gi, :] += grad[:, ei, :]
    efrac = -ggrad
    idx = 0
    for ix in range(len(xs)):
        for iy in range(len(ys)):
            for iz in range(len(zs)):
                for g in basis.groups:
                    gi = group_index[g]
                    fh.write(
                        f"{ix},{iy},{iz},{g},{float(gphi[idx, gi])!r},"
                        f"{float(efrac[idx, gi, 0])!r},{float(efrac[idx, gi, 1])!r},"
                        f"{float(efrac[idx, gi, 2])!r}\n"
                    )
                idx += 1
