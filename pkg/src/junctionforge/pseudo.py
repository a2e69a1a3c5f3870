"""Pseudo-potential evaluation, RF-null tracing and derived metrics.

The ponderomotive pseudo-potential of a charged particle in an RF field is
Psi = q^2 |E|^2 / (4 m Omega^2), reported here in meV (energy in joules
divided by the elementary charge, times 1000). The RF-null curve through the
junction is traced section by section: each transverse section is solved for
the in-section minimiser of |E|^2 with a damped Gauss-Newton iteration and
the previous null as the continuation guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants as sc

from .field import BasisEvaluator, DriveConfig, VoltageAssignment

MEV_PER_EV = 1000.0

# Gauss-Newton controls (see module notes: tolerance is relative to the
# gradient at the starting guess, with a numerical stagnation floor)
GN_TOL_REL = 1e-9
GN_MAX_ITER = 100
GN_MIN_STEP_UM = 1e-9
RESEED_GRID = 11
RESEED_SPAN_UM = 20.0


class TracingError(RuntimeError):
    """Null tracing failed; carries the last successfully solved coordinate."""

    def __init__(self, message: str, last_good_s: float | None = None, last_point=None):
        super().__init__(message)
        self.last_good_s = last_good_s
        self.last_point = None if last_point is None else np.asarray(last_point)


@dataclass(frozen=True)
class IonSpecies:
    """Ion species: mass in atomic mass units, charge in elementary charges."""

    mass: float = 171.0
    charge: int = 1

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.charge < 1:
            raise ValueError(f"charge must be >= 1, got {self.charge}")


def pseudopotential_factor(ion: IonSpecies, drive: DriveConfig) -> float:
    """meV per (V/m)^2: Psi_meV = factor * |E|^2."""
    q = ion.charge * sc.elementary_charge
    m = ion.mass * sc.atomic_mass
    joule = q * q / (4.0 * m * drive.omega_rf**2)
    return joule / sc.elementary_charge * MEV_PER_EV


def pseudopotential_at(E: np.ndarray, ion: IonSpecies, drive: DriveConfig) -> float:
    """Pseudo-potential (meV) for a field sample E (V/m)."""
    E = np.asarray(E, dtype=float)
    return pseudopotential_factor(ion, drive) * float(np.sum(E * E, axis=-1))


@dataclass(frozen=True)
class TraceSample:
    s: float  # path coordinate (um)
    pos: np.ndarray  # (3,) um
    psi: float  # meV


@dataclass(frozen=True)
class SaddleTrace:
    samples: tuple[TraceSample, ...]
    mode: str  # corner | linear
    path_range: tuple[float, float]
    step: float

    def positions(self) -> np.ndarray:
        return np.array([s.pos for s in self.samples])

    def psis(self) -> np.ndarray:
        return np.array([s.psi for s in self.samples])

    def s_values(self) -> np.ndarray:
        return np.array([s.s for s in self.samples])


@dataclass(frozen=True)
class TraceMetrics:
    barrier: float  # meV
    height_var: float  # um
    barrier_pos: np.ndarray  # (3,) um


def metrics(trace: SaddleTrace) -> TraceMetrics:
    """Barrier (max Psi), ion-height variation (max z - min z), barrier position."""
    if not trace.samples:
        raise ValueError("metrics of an empty trace are undefined")
    psis = trace.psis()
    pos = trace.positions()
    k = int(np.argmax(psis))
    return TraceMetrics(
        barrier=float(psis[k]),
        height_var=float(pos[:, 2].max() - pos[:, 2].min()),
        barrier_pos=pos[k].copy(),
    )


# ---------------------------------------------------------------------------
# sections and null solving


@dataclass(frozen=True)
class Section:
    """A plane through `origin` spanned by orthonormal in-plane axes e1, e2."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @classmethod
    def x_const(cls, x: float, y0: float = 0.0, z0: float = 80.0) -> "Section":
        return cls(
            origin=np.array([x, y0, z0]),
            e1=np.array([0.0, 1.0, 0.0]),
            e2=np.array([0.0, 0.0, 1.0]),
        )

    @classmethod
    def normal_to(cls, origin: np.ndarray, tangent: np.ndarray) -> "Section":
        t = np.asarray(tangent, dtype=float)
        t = t / np.linalg.norm(t)
        zhat = np.array([0.0, 0.0, 1.0])
        e1 = np.cross(zhat, t)
        n1 = np.linalg.norm(e1)
        if n1 < 1e-12:
            raise ValueError("section tangent parallel to z is not supported")
        e1 /= n1
        e2 = np.cross(t, e1)
        if e2[2] < 0:
            e2 = -e2
        return cls(origin=np.asarray(origin, dtype=float), e1=e1, e2=e2)

    def point(self, u: float, v: float) -> np.ndarray:
        return self.origin + u * self.e1 + v * self.e2


class _NullSolver:
    """Damped Gauss-Newton minimiser of |E|^2 within a section."""

    def __init__(self, basis: BasisEvaluator, weights: np.ndarray):
        self.basis = basis
        self.w = weights

    def _eh(self, pts: np.ndarray):
        return self.basis.field_and_hessian_weighted(self.w, pts)

    def solve(
        self,
        section: Section,
        guess_uv=(0.0, 0.0),
        z_min: float = 1.0,
        z_max: float = 400.0,
        trust_um: float = 25.0,
        box_um: float = 150.0,
    ):
        """Returns (uv, point, f=|E|^2, converged flag).

        Steps are trust-region capped and iterates confined to a box around
        the guess: |E|^2 decays to zero far from the trap, so an unbounded
        descent could "converge" by escaping the trapping region entirely.
        """
        uv = np.array(guess_uv, dtype=float)
        uv0 = uv.copy()
        P = np.column_stack([section.e1, section.e2])  # (3,2)
        lam = 0.0
        g0_norm = None
        pt = section.point(*uv)
        E, H = self._eh(pt[None, :])
        f = float(E[0] @ E[0])
        for _ in range(GN_MAX_ITER):
            J = -(H[0] @ P) * 1e-6  # dE/d(u,v), (V/m)/um
            g = 2.0 * J.T @ E[0]
            if g0_norm is None:
                g0_norm = float(np.linalg.norm(g)) or 1.0
            if np.linalg.norm(g) <= GN_TOL_REL * g0_norm:
                return uv, pt, f, True
            M = 2.0 * J.T @ J
            # confinement check: a vanishing Jacobian means no RF structure here
            if np.trace(M) <= 0 or not np.isfinite(np.trace(M)):
                return uv, pt, f, False
            improved = False
            for _damp in range(16):
                try:
                    delta = np.linalg.solve(M + lam * np.eye(2) * max(np.trace(M), 1e-300), -g)
                except np.linalg.LinAlgError:
                    lam = max(lam * 10.0, 1e-6)
                    continue
                step = float(np.linalg.norm(delta))
                if step > trust_um:
                    delta = delta * (trust_um / step)
                    step = trust_um
                cand = uv + delta
                pt_c = section.point(*cand)
                if (
                    pt_c[2] < z_min
                    or pt_c[2] > z_max
                    or abs(cand[0] - uv0[0]) > box_um
                    or abs(cand[1] - uv0[1]) > box_um
                ):
                    lam = max(lam * 10.0, 1e-6)
                    continue
                E_c, H_c = self._eh(pt_c[None, :])
                f_c = float(E_c[0] @ E_c[0])
                # ulp-tolerant acceptance: near the floor a correct step can
                # read one rounding unit high and would otherwise stall
                if f_c <= f * (1.0 + 1e-14):
                    uv, pt, E, H, f = cand, pt_c, E_c, H_c, min(f, f_c)
                    lam /= 3.0
                    improved = True
                    if step < GN_MIN_STEP_UM:
                        return uv, pt, f, True
                    break
                lam = max(lam * 10.0, 1e-6)
            if not improved:
                # stagnation at the numerical floor counts as converged if the
                # gradient has already dropped substantially
                if np.linalg.norm(g) <= 1e-4 * g0_norm:
                    return uv, pt, f, True
                return uv, pt, f, False
        return uv, pt, f, np.linalg.norm(g) <= 1e-4 * g0_norm

    def solve_with_reseed(self, section: Section, guess_uv=(0.0, 0.0), span: float = RESEED_SPAN_UM):
        uv, pt, f, ok = self.solve(section, guess_uv)
        if ok:
            return uv, pt, f, True
        # coarse in-section re-seed around the guess
        us = np.linspace(guess_uv[0] - span, guess_uv[0] + span, RESEED_GRID)
        vs = np.linspace(guess_uv[1] - span, guess_uv[1] + span, RESEED_GRID)
        U, V = np.meshgrid(us, vs, indexing="ij")
        pts = (
            section.origin[None, :]
            + U.ravel()[:, None] * section.e1[None, :]
            + V.ravel()[:, None] * section.e2[None, :]
        )
        valid = pts[:, 2] >= 1.0
        if not np.any(valid):
            return uv, pt, f, False
        E, _H = self._eh(np.ascontiguousarray(pts[valid]))
        f_grid = np.sum(E * E, axis=1)
        k = int(np.argmin(f_grid))
        uv2 = np.array([U.ravel()[valid][k], V.ravel()[valid][k]])
        return self.solve(section, uv2)


def find_null_in_section(
    basis: BasisEvaluator,
    v: VoltageAssignment,
    section: Section,
    guess: np.ndarray,
) -> np.ndarray:
    """In-section minimiser of the pseudo-potential (equivalently |E|^2)."""
    guess = np.asarray(guess, dtype=float)
    if guess[2] <= 0:
        raise ValueError("guess must have z > 0")
    rel = guess - section.origin
    uv0 = (float(rel @ section.e1), float(rel @ section.e2))
    solver = _NullSolver(basis, basis.electrode_weights(v))
    uv, pt, f, ok = solver.solve_with_reseed(section, uv0)
    if not ok:
        raise TracingError(
            f"null search did not converge in section through {section.origin}",
            last_point=pt,
        )
    return pt


# ---------------------------------------------------------------------------
# tracing


def _far_section_guess(
    solver: _NullSolver, section: Section, z_lo: float = 20.0, z_hi: float = 160.0
):
    """Coarse scan of a section to seed the first continuation solve."""
    us = np.linspace(-60.0, 60.0, 25)
    vs = np.linspace(z_lo, z_hi, 29)
    U, V = np.meshgrid(us, vs, indexing="ij")
    pts = (
        section.origin[None, :]
        + U.ravel()[:, None] * section.e1[None, :]
        + V.ravel()[:, None] * section.e2[None, :]
    )
    E, _ = solver._eh(np.ascontiguousarray(pts))
    f = np.sum(E * E, axis=1)
    k = int(np.argmin(f))
    return (float(U.ravel()[k]), float(V.ravel()[k]))


def trace_saddle_path(
    basis: BasisEvaluator,
    v: VoltageAssignment,
    mode: str,
    path_range: tuple[float, float] = (0.0, 500.0),
    step: float = 1.0,
    ion: IonSpecies | None = None,
    half: bool = False,
    warm_start: dict | None = None,
) -> SaddleTrace:
    """Trace the RF-null curve from the far end of arm A inward.

    linear: sections x=const marching from path_range[1] down to path_range[0];
    the path coordinate s is x. Sections with no in-section minimum are
    omitted (reproducing the characteristic gap when the tube leaves the
    plane family).

    corner: predictor-corrector continuation with sections normal to the local
    tangent, following the curved tube across the x=y diagonal and out along
    arm B; s is path_range[1] minus the arc length travelled. With half=True
    tracing stops just past the diagonal (valid for x=y symmetric drives).
    """
    ion = ion or IonSpecies()
    factor = pseudopotential_factor(ion, v.drive)
    w = basis.electrode_weights(v)
    if float(np.max(np.abs(w))) == 0.0:
        raise TracingError("all amplitudes are zero: no RF confinement to trace")
    solver = _NullSolver(basis, w)
    s_min, s_max = float(path_range[0]), float(path_range[1])
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    if mode == "linear":
        return _trace_linear(solver, factor, s_min, s_max, step, warm_start)
    if mode == "corner":
        return _trace_corner(solver, factor, s_min, s_max, step, half, warm_start)
    raise ValueError(f"mode must be corner or linear, got {mode!r}")


def _trace_linear(solver, factor, s_min, s_max, step, warm_start):
    xs = np.arange(s_max, s_min - 0.5 * step, -step)
    section0 = Section.x_const(xs[0])
    if warm_start and "linear_uv" in warm_start and len(warm_start["linear_uv"]) == len(xs):
        guesses = warm_start["linear_uv"]
    else:
        guesses = None
    uv = guesses[0] if guesses is not None else _far_section_guess(solver, section0)
    samples: list[TraceSample] = []
    solved_uv = np.zeros((len(xs), 2))
    failures = 0
    last_good = None
    jump_limit = max(10.0 * step, 40.0)
    for i, x in enumerate(xs):
        section = Section.x_const(float(x))
        g = guesses[i] if guesses is not None else uv
        uv_i, pt, f, ok = solver.solve_with_reseed(section, tuple(g))
        if ok and samples and float(np.hypot(uv_i[0] - uv[0], uv_i[1] - uv[1])) > jump_limit:
            ok = False  # discontinuous in-section jump: omit this sample
        if not ok:
            failures += 1
            solved_uv[i] = uv
            if failures > 0.5 * len(xs):
                raise TracingError(
                    "null tracing lost the tube over most of the path",
                    last_good_s=last_good,
                    last_point=None,
                )
            continue
        uv = tuple(uv_i)
        solved_uv[i] = uv_i
        last_good = float(x)
        samples.append(TraceSample(s=float(x), pos=pt, psi=factor * f))
    if not samples:
        raise TracingError("no section of the path contained an RF null")
    samples.reverse()  # ascending s
    if warm_start is not None:
        warm_start["linear_uv"] = solved_uv
    return SaddleTrace(
        samples=tuple(samples), mode="linear", path_range=(s_min, s_max), step=step
    )


def _trace_corner(solver, factor, s_min, s_max, step, half, warm_start):
    """Horizontal-tangent continuation: sections are vertical planes normal to
    the tube's in-plane direction, so the steep height climb near the junction
    is solved inside a section instead of tilting the section family."""
    section0 = Section.x_const(s_max)
    if warm_start and "corner_uv0" in warm_start:
        uv0 = warm_start["corner_uv0"]
    else:
        uv0 = _far_section_guess(solver, section0)
    uv, pt, f, ok = solver.solve_with_reseed(section0, tuple(uv0))
    if not ok:
        raise TracingError("could not find the RF null at the far end of arm A")
    if warm_start is not None:
        warm_start["corner_uv0"] = tuple(uv)

    samples = [TraceSample(s=s_max, pos=pt, psi=factor * f)]
    tangent_h = np.array([-1.0, 0.0, 0.0])
    s = s_max
    crossed = False
    max_steps = int(4 * (s_max - s_min) / step) + 20
    jump_limit = max(10.0 * step, 40.0)
    box = s_max + 20.0 * step
    fail_streak = 0  # solver failures / branch jumps
    drift = 0  # rotation rejections: dead-reckon through degenerate windows
    for _ in range(max_steps):
        # on failure the prediction extends further along the last tangent,
        # stepping over locally unsolvable sections
        predicted = samples[-1].pos + step * (fail_streak + drift + 1) * tangent_h
        if predicted[2] < 1.0:
            break
        section = Section.normal_to(predicted, tangent_h)
        uv_i, pt, f, ok = solver.solve_with_reseed(
            section, (0.0, 0.0), span=max(6.0 * step, 25.0)
        )
        if ok and float(np.hypot(*uv_i)) > jump_limit * (fail_streak + drift + 1):
            ok = False  # in-section jump too large: likely a different branch
        if not ok:
            fail_streak += 1
            if fail_streak > 3:
                if crossed or s <= s_min:
                    break  # junction already traversed: end the trace here
                raise TracingError(
                    "corner continuation lost the tube",
                    last_good_s=samples[-1].s,
                    last_point=samples[-1].pos,
                )
            continue
        delta = pt - samples[-1].pos
        dh = float(np.hypot(delta[0], delta[1]))
        # sharp tangent rotations mean the section grabbed a different branch
        # (near the junction centre the section can contain the crossing arm's
        # whole null line); march straight on and re-acquire beyond it
        if dh > 1e-9 and (delta[0] * tangent_h[0] + delta[1] * tangent_h[1]) / dh < 0.5:
            drift += 1
            if drift > 30:
                if crossed or s <= s_min:
                    break  # junction already traversed: end the trace here
                raise TracingError(
                    "corner continuation stuck in a degenerate region",
                    last_good_s=samples[-1].s,
                    last_point=samples[-1].pos,
                )
            continue
        fail_streak = 0
        drift = 0
        if dh < 1e-9:
            break
        tangent_h = np.array([delta[0] / dh, delta[1] / dh, 0.0])
        s -= dh
        samples.append(TraceSample(s=s, pos=pt, psi=factor * f))
        x, y = pt[0], pt[1]
        if abs(x) > box or abs(y) > box:
            break  # tube left the modelled junction region
        if not crossed and y > x:
            crossed = True
            if half:
                break
        if crossed and y >= s_max:
            break
        if s < -(3.0 * (s_max - s_min)):
            break
    return SaddleTrace(
        samples=tuple(samples), mode="corner", path_range=(s_min, s_max), step=step
    )


# ---------------------------------------------------------------------------
# maps and isosurfaces


@dataclass(frozen=True)
class PotentialMap:
    """Psi (meV) sampled on a rectilinear plane grid."""

    plane: str  # "zox" (y = const) or "zoy" (x = const) or "xy" (z = const)
    const: float
    ax1: np.ndarray  # first in-plane axis values
    ax2: np.ndarray  # second in-plane axis values
    psi: np.ndarray  # (len(ax1), len(ax2)) meV
    assignment_hash: str = ""


def _assignment_hash(v: VoltageAssignment) -> str:
    import hashlib
    import json

    doc = json.dumps(
        {"amplitudes": dict(sorted(v.amplitudes.items())), "omega": v.drive.omega_rf},
        sort_keys=True,
    )
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def sample_map(
    basis: BasisEvaluator,
    v: VoltageAssignment,
    plane: str,
    const: float,
    ax1: np.ndarray,
    ax2: np.ndarray,
    ion: IonSpecies | None = None,
    chunk: int = 65536,
) -> PotentialMap:
    """Sample the pseudo-potential on a plane grid (deterministic)."""
    ion = ion or IonSpecies()
    factor = pseudopotential_factor(ion, v.drive)
    ax1 = np.asarray(ax1, dtype=float)
    ax2 = np.asarray(ax2, dtype=float)
    if len(ax1) < 2 or len(ax2) < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    A, B = np.meshgrid(ax1, ax2, indexing="ij")
    if plane == "zox":
        pts = np.column_stack([A.ravel(), np.full(A.size, const), B.ravel()])
    elif plane == "zoy":
        pts = np.column_stack([np.full(A.size, const), A.ravel(), B.ravel()])
    elif plane == "xy":
        pts = np.column_stack([A.ravel(), B.ravel(), np.full(A.size, const)])
    else:
        raise ValueError(f"plane must be zox, zoy or xy, got {plane!r}")
    w = basis.electrode_weights(v)
    psi = np.empty(pts.shape[0])
    for i in range(0, pts.shape[0], chunk):
        E, _H = basis.field_and_hessian_weighted(w, np.ascontiguousarray(pts[i : i + chunk]))
        psi[i : i + chunk] = factor * np.sum(E * E, axis=1)
    return PotentialMap(
        plane=plane,
        const=const,
        ax1=ax1,
        ax2=ax2,
        psi=psi.reshape(A.shape),
        assignment_hash=_assignment_hash(v),
    )


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (nv, 3) um
    faces: np.ndarray  # (nf, 3) int

    @property
    def empty(self) -> bool:
        return self.faces.size == 0


def extract_isosurface(volume: np.ndarray, level: float, spacing, origin) -> Mesh:
    """Marching-cubes isosurface of a sampled scalar volume.

    Empty mesh (not an error) when the level does not cross the sampled range.
    """
    from skimage import measure

    volume = np.asarray(volume, dtype=float)
    if level <= volume.min() or level >= volume.max():
        return Mesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=int))
    verts, faces, _normals, _values = measure.marching_cubes(
        volume, level=level, spacing=tuple(float(s) for s in spacing)
    )
    verts = verts + np.asarray(origin, dtype=float)[None, :]
    return Mesh(vertices=verts, faces=faces.astype(int))


def isosurface(
    basis: BasisEvaluator,
    v: VoltageAssignment,
    xs: np.ndarray,
    ys: np.ndarray,
    zs: np.ndarray,
    level: float,
    ion: IonSpecies | None = None,
    chunk: int = 65536,
) -> Mesh:
    """Triangulated Psi = level surface over the sampled volume (level in meV)."""
    if level <= 0:
        raise ValueError(f"isosurface level must be positive, got {level}")
    ion = ion or IonSpecies()
    factor = pseudopotential_factor(ion, v.drive)
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (xs, ys, zs))
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    w = basis.electrode_weights(v)
    psi = np.empty(pts.shape[0])
    for i in range(0, pts.shape[0], chunk):
        E, _H = basis.field_and_hessian_weighted(w, np.ascontiguousarray(pts[i : i + chunk]))
        psi[i : i + chunk] = factor * np.sum(E * E, axis=1)
    vol = psi.reshape(X.shape)
    spacing = (
        xs[1] - xs[0] if len(xs) > 1 else 1.0,
        ys[1] - ys[0] if len(ys) > 1 else 1.0,
        zs[1] - zs[0] if len(zs) > 1 else 1.0,
    )
    return extract_isosurface(vol, level, spacing, (xs[0], ys[0], zs[0]))


# ---------------------------------------------------------------------------
# exports


def _num(x) -> str:
    return repr(float(x))


def trace_csv(trace: SaddleTrace) -> str:
    lines = ["s_um,x_um,y_um,z_um,psi_meV"]
    for s in trace.samples:
        lines.append(
            ",".join([_num(s.s), _num(s.pos[0]), _num(s.pos[1]), _num(s.pos[2]), _num(s.psi)])
        )
    return "\n".join(lines) + "\n"


def map_csv(pmap: PotentialMap) -> str:
    names = {"zox": ("x_um", "z_um"), "zoy": ("y_um", "z_um"), "xy": ("x_um", "y_um")}
    n1, n2 = names[pmap.plane]
    lines = [f"{n1},{n2},psi_meV"]
    for i, a in enumerate(pmap.ax1):
        for j, b in enumerate(pmap.ax2):
            lines.append(",".join([_num(a), _num(b), _num(pmap.psi[i, j])]))
    return "\n".join(lines) + "\n"


def mesh_stl(mesh: Mesh, name: str = "isosurface") -> str:
    out = [f"solid {name}"]
    v = mesh.vertices
    for f in mesh.faces:
        p0, p1, p2 = v[f[0]], v[f[1]], v[f[2]]
        n = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(n)
        n = n / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
        out.append(f" facet normal {_num(n[0])} {_num(n[1])} {_num(n[2])}")
        out.append("  outer loop")
        for p in (p0, p1, p2):
            out.append(f"   vertex {_num(p[0])} {_num(p[1])} {_num(p[2])}")
        out.append("  endloop")
        out.append(" endfacet")
    out.append(f"endsolid {name}")
    return "\n".join(out) + "\n"


def mesh_obj(mesh: Mesh) -> str:
    out = []
    for p in mesh.vertices:
        out.append(f"v {_num(p[0])} {_num(p[1])} {_num(p[2])}")
    for f in mesh.faces:
        out.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return "\n".join(out) + "\n"
