"""Segmented X-junction electrode geometry: construction, variants, symmetry ties.

All lengths are in micrometres and all electrodes live in the z=0 plane.
Only RF metal is stored explicitly; in the gapless-plane field model everything
else (central ground cross, inter-electrode gaps, area beyond the rails) is
grounded plane and carries no polygon.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon

SYMMETRY_TOL = 1e-9  # vertex tolerance (um) for reflection checks

TIE_MODES = ("corner", "linear", "uniform")
VARIANTS = ("baseline", "finger", "finger+wedge")

WEDGE_INNER_GROUP = "RF1f"
WEDGE_OUTER_GROUP = "RF2f"
FINGER_GROUP = "f"


class GeometryError(ValueError):
    """Raised when a construction step produces invalid geometry."""


@dataclass(frozen=True)
class LayoutDims:
    """Baseline X-junction dimensions (um): rail width w1, segment lengths
    l1..l3, centre ground width wgnd, gap g, rail extent arm_length."""

    w1: float = 80.0
    l1: float = 45.0
    l2: float = 45.0
    l3: float = 45.0
    wgnd: float = 100.0
    g: float = 4.0
    arm_length: float = 2000.0

    def __post_init__(self) -> None:
        vals = (self.w1, self.l1, self.l2, self.l3, self.wgnd, self.g, self.arm_length)
        if any(v <= 0 for v in vals):
            raise GeometryError(f"all dimensions must be positive, got {self}")
        if self.g >= self.w1:
            raise GeometryError(f"gap g={self.g} must be smaller than rail width w1={self.w1}")
        min_arm = self.l1 + self.l2 + self.l3 + self.wgnd / 2 + 2 * self.g
        if self.arm_length <= min_arm:
            raise GeometryError(
                f"arm_length={self.arm_length} must exceed {min_arm} to fit the segments"
            )

    @property
    def segment_lengths(self) -> tuple[float, float, float]:
        return (self.l1, self.l2, self.l3)

    @property
    def rail_inner(self) -> float:
        """Distance from an axis to the near edge of its RF rails."""
        return self.wgnd / 2 + self.g

    @property
    def rail_outer(self) -> float:
        return self.rail_inner + self.w1


@dataclass(frozen=True)
class FingerParams:
    """Corner-finger shape: full tip angle alpha (deg), base anchor distance b
    (um, along the quadrant diagonal), diagonal tip-to-tip distance d1 (um)."""

    alpha: float = 12.6
    b: float = 60.0
    d1: float = 34.0

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 90.0):
            raise GeometryError(f"alpha must be in (0, 90] degrees, got {self.alpha}")
        if self.d1 <= 0:
            raise GeometryError(f"d1 must be positive, got {self.d1}")
        if self.b <= 0:
            raise GeometryError(f"b must be positive, got {self.b}")


@dataclass(frozen=True)
class WedgeParams:
    """Linear-axis wedge shape: apex angle beta (deg), width w2, body length
    l2w, inner tip-to-tip distance d2 (um)."""

    beta: float = 53.0
    w2: float = 29.0
    l2w: float = 40.0
    d2: float = 152.0

    def __post_init__(self) -> None:
        if not (0.0 < self.beta < 180.0):
            raise GeometryError(f"beta must be in (0, 180) degrees, got {self.beta}")
        if self.w2 <= 0 or self.l2w <= 0 or self.d2 <= 0:
            raise GeometryError(f"w2, l2w, d2 must be positive, got {self}")


@dataclass(frozen=True)
class Electrode:
    """One planar electrode: simple CCW polygon in the z=0 plane."""

    id: int
    group: str
    polygon: tuple[tuple[float, float], ...]
    role: str = "rf"

    def as_array(self) -> np.ndarray:
        return np.asarray(self.polygon, dtype=float)

    @property
    def shapely(self) -> ShapelyPolygon:
        return ShapelyPolygon(self.polygon)

    def area(self) -> float:
        return self.shapely.area

    def centroid(self) -> tuple[float, float]:
        c = self.shapely.centroid
        return (c.x, c.y)

    def is_rectangle(self) -> bool:
        """Axis-aligned rectangle detection (enables the fast field path)."""
        v = self.as_array()
        if v.shape[0] != 4:
            return False
        xs, ys = sorted(set(v[:, 0])), sorted(set(v[:, 1]))
        if len(xs) != 2 or len(ys) != 2:
            return False
        want = {(xs[0], ys[0]), (xs[1], ys[0]), (xs[1], ys[1]), (xs[0], ys[1])}
        return {tuple(p) for p in v} == want


@dataclass(frozen=True)
class Layout:
    dims: LayoutDims
    electrodes: tuple[Electrode, ...]
    variant: str = "baseline"
    finger_params: FingerParams | None = None
    wedge_params: WedgeParams | None = None

    def rf_electrodes(self) -> tuple[Electrode, ...]:
        return tuple(e for e in self.electrodes if e.role == "rf")

    def groups(self) -> list[str]:
        """RF group labels in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.rf_electrodes():
            seen.setdefault(e.group, None)
        return list(seen)

    def by_group(self, group: str) -> tuple[Electrode, ...]:
        return tuple(e for e in self.electrodes if e.group == group)

    def layout_hash(self) -> str:
        return hashlib.sha256(to_json(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TieMap:
    """Partition of RF group labels into classes sharing one amplitude."""

    mode: str
    classes: tuple[tuple[str, ...], ...]

    def class_of(self, group: str) -> tuple[str, ...]:
        for cls in self.classes:
            if group in cls:
                return cls
        raise KeyError(group)

    def representatives(self) -> list[str]:
        return [cls[0] for cls in self.classes]


# ---------------------------------------------------------------------------
# construction helpers


def _rect(x1: float, y1: float, x2: float, y2: float) -> tuple[tuple[float, float], ...]:
    return ((x1, y1), (x2, y1), (x2, y2), (x1, y2))


def _reflect(
    poly: tuple[tuple[float, float], ...], sx: float, sy: float
) -> tuple[tuple[float, float], ...]:
    """Mirror a CCW polygon with coordinate signs (sx, sy), keeping CCW order."""
    pts = [(sx * x, sy * y) for x, y in poly]
    if sx * sy < 0:
        pts = pts[::-1]
    return tuple(pts)


def _signed_area(poly: tuple[tuple[float, float], ...]) -> float:
    a = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def build_x_junction(dims: LayoutDims, separate_center: bool = False) -> Layout:
    """Baseline segmented X-junction of four L-shaped quadrant RF regions.

    Each quadrant holds one corner square (group "e"), three segments along
    each of its two arms (RF1A..RF3A style), and one bulk rail per arm side
    running to arm_length. separate_center gives the four squares individual
    groups e1..e4 instead of the shared "e".
    """
    c0, c1 = dims.rail_inner, dims.rail_outer
    g = dims.g
    lengths = dims.segment_lengths

    # quadrant 1 prototypes: (group templates, polygon)
    quad1: list[tuple[str, str, tuple[tuple[float, float], ...]]] = []
    # corner square: template slots for per-quadrant e-naming
    quad1.append(("e", "center", _rect(c0, c0, c1, c1)))
    x = c1
    for i, li in enumerate(lengths, start=1):
        x += g
        quad1.append((f"RF{i}{{armA}}", "segment", _rect(x, c0, x + li, c1)))
        quad1.append((f"RF{i}{{armB}}", "segment", _rect(c0, x, c1, x + li)))
        x += li
    bulk_start = x + g
    if bulk_start >= dims.arm_length:
        raise GeometryError(
            f"bulk rail start {bulk_start} exceeds arm_length {dims.arm_length} "
            f"(colliding pair: segment 3 and bulk rail)"
        )
    quad1.append(("BULK_{armA}", "bulk", _rect(bulk_start, c0, dims.arm_length, c1)))
    quad1.append(("BULK_{armB}", "bulk", _rect(c0, bulk_start, c1, dims.arm_length)))

    # quadrant -> (x sign, y sign, arm letter for the +x-ish arm, arm letter for
    # the +y-ish arm, quadrant index for e-naming). Case encodes the rail side:
    # uppercase = y>0 rail for arms A/C, x>0 rail for arms B/D.
    quadrants = (
        (1.0, 1.0, "A", "B", 1),
        (-1.0, 1.0, "C", "b", 2),
        (-1.0, -1.0, "c", "d", 3),
        (1.0, -1.0, "a", "D", 4),
    )

    electrodes: list[Electrode] = []
    eid = 0
    for sx, sy, arm_x, arm_y, qi in quadrants:
        for template, kind, poly in quad1:
            if kind == "center":
                group = f"e{qi}" if separate_center else "e"
            else:
                group = template.format(armA=arm_x, armB=arm_y)
            electrodes.append(Electrode(eid, group, _reflect(poly, sx, sy)))
            eid += 1

    layout = Layout(dims=dims, electrodes=tuple(electrodes), variant="baseline")
    diagnostics = validate(layout)
    if diagnostics:
        raise GeometryError("; ".join(d.message for d in diagnostics))
    return layout


def _finger_polygon(dims: LayoutDims, p: FingerParams) -> tuple[tuple[float, float], ...]:
    """Quadrant-1 finger polygon, symmetric about the x=y diagonal."""
    c0, c1 = dims.rail_inner, dims.rail_outer
    corner_dist = math.sqrt(2.0) * c0
    t = p.d1 / 2.0  # tip distance from origin
    if t >= corner_dist - SYMMETRY_TOL:
        # tip at/inside the square's inner corner: finger degenerates to the square
        if t > math.sqrt(2.0) * c1:
            raise GeometryError("finger tip lies beyond the corner square")
        return _rect(c0, c0, c1, c1)
    if p.b <= t:
        raise GeometryError(
            f"finger base b={p.b} must lie beyond the tip distance d1/2={t}"
        )
    if p.b >= corner_dist:
        raise GeometryError(
            f"finger base b={p.b} must lie inside the square corner distance {corner_dist:.3f}"
        )
    s = 1.0 / math.sqrt(2.0)
    half = math.tan(math.radians(p.alpha) / 2.0) * (p.b - t)
    tip = (t * s, t * s)
    b_up = (p.b * s - half * s, p.b * s + half * s)
    b_lo = (p.b * s + half * s, p.b * s - half * s)
    centre = ((c0 + c1) / 2.0, (c0 + c1) / 2.0)
    # base corner -> square centre segment crosses the square's inner edge
    # (x=c0 for the upper flank; by symmetry y=c0 for the lower one)
    dx, dy = centre[0] - b_up[0], centre[1] - b_up[1]
    if dx <= 0:
        raise GeometryError("finger base is too wide to anchor into the corner square")
    frac = (c0 - b_up[0]) / dx
    y_anchor = b_up[1] + frac * dy
    if not (c0 - SYMMETRY_TOL <= y_anchor <= c1 + SYMMETRY_TOL):
        raise GeometryError("finger flank misses the corner square's inner edge")
    p_up = (c0, y_anchor)
    p_lo = (y_anchor, c0)
    poly = ((c1, c0), (c1, c1), (c0, c1), p_up, b_up, tip, b_lo, p_lo)
    if _signed_area(poly) <= 0:
        raise GeometryError("finger polygon degenerate or mis-ordered")
    return poly


def add_finger(layout: Layout, p: FingerParams, separate: bool = False) -> Layout:
    """Replace the four corner squares with finger-shaped electrodes."""
    if layout.variant != "baseline":
        raise GeometryError(f"add_finger requires a baseline layout, got {layout.variant}")
    proto = _finger_polygon(layout.dims, p)
    reflections = {1: (1.0, 1.0), 2: (-1.0, 1.0), 3: (-1.0, -1.0), 4: (1.0, -1.0)}

    electrodes: list[Electrode] = []
    qi = 0
    for e in layout.electrodes:
        if e.group == "e" or (e.group.startswith("e") and len(e.group) == 2):
            qi += 1
            group = f"{FINGER_GROUP}{qi}" if separate else FINGER_GROUP
            sx, sy = reflections[qi]
            electrodes.append(replace(e, group=group, polygon=_reflect(proto, sx, sy)))
        else:
            electrodes.append(e)
    out = Layout(
        dims=layout.dims,
        electrodes=tuple(electrodes),
        variant="finger",
        finger_params=p,
    )
    diagnostics = validate(out)
    if diagnostics:
        raise GeometryError("; ".join(d.message for d in diagnostics))
    return out


def _wedge_polygon(tip_y: float, p: WedgeParams) -> tuple[tuple[float, float], ...]:
    """+y wedge symmetric about x=0, apex at (0, tip_y) pointing at the origin."""
    run = (p.w2 / 2.0) / math.tan(math.radians(p.beta) / 2.0)
    y1 = tip_y + run
    y2 = y1 + p.l2w
    return ((0.0, tip_y), (p.w2 / 2.0, y1), (p.w2 / 2.0, y2), (-p.w2 / 2.0, y2), (-p.w2 / 2.0, y1))


def wedge_inner_tip(dims: LayoutDims, p: WedgeParams) -> float:
    """Apex position of the inner wedge pair implied by the outer separation d2."""
    run = (p.w2 / 2.0) / math.tan(math.radians(p.beta) / 2.0)
    return p.d2 / 2.0 - (run + p.l2w + dims.g)


def add_wedges(layout: Layout, p: WedgeParams) -> Layout:
    """Insert the two wedge pairs that bridge the interrupted linear-trap rails.

    Each wedge straddles the crossing arm's axis (x=0) pointing at the origin;
    the stacks at +y and -y put an inner wedge (group RF1f) between the finger
    tips and an outer wedge (group RF2f) reaching into the missing-rail band.
    d2 is the tip-to-tip distance of the outer pair; the inner pair sits one
    gap in front of it, reaching toward the finger tips.
    """
    if layout.variant != "finger":
        raise GeometryError(f"add_wedges requires a finger layout, got {layout.variant}")
    tip_in = wedge_inner_tip(layout.dims, p)
    if tip_in <= 0:
        raise GeometryError(
            f"wedge geometry leaves no room for the inner pair (inner tip at {tip_in:.3f} um)"
        )
    inner = _wedge_polygon(tip_in, p)
    outer = _wedge_polygon(p.d2 / 2.0, p)

    electrodes = list(layout.electrodes)
    eid = max(e.id for e in electrodes) + 1
    for poly, group in ((inner, WEDGE_INNER_GROUP), (outer, WEDGE_OUTER_GROUP)):
        electrodes.append(Electrode(eid, group, poly))
        electrodes.append(Electrode(eid + 1, group, _reflect(poly, 1.0, -1.0)))
        eid += 2

    out = Layout(
        dims=layout.dims,
        electrodes=tuple(electrodes),
        variant="finger+wedge",
        finger_params=layout.finger_params,
        wedge_params=p,
    )
    diagnostics = validate(out)
    if diagnostics:
        raise GeometryError("; ".join(d.message for d in diagnostics))
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # overlap | self-intersection | symmetry | degenerate
    electrode_ids: tuple[int, ...]
    message: str


def _vertex_multiset(layout: Layout) -> np.ndarray:
    return np.concatenate([e.as_array() for e in layout.electrodes])


def _reflection_matches(layout: Layout, sx: float, sy: float, tol: float) -> bool:
    """Does reflecting every vertex map the vertex multiset onto itself?"""
    pts = _vertex_multiset(layout)
    refl = pts * np.array([sx, sy])
    # greedy nearest matching via lexicographic sort with rounding
    key = np.round(pts / tol).astype(np.int64)
    key_r = np.round(refl / tol).astype(np.int64)
    a = sorted(map(tuple, key))
    b = sorted(map(tuple, key_r))
    return a == b


def validate(layout: Layout) -> list[Diagnostic]:
    """Check all layout invariants; empty list means the layout is valid."""
    out: list[Diagnostic] = []
    shapes = []
    for e in layout.electrodes:
        poly = e.shapely
        if not poly.is_valid or len(e.polygon) < 3:
            out.append(
                Diagnostic("self-intersection", (e.id,), f"electrode {e.id} ({e.group}) is not a simple polygon")
            )
            shapes.append(None)
            continue
        if poly.area <= 0:
            out.append(Diagnostic("degenerate", (e.id,), f"electrode {e.id} ({e.group}) has zero area"))
        if _signed_area(e.polygon) <= 0:
            out.append(Diagnostic("degenerate", (e.id,), f"electrode {e.id} ({e.group}) is not CCW"))
        shapes.append(poly)

    n = len(layout.electrodes)
    for i in range(n):
        if shapes[i] is None:
            continue
        for j in range(i + 1, n):
            if shapes[j] is None:
                continue
            ei, ej = layout.electrodes[i], layout.electrodes[j]
            bi, bj = shapes[i].bounds, shapes[j].bounds
            if bi[2] < bj[0] or bj[2] < bi[0] or bi[3] < bj[1] or bj[3] < bi[1]:
                continue
            inter = shapes[i].intersection(shapes[j])
            if inter.area > SYMMETRY_TOL:
                out.append(
                    Diagnostic(
                        "overlap",
                        (ei.id, ej.id),
                        f"electrodes {ei.id} ({ei.group}) and {ej.id} ({ej.group}) overlap",
                    )
                )
            elif not inter.is_empty and inter.length > 0:
                out.append(
                    Diagnostic(
                        "overlap",
                        (ei.id, ej.id),
                        f"electrodes {ei.id} ({ei.group}) and {ej.id} ({ej.group}) touch (gap collapsed)",
                    )
                )

    for sx, sy, name in ((-1.0, 1.0, "x->-x"), (1.0, -1.0, "y->-y")):
        if not _reflection_matches(layout, sx, sy, SYMMETRY_TOL):
            out.append(
                Diagnostic("symmetry", (), f"layout is not invariant under {name} reflection")
            )
    return out


# ---------------------------------------------------------------------------
# symmetry ties


def _reflect_point(x: float, y: float, mode: str) -> tuple[float, float]:
    if mode == "corner":  # across x=y
        return (y, x)
    if mode == "linear":  # across x=0
        return (-x, y)
    raise ValueError(mode)


def symmetry_ties(layout: Layout, mode: str) -> TieMap:
    """Partition RF groups into amplitude classes for a shuttling mode.

    corner: orbits under reflection across x=y (A->B turning).
    linear: orbits under x->-x (A->C transport).
    uniform: everything in one class.
    Orbits are found geometrically: each electrode's reflected polygon must
    coincide with some electrode, and group labels inherit that pairing.
    """
    groups = layout.groups()
    if mode not in TIE_MODES:
        raise ValueError(f"mode must be one of {TIE_MODES}, got {mode!r}")
    if mode == "uniform":
        return TieMap(mode="uniform", classes=(tuple(groups),))

    electrodes = layout.rf_electrodes()
    centroids = [e.centroid() for e in electrodes]
    areas = [e.area() for e in electrodes]
    pair_of_group: dict[str, set[str]] = {g: set() for g in groups}
    for e, c, a in zip(electrodes, centroids, areas):
        rx, ry = _reflect_point(c[0], c[1], mode)
        match = None
        for f, cf, af in zip(electrodes, centroids, areas):
            if abs(cf[0] - rx) < 1e-6 and abs(cf[1] - ry) < 1e-6 and abs(af - a) < 1e-6:
                match = f
                break
        if match is None:
            raise GeometryError(
                f"electrode {e.id} ({e.group}) has no {mode}-reflection partner; "
                f"ties undefined for this layout"
            )
        pair_of_group[e.group].add(match.group)

    # union-find over group labels
    parent = {g: g for g in groups}

    def find(g: str) -> str:
        while parent[g] != g:
            parent[g] = parent[parent[g]]
            g = parent[g]
        return g

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for g, partners in pair_of_group.items():
        for h in partners:
            union(g, h)

    classes: dict[str, list[str]] = {}
    for g in groups:
        classes.setdefault(find(g), []).append(g)
    ordered = tuple(tuple(cls) for cls in classes.values())
    return TieMap(mode=mode, classes=ordered)


# ---------------------------------------------------------------------------
# segmentation refinement


SPLIT_GAP = 1e-6  # hairline cut (um): keeps the coarse drive embeddable


def refine_segmentation(layout: Layout, split_rule: dict) -> Layout:
    """Split named segments in half or rebuild with new segment lengths.

    split_rule: {"halve": [labels...]} or {"set_lengths": (l1, l2, l3)} or {}
    (no-op). Halving models an idealized segmentation cut: the two halves are
    separated by a hairline (1e-6 um) so the coarse voltage solution remains
    embeddable in the refined layout; physically gapped segmentations come
    from rebuilding with set_lengths.
    """
    if not split_rule:
        return layout
    if "set_lengths" in split_rule:
        l1, l2, l3 = split_rule["set_lengths"]
        dims = replace(layout.dims, l1=float(l1), l2=float(l2), l3=float(l3))
        base = build_x_junction(dims)
        if layout.variant == "baseline":
            return base
        out = add_finger(base, layout.finger_params)
        if layout.variant == "finger+wedge":
            out = add_wedges(out, layout.wedge_params)
        return out

    targets = set(split_rule["halve"])
    g = layout.dims.g
    electrodes: list[Electrode] = []
    eid = 0
    for e in layout.electrodes:
        if e.group not in targets:
            electrodes.append(replace(e, id=eid))
            eid += 1
            continue
        if not e.is_rectangle():
            raise GeometryError(f"cannot halve non-rectangular electrode {e.id} ({e.group})")
        v = e.as_array()
        x1, y1 = v[:, 0].min(), v[:, 1].min()
        x2, y2 = v[:, 0].max(), v[:, 1].max()
        # split along the arm direction: x for arms A/C, y for arms B/D,
        # longest side otherwise (bulk rails)
        arm = e.group[-1] if e.group[-1] in "AaCcBbDd" else None
        if arm in "AaCc":
            along_x = True
        elif arm in "BbDd":
            along_x = False
        else:
            along_x = (x2 - x1) >= (y2 - y1)
        span = (x2 - x1) if along_x else (y2 - y1)
        half = (span - SPLIT_GAP) / 2.0
        if half < 2 * g:
            raise GeometryError(
                f"halving {e.group} yields segments of {half:.3f} um, shorter than 2g={2 * g}"
            )
        if along_x:
            polys = [_rect(x1, y1, x1 + half, y2), _rect(x2 - half, y1, x2, y2)]
        else:
            polys = [_rect(x1, y1, x2, y1 + half), _rect(x1, y2 - half, x2, y2)]
        for k, poly in enumerate(polys, start=1):
            electrodes.append(Electrode(eid, f"{e.group}_{k}", poly, e.role))
            eid += 1
    out = Layout(
        dims=layout.dims,
        electrodes=tuple(electrodes),
        variant=layout.variant,
        finger_params=layout.finger_params,
        wedge_params=layout.wedge_params,
    )
    diagnostics = validate(out)
    if diagnostics:
        raise GeometryError("; ".join(d.message for d in diagnostics))
    return out


# ---------------------------------------------------------------------------
# serialization


def to_json(layout: Layout) -> str:
    doc = {
        "dims": {
            "w1_um": layout.dims.w1,
            "l1_um": layout.dims.l1,
            "l2_um": layout.dims.l2,
            "l3_um": layout.dims.l3,
            "wgnd_um": layout.dims.wgnd,
            "g_um": layout.dims.g,
            "arm_length_um": layout.dims.arm_length,
        },
        "variant": layout.variant,
        "finger": None
        if layout.finger_params is None
        else {
            "alpha_deg": layout.finger_params.alpha,
            "b_um": layout.finger_params.b,
            "d1_um": layout.finger_params.d1,
        },
        "wedge": None
        if layout.wedge_params is None
        else {
            "beta_deg": layout.wedge_params.beta,
            "w2_um": layout.wedge_params.w2,
            "l2w_um": layout.wedge_params.l2w,
            "d2_um": layout.wedge_params.d2,
        },
        "electrodes": [
            {
                "id": e.id,
                "group": e.group,
                "role": e.role,
                "polygon": [[float(x), float(y)] for x, y in e.polygon],
            }
            for e in layout.electrodes
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def from_json(text: str) -> Layout:
    doc = json.loads(text)
    d = doc["dims"]
    dims = LayoutDims(
        w1=d["w1_um"],
        l1=d["l1_um"],
        l2=d["l2_um"],
        l3=d["l3_um"],
        wgnd=d["wgnd_um"],
        g=d["g_um"],
        arm_length=d["arm_length_um"],
    )
    fp = doc.get("finger")
    wp = doc.get("wedge")
    electrodes = tuple(
        Electrode(
            id=e["id"],
            group=e["group"],
            polygon=tuple((float(x), float(y)) for x, y in e["polygon"]),
            role=e.get("role", "rf"),
        )
        for e in doc["electrodes"]
    )
    return Layout(
        dims=dims,
        electrodes=electrodes,
        variant=doc.get("variant", "baseline"),
        finger_params=None
        if fp is None
        else FingerParams(alpha=fp["alpha_deg"], b=fp["b_um"], d1=fp["d1_um"]),
        wedge_params=None
        if wp is None
        else WedgeParams(beta=wp["beta_deg"], w2=wp["w2_um"], l2w=wp["l2w_um"], d2=wp["d2_um"]),
    )
