"""Barrier minimisation: multi-RF amplitude search and geometry search.

Voltage optimization holds the geometry (and its one-time basis) fixed and
runs a bounded Nelder-Mead simplex search with seeded random restarts over
one amplitude per tie class, followed by a channelization stage that folds
the free amplitudes into at most four RF channel levels and re-polishes the
levels. Geometry optimization rebuilds layout and basis for every candidate
and evaluates the shuttling mode's objective at fixed voltages.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .field import BasisEvaluator, DriveConfig, VoltageAssignment, build_basis
from .layout import (
    FingerParams,
    GeometryError,
    Layout,
    LayoutDims,
    TieMap,
    WedgeParams,
    add_finger,
    add_wedges,
    build_x_junction,
    refine_segmentation,  # re-exported: step-D segmentation loop entry point
    symmetry_ties,
)

from .pseudo import (
    IonSpecies,
    SaddleTrace,
    TraceMetrics,
    TracingError,
    metrics,
    trace_saddle_path,
)

__all__ = [
    "GeometrySpec",
    "OptimizationResult",
    "OptimizationSpec",
    "convergence_csv",
    "distinct_channels",
    "hybrid_optimize",
    "objective",
    "optimize_geometry",
    "optimize_voltages",
    "refine_segmentation",
    "result_report",
]

CHANNEL_MERGE_TOL_V = 0.01
# rejected candidates (invalid geometry, lost tube) get a large finite cost:
# scipy's simplex turns genuine inf into NaNs in its convergence test
REJECT_COST = 1.0e9


def objective(trace: SaddleTrace, lam: float = 0.0) -> float:
    """Scalar objective (meV): barrier plus lam (meV/um) times height variation."""
    m = metrics(trace)
    return m.barrier + lam * m.height_var


def _corner_topology_penalty(trace: SaddleTrace, step: float) -> float:
    """Corner mode optimizes the A->B turn: the traced tube must cross the
    x=y diagonal on the junction's front side (x+y >= 0). Tubes that exit
    sideways, dissolve, or sneak around the back of the junction are not
    corner-turn solutions; they get a large but graded penalty so the simplex
    can still find its way back to turning configurations."""
    last = trace.samples[-1].pos
    if last[1] <= last[0] - 1e-9:
        return 2.0e3 + float(np.hypot(last[0], last[1]))  # never reached the diagonal
    shortfall = -(last[0] + last[1]) - 2.0 * step
    if shortfall > 0:
        return 1.0e3 + shortfall
    return 0.0


@dataclass
class OptimizationSpec:
    """Settings for the multi-RF amplitude search."""

    mode: str  # corner | linear
    ties: TieMap
    bounds: tuple[float, float] = (0.0, 200.0)
    base_amplitude: float = 100.0
    lam: float = 0.0  # meV/um
    trace_range: tuple[float, float] = (0.0, 500.0)
    trace_step: float = 1.0
    search_range: tuple[float, float] = (0.0, 350.0)
    search_step: float = 3.0
    restarts: int = 8
    max_evals: int = 700  # per restart
    seed: int = 7
    xatol: float = 0.05
    fatol: float = 1e-4
    channels: int | None = 4
    free_bulk: bool = False

    def __post_init__(self) -> None:
        if self.bounds[0] > self.bounds[1]:
            raise ValueError(f"bounds must be ordered, got {self.bounds}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass
class OptimizationResult:
    mode: str
    kind: str  # voltages | finger | wedge | hybrid
    best_amplitudes: dict[str, float] | None
    best_geometry: dict[str, float] | None
    objective_history: np.ndarray  # best-so-far per evaluation
    final_metrics: TraceMetrics
    final_trace: SaddleTrace
    evaluations: int
    wall_time: float
    seed: int
    no_improvement: bool = False
    stages: dict = field(default_factory=dict)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("JUNCTIONFORGE_THREADS", "1")))
    except ValueError:
        return 1


class _VoltageObjective:
    """Maps a free-class amplitude vector to the traced-barrier objective."""

    def __init__(
        self,
        basis: BasisEvaluator,
        spec: OptimizationSpec,
        ion: IonSpecies,
        drive: DriveConfig,
    ):
        self.basis = basis
        self.spec = spec
        self.ion = ion
        self.drive = drive
        free, fixed = [], []
        for cls in spec.ties.classes:
            if not spec.free_bulk and all(g.startswith("BULK") for g in cls):
                fixed.append(cls)
            else:
                free.append(cls)
        self.free_classes = free
        self.fixed_classes = fixed
        self._warm: dict = {}

    def reset(self) -> None:
        """Clear warm-start caches so every restart sees identical state."""
        self._warm = {}

    @property
    def dim(self) -> int:
        return len(self.free_classes)

    def assignment(self, x: np.ndarray) -> VoltageAssignment:
        amps: dict[str, float] = {}
        for cls, val in zip(self.free_classes, x):
            for g in cls:
                amps[g] = float(val)
        for cls in self.fixed_classes:
            for g in cls:
                amps[g] = self.spec.base_amplitude
        return VoltageAssignment(amps, self.drive)

    def trace(self, x: np.ndarray, fine: bool = False) -> SaddleTrace:
        v = self.assignment(x)
        if fine:
            return trace_saddle_path(
                self.basis, v, self.spec.mode, self.spec.trace_range, self.spec.trace_step, self.ion
            )
        return trace_saddle_path(
            self.basis,
            v,
            self.spec.mode,
            self.spec.search_range,
            self.spec.search_step,
            self.ion,
            half=self.spec.mode == "corner",
            warm_start=self._warm,
        )

    def __call__(self, x: np.ndarray) -> float:
        try:
            trace = self.trace(x)
        except TracingError:
            return REJECT_COST
        if self.spec.mode == "corner":
            penalty = _corner_topology_penalty(trace, self.spec.search_step)
            if penalty > 0:
                return penalty
        return objective(trace, self.spec.lam)


def _simplex_restart(fun, x0, bounds, maxfev, xatol, fatol, progress=None):
    """One bounded Nelder-Mead run; returns (x, f, raw history, nfev)."""
    history: list[float] = []

    def wrapped(x):
        f = fun(x)
        history.append(f)
        if progress is not None:
            progress(f)
        return f

    if bounds[0][0] == bounds[0][1] and all(lo == hi for lo, hi in bounds):
        x = np.array([lo for lo, _ in bounds])
        f = wrapped(x)
        return x, f, history, 1
    res = minimize(
        wrapped,
        np.asarray(x0, dtype=float),
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "maxfev": maxfev,
            "xatol": xatol,
            "fatol": fatol,
            "adaptive": len(x0) > 4,
        },
    )
    return res.x, float(res.fun), history, res.nfev


_FORK_WORK: dict = {}


def _fork_restart(idx: int):
    w = _FORK_WORK
    if hasattr(w["fun"], "reset"):
        w["fun"].reset()
    return _simplex_restart(
        w["fun"], w["starts"][idx], w["bounds"], w["maxfev"], w["xatol"], w["fatol"]
    )


def _run_restarts(fun, starts, bounds, maxfev, xatol, fatol, progress=None):
    """Run restarts (possibly in parallel); merge deterministically by index.

    A progress callback forces sequential execution so callers see every
    evaluation in order."""
    n_workers = 1 if progress is not None else min(_threads(), len(starts))
    results = []
    if n_workers > 1:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        _FORK_WORK.update(
            fun=fun, starts=starts, bounds=bounds, maxfev=maxfev, xatol=xatol, fatol=fatol
        )
        try:
            with ctx.Pool(n_workers) as pool:
                results = pool.map(_fork_restart, range(len(starts)))
        finally:
            _FORK_WORK.clear()
    else:
        for x0 in starts:
            if hasattr(fun, "reset"):
                fun.reset()
            results.append(
                _simplex_restart(fun, x0, bounds, maxfev, xatol, fatol, progress=progress)
            )
    return results


def _cluster_1d(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Agglomerative 1D clustering: returns (levels (k,), label per value)."""
    order = np.argsort(values)
    clusters: list[list[int]] = [[int(i)] for i in order]
    while len(clusters) > k:
        means = [float(np.mean(values[c])) for c in clusters]
        gaps = np.diff(means)
        j = int(np.argmin(gaps))
        clusters[j] = clusters[j] + clusters[j + 1]
        del clusters[j + 1]
    labels = np.zeros(len(values), dtype=int)
    levels = np.zeros(len(clusters))
    for ci, c in enumerate(clusters):
        levels[ci] = float(np.mean(values[c]))
        for i in c:
            labels[i] = ci
    return levels, labels


def distinct_channels(amplitudes: dict[str, float], tol: float = CHANNEL_MERGE_TOL_V) -> int:
    vals = sorted(set(amplitudes.values()))
    count = 0
    prev = None
    for v in vals:
        if prev is None or v - prev > tol:
            count += 1
            prev = v
    return count


def optimize_voltages(
    basis: BasisEvaluator,
    spec: OptimizationSpec,
    ion: IonSpecies | None = None,
    drive: DriveConfig | None = None,
    progress=None,
) -> OptimizationResult:
    """Bounded simplex search over one amplitude per tie class.

    The basis is built once by the caller and never rebuilt here. After the
    free search, amplitudes are folded into at most `spec.channels` levels
    (base level included) and the level values are re-polished, so the
    returned assignment is loadable from <=4 RF channels.
    """
    ion = ion or IonSpecies()
    drive = drive or DriveConfig.from_mhz(30.0)
    t0 = time.perf_counter()
    obj = _VoltageObjective(basis, spec, ion, drive)
    d = obj.dim
    lo, hi = spec.bounds
    bounds = [(lo, hi)] * d
    rng = np.random.default_rng(spec.seed)
    starts = [np.full(d, np.clip(spec.base_amplitude, lo, hi))]
    for _ in range(max(0, spec.restarts - 1)):
        starts.append(rng.uniform(lo, hi, size=d))

    results = _run_restarts(
        obj, starts, bounds, spec.max_evals, spec.xatol, spec.fatol, progress=progress
    )
    raw_history: list[float] = []
    best_x, best_f = None, float("inf")
    for x, f, hist, _nfev in results:
        raw_history.extend(hist)
        if f < best_f:
            best_x, best_f = np.asarray(x), f
    start_f = raw_history[0] if raw_history else float("inf")

    # local refinement around the incumbent before channelization
    if d > 0 and best_x is not None:
        obj.reset()
        xp, fp, hist_p, _n = _simplex_restart(
            obj, best_x, bounds, max(150, spec.max_evals // 2), spec.xatol / 5, spec.fatol / 5,
            progress=progress,
        )
        raw_history.extend(hist_p)
        if fp < best_f:
            best_x, best_f = np.asarray(xp), fp

    # channelization: fold free amplitudes into <= channels levels and polish
    channel_info: dict = {}
    if spec.channels is not None and d > 0:
        best_x, best_f, extra_hist, channel_info = _channelize_and_polish(
            obj, best_x, best_f, spec, rng, progress=progress
        )
        raw_history.extend(extra_hist)

    history = np.minimum.accumulate(np.asarray(raw_history, dtype=float))
    final_trace = obj.trace(best_x, fine=True)
    final_metrics = metrics(final_trace)
    best_v = obj.assignment(best_x)
    return OptimizationResult(
        mode=spec.mode,
        kind="voltages",
        best_amplitudes=dict(best_v.amplitudes),
        best_geometry=None,
        objective_history=history,
        final_metrics=final_metrics,
        final_trace=final_trace,
        evaluations=len(raw_history),
        wall_time=time.perf_counter() - t0,
        seed=spec.seed,
        no_improvement=best_f >= start_f,
        stages={"free_best": best_f, **channel_info},
    )


def _channelize_and_polish(obj: _VoltageObjective, best_x, best_f, spec, rng, progress=None):
    """Cluster the free amplitudes into channel levels and polish the levels."""
    obj.reset()  # cold caches: keeps parallel and sequential runs bit-identical
    lo, hi = spec.bounds
    base = spec.base_amplitude
    has_fixed = bool(obj.fixed_classes)
    max_free_levels = spec.channels - (1 if has_fixed else 0)
    history: list[float] = []
    candidates = []
    for k in range(min(max_free_levels, obj.dim), 0, -1):
        levels, labels = _cluster_1d(np.asarray(best_x), k)

        def expand(lv):
            return np.asarray(lv)[labels]

        def fun(lv):
            f = obj(expand(lv))
            history.append(f)
            if progress is not None:
                progress(f)
            return f

        lb = [(lo, hi)] * k
        x_lv, f_lv, _h, _n = _simplex_restart(
            fun, levels, lb, max(40 * k, 80), spec.xatol, spec.fatol
        )
        amps = obj.assignment(expand(x_lv)).amplitudes
        n_ch = distinct_channels(amps)
        if spec.channels is None or n_ch <= spec.channels:
            candidates.append((f_lv, k, np.asarray(expand(x_lv)), n_ch))
            if f_lv <= best_f * 1.02 + 1e-9:
                break
    if not candidates:
        raise RuntimeError("channelization failed to produce a <=4 channel assignment")
    f_lv, k, x_full, n_ch = min(candidates, key=lambda c: c[0])
    info = {"channel_levels": k, "channel_count": n_ch, "channelized_best": f_lv}
    return x_full, f_lv, history, info


# ---------------------------------------------------------------------------
# geometry optimization


@dataclass
class GeometrySpec:
    """Settings for the finger or wedge geometry search at fixed voltages."""

    target: str  # finger | wedge
    dims: LayoutDims = field(default_factory=LayoutDims)
    mode: str = "corner"  # objective shuttling mode
    finger_b: float = 60.0  # fixed during finger search
    wedge_beta: float = 53.0  # fixed during wedge search
    finger_params: FingerParams | None = None  # the finger to keep during wedge search
    base_amplitude: float = 100.0
    wedge_outer_volts: float = 85.0  # RF2f during the wedge search
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    lam: float = 0.0
    trace_range: tuple[float, float] = (0.0, 500.0)
    trace_step: float = 1.0
    search_range: tuple[float, float] = (0.0, 350.0)
    search_step: float = 3.0
    restarts: int = 3
    max_evals: int = 120
    seed: int = 7
    xatol: float = 0.02
    fatol: float = 1e-4
    # the finger stage reproduces a flat-height design point (the corner stage
    # of the hybrid method reports ~7.4 um ion-height variation); candidates
    # beyond the cap pay a smooth quadratic penalty (meV per um^2 of excess)
    height_cap_um: float | None = None
    height_penalty: float = 1.0

    def default_bounds(self) -> dict[str, tuple[float, float]]:
        if self.target == "finger":
            return {"alpha": (5.0, 60.0), "d1": (10.0, 80.0)}
        return {"w2": (8.0, 60.0), "l2w": (8.0, 120.0), "d2": (60.0, 320.0)}

    def reference_start(self) -> list[float]:
        """First search start: the documented default geometry values."""
        if self.target == "finger":
            f = FingerParams()
            return [f.alpha, f.d1]
        w = WedgeParams()
        return [w.w2, w.l2w, w.d2]

    def param_names(self) -> list[str]:
        return ["alpha", "d1"] if self.target == "finger" else ["w2", "l2w", "d2"]


def _geometry_layout(gspec: GeometrySpec, x: np.ndarray) -> Layout:
    if gspec.target == "finger":
        alpha, d1 = x
        base = build_x_junction(gspec.dims)
        return add_finger(base, FingerParams(alpha=float(alpha), b=gspec.finger_b, d1=float(d1)))
    w2, l2w, d2 = x
    base = build_x_junction(gspec.dims)
    fl = add_finger(base, gspec.finger_params or FingerParams())
    return add_wedges(
        fl, WedgeParams(beta=gspec.wedge_beta, w2=float(w2), l2w=float(l2w), d2=float(d2))
    )


def _geometry_assignment(gspec: GeometrySpec, layout: Layout, drive: DriveConfig) -> VoltageAssignment:
    amps = {g: gspec.base_amplitude for g in layout.groups()}
    if gspec.target == "wedge":
        amps["RF2f"] = gspec.wedge_outer_volts
    return VoltageAssignment(amps, drive)


class _GeometryObjective:
    """Rebuilds layout and basis per candidate (geometry search cost model)."""

    def __init__(self, gspec: GeometrySpec, ion: IonSpecies, drive: DriveConfig):
        self.gspec = gspec
        self.ion = ion
        self.drive = drive

    def evaluate(self, x: np.ndarray, fine: bool = False):
        layout = _geometry_layout(self.gspec, x)
        basis = build_basis(layout)
        v = _geometry_assignment(self.gspec, layout, self.drive)
        g = self.gspec
        if fine:
            trace = trace_saddle_path(basis, v, g.mode, g.trace_range, g.trace_step, self.ion)
        else:
            trace = trace_saddle_path(
                basis, v, g.mode, g.search_range, g.search_step, self.ion, half=g.mode == "corner"
            )
        return trace, layout, basis, v

    def __call__(self, x: np.ndarray) -> float:
        try:
            trace, *_ = self.evaluate(x)
        except (GeometryError, TracingError, ValueError):
            return REJECT_COST
        if self.gspec.mode == "corner":
            penalty = _corner_topology_penalty(trace, self.gspec.search_step)
            if penalty > 0:
                return penalty
        f = objective(trace, self.gspec.lam)
        if self.gspec.height_cap_um is not None:
            excess = max(0.0, metrics(trace).height_var - self.gspec.height_cap_um)
            f += self.gspec.height_penalty * excess * excess
        return f


def optimize_geometry(
    gspec: GeometrySpec,
    ion: IonSpecies | None = None,
    drive: DriveConfig | None = None,
) -> OptimizationResult:
    """Direct search over finger (alpha, d1) or wedge (w2, l2w, d2) parameters."""
    ion = ion or IonSpecies()
    drive = drive or DriveConfig.from_mhz(30.0)
    t0 = time.perf_counter()
    obj = _GeometryObjective(gspec, ion, drive)
    bounds_map = {**gspec.default_bounds(), **gspec.bounds}
    names = gspec.param_names()
    bounds = [bounds_map[n] for n in names]
    rng = np.random.default_rng(gspec.seed)
    starts = [np.clip(np.asarray(gspec.reference_start()), [b[0] for b in bounds], [b[1] for b in bounds])]
    if gspec.restarts > 1:
        starts.append(np.array([(lo + hi) / 2 for lo, hi in bounds]))
    for _ in range(max(0, gspec.restarts - 2)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    results = _run_restarts(obj, starts, bounds, gspec.max_evals, gspec.xatol, gspec.fatol)
    raw_history: list[float] = []
    best_x, best_f = None, float("inf")
    for x, f, hist, _n in results:
        raw_history.extend(hist)
        if f < best_f:
            best_x, best_f = np.asarray(x), f
    if best_x is None or best_f >= REJECT_COST:
        raise GeometryError(
            "geometry search found no candidate with a traceable pseudo-potential tube"
        )

    history = np.minimum.accumulate(np.asarray(raw_history, dtype=float))
    final_trace, layout, basis, v = obj.evaluate(best_x, fine=True)
    final_metrics = metrics(final_trace)
    geometry = dict(zip(names, (float(val) for val in best_x)))
    return OptimizationResult(
        mode=gspec.mode,
        kind=gspec.target,
        best_amplitudes=dict(v.amplitudes),
        best_geometry=geometry,
        objective_history=history,
        final_metrics=final_metrics,
        final_trace=final_trace,
        evaluations=len(raw_history),
        wall_time=time.perf_counter() - t0,
        seed=gspec.seed,
        no_improvement=best_f >= raw_history[0] if raw_history else False,
        stages={"layout_variant": layout.variant},
    )


def hybrid_optimize(
    mode: str,
    dims: LayoutDims | None = None,
    ion: IonSpecies | None = None,
    drive: DriveConfig | None = None,
    seed: int = 7,
    geometry_spec: GeometrySpec | None = None,
    voltage_spec_overrides: dict | None = None,
) -> OptimizationResult:
    """Geometry stage followed by a voltage stage on the optimized layout.

    corner: finger search (corner objective) then corner multi-RF search.
    linear: wedge search on the optimized finger layout (linear objective,
    outer wedges at 85 V) then linear multi-RF search.
    """
    dims = dims or LayoutDims()
    ion = ion or IonSpecies()
    drive = drive or DriveConfig.from_mhz(30.0)
    t0 = time.perf_counter()

    if geometry_spec is None:
        if mode == "corner":
            geometry_spec = GeometrySpec(
                target="finger", dims=dims, mode="corner", seed=seed, height_cap_um=8.0
            )
        elif mode == "linear":
            geometry_spec = GeometrySpec(target="wedge", dims=dims, mode="linear", seed=seed)
        else:
            raise ValueError(f"mode must be corner or linear, got {mode!r}")
    geo = optimize_geometry(geometry_spec, ion, drive)

    layout = _geometry_layout(geometry_spec, np.array([geo.best_geometry[n] for n in geometry_spec.param_names()]))
    basis = build_basis(layout)
    ties = symmetry_ties(layout, mode)
    vspec = OptimizationSpec(mode=mode, ties=ties, seed=seed)
    for key, val in (voltage_spec_overrides or {}).items():
        vspec = replace(vspec, **{key: val})
    volt = optimize_voltages(basis, vspec, ion, drive)

    history = np.minimum.accumulate(
        np.concatenate([geo.objective_history, volt.objective_history])
    )
    return OptimizationResult(
        mode=mode,
        kind="hybrid",
        best_amplitudes=volt.best_amplitudes,
        best_geometry=geo.best_geometry,
        objective_history=history,
        final_metrics=volt.final_metrics,
        final_trace=volt.final_trace,
        evaluations=geo.evaluations + volt.evaluations,
        wall_time=time.perf_counter() - t0,
        seed=seed,
        stages={
            "geometry": {
                "barrier_meV": geo.final_metrics.barrier,
                "height_var_um": geo.final_metrics.height_var,
                "params": geo.best_geometry,
                "evaluations": geo.evaluations,
            },
            "voltages": {
                "barrier_meV": volt.final_metrics.barrier,
                "height_var_um": volt.final_metrics.height_var,
                "evaluations": volt.evaluations,
                **volt.stages,
            },
        },
    )


# ---------------------------------------------------------------------------
# exports


def convergence_csv(result: OptimizationResult) -> str:
    lines = ["eval_index,best_objective_meV"]
    for i, f in enumerate(result.objective_history):
        lines.append(f"{i},{float(f)!r}")
    return "\n".join(lines) + "\n"


def result_report(result: OptimizationResult, variant: str) -> dict:
    return {
        "mode": result.mode,
        "kind": result.kind,
        "variant": variant,
        "bestAmplitudes": result.best_amplitudes,
        "geometryParams": result.best_geometry,
        "barrier_meV": result.final_metrics.barrier,
        "heightVar_um": result.final_metrics.height_var,
        "barrierPos_um": [float(c) for c in result.final_metrics.barrier_pos],
        "evaluations": result.evaluations,
        "wallTime_s": result.wall_time,
        "seed": result.seed,
        "noImprovement": result.no_improvement,
        "stages": result.stages,
    }
