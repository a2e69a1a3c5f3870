"""Voltage and geometry optimizers: invariants, determinism, edge cases.

Full-budget reproduction runs live in test_acceptance; these use small
budgets to exercise the machinery.
"""

from __future__ import annotations

import numpy as np
import pytest

from junctionforge.field import VoltageAssignment, build_basis
from junctionforge.layout import (
    GeometryError,
    refine_segmentation,
    symmetry_ties,
)
from junctionforge.optimize import (
    GeometrySpec,
    OptimizationSpec,
    convergence_csv,
    distinct_channels,
    objective,
    optimize_geometry,
    optimize_voltages,
    result_report,
)
from junctionforge.pseudo import metrics, trace_saddle_path


def tiny_spec(mode, ties, **kw):
    defaults = dict(
        mode=mode,
        ties=ties,
        restarts=2,
        max_evals=60,
        seed=7,
        search_range=(0.0, 300.0),
        search_step=5.0,
        trace_range=(0.0, 400.0),
        trace_step=2.0,
    )
    defaults.update(kw)
    return OptimizationSpec(**defaults)


@pytest.fixture(scope="module")
def corner_ties(baseline_layout):
    return symmetry_ties(baseline_layout, "corner")


@pytest.fixture(scope="module")
def small_corner_result(basis, corner_ties, ion, drive):
    return optimize_voltages(basis, tiny_spec("corner", corner_ties), ion, drive)


class TestObjective:
    def test_barrier_only(self, basis, uniform_100, ion):
        tr = trace_saddle_path(basis, uniform_100, "linear", (0.0, 400.0), 2.0, ion)
        m = metrics(tr)
        assert objective(tr, 0.0) == m.barrier

    def test_lambda_weighting(self, basis, uniform_100, ion):
        tr = trace_saddle_path(basis, uniform_100, "linear", (0.0, 400.0), 2.0, ion)
        m = metrics(tr)
        assert objective(tr, 0.01) == pytest.approx(m.barrier + 0.01 * m.height_var)

    def test_synthetic_arithmetic(self):
        from junctionforge.pseudo import SaddleTrace, TraceSample

        samples = (
            TraceSample(0.0, np.array([0.0, 0.0, 30.0]), 1.0),
            TraceSample(1.0, np.array([1.0, 0.0, 80.0]), 0.5),
        )
        tr = SaddleTrace(samples, "linear", (0.0, 1.0), 1.0)
        assert objective(tr, 0.01) == pytest.approx(1.0 + 0.01 * 50.0)

    def test_empty_trace_raises(self):
        from junctionforge.pseudo import SaddleTrace

        with pytest.raises(ValueError):
            objective(SaddleTrace((), "linear", (0.0, 1.0), 1.0), 0.0)


class TestOptimizeVoltages:
    def test_frozen_bounds_reproduce_baseline(self, basis, corner_ties, ion, drive, uniform_100):
        spec = tiny_spec("corner", corner_ties, bounds=(100.0, 100.0), restarts=1, channels=None)
        res = optimize_voltages(basis, spec, ion, drive)
        assert all(v == 100.0 for v in res.best_amplitudes.values())
        base = metrics(
            trace_saddle_path(basis, uniform_100, "corner", (0.0, 400.0), 2.0, ion)
        )
        assert res.final_metrics.barrier == pytest.approx(base.barrier, rel=1e-9)

    def test_history_monotone_nonincreasing(self, small_corner_result):
        h = small_corner_result.objective_history
        assert len(h) == small_corner_result.evaluations
        assert np.all(np.diff(h) <= 0.0)

    def test_bounds_and_ties_respected(self, small_corner_result, corner_ties):
        amps = small_corner_result.best_amplitudes
        assert all(0.0 <= v <= 200.0 for v in amps.values())
        for cls in corner_ties.classes:
            vals = {amps[g] for g in cls}
            assert len(vals) == 1

    def test_improves_on_baseline(self, small_corner_result, basis, uniform_100, ion):
        base = metrics(trace_saddle_path(basis, uniform_100, "corner", (0.0, 400.0), 2.0, ion))
        assert small_corner_result.final_metrics.barrier < base.barrier
        assert not small_corner_result.no_improvement

    def test_channelized_to_four_levels(self, small_corner_result):
        assert distinct_channels(small_corner_result.best_amplitudes) <= 4

    def test_determinism_same_seed(self, basis, corner_ties, ion, drive, small_corner_result):
        again = optimize_voltages(basis, tiny_spec("corner", corner_ties), ion, drive)
        assert np.array_equal(again.objective_history, small_corner_result.objective_history)
        assert again.best_amplitudes == small_corner_result.best_amplitudes
        assert convergence_csv(again) == convergence_csv(small_corner_result)

    def test_reevaluation_consistency(self, small_corner_result, basis, ion, drive):
        v = VoltageAssignment(small_corner_result.best_amplitudes, drive)
        tr = trace_saddle_path(basis, v, "corner", (0.0, 400.0), 2.0, ion)
        assert metrics(tr).barrier == pytest.approx(
            small_corner_result.final_metrics.barrier, rel=1e-12
        )

    def test_swap_symmetric_reevaluation(self, small_corner_result, basis, ion, drive):
        # corner-tied assignments are invariant under the x=y label swap, so
        # the re-evaluated barrier is identical
        swap = str.maketrans("ABCDabcd", "BADCbadc")
        amps = small_corner_result.best_amplitudes
        swapped = {
            (g if g == "e" else g[:-1] + g[-1].translate(swap)): val for g, val in amps.items()
        }
        assert swapped == amps
        v = VoltageAssignment(swapped, drive)
        tr = trace_saddle_path(basis, v, "corner", (0.0, 400.0), 2.0, ion)
        assert metrics(tr).barrier == pytest.approx(
            small_corner_result.final_metrics.barrier, rel=1e-9
        )

    def test_result_report_fields(self, small_corner_result):
        doc = result_report(small_corner_result, "baseline")
        assert set(doc) >= {
            "mode",
            "bestAmplitudes",
            "barrier_meV",
            "heightVar_um",
            "evaluations",
            "seed",
        }

    def test_parallel_restarts_match_sequential(self, basis, corner_ties, ion, drive, small_corner_result, monkeypatch):
        monkeypatch.setenv("JUNCTIONFORGE_THREADS", "2")
        par = optimize_voltages(basis, tiny_spec("corner", corner_ties), ion, drive)
        assert np.array_equal(par.objective_history, small_corner_result.objective_history)
        assert par.best_amplitudes == small_corner_result.best_amplitudes


class TestOptimizeGeometry:
    def test_single_point_bounds_return_that_point(self, ion, drive):
        gspec = GeometrySpec(
            target="finger",
            mode="corner",
            restarts=1,
            max_evals=8,
            bounds={"alpha": (20.0, 20.0), "d1": (30.0, 30.0)},
            search_range=(0.0, 300.0),
            search_step=5.0,
        )
        res = optimize_geometry(gspec, ion, drive)
        assert res.best_geometry == {"alpha": 20.0, "d1": 30.0}
        assert res.final_metrics.barrier > 0

    def test_invalid_geometry_rejected_not_fatal(self, ion, drive):
        # d1 range includes invalid values (tip beyond base); search survives
        gspec = GeometrySpec(
            target="finger",
            mode="corner",
            restarts=1,
            max_evals=20,
            bounds={"alpha": (25.0, 35.0), "d1": (100.0, 130.0)},
            search_range=(0.0, 300.0),
            search_step=5.0,
        )
        # every candidate in this box has d1/2 <= b but crosses the corner
        # square test: d1 in [100,130] -> tip 50..65 < b? b=60: some valid
        res = optimize_geometry(gspec, ion, drive)
        assert np.isfinite(res.final_metrics.barrier)

    def test_all_invalid_raises_geometry_error(self, ion, drive):
        gspec = GeometrySpec(
            target="wedge",
            mode="linear",
            restarts=1,
            max_evals=6,
            bounds={"w2": (300.0, 300.0), "l2w": (40.0, 40.0), "d2": (290.0, 290.0)},
            search_range=(0.0, 300.0),
            search_step=5.0,
        )
        with pytest.raises(GeometryError):
            optimize_geometry(gspec, ion, drive)

    def test_history_monotone(self, ion, drive):
        gspec = GeometrySpec(
            target="finger",
            mode="corner",
            restarts=1,
            max_evals=15,
            search_range=(0.0, 300.0),
            search_step=5.0,
        )
        res = optimize_geometry(gspec, ion, drive)
        assert np.all(np.diff(res.objective_history) <= 0.0)


class TestRefinementLoop:
    def test_coarse_solution_embeds_in_refined_layout(self, basis, baseline_layout, ion, drive, small_corner_result):
        targets = [g for g in baseline_layout.groups() if g.startswith("RF")]
        refined = refine_segmentation(baseline_layout, {"halve": targets})
        rbasis = build_basis(refined)
        coarse_amps = small_corner_result.best_amplitudes
        embedded = {}
        for g in refined.groups():
            base = g[:-2] if g.endswith(("_1", "_2")) else g
            embedded[g] = coarse_amps[base]
        v = VoltageAssignment(embedded, drive)
        tr = trace_saddle_path(rbasis, v, "corner", (0.0, 400.0), 2.0, ion)
        coarse = small_corner_result.final_metrics.barrier
        assert metrics(tr).barrier <= coarse + 1e-6
