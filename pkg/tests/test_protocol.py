"""RF channel compression and quasi-static switching plans."""

from __future__ import annotations

import numpy as np
import pytest

from junctionforge.field import VoltageAssignment
from junctionforge.layout import symmetry_ties
from junctionforge.protocol import (
    ChannelCapacityError,
    channel_assignment,
    channel_map_json,
    plan_assignments,
    plan_csv,
    switch_schedule,
)


@pytest.fixture(scope="module")
def corner_ties(baseline_layout):
    return symmetry_ties(baseline_layout, "corner")


@pytest.fixture(scope="module")
def linear_ties(baseline_layout):
    return symmetry_ties(baseline_layout, "linear")


def tied_assignment(ties, values, drive):
    """values: one amplitude per tie class, in class order."""
    amps = {}
    for cls, val in zip(ties.classes, values):
        for g in cls:
            amps[g] = float(val)
    return VoltageAssignment(amps, drive)


class TestChannelAssignment:
    def test_uniform_is_one_channel(self, baseline_layout, corner_ties, drive):
        v = VoltageAssignment.uniform(baseline_layout, 100.0, drive)
        cmap = channel_assignment(v, corner_ties)
        assert len(cmap.channels) == 1
        assert set(cmap.wiring) == set(baseline_layout.groups())

    def test_four_levels_fit(self, corner_ties, drive):
        n = len(corner_ties.classes)
        levels = [100.0, 85.0, 130.0, 60.0]
        v = tied_assignment(corner_ties, [levels[i % 4] for i in range(n)], drive)
        cmap = channel_assignment(v, corner_ties)
        assert len(cmap.channels) == 4

    def test_five_levels_error_lists_offenders(self, corner_ties, drive):
        n = len(corner_ties.classes)
        levels = [100.0, 85.0, 130.0, 60.0, 42.0]
        v = tied_assignment(corner_ties, [levels[i % 5] for i in range(n)], drive)
        with pytest.raises(ChannelCapacityError) as exc:
            channel_assignment(v, corner_ties)
        assert exc.value.offending

    def test_merge_within_tolerance(self, corner_ties, drive):
        n = len(corner_ties.classes)
        vals = [100.0 if i % 2 else 100.005 for i in range(n)]
        v = tied_assignment(corner_ties, vals, drive)
        cmap = channel_assignment(v, corner_ties)
        assert len(cmap.channels) == 1

    def test_round_trip_exact(self, corner_ties, drive):
        n = len(corner_ties.classes)
        levels = [100.0, 85.5, 130.25, 60.125]
        v = tied_assignment(corner_ties, [levels[i % 4] for i in range(n)], drive)
        cmap = channel_assignment(v, corner_ties)
        back = cmap.expand(drive)
        assert back.amplitudes == v.amplitudes

    def test_tie_violation_rejected(self, corner_ties, drive, baseline_layout):
        amps = {g: 100.0 for g in baseline_layout.groups()}
        amps["RF1A"] = 55.0  # its corner partner RF1B stays at 100
        v = VoltageAssignment(amps, drive)
        with pytest.raises(ValueError, match="tie"):
            channel_assignment(v, corner_ties)

    def test_json_shape(self, baseline_layout, corner_ties, drive):
        v = VoltageAssignment.uniform(baseline_layout, 100.0, drive)
        doc = channel_map_json(channel_assignment(v, corner_ties))
        assert set(doc) == {"mode", "channels", "wiring"}


class TestSwitchSchedule:
    def _map(self, ties, values, drive, mode=None):
        return channel_assignment(tied_assignment(ties, values, drive), ties, mode)

    def test_identical_endpoints_constant_plan(self, corner_ties, drive):
        n = len(corner_ties.classes)
        cmap = self._map(corner_ties, [100.0] * n, drive)
        plan = switch_schedule(cmap, cmap, duration=1.0, step_count=5)
        amps = {ch for _t, step in plan.steps for ch in step.values()}
        assert amps == {100.0}

    def test_midpoint_is_average(self, corner_ties, drive):
        n = len(corner_ties.classes)
        a = self._map(corner_ties, [100.0] * n, drive)
        b = self._map(corner_ties, [60.0] * n, drive)
        plan = switch_schedule(a, b, duration=2.0, step_count=3)
        assert plan.steps[1][1][1] == pytest.approx(80.0)
        assert plan.steps[0][1][1] == 100.0
        assert plan.steps[-1][1][1] == 60.0

    def test_monotone_within_hull(self, corner_ties, drive):
        n = len(corner_ties.classes)
        vals_a = [100.0 if i % 2 else 80.0 for i in range(n)]
        vals_b = [40.0 if i % 2 else 120.0 for i in range(n)]
        a = self._map(corner_ties, vals_a, drive)
        b = self._map(corner_ties, vals_b, drive)
        plan = switch_schedule(a, b, duration=1.0, step_count=7)
        for ch in plan.steps[0][1]:
            series = [step[ch] for _t, step in plan.steps]
            lo, hi = min(series[0], series[-1]), max(series[0], series[-1])
            assert all(lo - 1e-12 <= s <= hi + 1e-12 for s in series)
            diffs = np.diff(series)
            assert np.all(diffs <= 1e-12) or np.all(diffs >= -1e-12)

    def test_cross_mode_wiring_refinement(self, corner_ties, linear_ties, drive):
        nc, nl = len(corner_ties.classes), len(linear_ties.classes)
        a = self._map(corner_ties, [[100.0, 80.0, 60.0, 120.0][i % 4] for i in range(nc)], drive, "corner")
        b = self._map(linear_ties, [[90.0, 70.0, 110.0, 50.0][i % 4] for i in range(nl)], drive, "linear")
        plan = switch_schedule(a, b, duration=1.0, step_count=4)
        # endpoints expand to the original per-group assignments exactly
        first = plan_assignments(plan, drive)[0]
        last = plan_assignments(plan, drive)[-1]
        assert first.amplitudes == a.expand(drive).amplitudes
        assert last.amplitudes == b.expand(drive).amplitudes

    def test_group_mismatch_rejected(self, corner_ties, drive, baseline_layout):
        n = len(corner_ties.classes)
        a = self._map(corner_ties, [100.0] * n, drive)
        wiring = dict(a.wiring)
        wiring.pop("e")
        from junctionforge.protocol import ChannelMap

        b = ChannelMap(mode="corner", channels=dict(a.channels), wiring=wiring)
        with pytest.raises(ValueError, match="wiring"):
            switch_schedule(a, b, 1.0, 3)

    def test_step_count_validation(self, corner_ties, drive):
        n = len(corner_ties.classes)
        a = self._map(corner_ties, [100.0] * n, drive)
        with pytest.raises(ValueError):
            switch_schedule(a, a, 1.0, 1)

    def test_plan_csv_header(self, corner_ties, drive):
        n = len(corner_ties.classes)
        a = self._map(corner_ties, [100.0] * n, drive)
        plan = switch_schedule(a, a, 1.0, 3)
        text = plan_csv(plan)
        assert text.splitlines()[0] == "step_index,t_offset,ch1_V"
