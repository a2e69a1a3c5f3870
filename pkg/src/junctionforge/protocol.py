"""RF channel loading schemes and quasi-static mode switching.

Each shuttling mode is driven by at most four independent RF channels; tie
classes whose optimized amplitudes agree within 0.01 V share a channel.
Switching between modes interpolates amplitudes linearly per channel over a
configurable duration (quasi-static: slow compared to the drive period).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import VoltageAssignment
from .layout import TieMap

MAX_CHANNELS = 4
MERGE_TOL_V = 0.01


class ChannelCapacityError(ValueError):
    """More distinct amplitudes than available RF channels."""

    def __init__(self, message: str, offending: list[tuple[str, float]]):
        super().__init__(message)
        self.offending = offending


@dataclass(frozen=True)
class ChannelMap:
    mode: str
    channels: dict[int, float]  # channel index (1..4) -> amplitude (V)
    wiring: dict[str, int]  # group label -> channel index

    def expand(self, drive) -> VoltageAssignment:
        """Reconstruct the per-group assignment this map encodes."""
        return VoltageAssignment(
            {g: self.channels[ch] for g, ch in self.wiring.items()}, drive
        )


@dataclass(frozen=True)
class SwitchPlan:
    steps: tuple[tuple[float, dict[int, float]], ...]  # (time offset, per-channel V)
    duration: float
    step_count: int
    wiring: dict[str, int]


def channel_assignment(v: VoltageAssignment, ties: TieMap, mode: str | None = None) -> ChannelMap:
    """Merge tie classes with equal amplitudes (within 0.01 V) into channels.

    Raises ChannelCapacityError when more than four channels would be needed.
    """
    mode = mode or ties.mode
    class_amp: list[tuple[tuple[str, ...], float]] = []
    for cls in ties.classes:
        vals = [v.amplitudes[g] for g in cls if g in v.amplitudes]
        if not vals:
            continue
        if max(vals) - min(vals) > MERGE_TOL_V:
            raise ValueError(
                f"assignment violates tie class {cls}: amplitudes {vals} differ"
            )
        class_amp.append((cls, float(vals[0])))
    # groups not covered by the tie map still need wiring
    tied_groups = {g for cls, _ in class_amp for g in cls}
    for g, amp in v.amplitudes.items():
        if g not in tied_groups:
            class_amp.append(((g,), float(amp)))

    class_amp.sort(key=lambda ca: ca[1])
    channels: dict[int, float] = {}
    wiring: dict[str, int] = {}
    current = None
    idx = 0
    for cls, amp in class_amp:
        if current is None or amp - current > MERGE_TOL_V:
            idx += 1
            current = amp
            if idx <= MAX_CHANNELS:
                channels[idx] = amp
        if idx > MAX_CHANNELS:
            continue
        for g in cls:
            wiring[g] = idx
    if idx > MAX_CHANNELS:
        offending = sorted(set((g, a) for cls, a in class_amp for g in cls))
        raise ChannelCapacityError(
            f"{idx} distinct amplitude levels exceed the {MAX_CHANNELS}-channel budget",
            offending=offending,
        )
    return ChannelMap(mode=mode, channels=channels, wiring=wiring)


def switch_schedule(
    source: ChannelMap,
    target: ChannelMap,
    duration: float,
    step_count: int,
) -> SwitchPlan:
    """Linear per-channel amplitude ramp from source to target.

    Maps with identical wiring interpolate channel-by-channel; maps wired
    differently (the usual corner vs linear case) are refined to the common
    per-group partition first. Endpoints are exact and every channel ramps
    monotonically (linear interpolation stays inside the endpoint hull).
    """
    if step_count < 2:
        raise ValueError(f"step_count must be >= 2, got {step_count}")
    if set(source.wiring) != set(target.wiring):
        raise ValueError(
            "wiring mismatch: source and target maps drive different groups"
        )

    if source.wiring == target.wiring:
        wiring = dict(source.wiring)
        ch_from = dict(source.channels)
        ch_to = dict(target.channels)
    else:
        # refine to the common partition: one virtual channel per
        # (source channel, target channel) pair actually used
        pairs: dict[tuple[int, int], int] = {}
        wiring = {}
        ch_from = {}
        ch_to = {}
        for g in sorted(source.wiring):
            key = (source.wiring[g], target.wiring[g])
            if key not in pairs:
                pairs[key] = len(pairs) + 1
                ch_from[pairs[key]] = source.channels[key[0]]
                ch_to[pairs[key]] = target.channels[key[1]]
            wiring[g] = pairs[key]

    times = np.linspace(0.0, float(duration), step_count)
    fracs = np.linspace(0.0, 1.0, step_count)
    steps = []
    for t, a in zip(times, fracs):
        amps = {
            ch: (1.0 - a) * ch_from[ch] + a * ch_to[ch] for ch in sorted(ch_from)
        }
        # exact endpoints
        if a == 0.0:
            amps = {ch: ch_from[ch] for ch in sorted(ch_from)}
        elif a == 1.0:
            amps = {ch: ch_to[ch] for ch in sorted(ch_from)}
        steps.append((float(t), amps))
    return SwitchPlan(
        steps=tuple(steps), duration=float(duration), step_count=step_count, wiring=wiring
    )


def plan_assignments(plan: SwitchPlan, drive) -> list[VoltageAssignment]:
    """Expand every plan step into a full per-group assignment."""
    out = []
    for _t, amps in plan.steps:
        out.append(
            VoltageAssignment({g: amps[ch] for g, ch in plan.wiring.items()}, drive)
        )
    return out


def plan_csv(plan: SwitchPlan) -> str:
    n_ch = max(plan.steps[0][1]) if plan.steps else 0
    header = "step_index,t_offset," + ",".join(f"ch{c}_V" for c in range(1, n_ch + 1))
    lines = [header]
    for i, (t, amps) in enumerate(plan.steps):
        row = [str(i), repr(float(t))] + [repr(float(amps[c])) for c in range(1, n_ch + 1)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def channel_map_json(cmap: ChannelMap) -> dict:
    return {
        "mode": cmap.mode,
        "channels": {str(k): v for k, v in cmap.channels.items()},
        "wiring": dict(sorted(cmap.wiring.items())),
    }
