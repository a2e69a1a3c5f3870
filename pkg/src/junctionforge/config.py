"""Config-driven run setup: one JSON document describes layout, ion, drive,
mode, voltages or optimization settings, grids and outputs. Field names carry
unit suffixes (w1_um, drive_mhz) so every number is unambiguous."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .field import DriveConfig, VoltageAssignment, build_basis
from .layout import (
    FingerParams,
    Layout,
    LayoutDims,
    WedgeParams,
    add_finger,
    add_wedges,
    build_x_junction,
    symmetry_ties,
)
from .optimize import GeometrySpec, OptimizationSpec
from .pseudo import IonSpecies


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict[str, Any] = {
    "layout": {
        "w1_um": 80.0,
        "l1_um": 45.0,
        "l2_um": 45.0,
        "l3_um": 45.0,
        "wgnd_um": 100.0,
        "g_um": 4.0,
        "arm_length_um": 2000.0,
        "variant": "baseline",
    },
    "ion": {"mass_amu": 171.0, "charge_e": 1},
    "drive_mhz": 30.0,
    "mode": "corner",
    "voltages": {"uniform_v": 100.0},
    "trace": {"range_um": [0.0, 500.0], "step_um": 1.0},
    "map": {"x_um": [0.0, 500.0, 2.0], "z_um": [20.0, 150.0, 1.0]},
    "seed": 7,
}


@dataclass
class RunConfig:
    raw: dict[str, Any]
    layout: Layout
    ion: IonSpecies
    drive: DriveConfig
    mode: str
    seed: int

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()[:16]


def _merged(defaults: dict, user: dict) -> dict:
    out = dict(defaults)
    for k, v in user.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merged(out[k], v)
        else:
            out[k] = v
    return out


def load_config(doc: dict[str, Any]) -> RunConfig:
    raw = _merged(DEFAULT_CONFIG, doc)
    lay_doc = raw["layout"]
    dims = LayoutDims(
        w1=lay_doc["w1_um"],
        l1=lay_doc["l1_um"],
        l2=lay_doc["l2_um"],
        l3=lay_doc["l3_um"],
        wgnd=lay_doc["wgnd_um"],
        g=lay_doc["g_um"],
        arm_length=lay_doc["arm_length_um"],
    )
    variant = lay_doc.get("variant", "baseline")
    layout = build_x_junction(dims)
    if variant in ("finger", "finger+wedge"):
        f = lay_doc.get("finger")
        if f is None:
            raise ConfigError(f"variant {variant!r} requires a layout.finger section")
        layout = add_finger(
            layout, FingerParams(alpha=f["alpha_deg"], b=f["b_um"], d1=f["d1_um"])
        )
    if variant == "finger+wedge":
        wdoc = lay_doc.get("wedge")
        if wdoc is None:
            raise ConfigError("variant finger+wedge requires a layout.wedge section")
        layout = add_wedges(
            layout,
            WedgeParams(
                beta=wdoc["beta_deg"], w2=wdoc["w2_um"], l2w=wdoc["l2w_um"], d2=wdoc["d2_um"]
            ),
        )
    elif variant not in ("baseline", "finger"):
        raise ConfigError(f"unknown layout variant {variant!r}")
    if lay_doc.get("wedge") is not None and variant != "finger+wedge":
        raise ConfigError("layout.wedge given but variant is not finger+wedge")
    if lay_doc.get("finger") is not None and variant == "baseline":
        raise ConfigError("layout.finger given but variant is baseline")

    ion = IonSpecies(mass=raw["ion"]["mass_amu"], charge=int(raw["ion"]["charge_e"]))
    drive = DriveConfig.from_mhz(raw["drive_mhz"])
    mode = raw["mode"]
    if mode not in ("corner", "linear"):
        raise ConfigError(f"mode must be corner or linear, got {mode!r}")
    if "optimize" in raw and "seed" not in raw:
        raise ConfigError("optimization runs require an explicit seed")
    return RunConfig(
        raw=raw, layout=layout, ion=ion, drive=drive, mode=mode, seed=int(raw["seed"])
    )


def assignment_from_config(cfg: RunConfig) -> VoltageAssignment:
    vdoc = cfg.raw.get("voltages")
    if vdoc is None:
        raise ConfigError("config has no explicit voltage assignment")
    if "uniform_v" in vdoc:
        return VoltageAssignment.uniform(cfg.layout, float(vdoc["uniform_v"]), cfg.drive)
    amps = {g: float(v) for g, v in vdoc.get("per_group_v", {}).items()}
    missing = [g for g in cfg.layout.groups() if g not in amps]
    if missing:
        raise ConfigError(f"voltages.per_group_v missing groups: {missing}")
    return VoltageAssignment(amps, cfg.drive)


def trace_settings(cfg: RunConfig) -> tuple[tuple[float, float], float]:
    t = cfg.raw["trace"]
    lo, hi = (float(x) for x in t["range_um"])
    return (lo, hi), float(t["step_um"])


def map_axes(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    m = cfg.raw["map"]
    x0, x1, dx = (float(x) for x in m["x_um"])
    z0, z1, dz = (float(x) for x in m["z_um"])
    return np.arange(x0, x1 + 0.5 * dx, dx), np.arange(z0, z1 + 0.5 * dz, dz)


def optimization_spec_from_config(cfg: RunConfig) -> tuple[str, OptimizationSpec | GeometrySpec, dict]:
    """Returns (kind, spec, extras). kind: voltages | finger | wedge | hybrid."""
    doc = cfg.raw.get("optimize")
    if doc is None:
        raise ConfigError("config has no optimize section")
    kind = doc.get("kind", "voltages")
    common = dict(
        lam=float(doc.get("lambda_mev_per_um", 0.0)),
        trace_range=tuple(float(x) for x in doc.get("trace_range_um", cfg.raw["trace"]["range_um"])),
        trace_step=float(doc.get("trace_step_um", cfg.raw["trace"]["step_um"])),
        search_range=tuple(float(x) for x in doc.get("search_range_um", (0.0, 350.0))),
        search_step=float(doc.get("search_step_um", 3.0)),
        seed=int(doc.get("seed", cfg.seed)),
    )
    if kind == "voltages":
        ties = symmetry_ties(cfg.layout, doc.get("ties", cfg.mode))
        spec = OptimizationSpec(
            mode=cfg.mode,
            ties=ties,
            bounds=tuple(float(x) for x in doc.get("bounds_v", (0.0, 200.0))),
            base_amplitude=float(doc.get("base_v", 100.0)),
            restarts=int(doc.get("restarts", 8)),
            max_evals=int(doc.get("max_evals", 700)),
            channels=doc.get("channels", 4),
            free_bulk=bool(doc.get("free_bulk", False)),
            **common,
        )
        return "voltages", spec, {}
    if kind in ("finger", "wedge"):
        fdoc = cfg.raw["layout"].get("finger")
        spec = GeometrySpec(
            target=kind,
            dims=cfg.layout.dims,
            mode=cfg.mode,
            finger_b=float(doc.get("finger_b_um", 60.0)),
            wedge_beta=float(doc.get("wedge_beta_deg", 53.0)),
            finger_params=None
            if fdoc is None
            else FingerParams(alpha=fdoc["alpha_deg"], b=fdoc["b_um"], d1=fdoc["d1_um"]),
            base_amplitude=float(doc.get("base_v", 100.0)),
            wedge_outer_volts=float(doc.get("wedge_outer_v", 85.0)),
            restarts=int(doc.get("restarts", 3)),
            max_evals=int(doc.get("max_evals", 120)),
            **common,
        )
        return kind, spec, {}
    if kind == "hybrid":
        extras = {
            "restarts": int(doc.get("restarts", 8)),
            "max_evals": int(doc.get("max_evals", 700)),
            "channels": doc.get("channels", 4),
            "geometry_restarts": int(doc.get("geometry_restarts", 3)),
            "geometry_max_evals": int(doc.get("geometry_max_evals", 120)),
        }
        return "hybrid", None, extras
    raise ConfigError(f"unknown optimize.kind {kind!r}")


def build_run(cfg: RunConfig):
    """(layout, basis) for a validated config."""
    return cfg.layout, build_basis(cfg.layout)
