"""Command-line entry points: layout | evaluate | optimize | isosurface | serve.

Every command reads one JSON config (--config), writes its artifacts under
--out, and echoes a report JSON carrying the config hash so results stay
reproducible. Exit codes: 0 success, 1 failure/diagnostics.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    assignment_from_config,
    load_config,
    map_axes,
    optimization_spec_from_config,
    trace_settings,
)
from .field import build_basis
from .layout import GeometryError, to_json, validate
from .optimize import (
    convergence_csv,
    hybrid_optimize,
    optimize_geometry,
    optimize_voltages,
    result_report,
)
from .pseudo import (
    TracingError,
    isosurface,
    map_csv,
    mesh_stl,
    metrics,
    sample_map,
    trace_csv,
    trace_saddle_path,
)


def _load(path: str) -> RunConfig:
    with open(path) as fh:
        return load_config(json.load(fh))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(cfg: RunConfig, out: Path, name: str, payload: dict) -> dict:
    doc = {
        "config_hash": cfg.hash(),
        "layout_hash": cfg.layout.layout_hash(),
        "version": __version__,
        **payload,
    }
    (out / name).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


def cmd_layout(args) -> int:
    try:
        cfg = _load(args.config)
    except (ConfigError, GeometryError) as exc:
        print(f"layout error: {exc}", file=sys.stderr)
        return 1
    out = _out_dir(args)
    diagnostics = validate(cfg.layout)
    (out / "layout.json").write_text(to_json(cfg.layout))
    _report(
        cfg,
        out,
        "layout_report.json",
        {
            "electrodes": len(cfg.layout.electrodes),
            "groups": cfg.layout.groups(),
            "variant": cfg.layout.variant,
            "diagnostics": [d.message for d in diagnostics],
        },
    )
    for d in diagnostics:
        print(f"diagnostic: {d.message}", file=sys.stderr)
    return 1 if diagnostics else 0


def cmd_evaluate(args) -> int:
    cfg = _load(args.config)
    out = _out_dir(args)
    basis = build_basis(cfg.layout)
    v = assignment_from_config(cfg)
    rng, step = trace_settings(cfg)
    code = 0
    payload: dict = {"mode": cfg.mode}
    try:
        trace = trace_saddle_path(basis, v, cfg.mode, rng, step, cfg.ion)
        (out / "trace.csv").write_text(trace_csv(trace))
        m = metrics(trace)
        payload.update(
            barrier_meV=m.barrier,
            heightVar_um=m.height_var,
            barrierPos_um=[float(c) for c in m.barrier_pos],
        )
    except TracingError as exc:
        payload.update(error=str(exc), last_good_s=exc.last_good_s)
        code = 1
    xs, zs = map_axes(cfg)
    pmap = sample_map(basis, v, "zox", 0.0, xs, zs, cfg.ion)
    (out / "map.csv").write_text(map_csv(pmap))
    _report(cfg, out, "report.json", payload)
    return code


def cmd_optimize(args) -> int:
    cfg = _load(args.config)
    out = _out_dir(args)
    kind, spec, extras = optimization_spec_from_config(cfg)
    if args.seed is not None:
        cfg.raw.setdefault("optimize", {})["seed"] = args.seed
        kind, spec, extras = optimization_spec_from_config(cfg)
    if kind == "voltages":
        basis = build_basis(cfg.layout)
        result = optimize_voltages(basis, spec, cfg.ion, cfg.drive)
    elif kind in ("finger", "wedge"):
        result = optimize_geometry(spec, cfg.ion, cfg.drive)
    else:
        result = hybrid_optimize(
            cfg.mode,
            cfg.layout.dims,
            cfg.ion,
            cfg.drive,
            seed=int(cfg.raw["optimize"].get("seed", cfg.seed)),
            voltage_spec_overrides={
                "restarts": extras["restarts"],
                "max_evals": extras["max_evals"],
                "channels": extras["channels"],
            },
        )
    (out / "convergence.csv").write_text(convergence_csv(result))
    (out / "best_assignment.json").write_text(
        json.dumps(
            {
                "amplitudes_v": result.best_amplitudes,
                "geometry": result.best_geometry,
                "seed": result.seed,
            },
            indent=1,
            sort_keys=True,
        )
        + "\n"
    )
    _report(cfg, out, "report.json", result_report(result, cfg.layout.variant))
    if result.no_improvement:
        print("note: search did not improve on the starting assignment", file=sys.stderr)
    return 0


def cmd_isosurface(args) -> int:
    cfg = _load(args.config)
    out = _out_dir(args)
    basis = build_basis(cfg.layout)
    v = assignment_from_config(cfg)
    iso = cfg.raw.get("isosurface", {})
    level = float(args.level if args.level is not None else iso.get("level_mev", 0.4))
    res = float(iso.get("resolution_um", 4.0))
    vol = iso.get(
        "volume_um", {"x": [-150.0, 500.0], "y": [-60.0, 60.0], "z": [20.0, 160.0]}
    )
    xs = np.arange(vol["x"][0], vol["x"][1] + 0.5 * res, res)
    ys = np.arange(vol["y"][0], vol["y"][1] + 0.5 * res, res)
    zs = np.arange(vol["z"][0], vol["z"][1] + 0.5 * res, res)
    mesh = isosurface(basis, v, xs, ys, zs, level, cfg.ion)
    (out / "isosurface.stl").write_text(mesh_stl(mesh))
    _report(
        cfg,
        out,
        "isosurface_report.json",
        {"level_meV": level, "vertices": int(mesh.vertices.shape[0]), "faces": int(mesh.faces.shape[0])},
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    cfg = _load(args.config)
    app = create_app(cfg)
    uvicorn.run(app, host="127.0.0.1", port=int(args.port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="junctionforge",
        description="X-junction pseudo-potential design toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extra in (
        ("layout", cmd_layout, ()),
        ("evaluate", cmd_evaluate, ()),
        ("optimize", cmd_optimize, ("seed",)),
        ("isosurface", cmd_isosurface, ("level",)),
        ("serve", cmd_serve, ("port",)),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default="out", help="output directory")
        if "seed" in extra:
            p.add_argument("--seed", type=int, default=None)
        if "level" in extra:
            p.add_argument("--level", type=float, default=None, help="iso level in meV")
        if "port" in extra:
            p.add_argument("--port", type=int, default=8080)
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
