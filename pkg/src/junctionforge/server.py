"""HTTP evaluation service backing the tuning console.

Endpoints (all responses carry the layout hash):
  GET  /api/layout          layout JSON
  GET  /api/groups?mode=    tie classes for a shuttling mode
  POST /api/evaluate        {amplitudes, mode, grid?} -> {metrics, trace, map}
  POST /api/optimize        {mode, ...} -> {job_id}
  GET  /api/jobs/{id}       job status, convergence-so-far, result

Evaluation is stateless and safe to run concurrently; the basis is built once
at startup and shared read-only. Optimization jobs run on worker threads and
own their copies of everything they mutate.
"""

from __future__ import annotations

import json
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pathlib import Path
from pydantic import BaseModel, Field

from .config import RunConfig
from .field import VoltageAssignment, build_basis
from .layout import symmetry_ties, to_json
from .optimize import OptimizationSpec, optimize_voltages
from .pseudo import TracingError, metrics, sample_map, trace_saddle_path


class EvaluateRequest(BaseModel):
    amplitudes: dict[str, float]
    mode: str = "corner"
    grid: dict | None = None
    trace_range_um: tuple[float, float] = (0.0, 500.0)
    trace_step_um: float = 2.0


class OptimizeRequest(BaseModel):
    mode: str = "corner"
    restarts: int = 2
    max_evals: int = 250
    seed: int = 7
    channels: int | None = 4
    bounds_v: tuple[float, float] = (0.0, 200.0)
    lambda_mev_per_um: float = Field(default=0.0, ge=0.0)


def create_app(cfg: RunConfig, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="junctionforge", docs_url=None, redoc_url=None)
    layout = cfg.layout
    basis = build_basis(layout)
    layout_hash = layout.layout_hash()
    ties = {m: symmetry_ties(layout, m) for m in ("corner", "linear", "uniform")}
    jobs: dict[str, dict] = {}
    jobs_lock = threading.Lock()

    def _respond(payload: dict) -> JSONResponse:
        return JSONResponse({"layout_hash": layout_hash, **payload})

    @app.get("/api/layout")
    def get_layout():
        return _respond({"layout": json.loads(to_json(layout))})

    @app.get("/api/groups")
    def get_groups(mode: str = "corner"):
        if mode not in ties:
            raise HTTPException(400, f"unknown mode {mode!r}")
        return _respond(
            {
                "mode": mode,
                "classes": [list(c) for c in ties[mode].classes],
                "groups": layout.groups(),
            }
        )

    @app.post("/api/evaluate")
    def evaluate(req: EvaluateRequest):
        if req.mode not in ("corner", "linear"):
            raise HTTPException(400, f"mode must be corner or linear, got {req.mode!r}")
        missing = [g for g in layout.groups() if g not in req.amplitudes]
        if missing:
            raise HTTPException(400, f"missing amplitudes for groups: {missing}")
        try:
            v = VoltageAssignment({g: float(req.amplitudes[g]) for g in layout.groups()}, cfg.drive)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        try:
            trace = trace_saddle_path(
                basis, v, req.mode, req.trace_range_um, req.trace_step_um, cfg.ion
            )
        except TracingError as exc:
            raise HTTPException(422, f"tracing failed: {exc}")
        m = metrics(trace)
        grid = req.grid or {"x_um": [0.0, 500.0, 4.0], "z_um": [20.0, 150.0, 2.0]}
        xs = np.arange(grid["x_um"][0], grid["x_um"][1] + 0.5 * grid["x_um"][2], grid["x_um"][2])
        zs = np.arange(grid["z_um"][0], grid["z_um"][1] + 0.5 * grid["z_um"][2], grid["z_um"][2])
        pmap = sample_map(basis, v, "zox", 0.0, xs, zs, cfg.ion)
        pos = trace.positions()
        return _respond(
            {
                "metrics": {
                    "barrier_meV": m.barrier,
                    "heightVar_um": m.height_var,
                    "barrierPos_um": [float(c) for c in m.barrier_pos],
                },
                "trace": {
                    "s_um": trace.s_values().tolist(),
                    "x_um": pos[:, 0].tolist(),
                    "y_um": pos[:, 1].tolist(),
                    "z_um": pos[:, 2].tolist(),
                    "psi_meV": trace.psis().tolist(),
                },
                "map": {
                    "x_um": pmap.ax1.tolist(),
                    "z_um": pmap.ax2.tolist(),
                    "psi_meV": [row.tolist() for row in pmap.psi],
                },
            }
        )

    def _run_job(job_id: str, req: OptimizeRequest) -> None:
        history: list[float] = []

        def on_eval(f: float) -> None:
            best = min(history[-1], f) if history else f
            history.append(best)
            if len(history) % 5 == 0 or len(history) < 5:
                with jobs_lock:
                    jobs[job_id]["convergence"] = list(history)

        try:
            spec = OptimizationSpec(
                mode=req.mode,
                ties=ties[req.mode],
                bounds=req.bounds_v,
                lam=req.lambda_mev_per_um,
                restarts=req.restarts,
                max_evals=req.max_evals,
                seed=req.seed,
                channels=req.channels,
                search_step=4.0,
                search_range=(0.0, 300.0),
            )
            result = optimize_voltages(basis, spec, cfg.ion, cfg.drive, progress=on_eval)
            with jobs_lock:
                jobs[job_id]["convergence"] = list(history)
                jobs[job_id].update(
                    status="done",
                    result={
                        "bestAmplitudes": result.best_amplitudes,
                        "barrier_meV": result.final_metrics.barrier,
                        "heightVar_um": result.final_metrics.height_var,
                        "evaluations": result.evaluations,
                        "seed": result.seed,
                    },
                )
        except Exception as exc:  # job failures are reported, not raised
            with jobs_lock:
                jobs[job_id].update(status="failed", error=str(exc))

    @app.post("/api/optimize")
    def submit_optimize(req: OptimizeRequest):
        if req.mode not in ("corner", "linear"):
            raise HTTPException(400, f"mode must be corner or linear, got {req.mode!r}")
        job_id = uuid.uuid4().hex
        with jobs_lock:
            jobs[job_id] = {"status": "running", "convergence": []}
        t = threading.Thread(target=_run_job, args=(job_id, req), daemon=True)
        t.start()
        return _respond({"job_id": job_id})

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                raise HTTPException(404, f"no such job {job_id!r}")
            return _respond(dict(job))

    console_dir = static_dir or str(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    if Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
