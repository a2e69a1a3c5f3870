"""HTTP evaluation service: endpoints, error codes, jobs."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from junctionforge.config import load_config
from junctionforge.server import create_app


@pytest.fixture(scope="module")
def client():
    cfg = load_config({"mode": "corner", "seed": 7})
    app = create_app(cfg)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def uniform_amplitudes():
    cfg = load_config({"mode": "corner", "seed": 7})
    return {g: 100.0 for g in cfg.layout.groups()}


EVAL_BODY = {
    "mode": "linear",
    "trace_range_um": (0.0, 300.0),
    "trace_step_um": 2.0,
    "grid": {"x_um": [0.0, 250.0, 10.0], "z_um": [30.0, 150.0, 5.0]},
}


class TestLayoutEndpoints:
    def test_layout_carries_hash(self, client):
        r = client.get("/api/layout")
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["layout"]["electrodes"]) == 36
        assert doc["layout_hash"]

    def test_groups_per_mode(self, client):
        r = client.get("/api/groups", params={"mode": "linear"})
        assert r.status_code == 200
        classes = r.json()["classes"]
        assert sorted(g for cls in classes for g in cls) == sorted(r.json()["groups"])

    def test_unknown_mode_400(self, client):
        assert client.get("/api/groups", params={"mode": "zig"}).status_code == 400


class TestEvaluate:
    def test_uniform_matches_direct_evaluation(self, client, uniform_amplitudes):
        r = client.post("/api/evaluate", json={**EVAL_BODY, "amplitudes": uniform_amplitudes})
        assert r.status_code == 200
        doc = r.json()
        import junctionforge as jf

        cfg = load_config({"mode": "corner", "seed": 7})
        basis = jf.build_basis(cfg.layout)
        v = jf.VoltageAssignment(uniform_amplitudes, cfg.drive)
        tr = jf.trace_saddle_path(basis, v, "linear", (0.0, 300.0), 2.0, cfg.ion)
        m = jf.metrics(tr)
        assert doc["metrics"]["barrier_meV"] == pytest.approx(m.barrier, abs=1e-9)
        assert len(doc["map"]["psi_meV"]) == len(doc["map"]["x_um"])

    def test_missing_group_400(self, client, uniform_amplitudes):
        partial = dict(uniform_amplitudes)
        partial.pop("e")
        r = client.post("/api/evaluate", json={**EVAL_BODY, "amplitudes": partial})
        assert r.status_code == 400
        assert "e" in r.json()["detail"]

    def test_malformed_body_400(self, client):
        r = client.post("/api/evaluate", json={"amplitudes": "nope"})
        assert r.status_code in (400, 422)

    def test_tracing_failure_422(self, client, uniform_amplitudes):
        zeros = {g: 0.0 for g in uniform_amplitudes}
        r = client.post("/api/evaluate", json={**EVAL_BODY, "amplitudes": zeros})
        assert r.status_code == 422
        assert "tracing" in r.json()["detail"]

    def test_concurrent_evaluations_independent(self, client, uniform_amplitudes):
        body_a = {**EVAL_BODY, "amplitudes": uniform_amplitudes}
        body_b = {**EVAL_BODY, "amplitudes": {g: 0.8 * v for g, v in uniform_amplitudes.items()}}
        with ThreadPoolExecutor(2) as ex:
            fa = ex.submit(client.post, "/api/evaluate", json=body_a)
            fb = ex.submit(client.post, "/api/evaluate", json=body_b)
            ra, rb = fa.result(), fb.result()
        assert ra.status_code == 200 and rb.status_code == 200
        ba = ra.json()["metrics"]["barrier_meV"]
        bb = rb.json()["metrics"]["barrier_meV"]
        assert bb == pytest.approx(0.64 * ba, rel=1e-6)  # quadratic scaling


class TestOptimizeJobs:
    def test_job_lifecycle_and_sparkline(self, client):
        r = client.post(
            "/api/optimize",
            json={"mode": "corner", "restarts": 1, "max_evals": 15, "seed": 3},
        )
        assert r.status_code == 200
        job_id = r.json()["job_id"]
        deadline = time.time() + 300
        while time.time() < deadline:
            st = client.get(f"/api/jobs/{job_id}").json()
            if st["status"] != "running":
                break
            time.sleep(0.5)
        assert st["status"] == "done", st.get("error")
        conv = st["convergence"]
        assert conv and np.all(np.diff(conv) <= 0)
        assert st["result"]["barrier_meV"] > 0
        assert st["result"]["bestAmplitudes"]

    def test_unknown_job_404(self, client):
        assert client.get("/api/jobs/doesnotexist").status_code == 404

    def test_bad_mode_400(self, client):
        r = client.post("/api/optimize", json={"mode": "zig"})
        assert r.status_code == 400
