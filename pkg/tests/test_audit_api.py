import json
import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from geoattrib.pipeline.audit import build_audit_state, compute_stats, create_app


@pytest.fixture()
def audit(small_city, tmp_path):
    state = build_audit_state(small_city)
    # isolate each test's annotation log
    state.log_path = str(tmp_path / "annotations.jsonl")
    state.annotations = []
    return state, TestClient(create_app(state))


def valid_annotation(task_id, auditor="aud1", **over):
    body = {"task_id": task_id, "auditor_id": auditor, "floors": 3,
            "function": "Residential", "age_bin": "2001-2010", "severity": 1}
    body.update(over)
    return body


class TestEndpoints:
    def test_task_list_and_detail(self, audit):
        state, client = audit
        tasks = client.get("/tasks").json()
        assert len(tasks) == len(state.tasks) > 0
        assert all(not t["completed"] for t in tasks)
        detail = client.get(f"/tasks/{tasks[0]['id']}").json()
        assert detail["side"] in ("Left", "Right")
        assert "predictions" not in detail  # hidden until submission
        assert detail["outline"]

    def test_image_streams(self, audit):
        _, client = audit
        r = client.get("/tasks/0/image")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_task_404_shape(self, audit):
        _, client = audit
        r = client.get("/tasks/999999")
        assert r.status_code == 404
        body = r.json()
        assert set(body) == {"code", "message"}
        assert body["code"] == 404

    def test_submit_reveals_predictions_and_completes(self, audit):
        state, client = audit
        r = client.post("/annotations", json=valid_annotation(0))
        assert r.status_code == 200
        body = r.json()
        assert body["ok"] is True
        assert "height" in body["predictions"]
        assert client.get("/tasks").json()[0]["completed"] is True

    @pytest.mark.parametrize("patch,expect", [
        ({"severity": 7}, "severity"),
        ({"severity": -1}, "severity"),
        ({"floors": 0}, "floors"),
        ({"function": "Castle"}, "function"),
        ({"age_bin": "1066"}, "age_bin"),
        ({"auditor_id": "  "}, "auditor_id"),
    ])
    def test_validation_errors(self, audit, patch, expect):
        _, client = audit
        r = client.post("/annotations", json=valid_annotation(0, **patch))
        assert r.status_code == 422
        assert expect in r.json()["message"]

    def test_submit_unknown_task_404(self, audit):
        _, client = audit
        r = client.post("/annotations", json=valid_annotation(10 ** 6))
        assert r.status_code == 404

    def test_log_append_only(self, audit):
        state, client = audit
        client.post("/annotations", json=valid_annotation(0))
        first = open(state.log_path).read()
        client.post("/annotations", json=valid_annotation(1))
        second = open(state.log_path).read()
        assert second.startswith(first)
        assert len(second.splitlines()) == 2

    def test_predictions_artifact_never_mutated(self, audit, small_city):
        _, client = audit
        path = os.path.join(small_city.workdir, "predict", "buildings_attributed.geojson")
        before = open(path, "rb").read()
        for tid in range(3):
            client.post("/annotations", json=valid_annotation(tid))
        assert open(path, "rb").read() == before


class TestStats:
    def test_low_n_flag(self, audit):
        _, client = audit
        client.post("/annotations", json=valid_annotation(0))
        stats = client.get("/stats").json()
        assert stats["n_annotations"] == 1
        assert stats["low_n"] is True

    def test_identity_annotations_agree_perfectly(self, audit, small_city):
        state, client = audit
        for t in state.tasks[:12]:
            pred = state.predictions[t.building_id]
            from geoattrib.indicative import age_bin

            ann = {
                "task_id": t.task_id, "auditor_id": "oracle",
                "floors": max(1, round(pred["height"] / small_city.floor_height)),
                "function": pred["func"],
                "age_bin": age_bin(pred["age"]),
                "severity": min(6, max(0, round(pred["q_total"] or 0))),
            }
            assert client.post("/annotations", json=ann).status_code == 200
        stats = client.get("/stats").json()
        assert stats["function_accuracy"] == 1.0
        assert stats["age_agreement"] == 1.0
        assert stats["height_r2"] is None or stats["height_r2"] > 0.9

    def test_stats_match_offline_recomputation(self, audit):
        state, client = audit
        rng = np.random.default_rng(4)
        bins = ["<=1985", "1986-1990", "1991-2000", "2001-2010", "2011-2018", "AF2018"]
        fns = ["Residential", "Commercial", "PublicService", "Industry", "Office"]
        for t in state.tasks[:20]:
            ann = valid_annotation(
                t.task_id, auditor=f"aud{int(rng.integers(0, 3))}",
                floors=int(rng.integers(1, 20)),
                function=fns[int(rng.integers(0, 5))],
                age_bin=bins[int(rng.integers(0, 6))],
                severity=int(rng.integers(0, 7)))
            client.post("/annotations", json=ann)
        endpoint = client.get("/stats").json()
        offline = compute_stats(state)
        assert endpoint == offline

    def test_latest_per_auditor_wins(self, audit):
        state, client = audit
        client.post("/annotations", json=valid_annotation(0, function="Commercial"))
        client.post("/annotations", json=valid_annotation(0, function="Residential"))
        latest = state.latest_annotations()
        assert len(latest) == 1
        assert latest[0]["function"] == "Residential"

    def test_restart_recovers_log(self, audit, small_city):
        state, client = audit
        client.post("/annotations", json=valid_annotation(0))
        client.post("/annotations", json=valid_annotation(1))
        # simulate a fresh server reading the same log
        state2 = build_audit_state(small_city)
        state2.log_path = state.log_path
        state2.annotations = []
        if os.path.exists(state.log_path):
            with open(state.log_path) as f:
                for line in f:
                    if line.strip():
                        state2.annotations.append(json.loads(line))
        assert compute_stats(state2)["n_annotations"] == 2
