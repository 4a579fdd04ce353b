import csv
import io

import pytest
from fastapi.testclient import TestClient

from noma_v2x import harness
from noma_v2x.api import app
from noma_v2x.config import preset
from noma_v2x.scheduler import GGA

client = TestClient(app)


def small_config():
    cfg = preset("smoke").replace(seeds_per_point=1, schemes=(GGA,))
    return cfg.to_dict()


def test_health_and_presets():
    assert client.get("/health").json()["status"] == "ok"
    names = [p["name"] for p in client.get("/presets").json()]
    assert names[:3] == ["standard", "desk", "smoke"]


def test_run_matches_local_harness():
    resp = client.post("/run", json={"config": small_config(), "sweep": "r=100,150"})
    assert resp.status_code == 200
    data = resp.json()
    assert data["rows"] == 2 and data["failed"] == 0
    rows = list(csv.DictReader(io.StringIO(data["csv"])))
    assert [r["r"] for r in rows] == ["100.0", "150.0"]
    from noma_v2x.config import from_dict, override
    local = harness.rows_to_csv(harness.run(override(from_dict(small_config()), sweep="r=100,150")))
    assert data["csv"] == local


@pytest.mark.parametrize("payload", [
    {"preset": "nope"},
    {"config": {"scenario": {"zzz": 1}}},
    {"preset": "smoke", "sweep": "q=1"},
])
def test_run_config_errors_are_422(payload):
    resp = client.post("/run", json=payload)
    assert resp.status_code == 422
    assert resp.json()["detail"]["kind"] == "config"


def test_verify_endpoint_negative_control():
    data = client.post("/verify", json={"level": "fast", "planted_bug": True}).json()
    assert not data["passed"] and "is_valid" in data["failed"]


def test_check_schedule_endpoint(tmp_path):
    cfg = preset("smoke")
    art = harness.execute(cfg, GGA, 0, 0)
    body = {"preset": "smoke", "scheme": GGA, "schedule_csv": art.schedule.to_csv(),
            "scenario_csv": art.scenario.to_csv()}
    data = client.post("/check-schedule", json=body).json()
    assert data["ok"] and all(c["satisfied"] for c in data["constraints"].values())
    bad = client.post("/check-schedule", json={**body, "schedule_csv": "slot,user\n1,2\n"})
    assert bad.status_code == 422 and bad.json()["detail"]["kind"] == "parse"
    assert "line 1" in bad.json()["detail"]["message"]
