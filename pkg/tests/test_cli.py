import json

import httpx
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from noma_v2x import harness
from noma_v2x.api import app
from noma_v2x.cli import main
from noma_v2x.config import dump, preset
from noma_v2x.scheduler import GGA


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def smoke_yaml(tmp_path):
    cfg = preset("smoke").replace(seeds_per_point=1)
    path = tmp_path / "smoke.yaml"
    path.write_text(dump(cfg))
    return path


def test_preset_list_and_show(runner):
    res = runner.invoke(main, ["preset", "list"])
    assert res.exit_code == 0 and "standard" in res.output and "desk" in res.output
    res = runner.invoke(main, ["preset", "show", "smoke"])
    assert res.exit_code == 0 and "n_users: 20" in res.output
    assert runner.invoke(main, ["preset", "show", "zzz"]).exit_code == 3


def test_run_writes_csv_and_summary(runner, smoke_yaml, tmp_path):
    out = tmp_path / "res"
    res = runner.invoke(main, ["run", "--config", str(smoke_yaml), "--scheme", GGA, "--scheme", "OMA",
                               "--sweep", "v=15,60", "--seed", "4", "--out", str(out)])
    assert res.exit_code == 0, res.output
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2
    summary = json.loads((out / "results_summary.json").read_text())
    assert summary["master_seed"] == 4 and summary["sweep"]["var"] == "v"


def test_run_is_deterministic_through_the_cli(runner, smoke_yaml, tmp_path):
    for name in ("a.csv", "b.csv"):
        assert runner.invoke(main, ["run", "--config", str(smoke_yaml), "--out", str(tmp_path / name)]).exit_code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("args", [
    ["run", "--preset", "nope"],
    ["run", "--sweep", "bogus=1"],
    ["run", "--preset", "smoke", "--seeds-per-point", "0"],
    ["run", "--preset", "smoke", "--jobs", "0"],
])
def test_config_errors_exit_3(runner, args, tmp_path):
    res = runner.invoke(main, args + ["--out", str(tmp_path / "x")])
    assert res.exit_code == 3


def test_failed_runs_exit_1(runner, tmp_path):
    cfg = preset("smoke").replace(seeds_per_point=1, schemes=(GGA,))
    cfg = cfg.replace(scenario=cfg.scenario.replace(n_slots=1))
    path = tmp_path / "tight.yaml"
    path.write_text(dump(cfg))
    res = runner.invoke(main, ["run", "--config", str(path), "--out", str(tmp_path / "o")])
    assert res.exit_code == 1
    assert "failed" in (tmp_path / "o" / "results.csv").read_text()


def test_verify_exit_codes(runner):
    res = runner.invoke(main, ["verify", "--level", "fast"])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["verify", "--planted-bug"])
    assert res.exit_code == 2
    assert "FAIL is_valid" in res.output


def test_check_schedule_verb(runner, tmp_path):
    cfg = preset("smoke")
    art = harness.execute(cfg, GGA, 0, 0)
    sch, scen = harness.export_run(art, tmp_path, "g")
    ok = runner.invoke(main, ["check-schedule", str(sch), str(scen), "--preset", "smoke", "--scheme", GGA])
    assert ok.exit_code == 0 and ok.output.count("satisfied") == 5
    # put a receiver next to its in-range transmitter into the same slot
    i = next(iter(art.schedule.tx_slots.values()))[0]
    j = art.schedule.transmitters(i)[0]
    m = next(m for m in sorted(art.scenario.neighbors(j, i)) if not art.scenario.is_pedestrian[m])
    sch.write_text(sch.read_text().replace(f"{i},{m},rx,,", f"{i},{m},tx,1,"))
    bad = runner.invoke(main, ["check-schedule", str(sch), str(scen), "--preset", "smoke", "--scheme", GGA])
    assert bad.exit_code == 2 and "half_duplex: VIOLATED" in bad.output
    sch.write_text("slot,user,role,channels\n1,zz,tx,1\n")
    broken = runner.invoke(main, ["check-schedule", str(sch), str(scen), "--preset", "smoke"])
    assert broken.exit_code == 3 and "line 2" in broken.output


def test_url_mode_goes_through_the_service(runner, monkeypatch, smoke_yaml, tmp_path):
    service = TestClient(app)
    calls = []

    def fake_post(url, json=None, timeout=None):
        path = "/" + url.split("/", 3)[3]
        calls.append(path)
        return service.post(path, json=json)

    monkeypatch.setattr(httpx, "post", fake_post)
    res = runner.invoke(main, ["run", "--config", str(smoke_yaml), "--url", "http://svc:8000",
                               "--out", str(tmp_path / "remote.csv")])
    assert res.exit_code == 0, res.output
    local = harness.rows_to_csv(harness.run(preset("smoke").replace(seeds_per_point=1)))
    assert (tmp_path / "remote.csv").read_bytes() == local.encode()
    res = runner.invoke(main, ["verify", "--planted-bug", "--url", "http://svc:8000"])
    assert res.exit_code == 2
    sch, scen = tmp_path / "bad_schedule.csv", tmp_path / "scenario.csv"
    art = harness.execute(preset("smoke"), GGA, 0, 0)
    scen.write_text(art.scenario.to_csv())
    sch.write_text("slot,user,role,channels\n1,zz,tx,1\n")
    res = runner.invoke(main, ["check-schedule", str(sch), str(scen), "--preset", "smoke",
                               "--url", "http://svc:8000"])
    assert res.exit_code == 3
    assert calls == ["/run", "/verify", "/check-schedule"]


def test_serve_hands_the_app_to_uvicorn(runner, monkeypatch):
    import uvicorn

    seen = {}
    monkeypatch.setattr(uvicorn, "run", lambda app, host, port: seen.update(app=app, host=host, port=port))
    assert runner.invoke(main, ["serve", "--port", "8123"]).exit_code == 0
    assert seen == {"app": "noma_v2x.api:app", "host": "127.0.0.1", "port": 8123}
