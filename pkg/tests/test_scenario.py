from __future__ import annotations

import csv
import json

import pytest

from fogmesh.app_model import load_application
from fogmesh.cli import EXIT_CONFIG, EXIT_OK, EXIT_REJECTED, main
from fogmesh.scenario import ScenarioError, load_scenario, parse_scenario, run_scenario

from .conftest import SCENARIOS

SMALL = """
name = "small"
seed = 2
applications = ["app2"]
requests = [{ id = "p", application = "app2", entry_clusters = ["fog1"] }]
traffic = [{ application = "app2", service = "S", entry = "fog1", requests = 50 }]

[engine]
algorithm = "v2"
"""


def test_parse_single_phase():
    sc = parse_scenario(SMALL, environ={})
    assert sc.name == "small" and sc.seed == 2
    (phase,) = sc.phases
    assert phase.name == "main" and phase.engine == {"algorithm": "v2"}
    assert phase.requests[0].cluster == "fog1"


def test_parse_error_names_the_line():
    with pytest.raises(ScenarioError, match="line 2"):
        parse_scenario('name = "x"\nseed = = 3\n', source="bad.toml", environ={})


def test_missing_key_is_a_scenario_error():
    with pytest.raises(ScenarioError, match="missing key 'application'"):
        parse_scenario('requests = [{ entry_clusters = ["fog1"] }]', environ={})


def test_request_count_expands_ids():
    sc = parse_scenario('requests = [{ id = "p", application = "app2", entry_clusters = ["fog1"], count = 3 }]',
                        environ={})
    assert [r.pr_id for r in sc.phases[0].requests] == ["p-1", "p-2", "p-3"]


def test_env_overrides_engine():
    sc = parse_scenario(SMALL, environ={"FOGMESH_ALGORITHM": "v1", "FOGMESH_BATCHING": "batch"})
    assert sc.phases[0].engine == {"algorithm": "v1", "batching": "batch"}


def test_phase_engine_overrides():
    text = """
[engine]
algorithm = "v2"
[[phases]]
name = "a"
[[phases]]
name = "b"
engine = { algorithm = "v1" }
"""
    sc = parse_scenario(text, environ={})
    assert [p.engine["algorithm"] for p in sc.phases] == ["v2", "v1"]
    with pytest.raises(ScenarioError, match="duplicate"):
        parse_scenario('[[phases]]\nname = "a"\n[[phases]]\nname = "a"\n', environ={})


def test_missing_topology_file(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('[topology]\nfile = "nowhere.json"\n')
    sc = load_scenario(p, environ={})
    with pytest.raises(ScenarioError, match="does not exist"):
        run_scenario(sc)


def test_run_small_scenario():
    result = run_scenario(parse_scenario(SMALL, environ={}))
    assert result.ok
    phase = result.phases["main"]
    assert phase.states == {"p": "deployed"}
    assert len(phase.metrics.responses("app2/S")) == 50


HUGE = """
name = "huge"
requests = [{ id = "p", application = "big", entry_clusters = ["fog1"] }]

[[generated]]
pattern = "chained"
length = 1
app_id = "big"
ref_cpu_range = [64.0, 64.0]
"""


def test_unexpected_rejection_is_not_ok():
    result = run_scenario(parse_scenario(HUGE, environ={}))
    assert result.phases["main"].states == {"p": "rejected"}
    assert not result.ok
    expected = HUGE.replace('entry_clusters = ["fog1"] }]', 'entry_clusters = ["fog1"] }]\nexpect_rejected = ["p"]')
    assert run_scenario(parse_scenario(expected, environ={})).ok


def test_seeded_scenario_runs():
    result = run_scenario(load_scenario(SCENARIOS / "seeded.toml", environ={}))
    assert result.ok
    assert result.phases["main"].states == {"pr-demo": "deployed"}


# CLI


def test_cli_run_writes_outputs(tmp_path, capsys):
    scen = tmp_path / "small.toml"
    scen.write_text(SMALL)
    out = tmp_path / "out"
    assert main(["run", str(scen), "--out-dir", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["small.placements.json", "small.samples.csv", "small.summary.json"]
    rows = list(csv.reader((out / "small.samples.csv").open()))
    assert rows[0][:3] == ["scenario", "seed", "service"]
    summary = json.loads((out / "small.summary.json").read_text())
    assert summary["phases"]["main"]["prStates"] == {"p": "deployed"}


def test_cli_run_config_and_mode(tmp_path):
    scen = tmp_path / "small.toml"
    scen.write_text(SMALL)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('[engine]\nbatching = "batch"\n')
    out = tmp_path / "out"
    assert main(["run", str(scen), "--config", str(cfg), "--mode", "centralised", "--out-dir", str(out)]) == EXIT_OK
    placements = json.loads((out / "small.placements.json").read_text())
    assert placements["main"]["states"] == {"p": "deployed"}


def test_cli_config_errors(tmp_path, capsys):
    scen = tmp_path / "small.toml"
    scen.write_text(SMALL)
    bad = tmp_path / "bad.toml"
    bad.write_text("[engine]\nalgorithm = \n")
    assert main(["run", str(scen), "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml"), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_cli_run_reports_rejections(tmp_path, capsys):
    scen = tmp_path / "huge.toml"
    scen.write_text(HUGE)
    assert main(["run", str(scen), "--out-dir", str(tmp_path / "o")]) == EXIT_REJECTED
    assert "p rejected" in capsys.readouterr().err


def test_cli_gen_single_file(tmp_path):
    out = tmp_path / "app.json"
    assert main(["gen", "--pattern", "aggregator", "--fan-out", "3", "--app-id", "agg", "--out", str(out)]) == 0
    app = load_application(out)
    assert app.app_id == "agg" and len(app.microservices) == 5


def test_cli_gen_seed_dir(tmp_path):
    assert main(["gen", "--pattern", "chained", "--length", "2", "--app-id", "c", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "applications" / "c.json").exists()
    templates = json.loads((tmp_path / "templates.json").read_text())
    assert "c/m1/pod.yaml" in templates
