import json
import subprocess
import sys

import pytest

from sgvad import synth
from sgvad.cli import main
from sgvad.config import ConfigError, RunConfig, load_config
from sgvad.exemplars import load_model
from sgvad.ingest import dumps_track_stream
from sgvad.scoring import read_scores
from sgvad.synth import ActorSpec, AnomalySpec, ScenarioSpec


def scenario(video_id, seed=0, anomalies=(), frames=160):
    return ScenarioSpec(seed, frames, video_id=video_id, actors=[
        ActorSpec(16, "paired-escort", (100.0, 600.0), 3.0, (1.0, 0.0), offset=(60.0, 0.0)),
        ActorSpec(0, "straight-cross", (300.0, 300.0), 3.0, (1.0, 0.0)),
        ActorSpec(2, "parked", (900.0, 150.0)),
        ActorSpec(2, "parked", (1050.0, 150.0)),
    ], anomalies=list(anomalies))


@pytest.fixture
def workspace(tmp_path):
    specs = {"nominal": scenario("nominal"),
             "event": scenario("event", seed=1, anomalies=[AnomalySpec("lone-companion", [0], 60, 40)])}
    for name, spec in specs.items():
        (tmp_path / f"{name}.json").write_text(synth.dumps_scenario(spec))
    assert main(["synth", str(tmp_path / "nominal.json"), str(tmp_path / "event.json"),
                 "--out", str(tmp_path / "data")]) == 0
    return tmp_path


def test_full_pipeline(workspace, capsys):
    d = workspace / "data"
    assert sorted(p.name for p in d.iterdir()) == ["annotations", "classes.txt", "event.jsonl", "nominal.jsonl"]
    assert [p.name for p in (d / "annotations").iterdir()] == ["event.json"]
    model = workspace / "model.json"
    assert main(["build-model", str(d / "nominal.jsonl"), "-o", str(model),
                 "--class-map", str(d / "classes.txt")]) == 0
    out = capsys.readouterr().out
    assert "isolated exemplars:" in out and "pair exemplars:" in out and "trajectory: mean=" in out
    assert load_model(model).class_map[16] == "dog"

    scores = workspace / "scores.jsonl"
    assert main(["score", str(model), str(d / "event.jsonl"), "-o", str(scores)]) == 0
    regions = read_scores(scores)
    assert {r.video_id for r in regions} == {"event"}
    assert {r.frame_id for r in regions} == set(range(160))

    results = workspace / "results.json"
    assert main(["eval", str(scores), str(d / "annotations"), "-o", str(results)]) == 0
    doc = json.loads(results.read_text())
    assert [r["criterion"] for r in doc["results"]] == ["frame", "rbdc", "tbdc"]
    assert doc["results"][0]["auc"] > 0.9

    fig = workspace / "fig.png"
    assert main(["plot", str(results), "-o", str(fig)]) == 0
    assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_build_model_is_byte_deterministic(workspace):
    d = workspace / "data"
    for name in ("a.json", "b.json"):
        assert main(["build-model", str(d / "nominal.jsonl"), "-o", str(workspace / name)]) == 0
    assert (workspace / "a.json").read_bytes() == (workspace / "b.json").read_bytes()


def test_zero_streams_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["build-model", "-o", "m.json"])
    assert info.value.code == 2


def test_unreadable_stream_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert main(["build-model", str(missing), "-o", str(tmp_path / "m.json")]) == 1
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n")
    assert main(["build-model", str(bad), "-o", str(tmp_path / "m.json")]) == 1
    assert "bad.jsonl: line 1" in capsys.readouterr().err


def test_score_rejects_mismatched_settings(workspace, capsys):
    d = workspace / "data"
    model = workspace / "model.json"
    main(["build-model", str(d / "nominal.jsonl"), "-o", str(model)])
    out = workspace / "s.jsonl"
    assert main(["score", str(model), str(d / "event.jsonl"), "-o", str(out), "--trajectory-length", "20"]) == 1
    assert "trajectory length 20" in capsys.readouterr().err
    cfg = workspace / "cfg.yaml"
    cfg.write_text("edge-threshold-px: 300\n")
    assert main(["score", str(model), str(d / "event.jsonl"), "-o", str(out), "--config", str(cfg)]) == 1
    assert "edge threshold" in capsys.readouterr().err
    assert not out.exists()
    # matching explicit values are fine
    assert main(["score", str(model), str(d / "event.jsonl"), "-o", str(out), "--trajectory-length", "30"]) == 0


def test_empty_stream_gives_empty_scores(workspace):
    d = workspace / "data"
    model = workspace / "model.json"
    main(["build-model", str(d / "nominal.jsonl"), "-o", str(model)])
    empty = workspace / "empty.jsonl"
    empty.write_text("")
    out = workspace / "s.jsonl"
    assert main(["score", str(model), str(empty), "-o", str(out)]) == 0
    assert out.read_text() == ""


def test_eval_lists_missing_annotations(workspace, capsys):
    d = workspace / "data"
    model = workspace / "model.json"
    main(["build-model", str(d / "nominal.jsonl"), "-o", str(model)])
    scores = workspace / "s.jsonl"
    main(["score", str(model), str(d / "nominal.jsonl"), str(d / "event.jsonl"), "-o", str(scores)])
    assert main(["eval", str(scores), str(d / "annotations")]) == 1
    assert "nominal" in capsys.readouterr().err


def test_eval_perfect_detections(tmp_path, capsys):
    ann = tmp_path / "ann"
    ann.mkdir()
    (ann / "v.json").write_text(json.dumps({"total_frame": 3, "annotations": [
        {"track_id": 0, "frame_id": 1, "bbox": [0, 0, 10, 10], "object_type": "dog"}]}))
    rows = [{"video_id": "v", "frame_id": f, "bbox": [0, 0, 10, 10], "score": s, "provenance": "isolated"}
            for f, s in ((0, 0.1), (1, 0.9), (2, 0.2))]
    scores = tmp_path / "s.jsonl"
    scores.write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert main(["eval", str(scores), str(ann)]) == 0
    doc = json.loads(capsys.readouterr().out.split("\n", 3)[3])
    assert [r["auc"] for r in doc["results"]] == [1.0, 1.0, 1.0]


def test_synth_benchmark_and_rejects_duplicates(tmp_path):
    out = tmp_path / "bench"
    assert main(["synth", "--benchmark", "--n-train", "1", "--frame-count", "120", "--out", str(out)]) == 0
    assert sorted(p.name for p in (out / "test").iterdir()) == ["test00.jsonl", "test01.jsonl", "test02.jsonl"]
    assert (out / "train" / "train00.jsonl").read_text() == dumps_track_stream(
        synth.generate(synth.benchmark_suite(1, 120, 0)[0][0])[0])
    spec = tmp_path / "s.json"
    spec.write_text(synth.dumps_scenario(scenario("same")))
    assert main(["synth", str(spec), str(spec), "--out", str(tmp_path / "dup")]) == 1
    assert main(["synth", "--out", str(tmp_path / "none")]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sgvad", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("build-model", "score", "eval", "synth", "plot"):
        assert cmd in res.stdout


# ------------------------------------------------------------------ config


def test_config_defaults_and_scaling():
    cfg = RunConfig()
    assert (cfg.exemplar_threshold, cfg.trajectory_length, cfg.anomaly_threshold) == (0.65, 30, 0.5)
    assert cfg.edge_threshold == 250.0
    assert RunConfig(frame_height=720).edge_threshold == pytest.approx(250 * 720 / 1080)
    assert RunConfig(edge_threshold_px=99.0, frame_height=720).edge_threshold == 99.0


@pytest.mark.parametrize("bad", [{"exemplar_threshold": 0}, {"anomaly_threshold": -1},
                                 {"trajectory_length": 1}, {"edge_threshold_px": 0},
                                 {"norm_seed": 1.5}])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("exemplar-threshold: 0.5\ntrajectory_length: 12\n")
    cfg = load_config(path)
    assert (cfg.exemplar_threshold, cfg.trajectory_length) == (0.5, 12)
    assert cfg.replace(trajectory_length=20, exemplar_threshold=None).trajectory_length == 20
    assert load_config(None) == RunConfig()
    path.write_text("{\"anomaly-threshold\": 0.7}")
    assert load_config(path).anomaly_threshold == 0.7
    path.write_text("mystery: 1\n")
    with pytest.raises(ConfigError, match="mystery"):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_cli_flag_beats_config(workspace):
    d = workspace / "data"
    cfg = workspace / "c.yaml"
    cfg.write_text("trajectory-length: 12\nexemplar-threshold: 0.9\n")
    m1, m2 = workspace / "m1.json", workspace / "m2.json"
    assert main(["build-model", str(d / "nominal.jsonl"), "-o", str(m1), "--config", str(cfg)]) == 0
    assert main(["build-model", str(d / "nominal.jsonl"), "-o", str(m2), "--config", str(cfg),
                 "--trajectory-length", "8"]) == 0
    a, b = load_model(m1), load_model(m2)
    assert (a.T, a.th) == (12, 0.9)
    assert (b.T, b.th) == (8, 0.9)


def test_outputs_respect_umask(tmp_path):
    from sgvad.cli import _UMASK, write_atomic
    out = tmp_path / "sub" / "f.txt"
    write_atomic(out, "x")
    assert out.read_text() == "x"
    assert out.stat().st_mode & 0o777 == 0o666 & ~_UMASK
