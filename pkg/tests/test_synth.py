import json

import numpy as np
import pytest

from sgvad import synth
from sgvad.ingest import parse_annotations, parse_track_stream
from sgvad.scenegraph import video_to_graphs
from sgvad.synth import ActorSpec, AnomalySpec, ScenarioError, ScenarioSpec, generate, generate_bytes


def walker_spec(frames=100):
    return ScenarioSpec(seed=1, frame_count=frames,
                        actors=[ActorSpec(0, "straight-cross", (100.0, 500.0), 2.0, (1.0, 0.0))])


def escort_spec(anomalies=(), frames=120, seed=3):
    return ScenarioSpec(seed=seed, frame_count=frames, video_id="esc", actors=[
        ActorSpec(1, "paired-escort", (200.0, 600.0), 2.0, (1.0, 0.0), offset=(40.0, 0.0)),
        ActorSpec(0, "straight-cross", (1500.0, 300.0), 1.5, (-1.0, 0.0)),
    ], anomalies=list(anomalies))


def test_single_walker():
    records, gt = generate(walker_spec())
    assert gt is None
    assert len(records) == 100
    assert all(len(r.objects) == 1 for r in records)
    xs = np.array([r.objects[0].center[0] for r in records])
    np.testing.assert_allclose(np.diff(xs), 2.0, atol=1e-3)
    assert records[0].objects[0].pose is not None


def test_escort_pair_is_one_edge_every_frame():
    spec = ScenarioSpec(seed=0, frame_count=80, actors=[
        ActorSpec(1, "paired-escort", (300.0, 700.0), 2.5, (1.0, 0.0), offset=(40.0, 0.0))])
    records, _ = generate(spec)
    for g in video_to_graphs(records, h=250):
        assert len(g.nodes) == 2
        assert g.edges == [(0, 1)]
    # hand check: same row, 40 px apart, so pseudo-depth is 40 < 250
    a, b = records[10].objects
    assert abs(abs(a.center[0] - b.center[0]) - 40.0) < 1e-6 and a.center[1] == b.center[1]


def test_left_behind_annotations():
    spec = escort_spec([AnomalySpec("left-behind-object", [0], 50, 40)])
    records, gt = generate(spec)
    frames = sorted({a.frame_id for a in gt})
    assert frames == list(range(50, 90))
    assert {a.track_id for a in gt} == {0}
    assert {a.object_type for a in gt} == {"bicycle"}
    # the dropped object stays put and is gone after the event
    boxes = {a.bbox for a in gt}
    assert len(boxes) == 1
    assert all(o.class_id != 1 for r in records[90:] for o in r.objects)


def test_stationary_pair_annotates_both_members():
    _, gt = generate(escort_spec([AnomalySpec("stationary-pair", [0], 20, 10)]))
    assert len(gt) == 20
    assert {a.object_type for a in gt} == {"bicycle", "person"}


def test_lone_companion_hides_leader():
    records, gt = generate(escort_spec([AnomalySpec("lone-companion", [0], 30, 15)]))
    for r in records[30:45]:
        assert sorted(o.class_id for o in r.objects) == [0, 1]   # companion + the other walker
    assert [a.object_type for a in gt] == ["bicycle"] * 15


def test_nominal_actors_unaffected_by_injection():
    plain, _ = generate(escort_spec())
    injected, _ = generate(escort_spec([AnomalySpec("stationary-pair", [0], 40, 30)]))
    assert plain[:40] == injected[:40]
    other = lambda recs: [[o for o in r.objects if o.class_id == 0 and o.center[1] < 400] for r in recs]
    assert other(plain) == other(injected)


def test_byte_determinism_and_format():
    spec = escort_spec([AnomalySpec("left-behind-object", [0], 50, 20)])
    stream, ann = generate_bytes(spec)
    assert (stream, ann) == generate_bytes(ScenarioSpec.from_dict(json.loads(synth.dumps_scenario(spec))))
    assert parse_track_stream(stream) == generate(spec)[0]
    total, anns = parse_annotations(ann)
    assert total == 120 and len(anns) == 20


def test_scenario_validation():
    dup = ActorSpec(0, "straight-cross", (0.0, 0.0), 1.0)
    with pytest.raises(ScenarioError, match="duplicates"):
        generate(ScenarioSpec(0, 10, actors=[dup, ActorSpec(**dup.__dict__)]))
    with pytest.raises(ScenarioError):
        generate(ScenarioSpec(0, 10, actors=[ActorSpec(0, "teleport", (0.0, 0.0), 1.0)]))
    with pytest.raises(ScenarioError):
        generate(ScenarioSpec(0, 10, actors=[dup], anomalies=[AnomalySpec("stationary-pair", [0], 1, 2)]))
    with pytest.raises(ScenarioError):
        generate(ScenarioSpec(0, 10, actors=[dup], anomalies=[AnomalySpec("left-behind-object", [3], 1, 2)]))
    with pytest.raises(ScenarioError):
        ScenarioSpec.from_dict({"frame_count": 3})


def test_trajectory_deviation_turns():
    spec = ScenarioSpec(0, 40, actors=[ActorSpec(0, "straight-cross", (500.0, 500.0), 2.0, (1.0, 0.0))],
                        anomalies=[AnomalySpec("trajectory-deviation", [0], 10, 10)])
    records, gt = generate(spec)
    c = [r.objects[0].center for r in records]
    assert c[12][1] - c[11][1] == pytest.approx(2.0, abs=1e-3)
    assert c[12][0] == pytest.approx(c[11][0], abs=1e-3)
    assert len(gt) == 10


def test_street_scene_is_busy_but_ends_without_escorts():
    spec = synth.street_scene(7, frame_count=900)
    records, _ = generate(spec)
    assert len(records) == 900
    last = records[-1].objects
    assert all(o.class_id in (0, 2) for o in last)
    companions = {o.class_id for r in records for o in r.objects} - {0, 2}
    assert companions
    # every parked car has a neighbour within edge range
    g = video_to_graphs(records[:1], h=250)[0]
    cars = [i for i, n in enumerate(g.nodes) if n.class_id == 2]
    assert all(i not in g.isolated for i in cars)


def test_benchmark_suite_layout():
    train, tests = synth.benchmark_suite(n_train=2, frame_count=400, seed=3)
    assert [s.video_id for s in train] == ["train00", "train01"]
    assert [s.anomalies[0].type for s in tests] == ["left-behind-object", "stationary-pair", "lone-companion"]
    assert all(s.anomalies[0].onset == 100 and s.anomalies[0].duration == 100 for s in tests)
    again = synth.benchmark_suite(n_train=2, frame_count=400, seed=3)
    assert [synth.dumps_scenario(s) for s in train + tests] == [synth.dumps_scenario(s) for s in again[0] + again[1]]
