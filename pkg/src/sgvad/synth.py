"""Deterministic synthetic track streams with optional injected anomalies.

A scenario places actors in a fixed street scene (sidewalks, a parking
lot) and expands them frame by frame into the track-stream format. Objects
are sized by class with a simple perspective scale that grows toward the
bottom of the frame; people carry a 17-point stick pose.

Anomaly types
-------------
left-behind-object
    The companion of a ``paired-escort`` actor stops at ``onset`` and stays
    put for ``duration`` frames while its leader walks on; then it is removed.
stationary-pair
    A ``paired-escort`` actor (leader and companion) halts for ``duration``.
lone-companion
    The leader of a ``paired-escort`` actor is absent for ``duration``
    frames, leaving the companion moving alone.
trajectory-deviation
    The actor's heading turns 90 degrees for ``duration`` frames.

Ground truth carries one track id per injected event covering every box
of its actors inside the event window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import (FrameRecord, GroundTruthAnnotation, RawObject, dumps_annotations,
                     dumps_track_stream)

PATH_TYPES = ("straight-cross", "paired-escort", "parked")
ANOMALY_TYPES = ("left-behind-object", "stationary-pair", "lone-companion", "trajectory-deviation")

CLASS_NAMES = {0: "person", 1: "bicycle", 2: "car", 16: "dog", 28: "suitcase"}
# width, height in pixels at the bottom row of the frame
CLASS_SIZES = {0: (40.0, 100.0), 1: (80.0, 60.0), 2: (180.0, 90.0), 16: (50.0, 35.0),
               28: (30.0, 40.0)}
DEFAULT_SIZE = (50.0, 50.0)
PERSON = 0

# COCO keypoint order, offsets relative to the box center in box heights
_POSE_TEMPLATE = np.array([
    [0.00, -0.42], [-0.02, -0.44], [0.02, -0.44], [-0.05, -0.43], [0.05, -0.43],
    [-0.12, -0.28], [0.12, -0.28], [-0.15, -0.12], [0.15, -0.12], [-0.16, 0.02],
    [0.16, 0.02], [-0.08, 0.02], [0.08, 0.02], [-0.09, 0.22], [0.09, 0.22],
    [-0.09, 0.45], [0.09, 0.45],
])
POSE_JITTER_PX = 0.05


class ScenarioError(ValueError):
    pass


@dataclass
class ActorSpec:
    """One scripted actor.

    ``class_id`` is the object's class; for ``paired-escort`` it is the
    companion's class and a ``leader_class`` person walks at ``offset``
    pixels from it (ahead of it along the heading by default).
    """

    class_id: int
    path: str
    start: tuple[float, float]
    speed: float = 0.0
    heading: tuple[float, float] = (1.0, 0.0)
    spawn_frame: int = 0
    offset: tuple[float, float] = (40.0, 0.0)
    leader_class: int = PERSON

    def key(self) -> tuple:
        return (self.class_id, self.path, tuple(self.start), self.speed, tuple(self.heading),
                self.spawn_frame, tuple(self.offset), self.leader_class)


@dataclass
class AnomalySpec:
    type: str
    actors: list[int]
    onset: int
    duration: int


@dataclass
class ScenarioSpec:
    seed: int
    frame_count: int
    frame_size: tuple[int, int] = (1920, 1080)
    actors: list[ActorSpec] = field(default_factory=list)
    anomalies: list[AnomalySpec] = field(default_factory=list)
    video_id: str = "synth"

    def validate(self) -> None:
        if self.frame_count < 1:
            raise ScenarioError("frame_count must be positive")
        keys = set()
        for i, a in enumerate(self.actors):
            if a.path not in PATH_TYPES:
                raise ScenarioError(f"actor {i}: unknown path type {a.path!r}")
            if a.path != "parked" and a.speed <= 0:
                raise ScenarioError(f"actor {i}: moving actors need a positive speed")
            if a.key() in keys:
                raise ScenarioError(f"actor {i} duplicates an earlier actor exactly")
            keys.add(a.key())
        for j, an in enumerate(self.anomalies):
            if an.type not in ANOMALY_TYPES:
                raise ScenarioError(f"anomaly {j}: unknown type {an.type!r}")
            if an.duration < 1 or an.onset < 0:
                raise ScenarioError(f"anomaly {j}: onset must be >= 0 and duration >= 1")
            for i in an.actors:
                if not 0 <= i < len(self.actors):
                    raise ScenarioError(f"anomaly {j}: actor index {i} out of range")
                if an.type != "trajectory-deviation" and self.actors[i].path != "paired-escort":
                    raise ScenarioError(f"anomaly {j}: {an.type} needs a paired-escort actor")
                if an.type == "trajectory-deviation" and self.actors[i].path == "parked":
                    raise ScenarioError(f"anomaly {j}: parked actors cannot deviate")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "frame_count": self.frame_count,
            "frame_size": list(self.frame_size), "video_id": self.video_id,
            "actors": [{**a.__dict__, "start": list(a.start), "heading": list(a.heading),
                        "offset": list(a.offset)} for a in self.actors],
            "anomalies": [dict(an.__dict__) for an in self.anomalies],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            actors = [ActorSpec(**{**a, "start": tuple(a["start"]),
                                   "heading": tuple(a.get("heading", (1.0, 0.0))),
                                   "offset": tuple(a.get("offset", (40.0, 0.0)))})
                      for a in d.get("actors", [])]
            anomalies = [AnomalySpec(**an) for an in d.get("anomalies", [])]
            return cls(seed=int(d["seed"]), frame_count=int(d["frame_count"]),
                       frame_size=tuple(d.get("frame_size", (1920, 1080))),
                       actors=actors, anomalies=anomalies,
                       video_id=str(d.get("video_id", "synth")))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc


def perspective_scale(y: float, frame_height: float) -> float:
    return 0.5 + 0.5 * min(max(float(y) / frame_height, 0.0), 1.0)


def object_box(class_id: int, center, frame_height: float) -> tuple[float, float, float, float]:
    """Class-sized box around ``center``, shrinking with distance from the camera."""
    w, h = CLASS_SIZES.get(class_id, DEFAULT_SIZE)
    s = perspective_scale(center[1], frame_height)
    w, h = w * s, h * s
    cx, cy = float(center[0]), float(center[1])
    return (round(cx - w / 2, 3), round(cy - h / 2, 3), round(cx + w / 2, 3), round(cy + h / 2, 3))


def stick_pose(box: Sequence[float], jitter: np.ndarray) -> tuple[tuple[float, float], ...]:
    x1, y1, x2, y2 = box
    pts = _POSE_TEMPLATE * (y2 - y1) + ((x1 + x2) / 2, (y1 + y2) / 2) + jitter
    return tuple(map(tuple, np.round(pts, 3).tolist()))


class _Role:
    def __init__(self, actor: int, role: int, class_id: int, seed: int):
        self.actor = actor
        self.role = role            # 0 = main object / companion, 1 = escort leader
        self.class_id = class_id
        self.rng = np.random.default_rng([seed, actor, role])
        self.gone = False
        self.track_id: int | None = None
        self.last_emitted = -2
        self.segments = 0


def _window(an: AnomalySpec, t: int) -> bool:
    return an.onset <= t < an.onset + an.duration


def _velocity(a: ActorSpec, t: int, events: Sequence[AnomalySpec]) -> np.ndarray:
    if a.path == "parked":
        return np.zeros(2)
    hx, hy = a.heading
    norm = math.hypot(hx, hy)
    v = np.array([hx / norm * a.speed, hy / norm * a.speed])
    for an in events:
        if not _window(an, t):
            continue
        if an.type == "stationary-pair":
            v = v * 0.0
        elif an.type == "trajectory-deviation":
            v = np.array([-v[1], v[0]])
    return v


def generate(spec: ScenarioSpec) -> tuple[list[FrameRecord], list[GroundTruthAnnotation] | None]:
    """Expand a scenario into frame records and (for anomalous specs) annotations."""
    spec.validate()
    W, H = spec.frame_size
    roles: list[_Role] = []
    for i, a in enumerate(spec.actors):
        roles.append(_Role(i, 0, a.class_id, spec.seed))
        if a.path == "paired-escort":
            roles.append(_Role(i, 1, a.leader_class, spec.seed))
    n_roles = len(roles)
    events_of = {i: [an for an in spec.anomalies if i in an.actors] for i in range(len(spec.actors))}
    event_ids = {id(an): j for j, an in enumerate(spec.anomalies)}
    base = {i: np.asarray(a.start, dtype=float) for i, a in enumerate(spec.actors)}
    dropped: dict[int, np.ndarray] = {}   # left-behind companions

    records: list[FrameRecord] = []
    gt: list[GroundTruthAnnotation] = []
    for t in range(spec.frame_count):
        objects = []
        for r in roles:
            a = spec.actors[r.actor]
            # drawn every frame so nominal actors are unaffected by other actors' events
            jitter = r.rng.normal(0.0, POSE_JITTER_PX, size=(17, 2))
            if t < a.spawn_frame or r.gone:
                continue
            active = [an for an in events_of[r.actor] if _window(an, t)]
            if r.role == 1:
                center = base[r.actor] + np.asarray(a.offset, dtype=float)
            else:
                center = base[r.actor]
                for an in events_of[r.actor]:
                    if an.type != "left-behind-object" or t < an.onset:
                        continue
                    if t >= an.onset + an.duration:
                        r.gone = True
                    dropped.setdefault(r.actor, center.copy())
                    center = dropped[r.actor]
                if r.gone:
                    continue
            if not (0 <= center[0] < W and 0 <= center[1] < H):
                # objects that have been seen and then leave never come back
                r.gone = r.last_emitted >= 0
                continue
            if r.role == 1 and any(an.type == "lone-companion" for an in active):
                continue
            if r.last_emitted != t - 1:
                # each visible segment gets its own id, stable across event edits
                r.track_id = roles.index(r) + n_roles * r.segments
                r.segments += 1
            r.last_emitted = t
            box = object_box(r.class_id, center, H)
            pose = stick_pose(box, jitter) if r.class_id == PERSON else None
            objects.append(RawObject(r.track_id, r.class_id, box, pose))
            for an in active:
                if an.type in ("lone-companion", "left-behind-object") and r.role != 0:
                    continue
                gt.append(GroundTruthAnnotation(
                    track_id=event_ids[id(an)], frame_id=t, bbox=box,
                    object_type=CLASS_NAMES.get(r.class_id, str(r.class_id)),
                    video_id=spec.video_id))
        for i, a in enumerate(spec.actors):
            if t >= a.spawn_frame:
                base[i] = base[i] + _velocity(a, t, events_of[i])
        records.append(FrameRecord(spec.video_id, t, tuple(objects)))
    return records, (gt if spec.anomalies else None)


def generate_bytes(spec: ScenarioSpec) -> tuple[bytes, bytes | None]:
    """Stream and annotation documents exactly as written to disk."""
    records, gt = generate(spec)
    stream = dumps_track_stream(records).encode("utf-8")
    if gt is None:
        return stream, None
    return stream, dumps_annotations(spec.frame_count, gt).encode("utf-8")


def class_map() -> dict[int, str]:
    return dict(CLASS_NAMES)


# ------------------------------------------------------------- the street scene

LOT_ROWS_Y = (150.0, 250.0)
LOT_COLUMNS_X = tuple(120.0 + 150.0 * k for k in range(12))
LOT_OCCUPANCY = 0.7
SIDEWALK_FAR_Y = 480.0
SIDEWALK_NEAR_Y = 900.0
FLOW_HEADING = (1.0, 0.0)  # one-way flow, so everyone leaves the view on the same side
WALK_SPEED = 3.0
MIN_GAP_PX = 340.0
COMPANIONS = (1, 16, 28)   # bicycle, dog, suitcase
ESCORT_GAP_PX = 90.0       # leader walks this far ahead; ~one look-ahead window at walking speed


def _escort_offset(heading: tuple[float, float]) -> tuple[float, float]:
    return (ESCORT_GAP_PX * heading[0], 0.0)


def _entity(rng: np.random.Generator, kind: int, x: float, y: float, spawn: int) -> ActorSpec:
    """``kind`` is PERSON for a lone walker, otherwise the escort's companion class."""
    heading = FLOW_HEADING
    y = round(y + float(rng.uniform(-5, 5)), 1)
    if kind == PERSON:
        return ActorSpec(PERSON, "straight-cross", (round(x, 1), y), WALK_SPEED, heading, spawn)
    return ActorSpec(kind, "paired-escort", (round(x, 1), y), WALK_SPEED, heading, spawn,
                     offset=_escort_offset(heading))


def _deck(rng: np.random.Generator):
    # every companion type shows up once per deck, walkers fill the rest
    while True:
        cards = [PERSON] * 4 + list(COMPANIONS)
        rng.shuffle(cards)
        yield from cards


def _sidewalk(rng: np.random.Generator, y: float, frame_count: int, W: float,
              clear_end: bool, rotation: int = 0) -> list[ActorSpec]:
    """One-way pedestrian flow with at least MIN_GAP_PX between entities.

    Positions are tracked as ``u``, the distance from the entry edge. With
    ``clear_end`` an escort is only placed if it leaves the view before the
    last frame; otherwise a walker takes its slot. Entering slots that can
    still carry an escort cycle through COMPANIONS starting at ``rotation``,
    so every companion type crosses the full width across a few scenes.
    """
    heading = FLOW_HEADING
    deck = _deck(rng)
    slots: list[tuple[float, int]] = []
    u = float(rng.uniform(60, 300))
    rearmost = u
    while u < W - 60:
        slots.append((u, 0))
        u += float(rng.uniform(MIN_GAP_PX, 2 * MIN_GAP_PX))
    t = (MIN_GAP_PX - rearmost) / WALK_SPEED + float(rng.uniform(0, MIN_GAP_PX / WALK_SPEED))
    t = max(t, 1.0)
    while t < frame_count:
        slots.append((1.0, int(t)))
        t += float(rng.uniform(MIN_GAP_PX, 2 * MIN_GAP_PX)) / WALK_SPEED
    actors = []
    entering = 0
    for u, spawn in slots:
        kind = next(deck)
        exits_in_time = spawn + (W - u) / WALK_SPEED < frame_count - 1
        if spawn > 0 and exits_in_time:
            kind = COMPANIONS[(rotation + entering) % len(COMPANIONS)]
            entering += 1
        elif clear_end and kind != PERSON and not exits_in_time:
            kind = PERSON
        actors.append(_entity(rng, kind, u if heading[0] > 0 else W - u, y, spawn))
    return actors


def _parking_lot(rng: np.random.Generator) -> list[ActorSpec]:
    # a car with no neighbour in reach gets one in the other row
    taken = {(r, k) for r in range(len(LOT_ROWS_Y)) for k in range(len(LOT_COLUMNS_X))
             if rng.random() < LOT_OCCUPANCY}
    for r, k in sorted(taken):
        near = {(r, k - 1), (r, k + 1)} | {(1 - r, k + dk) for dk in (-1, 0, 1)}
        if not near & taken:
            taken.add((1 - r, k))
    return [ActorSpec(2, "parked", (LOT_COLUMNS_X[k], LOT_ROWS_Y[r])) for r, k in sorted(taken)]


def street_scene(seed: int, frame_count: int = 900, frame_size: tuple[int, int] = (1920, 1080),
                 video_id: str | None = None, clear_end: bool = True, rotation: int = 0) -> ScenarioSpec:
    """Nominal street: a parking lot plus two one-way sidewalks of walkers and escorts.

    With ``clear_end`` no escort is in view on the final frame. Look-ahead
    trajectories are padded where a stream ends, so an escort still walking
    on the last frame would otherwise enter the training data as a pair
    standing still. ``rotation`` picks the first companion type to enter.
    """
    rng = np.random.default_rng(seed)
    W = float(frame_size[0])
    actors = _parking_lot(rng)
    actors += _sidewalk(rng, SIDEWALK_FAR_Y, frame_count, W, clear_end, rotation)
    actors += _sidewalk(rng, SIDEWALK_NEAR_Y, frame_count, W, clear_end, rotation + 1)
    return ScenarioSpec(seed=seed, frame_count=frame_count, frame_size=frame_size, actors=actors,
                        video_id=video_id or f"street{seed:03d}")


def _positions(a: ActorSpec, anomalies: Sequence[AnomalySpec], frame_count: int) -> np.ndarray:
    """Base-point path of an actor (NaN before spawn or after removal)."""
    out = np.full((frame_count, 2), np.nan)
    p = np.asarray(a.start, dtype=float)
    for t in range(a.spawn_frame, frame_count):
        out[t] = p
        p = p + _velocity(a, t, anomalies)
    for an in anomalies:
        if an.type == "left-behind-object" and an.onset < frame_count:
            out[an.onset:an.onset + an.duration] = out[an.onset]
            out[an.onset + an.duration:] = np.nan
    return out


def _too_close(p: np.ndarray, q: np.ndarray, clearance: float, W: float) -> bool:
    both = ~np.isnan(p[:, 0]) & ~np.isnan(q[:, 0]) & (q[:, 0] > -clearance) & (q[:, 0] < W + clearance)
    return bool(np.any(np.abs(q[both, 0] - p[both, 0]) < clearance))


def inject(spec: ScenarioSpec, kind: str, companion: int, x: float, sidewalk_y: float,
           onset: int, duration: int, spawn_frame: int = 0, clearance: float = 300.0) -> ScenarioSpec:
    """Copy of ``spec`` with one escort actor carrying an anomaly of ``kind``.

    The escort appears at ``x`` on frame ``spawn_frame``. Sidewalk actors
    that would come within ``clearance`` pixels of it are dropped, so the
    only interaction is the injected one.
    """
    heading = FLOW_HEADING
    special = ActorSpec(companion, "paired-escort", (x, sidewalk_y), WALK_SPEED, heading, spawn_frame,
                        offset=_escort_offset(heading))
    event = AnomalySpec(kind, [len(spec.actors)], onset, duration)
    # the event path, plus the nominal path the leader keeps walking
    tracks = [_positions(special, [event], spec.frame_count), _positions(special, [], spec.frame_count)]
    W = spec.frame_size[0]
    keep = []
    for a in spec.actors:
        if a.path != "parked" and abs(a.start[1] - sidewalk_y) < 50:
            other = _positions(a, [], spec.frame_count)
            if any(_too_close(track, other, clearance, W) for track in tracks):
                continue
        keep.append(a)
    actors = keep + [special]
    event = AnomalySpec(kind, [len(actors) - 1], onset, duration)
    return ScenarioSpec(spec.seed, spec.frame_count, spec.frame_size, actors,
                        list(spec.anomalies) + [event], spec.video_id)


def benchmark_suite(n_train: int = 5, frame_count: int = 900, seed: int = 0):
    """Nominal training scenes plus three test scenes with one injected event each.

    Each event starts a quarter of the way in and lasts a quarter of the
    clip. Returns ``(train_specs, test_specs)``.
    """
    train = [street_scene(seed + i, frame_count, video_id=f"train{i:02d}", rotation=i)
             for i in range(n_train)]
    onset, duration = frame_count // 4, frame_count // 4
    # events play out in the half of the view away from where escorts leave it
    plan = [
        ("left-behind-object", 28, SIDEWALK_NEAR_Y, 1.0, max(0, onset - 150)),
        ("stationary-pair", 1, SIDEWALK_FAR_Y, 200.0, 0),
        ("lone-companion", 16, SIDEWALK_FAR_Y, 1.0, max(0, onset - 20)),
    ]
    tests = []
    for j, (kind, companion, y, x, spawn) in enumerate(plan):
        base = street_scene(seed + 1000 + j, frame_count, video_id=f"test{j:02d}")
        tests.append(inject(base, kind, companion, x, y, onset=onset, duration=duration,
                            spawn_frame=spawn))
    return train, tests


def dumps_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(spec.to_dict(), indent=1)
