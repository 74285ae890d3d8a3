"""Frame-to-graph conversion: object nodes plus proximity edges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ingest import POSE_KEYPOINTS, FrameRecord, RawObject, TrackIndex

DEFAULT_TRAJECTORY_LENGTH = 30
DEFAULT_EDGE_THRESHOLD_PX = 250.0
REFERENCE_FRAME_HEIGHT = 1080
PERSON_CLASS_IDS = frozenset({0})


def default_edge_threshold(frame_height: float = REFERENCE_FRAME_HEIGHT) -> float:
    """Edge threshold in pixels, scaled linearly from 250 px at 1080 rows."""
    return DEFAULT_EDGE_THRESHOLD_PX * float(frame_height) / REFERENCE_FRAME_HEIGHT


@dataclass(eq=False)
class Node:
    """One detected object.

    Attributes
    ----------
    size : ndarray, shape (2,)
        Box width and height in pixels.
    class_id : int
    location : ndarray, shape (2,)
        Box center (x, y).
    trajectory : ndarray, shape (T, 2)
        Look-ahead track of box centers starting at the current frame.
    pose : ndarray, shape (17, 2) or None
    track_id, bbox :
        Provenance only; not used by any distance.
    """

    size: np.ndarray
    class_id: int
    location: np.ndarray
    trajectory: np.ndarray
    pose: np.ndarray | None = None
    track_id: int | None = None
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        self.size = np.asarray(self.size, dtype=float).reshape(2)
        self.location = np.asarray(self.location, dtype=float).reshape(2)
        self.trajectory = np.asarray(self.trajectory, dtype=float)
        self.class_id = int(self.class_id)
        if np.any(self.size <= 0):
            raise ValueError(f"box size must be positive, got {self.size.tolist()}")
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != 2 or len(self.trajectory) < 2:
            raise ValueError(f"trajectory must have shape (T>=2, 2), got {self.trajectory.shape}")
        if self.pose is not None:
            self.pose = np.asarray(self.pose, dtype=float)
            if self.pose.shape != (POSE_KEYPOINTS, 2):
                raise ValueError(f"pose must have shape (17, 2), got {self.pose.shape}")
        if self.bbox is not None:
            self.bbox = tuple(float(v) for v in self.bbox)

    def __eq__(self, other):
        if not isinstance(other, Node):
            return NotImplemented
        if (self.pose is None) != (other.pose is None):
            return False
        return (
            self.class_id == other.class_id
            and self.track_id == other.track_id
            and self.bbox == other.bbox
            and np.array_equal(self.size, other.size)
            and np.array_equal(self.location, other.location)
            and np.array_equal(self.trajectory, other.trajectory)
            and (self.pose is None or np.array_equal(self.pose, other.pose))
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def T(self) -> int:
        return len(self.trajectory)

    def region(self) -> tuple[float, float, float, float]:
        if self.bbox is not None:
            return self.bbox
        (cx, cy), (w, h) = self.location, self.size
        return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


@dataclass
class SceneGraph:
    nodes: list[Node]
    edges: list[tuple[int, int]] = field(default_factory=list)
    isolated: list[int] = field(default_factory=list)
    video_id: str = ""
    frame_id: int = 0

    def pairs(self) -> list[tuple[Node, Node]]:
        return [(self.nodes[i], self.nodes[j]) for i, j in self.edges]

    def isolated_nodes(self) -> list[Node]:
        return [self.nodes[i] for i in self.isolated]


def build_node(obj: RawObject, trajectory: np.ndarray, T: int = DEFAULT_TRAJECTORY_LENGTH) -> Node:
    trajectory = np.asarray(trajectory, dtype=float)
    if len(trajectory) != T:
        raise ValueError(f"trajectory has {len(trajectory)} points, expected {T}")
    x1, y1, x2, y2 = obj.bbox
    return Node(
        size=(x2 - x1, y2 - y1),
        class_id=obj.class_id,
        location=obj.center,
        trajectory=trajectory,
        pose=None if obj.pose is None else np.asarray(obj.pose, dtype=float),
        track_id=obj.track_id,
        bbox=obj.bbox,
    )


def pseudo_depth_distance(l1: Sequence[float], l2: Sequence[float]) -> float:
    """3D distance between two ground-plane points using z = |y1 - y2|."""
    dx = l1[0] - l2[0]
    dy = l1[1] - l2[1]
    return math.sqrt(dx * dx + 2.0 * dy * dy)


def _pairwise_pseudo_depth(locations: np.ndarray) -> np.ndarray:
    diff = locations[:, None, :] - locations[None, :, :]
    return np.sqrt(diff[..., 0] ** 2 + 2.0 * diff[..., 1] ** 2)


def build_graph(nodes: Sequence[Node], h: float, video_id: str = "", frame_id: int = 0) -> SceneGraph:
    """Connect every node pair closer than ``h`` (strict) in pseudo-3D."""
    if not h > 0:
        raise ValueError(f"edge threshold must be positive, got {h}")
    nodes = list(nodes)
    n = len(nodes)
    edges: list[tuple[int, int]] = []
    if n > 1:
        locs = np.stack([node.location for node in nodes])
        close = _pairwise_pseudo_depth(locs) < h
        ii, jj = np.nonzero(np.triu(close, k=1))
        edges = [(int(i), int(j)) for i, j in zip(ii, jj)]
    linked = {i for e in edges for i in e}
    isolated = [i for i in range(n) if i not in linked]
    return SceneGraph(nodes, edges, isolated, video_id=video_id, frame_id=frame_id)


def record_to_graph(record: FrameRecord, tracks: TrackIndex, h: float,
                    T: int = DEFAULT_TRAJECTORY_LENGTH,
                    person_class_ids: Iterable[int] = PERSON_CLASS_IDS) -> SceneGraph:
    """Build the scene graph of one frame; poses of non-person classes are dropped."""
    person_class_ids = frozenset(person_class_ids)
    nodes = []
    for obj in record.objects:
        if obj.pose is not None and obj.class_id not in person_class_ids:
            obj = RawObject(obj.track_id, obj.class_id, obj.bbox, None)
        traj = tracks.trajectory(obj.track_id, record.frame_id, T)
        nodes.append(build_node(obj, traj, T))
    return build_graph(nodes, h, video_id=record.video_id, frame_id=record.frame_id)


def video_to_graphs(records: Sequence[FrameRecord], h: float, T: int = DEFAULT_TRAJECTORY_LENGTH,
                    person_class_ids: Iterable[int] = PERSON_CLASS_IDS) -> list[SceneGraph]:
    tracks = TrackIndex.from_records(records)
    return [record_to_graph(r, tracks, h, T, person_class_ids) for r in records]
