"""Attribute distances between nodes, z-score normalization, node and pair distances.

Two code paths compute the same quantities:

* scalar functions (``location_distance`` ... ``pair_distance``) that follow
  the formulas term by term on :class:`~sgvad.scenegraph.Node` objects;
* :class:`NodeFeatures` plus :func:`paired_attribute_distances`, a
  broadcasting kernel over stacked node arrays used for exemplar selection,
  normalization and scoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import POSE_KEYPOINTS
from .scenegraph import Node, SceneGraph

ATTRIBUTES = ("location", "size", "class", "pose", "trajectory")
SIGMA_FLOOR = 1e-6
DEFAULT_NORM_SAMPLE_SIZE = 100_000


# ---------------------------------------------------------------- scalar route


def location_distance(n1: Node, n2: Node) -> float:
    dx, dy = n1.location - n2.location
    return math.sqrt(dx * dx + dy * dy)


def size_distance(n1: Node, n2: Node) -> float:
    w1, h1 = n1.size
    w2, h2 = n2.size
    if min(w1, h1, w2, h2) <= 0:
        raise ValueError("box dimensions must be positive")
    return math.sqrt((w1 - w2) ** 2 / min(w1, w2) + (h1 - h2) ** 2 / min(h1, h2))


def class_distance(n1: Node, n2: Node) -> int:
    return 0 if n1.class_id == n2.class_id else 1


def _radial(pose: np.ndarray) -> list[float]:
    if len(pose) != POSE_KEYPOINTS:
        raise ValueError(f"pose must have {POSE_KEYPOINTS} keypoints, got {len(pose)}")
    x0, y0 = pose[0]
    return [math.hypot(x0 - x, y0 - y) for x, y in pose[1:]]


def pose_distance(n1: Node, n2: Node) -> float:
    """Keypoint-spread distance; 0 when either node has no pose."""
    if n1.pose is None or n2.pose is None:
        return 0.0
    total = 0.0
    for d1, d2 in zip(_radial(n1.pose), _radial(n2.pose)):
        total += abs(d1 - d2) / max(min(d1, d2), 1.0)
    return total


def trajectory_distance(traj1, traj2) -> float:
    """Normalized L1 distance between per-step displacements of two tracks.

    Displacements are signed (``x_t - x_{t+1}``); the denominator
    ``max(min(d1, d2), 1)`` is never below 1.
    """
    traj1 = np.asarray(traj1, dtype=float)
    traj2 = np.asarray(traj2, dtype=float)
    if traj1.shape != traj2.shape:
        raise ValueError(f"trajectory shapes differ: {traj1.shape} vs {traj2.shape}")
    total = 0.0
    for t in range(len(traj1) - 1):
        for k in (0, 1):
            d1 = traj1[t, k] - traj1[t + 1, k]
            d2 = traj2[t, k] - traj2[t + 1, k]
            total += abs(d1 - d2) / max(min(d1, d2), 1.0)
    return total


def attribute_distances(n1: Node, n2: Node) -> tuple[float, float, float, float, float]:
    return (
        location_distance(n1, n2),
        size_distance(n1, n2),
        float(class_distance(n1, n2)),
        pose_distance(n1, n2),
        trajectory_distance(n1.trajectory, n2.trajectory),
    )


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-attribute (mean, std) used to z-score the five distances.

    Order follows :data:`ATTRIBUTES`.
    """

    mean: tuple[float, float, float, float, float]
    std: tuple[float, float, float, float, float]

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        std = tuple(float(v) for v in self.std)
        if len(mean) != 5 or len(std) != 5:
            raise ValueError("need exactly 5 means and 5 standard deviations")
        if any(not s > 0 for s in std):
            raise ValueError(f"standard deviations must be positive, got {std}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls) -> "NormalizationConstants":
        return cls((0.0,) * 5, (1.0,) * 5)

    def zscore(self, raw):
        raw = np.asarray(raw, dtype=float)
        return (raw - np.asarray(self.mean)) / np.asarray(self.std)

    def to_dict(self) -> dict:
        return {name: {"mean": m, "std": s} for name, m, s in zip(ATTRIBUTES, self.mean, self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationConstants":
        return cls(tuple(d[a]["mean"] for a in ATTRIBUTES), tuple(d[a]["std"] for a in ATTRIBUTES))


def node_distance(n1: Node, n2: Node, k: NormalizationConstants) -> float:
    """Largest z-scored attribute distance; negative when nodes are closer than average."""
    raw = attribute_distances(n1, n2)
    return max((d - m) / s for d, m, s in zip(raw, k.mean, k.std))


def pair_distance(N1: tuple[Node, Node], N2: tuple[Node, Node], k: NormalizationConstants) -> float:
    n1, n2 = N1
    n3, n4 = N2
    straight = max(node_distance(n1, n3, k), node_distance(n2, n4, k))
    crossed = max(node_distance(n1, n4, k), node_distance(n2, n3, k))
    return min(straight, crossed)


# --------------------------------------------------------------- batched route


@dataclass
class NodeFeatures:
    """Stacked per-node arrays, precomputed once for vectorized distances.

    ``displacement`` holds signed step displacements ``p_t - p_{t+1}`` and
    ``radial`` the 16 distances from keypoint 1 to keypoints 2..17
    (zeros where ``has_pose`` is False).
    """

    size: np.ndarray          # (n, 2)
    class_id: np.ndarray      # (n,)
    location: np.ndarray      # (n, 2)
    displacement: np.ndarray  # (n, T-1, 2)
    radial: np.ndarray        # (n, 16)
    has_pose: np.ndarray      # (n,)

    def __len__(self) -> int:
        return len(self.class_id)

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node], T: int | None = None) -> "NodeFeatures":
        nodes = list(nodes)
        if not nodes:
            t = 2 if T is None else T
            return cls(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.zeros((0, 2)),
                       np.zeros((0, t - 1, 2)), np.zeros((0, POSE_KEYPOINTS - 1)),
                       np.zeros(0, dtype=bool))
        lengths = {n.T for n in nodes}
        if len(lengths) != 1 or (T is not None and lengths != {T}):
            raise ValueError(f"inconsistent trajectory lengths {sorted(lengths)}")
        traj = np.stack([n.trajectory for n in nodes])
        radial = np.zeros((len(nodes), POSE_KEYPOINTS - 1))
        has_pose = np.zeros(len(nodes), dtype=bool)
        for i, n in enumerate(nodes):
            if n.pose is not None:
                radial[i] = np.hypot(*(n.pose[1:] - n.pose[0]).T)
                has_pose[i] = True
        return cls(
            size=np.stack([n.size for n in nodes]),
            class_id=np.array([n.class_id for n in nodes], dtype=np.int64),
            location=np.stack([n.location for n in nodes]),
            displacement=traj[:, :-1] - traj[:, 1:],
            radial=radial,
            has_pose=has_pose,
        )

    def take(self, idx) -> "NodeFeatures":
        """Rows ``idx``; an int keeps a leading axis of length 1."""
        if isinstance(idx, (int, np.integer)):
            idx = slice(int(idx), int(idx) + 1)
        return NodeFeatures(self.size[idx], self.class_id[idx], self.location[idx],
                            self.displacement[idx], self.radial[idx], self.has_pose[idx])


def _normalized_abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.minimum(a, b), 1.0)


def paired_attribute_distances(a: NodeFeatures, b: NodeFeatures) -> np.ndarray:
    """Raw attribute distances row-by-row (rows broadcast), shape (n, 5)."""
    if a.displacement.shape[-2:] != b.displacement.shape[-2:]:
        raise ValueError("trajectory lengths differ")
    dloc = a.location - b.location
    loc = np.sqrt(np.sum(dloc * dloc, axis=-1))
    wmin = np.minimum(a.size, b.size)
    size = np.sqrt(np.sum((a.size - b.size) ** 2 / wmin, axis=-1))
    cls = (a.class_id != b.class_id).astype(float)
    pose = np.where(a.has_pose & b.has_pose,
                    _normalized_abs_diff(a.radial, b.radial).sum(axis=-1), 0.0)
    traj = _normalized_abs_diff(a.displacement, b.displacement).sum(axis=(-2, -1))
    return np.stack(np.broadcast_arrays(loc, size, cls, pose, traj), axis=-1)


def node_distances(a: NodeFeatures, b: NodeFeatures, k: NormalizationConstants) -> np.ndarray:
    """Normalized node distance row-by-row, shape (n,)."""
    raw = paired_attribute_distances(a, b)
    return ((raw - np.asarray(k.mean)) / np.asarray(k.std)).max(axis=-1)


def pair_distances(a1: NodeFeatures, a2: NodeFeatures, b1: NodeFeatures, b2: NodeFeatures,
                   k: NormalizationConstants) -> np.ndarray:
    """Pair distance between pairs (a1[i], a2[i]) and (b1[i], b2[i]), rows broadcast."""
    straight = np.maximum(node_distances(a1, b1, k), node_distances(a2, b2, k))
    crossed = np.maximum(node_distances(a1, b2, k), node_distances(a2, b1, k))
    return np.minimum(straight, crossed)


# --------------------------------------------------------------- normalization


def constants_from_samples(raw: np.ndarray, eps: float = SIGMA_FLOOR) -> NormalizationConstants:
    """Mean and population std of an (m, 5) sample of raw attribute distances."""
    raw = np.asarray(raw, dtype=float).reshape(-1, 5)
    if len(raw) == 0:
        raise ValueError("cannot estimate normalization constants from an empty sample")
    mean = raw.mean(axis=0)
    std = np.maximum(raw.std(axis=0), eps)
    return NormalizationConstants(tuple(mean), tuple(std))


def estimate_normalization(pairs: Sequence[tuple[Node, Node]], eps: float = SIGMA_FLOOR) -> NormalizationConstants:
    if len(pairs) == 0:
        raise ValueError("cannot estimate normalization constants from an empty sample")
    a = NodeFeatures.from_nodes([p[0] for p in pairs])
    b = NodeFeatures.from_nodes([p[1] for p in pairs])
    return constants_from_samples(paired_attribute_distances(a, b), eps)


def sample_cooccurring_pairs(graphs: Sequence[SceneGraph], max_pairs: int = DEFAULT_NORM_SAMPLE_SIZE,
                             seed: int = 0) -> list[tuple[Node, Node]]:
    """Uniform sample (without replacement) of node pairs sharing a frame."""
    counts = np.array([len(g.nodes) * (len(g.nodes) - 1) // 2 for g in graphs], dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return []
    if total <= max_pairs:
        flat = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(total, size=max_pairs, replace=False))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    gidx = np.searchsorted(offsets, flat, side="right") - 1
    out = []
    cache: dict[int, np.ndarray] = {}
    for g, f in zip(gidx, flat):
        n = len(graphs[g].nodes)
        if n not in cache:
            cache[n] = np.stack(np.triu_indices(n, k=1), axis=1)
        i, j = cache[n][f - offsets[g]]
        out.append((graphs[g].nodes[i], graphs[g].nodes[j]))
    return out
