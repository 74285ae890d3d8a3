"""Nearest-exemplar anomaly scores for test scene graphs, and the scores file."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .distances import ATTRIBUTES, NodeFeatures, paired_attribute_distances
from .exemplars import ExemplarModel
from .scenegraph import Node, SceneGraph

# Score reported when the relevant exemplar set is empty.
SENTINEL_SCORE = sys.float_info.max
DEFAULT_ANOMALY_THRESHOLD = 0.5


@dataclass(frozen=True)
class ScoredRegion:
    video_id: str
    frame_id: int
    bbox: tuple[float, float, float, float]
    score: float
    provenance: str                      # "isolated" or "pair"
    track_id: int | None = None
    partner_track_id: int | None = None
    attribute: str | None = None         # dominating attribute at the nearest exemplar

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bbox"] = list(self.bbox)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredRegion":
        return cls(
            video_id=str(d["video_id"]),
            frame_id=int(d["frame_id"]),
            bbox=tuple(float(v) for v in d["bbox"]),
            score=float(d["score"]),
            provenance=str(d["provenance"]),
            track_id=d.get("track_id"),
            partner_track_id=d.get("partner_track_id"),
            attribute=d.get("attribute"),
        )


_CHUNK = 2048


def _outer(f: NodeFeatures, axis: int) -> NodeFeatures:
    e = lambda arr: np.expand_dims(arr, axis)
    return NodeFeatures(e(f.size), e(f.class_id), e(f.location), e(f.displacement),
                        e(f.radial), e(f.has_pose))


def _zscores(model: ExemplarModel, a: NodeFeatures, b: NodeFeatures) -> np.ndarray:
    """(n, m, 5) z-scored attribute distances between every row of ``a`` and of ``b``."""
    raw = paired_attribute_distances(_outer(a, 1), _outer(b, 0))
    return (raw - np.asarray(model.constants.mean)) / np.asarray(model.constants.std)


def _pick(d: np.ndarray, za: np.ndarray, zb: np.ndarray | None = None):
    j = np.argmin(d, axis=1)
    rows = np.arange(len(d))
    score = d[rows, j]
    z = za[rows, j]
    if zb is not None:
        other = zb[rows, j]
        z = np.where((z.max(axis=1) >= other.max(axis=1))[:, None], z, other)
    return score, np.argmax(z, axis=1)


def _nearest_iso(feats: NodeFeatures, model: ExemplarModel) -> tuple[np.ndarray, np.ndarray]:
    """Nearest isolated-exemplar distance per row and the index of its dominating attribute."""
    n = len(feats)
    if not model.iso:
        return np.full(n, SENTINEL_SCORE), np.full(n, -1)
    scores, attrs = np.empty(n), np.empty(n, dtype=np.int64)
    for lo in range(0, n, _CHUNK):
        z = _zscores(model, feats.take(slice(lo, lo + _CHUNK)), model.iso_features)
        scores[lo:lo + _CHUNK], attrs[lo:lo + _CHUNK] = _pick(z.max(axis=2), z)
    return scores, attrs


def _nearest_pair(f1: NodeFeatures, f2: NodeFeatures, model: ExemplarModel) -> tuple[np.ndarray, np.ndarray]:
    """Nearest pair-exemplar distance per row pair, trying both node assignments."""
    n = len(f1)
    if not model.pairs:
        return np.full(n, SENTINEL_SCORE), np.full(n, -1)
    e1, e2 = model.pair_features
    scores, attrs = np.empty(n), np.empty(n, dtype=np.int64)
    for lo in range(0, n, _CHUNK):
        a, b = f1.take(slice(lo, lo + _CHUNK)), f2.take(slice(lo, lo + _CHUNK))
        z13, z24 = _zscores(model, a, e1), _zscores(model, b, e2)
        z14, z23 = _zscores(model, a, e2), _zscores(model, b, e1)
        straight = np.maximum(z13.max(axis=2), z24.max(axis=2))
        crossed = np.maximum(z14.max(axis=2), z23.max(axis=2))
        use_straight = (straight <= crossed)[:, :, None]
        za = np.where(use_straight, z13, z14)
        zb = np.where(use_straight, z24, z23)
        scores[lo:lo + _CHUNK], attrs[lo:lo + _CHUNK] = _pick(np.minimum(straight, crossed), za, zb)
    return scores, attrs


def score_isolated(n: Node, model: ExemplarModel) -> float:
    """Distance from a node to its nearest isolated-node exemplar."""
    return float(_nearest_iso(NodeFeatures.from_nodes([n], model.T), model)[0][0])


def score_pair(N: tuple[Node, Node], model: ExemplarModel) -> float:
    """Distance from a node pair to its nearest node-pair exemplar."""
    f1 = NodeFeatures.from_nodes([N[0]], model.T)
    f2 = NodeFeatures.from_nodes([N[1]], model.T)
    return float(_nearest_pair(f1, f2, model)[0][0])


def _attr(k) -> str | None:
    return ATTRIBUTES[int(k)] if k >= 0 else None


def score_graphs(graphs: Iterable[SceneGraph], model: ExemplarModel) -> list[ScoredRegion]:
    """One region per node: isolated score, or the max over its incident pair scores.

    All nodes of all graphs are scored in one batch; output is ordered by
    (video_id, frame_id), then track id.
    """
    graphs = list(graphs)
    nodes = [n for g in graphs for n in g.nodes]
    if not nodes:
        return []
    offsets = np.cumsum([0] + [len(g.nodes) for g in graphs])
    feats = NodeFeatures.from_nodes(nodes, model.T)
    iso = np.array([offsets[k] + i for k, g in enumerate(graphs) for i in g.isolated], dtype=np.int64)
    edges = np.array([(offsets[k] + i, offsets[k] + j) for k, g in enumerate(graphs) for i, j in g.edges],
                     dtype=np.int64).reshape(-1, 2)
    iso_s, iso_a = _nearest_iso(feats.take(iso), model)
    pair_s, pair_a = _nearest_pair(feats.take(edges[:, 0]), feats.take(edges[:, 1]), model)

    best: dict[int, tuple[float, str, int | None, str | None]] = {}
    for i, s, a in zip(iso.tolist(), iso_s.tolist(), iso_a.tolist()):
        best[i] = (s, "isolated", None, _attr(a))
    for (i, j), s, a in zip(edges.tolist(), pair_s.tolist(), pair_a.tolist()):
        for me, other in ((i, j), (j, i)):
            if me not in best or s > best[me][0]:
                best[me] = (s, "pair", nodes[other].track_id, _attr(a))

    out: list[ScoredRegion] = []
    for k, g in enumerate(graphs):
        frame = []
        for i, node in enumerate(g.nodes):
            s, kind, partner, attr = best[offsets[k] + i]
            frame.append(ScoredRegion(g.video_id, g.frame_id, node.region(), s, kind,
                                      node.track_id, partner, attr))
        frame.sort(key=lambda r: (r.track_id is None, r.track_id or 0, r.bbox))
        out.extend(frame)
    out.sort(key=lambda r: (r.video_id, r.frame_id))
    return out


def score_frame(g: SceneGraph, model: ExemplarModel) -> list[ScoredRegion]:
    """Scored regions of a single scene graph."""
    return score_graphs([g], model)


def detect(regions: Iterable[ScoredRegion], threshold: float = DEFAULT_ANOMALY_THRESHOLD) -> list[ScoredRegion]:
    return [r for r in regions if r.score > threshold]


# ---------------------------------------------------------------- scores file


def dumps_scores(regions: Iterable[ScoredRegion]) -> str:
    return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in regions)


def write_scores(regions: Iterable[ScoredRegion], path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_scores(regions), encoding="utf-8")


def parse_scores(stream: str | bytes | IO) -> list[ScoredRegion]:
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    lines = stream.splitlines() if isinstance(stream, str) else stream
    out = []
    for lineno, line in enumerate(lines, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            out.append(ScoredRegion.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"scores line {lineno}: {exc}") from exc
    return out


def read_scores(path: str | os.PathLike) -> list[ScoredRegion]:
    with open(path, "rb") as fh:
        return parse_scores(fh)


def frame_max_scores(regions: Sequence[ScoredRegion], video_id: str, total_frames: int) -> np.ndarray:
    """Per-frame maximum region score; frames without regions get ``-inf``."""
    out = np.full(total_frames, -np.inf)
    for r in regions:
        if r.video_id == video_id and 0 <= r.frame_id < total_frames:
            out[r.frame_id] = max(out[r.frame_id], r.score)
    return out
