"""Greedy exemplar selection, cross-video merging and the model file."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence, TypeVar

import numpy as np

from .distances import NodeFeatures, NormalizationConstants, node_distances, pair_distances
from .scenegraph import Node, SceneGraph

T_ = TypeVar("T_")

DEFAULT_EXEMPLAR_THRESHOLD = 0.65
MODEL_FORMAT = "sgvad-exemplar-model"
MODEL_VERSION = 1


class ModelLoadError(ValueError):
    pass


def select_exemplars(S: Iterable[T_], th: float, dist: Callable[[T_, T_], float]) -> list[T_]:
    """Single greedy pass: keep an element iff it is farther than ``th`` from every kept one.

    The result depends on input order by design.
    """
    exemplars: list[T_] = []
    for s in S:
        if all(dist(s, e) > th for e in exemplars):
            exemplars.append(s)
    return exemplars


def select_exemplar_indices(n: int, th: float,
                            dist_to: Callable[[int, np.ndarray], np.ndarray]) -> list[int]:
    """Index form of :func:`select_exemplars` for vectorized distances.

    ``dist_to(i, idx)`` returns distances from element ``i`` to every
    element in the index array ``idx``. Rather than testing each element
    against the kept set, the running minimum distance to the kept set is
    updated once per new exemplar, and only for elements not yet covered;
    the selection is identical.
    """
    selected: list[int] = []
    nearest = np.full(n, np.inf)
    start = 0
    while start < n:
        open_ = np.flatnonzero(nearest[start:] > th)
        if len(open_) == 0:
            break
        i = start + int(open_[0])
        selected.append(i)
        # elements already within th of a kept one can never be selected
        rest = i + 1 + np.flatnonzero(nearest[i + 1:] > th)
        if len(rest):
            nearest[rest] = np.minimum(nearest[rest], dist_to(i, rest))
        start = i + 1
    return selected


def select_node_exemplars(nodes: Sequence[Node], th: float, k: NormalizationConstants) -> list[Node]:
    if not nodes:
        return []
    feats = NodeFeatures.from_nodes(nodes)
    keep = select_exemplar_indices(
        len(nodes), th, lambda i, idx: node_distances(feats.take(i), feats.take(idx), k))
    return [nodes[i] for i in keep]


def select_pair_exemplars(pairs: Sequence[tuple[Node, Node]], th: float,
                          k: NormalizationConstants) -> list[tuple[Node, Node]]:
    if not pairs:
        return []
    first = NodeFeatures.from_nodes([p[0] for p in pairs])
    second = NodeFeatures.from_nodes([p[1] for p in pairs])

    def dist_to(i, idx):
        return pair_distances(first.take(i), second.take(i), first.take(idx), second.take(idx), k)

    keep = select_exemplar_indices(len(pairs), th, dist_to)
    return [pairs[i] for i in keep]


def build_video_model(graphs: Sequence[SceneGraph], th: float,
                      constants: NormalizationConstants) -> tuple[list[Node], list[tuple[Node, Node]]]:
    """Isolated-node and node-pair exemplars of one video, in frame order."""
    isolated = [n for g in graphs for n in g.isolated_nodes()]
    pairs = [p for g in graphs for p in g.pairs()]
    return select_node_exemplars(isolated, th, constants), select_pair_exemplars(pairs, th, constants)


def merge_video_exemplars(per_video: Sequence[Sequence[T_]], th: float,
                          dist: Callable[[T_, T_], float]) -> list[T_]:
    """Union of per-video exemplar sets (in the given order) re-selected at ``th``."""
    return select_exemplars([e for video in per_video for e in video], th, dist)


# ------------------------------------------------------------------- the model


@dataclass(frozen=True, eq=False)
class ExemplarModel:
    """Nominal-behaviour model: isolated-node and node-pair exemplars.

    Parameters
    ----------
    iso : tuple of Node
    pairs : tuple of (Node, Node)
    constants : NormalizationConstants
    th : float
        Exemplar selection threshold.
    h : float
        Edge threshold (pixels) the graphs were built with.
    T : int
        Trajectory length.
    class_map : dict
        ``class_id -> class_name``; informational.
    person_class_ids : tuple of int
        Classes whose pose is used.
    """

    iso: tuple[Node, ...]
    pairs: tuple[tuple[Node, Node], ...]
    constants: NormalizationConstants
    th: float = DEFAULT_EXEMPLAR_THRESHOLD
    h: float = 250.0
    T: int = 30
    class_map: dict = field(default_factory=dict)
    person_class_ids: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "iso", tuple(self.iso))
        object.__setattr__(self, "pairs", tuple((a, b) for a, b in self.pairs))
        object.__setattr__(self, "class_map", {int(k): str(v) for k, v in self.class_map.items()})
        object.__setattr__(self, "person_class_ids", tuple(int(c) for c in self.person_class_ids))
        for n in self.iso + tuple(m for p in self.pairs for m in p):
            if n.T != self.T:
                raise ValueError(f"exemplar trajectory length {n.T} != model T {self.T}")

    def __eq__(self, other):
        if not isinstance(other, ExemplarModel):
            return NotImplemented
        return _model_payload(self) == _model_payload(other)

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def iso_features(self) -> NodeFeatures:
        return NodeFeatures.from_nodes(self.iso, self.T)

    @cached_property
    def pair_features(self) -> tuple[NodeFeatures, NodeFeatures]:
        return (NodeFeatures.from_nodes([p[0] for p in self.pairs], self.T),
                NodeFeatures.from_nodes([p[1] for p in self.pairs], self.T))


def _node_to_dict(n: Node) -> dict:
    return {
        "b": n.size.tolist(),
        "c": n.class_id,
        "l": n.location.tolist(),
        "theta": n.trajectory.tolist(),
        "p": None if n.pose is None else n.pose.tolist(),
        "track_id": n.track_id,
        "bbox": None if n.bbox is None else list(n.bbox),
    }


def _node_from_dict(d: dict) -> Node:
    return Node(size=d["b"], class_id=d["c"], location=d["l"], trajectory=d["theta"],
                pose=d["p"], track_id=d.get("track_id"),
                bbox=None if d.get("bbox") is None else tuple(d["bbox"]))


def _model_payload(model: ExemplarModel) -> dict:
    return {
        "th": float(model.th),
        "h": float(model.h),
        "T": int(model.T),
        "constants": model.constants.to_dict(),
        "class_map": {str(k): v for k, v in sorted(model.class_map.items())},
        "person_class_ids": list(model.person_class_ids),
        "iso": [_node_to_dict(n) for n in model.iso],
        "pairs": [[_node_to_dict(a), _node_to_dict(b)] for a, b in model.pairs],
    }


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def dumps_model(model: ExemplarModel) -> str:
    payload = _model_payload(model)
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION,
           "checksum": _checksum(payload), "payload": payload}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads_model(text: str | bytes) -> ExemplarModel:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelLoadError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelLoadError("not an exemplar model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelLoadError(f"unsupported model version {doc.get('version')!r}")
    payload = doc.get("payload")
    if not isinstance(payload, dict) or doc.get("checksum") != _checksum(payload):
        raise ModelLoadError("model checksum mismatch (corrupted or edited file)")
    try:
        return ExemplarModel(
            iso=[_node_from_dict(d) for d in payload["iso"]],
            pairs=[(_node_from_dict(a), _node_from_dict(b)) for a, b in payload["pairs"]],
            constants=NormalizationConstants.from_dict(payload["constants"]),
            th=payload["th"],
            h=payload["h"],
            T=payload["T"],
            class_map={int(k): v for k, v in payload["class_map"].items()},
            person_class_ids=payload["person_class_ids"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model payload: {exc}") from exc


def save_model(model: ExemplarModel, sink: str | os.PathLike | IO[str]) -> None:
    text = dumps_model(model)
    if isinstance(sink, (str, os.PathLike)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def load_model(source: str | os.PathLike | IO) -> ExemplarModel:
    if isinstance(source, (str, os.PathLike)):
        return loads_model(Path(source).read_bytes())
    data = source.read()
    return loads_model(data)
