"""Readers and writers for track streams, class maps and annotation files.

A track stream is line-delimited JSON, one record per frame::

    {"video_id": "v01", "frame_id": 0,
     "objects": [{"track_id": 3, "class_id": 0, "bbox": [x1, y1, x2, y2],
                  "pose": [[x, y], ... 17 pairs ...]}]}

An annotation file is a single JSON document with ``total_frame`` and an
``annotations`` list of ``{track_id, frame_id, bbox, object_type}`` entries.
"""

from __future__ import annotations

import io
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence, Union

import numpy as np

POSE_KEYPOINTS = 17

StreamLike = Union[bytes, str, IO[bytes], IO[str]]


class StreamParseError(ValueError):
    """A track-stream line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FrameOrderError(StreamParseError):
    """frame_id values are not strictly increasing."""


class AnnotationSchemaError(ValueError):
    """An annotation document is missing a field or has a malformed one."""


class TrackLookupError(KeyError):
    pass


@dataclass(frozen=True)
class RawObject:
    track_id: int
    class_id: int
    bbox: tuple[float, float, float, float]
    pose: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        x1, y1, x2, y2 = self.bbox
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"malformed bbox {list(self.bbox)}: need x2 > x1 and y2 > y1")
        if self.pose is not None and len(self.pose) != POSE_KEYPOINTS:
            raise ValueError(f"pose must have {POSE_KEYPOINTS} keypoints, got {len(self.pose)}")

    @property
    def center(self) -> tuple[float, float]:
        x1, y1, x2, y2 = self.bbox
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)


@dataclass(frozen=True)
class FrameRecord:
    video_id: str
    frame_id: int
    objects: tuple[RawObject, ...] = ()


@dataclass(frozen=True)
class GroundTruthAnnotation:
    track_id: int
    frame_id: int
    bbox: tuple[float, float, float, float]
    object_type: str
    video_id: str = ""


@dataclass
class VideoAnnotations:
    """All ground-truth regions of one test video."""

    video_id: str
    total_frame: int
    annotations: list[GroundTruthAnnotation] = field(default_factory=list)

    def by_track(self) -> dict[int, list[GroundTruthAnnotation]]:
        return group_by_track(self.annotations)

    def by_frame(self) -> dict[int, list[GroundTruthAnnotation]]:
        return group_by_frame(self.annotations)


# ---------------------------------------------------------------- streams


def _iter_lines(stream: StreamLike) -> Iterable[str]:
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        return io.StringIO(stream)
    return (line.decode("utf-8") if isinstance(line, bytes) else line for line in stream)


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    return int(value)


def _as_bbox(value) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ValueError(f"bbox must be 4 numbers, got {value!r}")
    return tuple(float(v) for v in value)  # type: ignore[return-value]


def _parse_object(obj: dict) -> RawObject:
    if not isinstance(obj, dict):
        raise ValueError(f"object must be a mapping, got {type(obj).__name__}")
    pose = obj.get("pose")
    if pose is not None:
        pose = tuple((float(p[0]), float(p[1])) for p in pose)
    return RawObject(
        track_id=_as_int(obj["track_id"], "track_id"),
        class_id=_as_int(obj["class_id"], "class_id"),
        bbox=_as_bbox(obj["bbox"]),
        pose=pose,
    )


def parse_track_stream(stream: StreamLike) -> list[FrameRecord]:
    """Parse a line-delimited track stream into frame records.

    Blank lines are skipped and unknown fields ignored. Raises
    :class:`StreamParseError` (with the 1-based line number) on malformed
    lines and :class:`FrameOrderError` when frame ids do not strictly
    increase or the video id changes mid-stream.
    """
    records: list[FrameRecord] = []
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            video_id = data["video_id"]
            if not isinstance(video_id, str):
                raise ValueError("video_id must be a string")
            frame_id = _as_int(data["frame_id"], "frame_id")
            objects = tuple(_parse_object(o) for o in data["objects"])
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            raise StreamParseError(f"{type(exc).__name__}: {exc}", lineno) from exc
        track_ids = [o.track_id for o in objects]
        if len(set(track_ids)) != len(track_ids):
            raise StreamParseError(f"duplicate track_id in frame {frame_id}", lineno)
        if records:
            prev = records[-1]
            if video_id != prev.video_id:
                raise FrameOrderError(
                    f"video_id changed from {prev.video_id!r} to {video_id!r}", lineno)
            if frame_id <= prev.frame_id:
                raise FrameOrderError(
                    f"frame_id {frame_id} does not follow {prev.frame_id}", lineno)
        records.append(FrameRecord(video_id, frame_id, objects))
    return records


def read_track_stream(path: str | os.PathLike) -> list[FrameRecord]:
    with open(path, "rb") as fh:
        return parse_track_stream(fh)


def record_to_dict(record: FrameRecord) -> dict:
    objects = []
    for o in record.objects:
        d = {"track_id": o.track_id, "class_id": o.class_id, "bbox": list(o.bbox)}
        if o.pose is not None:
            d["pose"] = [list(p) for p in o.pose]
        objects.append(d)
    return {"video_id": record.video_id, "frame_id": record.frame_id, "objects": objects}


def dumps_track_stream(records: Iterable[FrameRecord]) -> str:
    return "".join(json.dumps(record_to_dict(r), separators=(",", ":")) + "\n" for r in records)


def write_track_stream(records: Iterable[FrameRecord], path: str | os.PathLike) -> None:
    Path(path).write_text(dumps_track_stream(records), encoding="utf-8")


# -------------------------------------------------------------- class map


def parse_class_map(stream: StreamLike) -> dict[int, str]:
    """Parse ``<class_id> <class_name>`` lines (name may contain spaces)."""
    out: dict[int, str] = {}
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise StreamParseError("expected '<class_id> <class_name>'", lineno)
        try:
            out[int(parts[0])] = parts[1].strip()
        except ValueError as exc:
            raise StreamParseError(str(exc), lineno) from exc
    return out


def dumps_class_map(class_map: dict[int, str]) -> str:
    return "".join(f"{k} {v}\n" for k, v in sorted(class_map.items()))


# ------------------------------------------------------------ trajectories


def bbox_center(bbox: Sequence[float]) -> tuple[float, float]:
    x1, y1, x2, y2 = bbox
    return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)


class TrackIndex:
    """Per-track bbox centers, stored as contiguous runs for fast look-ahead."""

    def __init__(self, centers: dict[int, dict[int, tuple[float, float]]]):
        self._tracks: dict[int, tuple[dict[int, int], np.ndarray, np.ndarray]] = {}
        for track_id, by_frame in centers.items():
            frames = np.array(sorted(by_frame), dtype=np.int64)
            xy = np.array([by_frame[f] for f in frames.tolist()], dtype=float).reshape(-1, 2)
            # run_end[i]: index of the last frame in the gap-free run holding i
            breaks = np.flatnonzero(np.diff(frames) != 1)
            ends = np.r_[breaks, len(frames) - 1]
            run_end = np.repeat(ends, np.diff(np.r_[-1, ends]))
            self._tracks[track_id] = ({f: i for i, f in enumerate(frames.tolist())}, xy, run_end)

    @classmethod
    def from_records(cls, records: Iterable[FrameRecord]) -> "TrackIndex":
        centers: dict[int, dict[int, tuple[float, float]]] = defaultdict(dict)
        for rec in records:
            for obj in rec.objects:
                centers[obj.track_id][rec.frame_id] = obj.center
        return cls(dict(centers))

    def trajectory(self, track_id: int, start_frame: int, length: int = 30) -> np.ndarray:
        """Centers of ``track_id`` for ``length`` frames from ``start_frame``.

        The track ends at its first missing frame; remaining points repeat
        the last observed center.
        """
        if length < 1:
            raise ValueError("trajectory length must be >= 1")
        entry = self._tracks.get(track_id)
        if entry is None or start_frame not in entry[0]:
            raise TrackLookupError(f"track {track_id} not present at frame {start_frame}")
        index, xy, run_end = entry
        i = index[start_frame]
        stop = min(i + length, int(run_end[i]) + 1)
        out = np.empty((length, 2), dtype=float)
        out[:stop - i] = xy[i:stop]
        out[stop - i:] = xy[stop - 1]
        return out


def extract_trajectory(records: Sequence[FrameRecord], track_id: int, start_frame: int,
                       T: int = 30) -> np.ndarray:
    """Look-ahead trajectory of exactly ``T`` (x, y) points for one track."""
    return TrackIndex.from_records(records).trajectory(track_id, start_frame, T)


# ------------------------------------------------------------- annotations


_REQUIRED_ANNOTATION_FIELDS = ("track_id", "frame_id", "bbox", "object_type")


def parse_annotations(stream: StreamLike, video_id: str = "") -> tuple[int, list[GroundTruthAnnotation]]:
    if isinstance(stream, (bytes, str)):
        text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    else:
        raw = stream.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationSchemaError(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise AnnotationSchemaError("top level must be an object")
    for key in ("total_frame", "annotations"):
        if key not in doc:
            raise AnnotationSchemaError(f"missing required field '{key}'")
    try:
        total_frame = _as_int(doc["total_frame"], "total_frame")
    except ValueError as exc:
        raise AnnotationSchemaError(str(exc)) from exc
    out = []
    for i, entry in enumerate(doc["annotations"]):
        for key in _REQUIRED_ANNOTATION_FIELDS:
            if key not in entry:
                raise AnnotationSchemaError(f"annotation {i}: missing required field '{key}'")
        try:
            bbox = _as_bbox(entry["bbox"])
            if not (bbox[2] > bbox[0] and bbox[3] > bbox[1]):
                raise ValueError(f"malformed bbox {list(bbox)}")
            out.append(GroundTruthAnnotation(
                track_id=int(entry["track_id"]),
                frame_id=int(entry["frame_id"]),
                bbox=bbox,
                object_type=str(entry["object_type"]),
                video_id=video_id,
            ))
        except (ValueError, TypeError) as exc:
            raise AnnotationSchemaError(f"annotation {i}: {exc}") from exc
    return total_frame, out


def dumps_annotations(total_frame: int, annotations: Iterable[GroundTruthAnnotation]) -> str:
    doc = {
        "total_frame": int(total_frame),
        "annotations": [
            {"track_id": a.track_id, "frame_id": a.frame_id, "bbox": list(a.bbox),
             "object_type": a.object_type}
            for a in annotations
        ],
    }
    return json.dumps(doc, indent=1)


def read_annotations(path: str | os.PathLike, video_id: str | None = None) -> VideoAnnotations:
    path = Path(path)
    vid = path.stem if video_id is None else video_id
    with open(path, "rb") as fh:
        total, anns = parse_annotations(fh, video_id=vid)
    return VideoAnnotations(vid, total, anns)


def load_annotation_dir(path: str | os.PathLike) -> dict[str, VideoAnnotations]:
    """Load every ``<video_id>.json`` annotation file in a directory."""
    out = {}
    for p in sorted(Path(path).glob("*.json")):
        ann = read_annotations(p)
        out[ann.video_id] = ann
    return out


def group_by_track(annotations: Iterable[GroundTruthAnnotation]) -> dict[int, list[GroundTruthAnnotation]]:
    groups: dict[int, list[GroundTruthAnnotation]] = defaultdict(list)
    for a in annotations:
        groups[a.track_id].append(a)
    return dict(groups)


def group_by_frame(annotations: Iterable[GroundTruthAnnotation]) -> dict[int, list[GroundTruthAnnotation]]:
    groups: dict[int, list[GroundTruthAnnotation]] = defaultdict(list)
    for a in annotations:
        groups[a.frame_id].append(a)
    return dict(groups)
