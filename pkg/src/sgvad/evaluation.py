"""Frame-level ROC AUC, region- and track-based detection criteria, mask-to-region conversion.

RBDC/TBDC plot the detected-region (or detected-track) rate against false
positive regions per frame while the score threshold sweeps from high to
low; the area is taken over false-positive rates in [0, 1].
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .ingest import GroundTruthAnnotation, VideoAnnotations
from .scoring import ScoredRegion, frame_max_scores

DEFAULT_IOU_MIN = 0.1
DEFAULT_TRACK_COVERAGE_MIN = 0.1
DEFAULT_MIN_PIXELS = 10


class UndefinedMetricError(ValueError):
    pass


@dataclass
class EvalResult:
    criterion: str                       # "frame", "rbdc" or "tbdc"
    auc: float
    curve: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "auc": self.auc,
                "curve": [[float(x), float(y)] for x, y in self.curve]}


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


# ----------------------------------------------------------------- frame level


def frame_level_auc(frame_scores, frame_labels) -> EvalResult:
    """ROC AUC over frames by a descending threshold sweep (ties share a step)."""
    s = np.asarray(frame_scores, dtype=float).ravel()
    y = np.asarray(frame_labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{len(s)} scores but {len(y)} labels")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("frame-level AUC needs both anomalous and normal frames")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.nonzero(s[1:] != s[:-1])[0], len(s) - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = last_of_group + 1 - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return EvalResult("frame", _trapezoid(fpr, tpr), list(zip(fpr.tolist(), tpr.tolist())))


def frame_labels(annotations: VideoAnnotations) -> np.ndarray:
    labels = np.zeros(annotations.total_frame, dtype=bool)
    for a in annotations.annotations:
        if 0 <= a.frame_id < annotations.total_frame:
            labels[a.frame_id] = True
    return labels


# ---------------------------------------------------------------- RBDC / TBDC


def _as_video_map(gt) -> dict[str, VideoAnnotations]:
    if isinstance(gt, Mapping):
        return dict(gt)
    return {v.video_id: v for v in gt}


def _detection_sweep(detections: Sequence[ScoredRegion], gt, iou_min: float,
                     track_coverage_min: float):
    videos = _as_video_map(gt)
    unknown = sorted({d.video_id for d in detections} - set(videos))
    if unknown:
        raise ValueError(f"detections reference videos without ground truth: {unknown}")
    regions: list[GroundTruthAnnotation] = [a for v in videos.values() for a in v.annotations]
    if not regions:
        raise UndefinedMetricError("ground truth contains no annotated regions")
    num_frames = sum(v.total_frame for v in videos.values())
    if num_frames <= 0:
        raise UndefinedMetricError("ground truth covers zero frames")

    by_frame: dict[tuple[str, int], list[int]] = defaultdict(list)
    track_of = []
    track_len: dict[tuple[str, int], int] = defaultdict(int)
    for idx, a in enumerate(regions):
        key = (a.video_id, a.track_id)
        by_frame[(a.video_id, a.frame_id)].append(idx)
        track_of.append(key)
        track_len[key] += 1

    dets = sorted(detections, key=lambda d: -d.score)
    detected = np.zeros(len(regions), dtype=bool)
    track_hits: dict[tuple[str, int], int] = defaultdict(int)
    tracks_done: set = set()
    fp = 0
    xs, rys, tys = [0.0], [0.0], [0.0]
    for k, det in enumerate(dets):
        matched = [i for i in by_frame.get((det.video_id, det.frame_id), ())
                   if box_iou(det.bbox, regions[i].bbox) >= iou_min]
        if not matched:
            fp += 1
        for i in matched:
            if not detected[i]:
                detected[i] = True
                key = track_of[i]
                track_hits[key] += 1
                if track_hits[key] / track_len[key] >= track_coverage_min:
                    tracks_done.add(key)
        if k + 1 == len(dets) or dets[k + 1].score != det.score:
            xs.append(fp / num_frames)
            rys.append(detected.sum() / len(regions))
            tys.append(len(tracks_done) / len(track_len))
    return np.array(xs), np.array(rys), np.array(tys)


def _clipped_auc(criterion: str, x: np.ndarray, y: np.ndarray) -> EvalResult:
    # points past one false positive per frame are dropped; the last kept
    # detection rate is held out to x = 1
    keep = x <= 1.0
    x, y = x[keep], y[keep]
    if x[-1] < 1.0:
        x = np.r_[x, 1.0]
        y = np.r_[y, y[-1]]
    return EvalResult(criterion, _trapezoid(x, y), list(zip(x.tolist(), y.tolist())))


def rbdc(detections: Sequence[ScoredRegion], gt, iou_min: float = DEFAULT_IOU_MIN) -> EvalResult:
    """Region-based detection criterion.

    ``gt`` is a mapping ``video_id -> VideoAnnotations`` (or a sequence of
    them); ``total_frame`` of each video sets the per-frame FP denominator.
    """
    x, ry, _ = _detection_sweep(detections, gt, iou_min, DEFAULT_TRACK_COVERAGE_MIN)
    return _clipped_auc("rbdc", x, ry)


def tbdc(detections: Sequence[ScoredRegion], gt, iou_min: float = DEFAULT_IOU_MIN,
         track_coverage_min: float = DEFAULT_TRACK_COVERAGE_MIN) -> EvalResult:
    """Track-based detection criterion; a track counts once ``track_coverage_min`` of it is detected."""
    x, _, ty = _detection_sweep(detections, gt, iou_min, track_coverage_min)
    return _clipped_auc("tbdc", x, ty)


def evaluate(regions: Sequence[ScoredRegion], gt, iou_min: float = DEFAULT_IOU_MIN,
             track_coverage_min: float = DEFAULT_TRACK_COVERAGE_MIN) -> dict[str, EvalResult]:
    """All three criteria over the videos in ``gt``."""
    videos = _as_video_map(gt)
    scores = np.concatenate([frame_max_scores(regions, vid, v.total_frame) for vid, v in sorted(videos.items())])
    labels = np.concatenate([frame_labels(v) for _, v in sorted(videos.items())])
    x, ry, ty = _detection_sweep(regions, videos, iou_min, track_coverage_min)
    return {
        "frame": frame_level_auc(scores, labels),
        "rbdc": _clipped_auc("rbdc", x, ry),
        "tbdc": _clipped_auc("tbdc", x, ty),
    }


# ---------------------------------------------------------------- score maps

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def mask_to_regions(score_map, threshold: float,
                    min_pixels: int = DEFAULT_MIN_PIXELS) -> list[tuple[tuple[int, int, int, int], float]]:
    """Bounding boxes of 8-connected components of ``score_map > threshold``.

    Boxes are ``(x1, y1, x2, y2)`` with exclusive ``x2``/``y2``; components
    smaller than ``min_pixels`` are dropped. Each region is scored with the
    maximum map value inside its component.
    """
    score_map = np.asarray(score_map, dtype=float)
    if score_map.ndim != 2 or score_map.size == 0:
        raise ValueError(f"score map must be a non-empty 2D array, got shape {score_map.shape}")
    labels, count = ndimage.label(score_map > threshold, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    index = np.arange(1, count + 1)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    peaks = ndimage.maximum(score_map, labels, index)
    out = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or sizes[lab - 1] < min_pixels:
            continue
        rows, cols = sl
        out.append(((cols.start, rows.start, cols.stop, rows.stop), float(peaks[lab - 1])))
    return out


def frame_regions_from_map(score_map, threshold: float, video_id: str, frame_id: int,
                           min_pixels: int = DEFAULT_MIN_PIXELS) -> list[ScoredRegion]:
    """Scored regions for a pixel-level score map, usable with :func:`rbdc`/:func:`tbdc`."""
    return [ScoredRegion(video_id, frame_id, tuple(float(v) for v in box), score, "mask")
            for box, score in mask_to_regions(score_map, threshold, min_pixels)]
