"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers
from typing import Sequence

from .ingest import FrameRecord


def check_positive(value, name: str, *, integer: bool = False, minimum=None) -> float:
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
    if minimum is not None:
        if value < minimum:
            raise ValueError(f"{name} must be >= {minimum}, got {value}")
    elif not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_videos(X) -> list[list[FrameRecord]]:
    """Normalize ``X`` to a list of videos, each a list of FrameRecord.

    A flat sequence of FrameRecord is treated as one video.
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("expected frame records, got a string; parse the stream first")
    X = list(X)
    if X and all(isinstance(r, FrameRecord) for r in X):
        return [X]
    videos = []
    for i, video in enumerate(X):
        video = list(video)
        if not all(isinstance(r, FrameRecord) for r in video):
            raise TypeError(f"video {i} contains items that are not FrameRecord")
        videos.append(video)
    return videos


def check_same_video(video: Sequence[FrameRecord]) -> str:
    ids = {r.video_id for r in video}
    if len(ids) > 1:
        raise ValueError(f"one video expected, found ids {sorted(ids)}")
    return ids.pop() if ids else ""
