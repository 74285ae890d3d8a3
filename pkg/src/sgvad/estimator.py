"""Estimator wrapper: fit on nominal videos, score and detect on test videos."""

from __future__ import annotations

import logging

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .distances import DEFAULT_NORM_SAMPLE_SIZE, estimate_normalization, sample_cooccurring_pairs
from .exemplars import (DEFAULT_EXEMPLAR_THRESHOLD, ExemplarModel, build_video_model,
                        select_node_exemplars, select_pair_exemplars)
from .scenegraph import DEFAULT_EDGE_THRESHOLD_PX, DEFAULT_TRAJECTORY_LENGTH, video_to_graphs
from .scoring import DEFAULT_ANOMALY_THRESHOLD, ScoredRegion, detect, score_graphs
from .validation import check_positive, check_same_video, check_videos

logger = logging.getLogger(__name__)


class ExemplarAnomalyDetector(BaseEstimator):
    """Scene-graph exemplar model of nominal object behaviour and interactions.

    Parameters
    ----------
    edge_threshold_px : float, default=250.0
        Objects closer than this (pseudo-3D pixels) are linked into a pair.
    exemplar_threshold : float, default=0.65
        Greedy selection threshold on the normalized distance.
    trajectory_length : int, default=30
        Look-ahead track length per node.
    anomaly_threshold : float, default=0.5
        Regions scoring above this are reported by :meth:`predict`.
    norm_sample_size : int, default=100000
        Maximum number of co-occurring node pairs used to estimate the
        normalization constants.
    random_state : int, default=0
        Seed for that sample.
    person_class_ids : tuple of int, default=(0,)
        Classes whose poses enter the pose distance.
    class_map : dict or None
        ``class_id -> name``, stored in the model for reference.

    Attributes
    ----------
    model_ : ExemplarModel
    constants_ : NormalizationConstants
    n_iso_exemplars_, n_pair_exemplars_ : int
    """

    def __init__(self, edge_threshold_px=DEFAULT_EDGE_THRESHOLD_PX,
                 exemplar_threshold=DEFAULT_EXEMPLAR_THRESHOLD,
                 trajectory_length=DEFAULT_TRAJECTORY_LENGTH,
                 anomaly_threshold=DEFAULT_ANOMALY_THRESHOLD,
                 norm_sample_size=DEFAULT_NORM_SAMPLE_SIZE, random_state=0,
                 person_class_ids=(0,), class_map=None):
        self.edge_threshold_px = edge_threshold_px
        self.exemplar_threshold = exemplar_threshold
        self.trajectory_length = trajectory_length
        self.anomaly_threshold = anomaly_threshold
        self.norm_sample_size = norm_sample_size
        self.random_state = random_state
        self.person_class_ids = person_class_ids
        self.class_map = class_map

    def _validate_params(self):
        check_positive(self.edge_threshold_px, "edge_threshold_px")
        check_positive(self.exemplar_threshold, "exemplar_threshold")
        check_positive(self.trajectory_length, "trajectory_length", integer=True, minimum=2)
        check_positive(self.norm_sample_size, "norm_sample_size", integer=True)

    def _graphs(self, videos, h, T):
        return [video_to_graphs(v, h, T, self.person_class_ids) for v in videos]

    def fit(self, X, y=None):
        """Build the exemplar model from nominal videos.

        Parameters
        ----------
        X : sequence of videos
            Each video is a list of FrameRecord; a flat list is one video.
        y : ignored
        """
        self._validate_params()
        videos = check_videos(X)
        if not videos:
            raise ValueError("need at least one nominal video")
        h, T, th = float(self.edge_threshold_px), int(self.trajectory_length), float(self.exemplar_threshold)
        # merge order is ascending video id
        videos = sorted(videos, key=check_same_video)
        graphs = self._graphs(videos, h, T)

        sample = sample_cooccurring_pairs([g for gs in graphs for g in gs],
                                          self.norm_sample_size, self.random_state)
        if not sample:
            raise ValueError("no frame holds two or more objects; cannot estimate normalization")
        constants = estimate_normalization(sample)

        per_video = [build_video_model(gs, th, constants) for gs in graphs]
        for vid, (iso, pairs) in zip(map(check_same_video, videos), per_video):
            logger.info("video %s: %d isolated / %d pair exemplars", vid, len(iso), len(pairs))
        iso = select_node_exemplars([n for iso, _ in per_video for n in iso], th, constants)
        pairs = select_pair_exemplars([p for _, ps in per_video for p in ps], th, constants)

        self.model_ = ExemplarModel(iso, pairs, constants, th=th, h=h, T=T,
                                    class_map=self.class_map or {},
                                    person_class_ids=tuple(self.person_class_ids))
        self._set_fitted(self.model_)
        return self

    def _set_fitted(self, model):
        self.constants_ = model.constants
        self.n_iso_exemplars_ = len(model.iso)
        self.n_pair_exemplars_ = len(model.pairs)

    @classmethod
    def from_model(cls, model: ExemplarModel, **params) -> "ExemplarAnomalyDetector":
        est = cls(edge_threshold_px=model.h, exemplar_threshold=model.th,
                  trajectory_length=model.T, person_class_ids=model.person_class_ids,
                  class_map=dict(model.class_map) or None, **params)
        est.model_ = model
        est._set_fitted(model)
        return est

    def score_regions(self, X) -> list[ScoredRegion]:
        """Scored region for every object of every frame, ordered by (video_id, frame_id)."""
        check_is_fitted(self, "model_")
        m = self.model_
        out: list[ScoredRegion] = []
        for gs in self._graphs(check_videos(X), m.h, m.T):
            out.extend(score_graphs(gs, m))
        out.sort(key=lambda r: (r.video_id, r.frame_id))
        return out

    def predict(self, X) -> list[ScoredRegion]:
        """Regions scoring above ``anomaly_threshold``."""
        return detect(self.score_regions(X), self.anomaly_threshold)
