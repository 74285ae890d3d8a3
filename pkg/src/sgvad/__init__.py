"""Exemplar-based anomaly detection on scene graphs built from object tracks."""

from .config import RunConfig, load_config
from .distances import NormalizationConstants, node_distance, pair_distance
from .estimator import ExemplarAnomalyDetector
from .evaluation import evaluate, frame_level_auc, mask_to_regions, rbdc, tbdc
from .exemplars import ExemplarModel, load_model, save_model, select_exemplars
from .ingest import FrameRecord, RawObject, parse_track_stream, read_track_stream
from .scenegraph import Node, SceneGraph, build_graph, video_to_graphs
from .scoring import ScoredRegion, score_frame, score_graphs

__version__ = "0.1.0"

__all__ = [
    "ExemplarAnomalyDetector", "ExemplarModel", "FrameRecord", "Node", "NormalizationConstants",
    "RawObject", "RunConfig", "SceneGraph", "ScoredRegion", "build_graph", "evaluate",
    "frame_level_auc", "load_config", "load_model", "mask_to_regions", "node_distance",
    "pair_distance", "parse_track_stream", "rbdc", "read_track_stream", "save_model",
    "score_frame", "score_graphs", "select_exemplars", "tbdc", "video_to_graphs",
]
