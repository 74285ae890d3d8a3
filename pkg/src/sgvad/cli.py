"""Command-line interface: build-model, score, eval, synth and plot.

Every command writes its outputs through a temporary file and an atomic
rename, and exits 0 only once all of them are in place. Errors are
reported on stderr with exit status 1; usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import yaml

from . import synth
from .config import ConfigError, RunConfig, read_config_document
from .distances import ATTRIBUTES
from .estimator import ExemplarAnomalyDetector
from .evaluation import UndefinedMetricError, evaluate
from .exemplars import ModelLoadError, dumps_model, load_model
from .ingest import (AnnotationSchemaError, FrameRecord, StreamParseError, dumps_annotations,
                     dumps_class_map, dumps_track_stream, load_annotation_dir, parse_class_map,
                     read_track_stream)
from .scoring import dumps_scores, read_scores

logger = logging.getLogger("sgvad")


class CommandError(Exception):
    """A failure reported to the user without a traceback."""


_UMASK = os.umask(0)
os.umask(_UMASK)


def write_atomic(path: str | os.PathLike, data: str | bytes) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o666 & ~_UMASK)   # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------- config


_PARAM_FLAGS = ("edge_threshold_px", "frame_height", "exemplar_threshold", "trajectory_length",
                "anomaly_threshold", "norm_sample_size", "norm_seed")


def _add_param_flags(p: argparse.ArgumentParser, names: Sequence[str]) -> None:
    types = {"edge_threshold_px": float, "frame_height": int, "exemplar_threshold": float,
             "trajectory_length": int, "anomaly_threshold": float, "norm_sample_size": int,
             "norm_seed": int}
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=types[name], default=None)


def _resolve_config(args) -> tuple[RunConfig, set[str]]:
    """Flag > config file > default; also returns the names set explicitly."""
    doc = read_config_document(args.config) if args.config else {}
    cfg = RunConfig.from_mapping(doc)
    flags = {k: getattr(args, k) for k in _PARAM_FLAGS if getattr(args, k, None) is not None}
    cfg = cfg.replace(**flags)
    return cfg, set(doc) | set(flags)


# --------------------------------------------------------------- inputs


def _read_streams(paths: Sequence[str]) -> list[list[FrameRecord]]:
    videos, seen = [], {}
    for path in paths:
        try:
            records = read_track_stream(path)
        except OSError as exc:
            raise CommandError(f"cannot read stream {path}: {exc.strerror or exc}") from exc
        except StreamParseError as exc:
            raise CommandError(f"{path}: {exc}") from exc
        if records:
            vid = records[0].video_id
            if vid in seen:
                raise CommandError(f"{path}: video id {vid!r} already read from {seen[vid]}")
            seen[vid] = path
        logger.info("read %s: %d frames", path, len(records))
        videos.append(records)
    return videos


def _read_class_map(path: str | None) -> dict[int, str] | None:
    if path is None:
        return None
    try:
        with open(path, "rb") as fh:
            return parse_class_map(fh)
    except OSError as exc:
        raise CommandError(f"cannot read class map {path}: {exc.strerror or exc}") from exc
    except StreamParseError as exc:
        raise CommandError(f"{path}: {exc}") from exc


def _output_path(given: str | None, fallback: str | None, what: str) -> str:
    path = given or fallback
    if not path:
        raise CommandError(f"no {what} path: pass -o or set it in the config")
    return path


# ------------------------------------------------------------- commands


def cmd_build_model(args) -> int:
    cfg, _ = _resolve_config(args)
    out = _output_path(args.output, cfg.model, "model output")
    videos = [v for v in _read_streams(args.streams) if v]
    if not videos:
        raise CommandError("all training streams are empty")
    class_map = _read_class_map(args.class_map or cfg.class_map)
    est = ExemplarAnomalyDetector(
        edge_threshold_px=cfg.edge_threshold, exemplar_threshold=cfg.exemplar_threshold,
        trajectory_length=cfg.trajectory_length, anomaly_threshold=cfg.anomaly_threshold,
        norm_sample_size=cfg.norm_sample_size, random_state=cfg.norm_seed, class_map=class_map)
    try:
        est.fit(videos)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    write_atomic(out, dumps_model(est.model_))
    k = est.constants_
    print(f"isolated exemplars: {est.n_iso_exemplars_}")
    print(f"pair exemplars: {est.n_pair_exemplars_}")
    for name, m, s in zip(ATTRIBUTES, k.mean, k.std):
        print(f"{name:>10s}: mean={m:.6g} std={s:.6g}")
    print(f"wrote {out}")
    return 0


def _load_model(path: str):
    try:
        return load_model(path)
    except OSError as exc:
        raise CommandError(f"cannot read model {path}: {exc.strerror or exc}") from exc
    except ModelLoadError as exc:
        raise CommandError(f"{path}: {exc}") from exc


def cmd_score(args) -> int:
    cfg, explicit = _resolve_config(args)
    model_path = args.model or cfg.model
    if not model_path:
        raise CommandError("no model given")
    out = _output_path(args.output, cfg.scores, "scores output")
    model = _load_model(model_path)
    if "trajectory_length" in explicit and cfg.trajectory_length != model.T:
        raise CommandError(f"trajectory length {cfg.trajectory_length} does not match the "
                           f"model's {model.T}")
    if ({"edge_threshold_px", "frame_height"} & explicit
            and not math.isclose(cfg.edge_threshold, model.h, rel_tol=1e-12)):
        raise CommandError(f"edge threshold {cfg.edge_threshold:g} px does not match the "
                           f"model's {model.h:g} px")
    videos = _read_streams(args.streams)
    est = ExemplarAnomalyDetector.from_model(model, anomaly_threshold=cfg.anomaly_threshold)
    regions = est.score_regions([v for v in videos if v])
    write_atomic(out, dumps_scores(regions))
    flagged = sum(r.score > cfg.anomaly_threshold for r in regions)
    print(f"scored {len(regions)} regions, {flagged} above {cfg.anomaly_threshold:g}")
    print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    cfg, _ = _resolve_config(args)
    scores_path = args.scores or cfg.scores
    ann_dir = args.annotations or cfg.annotations
    if not scores_path or not ann_dir:
        raise CommandError("need a scores file and an annotation directory")
    try:
        regions = read_scores(scores_path)
    except OSError as exc:
        raise CommandError(f"cannot read scores {scores_path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise CommandError(f"{scores_path}: {exc}") from exc
    if not Path(ann_dir).is_dir():
        raise CommandError(f"annotation directory {ann_dir} does not exist")
    try:
        gt = load_annotation_dir(ann_dir)
    except (OSError, AnnotationSchemaError) as exc:
        raise CommandError(f"{ann_dir}: {exc}") from exc
    scored = sorted({r.video_id for r in regions})
    missing = [v for v in scored if v not in gt]
    if missing:
        raise CommandError(f"no annotation file for scored videos: {', '.join(missing)}")
    videos = {v: gt[v] for v in scored} if scored else gt
    if not videos:
        raise CommandError(f"no annotation files in {ann_dir}")
    try:
        results = evaluate(regions, videos, iou_min=args.iou_min)
    except UndefinedMetricError as exc:
        raise CommandError(str(exc)) from exc
    doc = {"videos": sorted(videos), "iou_min": args.iou_min,
           "results": [results[c].to_dict() for c in ("frame", "rbdc", "tbdc")]}
    for c in ("frame", "rbdc", "tbdc"):
        print(f"{c:>5s} AUC: {results[c].auc:.4f}")
    text = json.dumps(doc, indent=1) + "\n"
    out = args.output or cfg.results
    if out:
        write_atomic(out, text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


def _read_scenario(path: str) -> synth.ScenarioSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CommandError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    except yaml.YAMLError as exc:
        raise CommandError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CommandError(f"{path}: scenario must be a mapping")
    try:
        spec = synth.ScenarioSpec.from_dict(doc)
        spec.validate()
    except synth.ScenarioError as exc:
        raise CommandError(f"{path}: {exc}") from exc
    return spec


def _write_scenarios(specs, out: Path, stream_dir: Path) -> None:
    ids = [s.video_id for s in specs]
    dupes = sorted({v for v in ids if ids.count(v) > 1})
    if dupes:
        raise CommandError(f"duplicate video ids: {', '.join(dupes)}")
    for spec in specs:
        records, gt = synth.generate(spec)
        write_atomic(stream_dir / f"{spec.video_id}.jsonl", dumps_track_stream(records))
        if gt is not None:
            write_atomic(out / "annotations" / f"{spec.video_id}.json",
                         dumps_annotations(spec.frame_count, gt))
        logger.info("generated %s: %d frames", spec.video_id, len(records))
    write_atomic(out / "classes.txt", dumps_class_map(synth.class_map()))


def cmd_synth(args) -> int:
    if not args.specs and not args.benchmark:
        raise CommandError("give scenario files or --benchmark")
    out = Path(args.out)
    specs = [_read_scenario(p) for p in args.specs]
    if specs:
        _write_scenarios(specs, out, out)
    if args.benchmark:
        train, tests = synth.benchmark_suite(args.n_train, args.frame_count, args.seed)
        _write_scenarios(train, out, out / "train")
        _write_scenarios(tests, out, out / "test")
        for spec in train + tests:
            write_atomic(out / "scenarios" / f"{spec.video_id}.json", synth.dumps_scenario(spec) + "\n")
    print(f"wrote scenes to {out}")
    return 0


def cmd_plot(args) -> int:
    try:
        doc = json.loads(Path(args.results).read_text(encoding="utf-8"))
        curves = {r["criterion"]: (r["auc"], r["curve"]) for r in doc["results"]}
    except OSError as exc:
        raise CommandError(f"cannot read results {args.results}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CommandError(f"{args.results}: not a results document ({exc})") from exc

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = {"frame": ("false positive rate", "true positive rate"),
              "rbdc": ("false positive regions per frame", "region detection rate"),
              "tbdc": ("false positive regions per frame", "track detection rate")}
    names = [c for c in ("frame", "rbdc", "tbdc") if c in curves]
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 4), squeeze=False)
    for ax, name in zip(axes[0], names):
        auc, curve = curves[name]
        xs, ys = zip(*curve) if curve else ((), ())
        ax.plot(xs, ys)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel(labels[name][0])
        ax.set_ylabel(labels[name][1])
        ax.set_title(f"{name} AUC = {auc:.3f}")
    fig.tight_layout()
    suffix = Path(args.output).suffix.lstrip(".") or "png"
    fd, tmp = tempfile.mkstemp(prefix=".plot.", suffix="." + suffix,
                               dir=Path(args.output).parent or ".")
    os.close(fd)
    try:
        fig.savefig(tmp, format=suffix)
        os.replace(tmp, args.output)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    print(f"wrote {args.output}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgvad", description=(
        "Scene-graph exemplar anomaly detection on object track streams."))
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for debug output)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-model", help="select exemplars from nominal track streams")
    p.add_argument("streams", nargs="+", metavar="STREAM")
    p.add_argument("-o", "--output", help="model file to write")
    p.add_argument("--class-map", help="'<class_id> <name>' lines stored in the model")
    p.add_argument("--config")
    _add_param_flags(p, _PARAM_FLAGS)
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("score", help="score every object of test track streams")
    p.add_argument("model", metavar="MODEL")
    p.add_argument("streams", nargs="+", metavar="STREAM")
    p.add_argument("-o", "--output", help="scores file to write (JSON lines)")
    p.add_argument("--config")
    _add_param_flags(p, ("edge_threshold_px", "frame_height", "trajectory_length",
                         "anomaly_threshold"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="frame AUC, RBDC and TBDC against ground truth")
    p.add_argument("scores", metavar="SCORES")
    p.add_argument("annotations", metavar="ANNOTATION_DIR")
    p.add_argument("-o", "--output", help="results document (default: stdout)")
    p.add_argument("--iou-min", type=float, default=0.1)
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic track streams and annotations")
    p.add_argument("specs", nargs="*", metavar="SCENARIO")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--benchmark", action="store_true",
                   help="also write the nominal training scenes and injected test scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=5)
    p.add_argument("--frame-count", type=int, default=900)
    p.set_defaults(func=cmd_synth, config=None)

    p = sub.add_parser("plot", help="draw the curves of a results document")
    p.add_argument("results", metavar="RESULTS")
    p.add_argument("-o", "--output", required=True, help="image file (png, pdf, svg)")
    p.set_defaults(func=cmd_plot, config=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CommandError, ConfigError) as exc:
        print(f"sgvad {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sgvad {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
