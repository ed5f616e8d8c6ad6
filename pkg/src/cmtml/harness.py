"""Orchestration: wire files, config, estimator and checkpoints together.

These functions back the CLI verbs but are importable on their own, so the
whole train/eval/predict cycle can run in-process.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, restore_estimator, save_checkpoint
from .config import RunConfig
from .data import (
    SyntheticSpec,
    interpolate_to_fixed_length,
    load_annotations,
    load_embeddings,
    load_feature_file,
    load_samples,
    tokenize,
    write_synthetic_dataset,
)
from .errors import ConfigurationError, InputError
from .estimator import TemporalMomentLocalizer
from .metrics import EvalResult, evaluate_rankings
from .proposal import write_map_csv, write_map_pgm

logger = logging.getLogger(__name__)

LAST_CHECKPOINT = "last.ckpt"
FINAL_CHECKPOINT = "final.ckpt"


def estimator_from_config(config: RunConfig) -> TemporalMomentLocalizer:
    m, o, lo = config.model, config.optimizer, config.loss
    return TemporalMomentLocalizer(
        l=m.l, d=m.d, p=m.p, k=m.k, dropout=m.dropout,
        attention_mode=config.attention_mode, eval_mode=config.eval_mode, fusion=config.fusion,
        learning_rate=o.learning_rate, batch_size=o.batch_size, epochs=o.epochs, seed=o.seed,
        lambda_local=lo.lambda_local, lambda_m=lo.lambda_m,
        soft_label_sigma=lo.soft_label_sigma, epsilon=lo.epsilon,
        global_stack=m.global_stack, head_stack=m.head_stack, local_stack=m.local_stack,
        share_stream_params=m.share_stream_params, grad_clip=o.grad_clip,
        log_every=1,
    )


def train(config: RunConfig) -> Path:
    """Train per the run config; returns the final checkpoint path."""
    paths = config.paths
    for field in ("features", "annotations", "embeddings", "checkpoints"):
        if not getattr(paths, field):
            raise ConfigurationError(f"paths.{field} is required for training")
    samples, skipped = load_samples(paths.features, paths.annotations, l=config.model.l)
    if skipped:
        logger.warning("skipped %d annotations with missing features", len(skipped))
    table = load_embeddings(paths.embeddings)
    estimator = estimator_from_config(config)

    ckpt_dir = Path(paths.checkpoints)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    config_snapshot = config.to_dict()

    def on_epoch(est, epoch, mean_loss):
        save_checkpoint(ckpt_dir / LAST_CHECKPOINT, est, epoch=epoch, run_config=config_snapshot)

    start = time.perf_counter()
    estimator.fit(samples, embedding_table=table, epoch_callback=on_epoch)
    elapsed = time.perf_counter() - start
    logger.info("trained %d epochs over %d samples in %.1f s", config.optimizer.epochs, len(samples), elapsed)

    final_path = ckpt_dir / FINAL_CHECKPOINT
    save_checkpoint(final_path, estimator, epoch=max(config.optimizer.epochs - 1, 0),
                    run_config=config_snapshot)
    return final_path


def _config_from_checkpoint(ckpt: Checkpoint) -> RunConfig | None:
    if ckpt.run_config is None:
        return None
    return RunConfig.from_dict(ckpt.run_config)


def evaluate(checkpoint_path, annotations_path=None, features_dir=None,
             n_list=(1,), m_list=(0.3, 0.5, 0.7), out_csv=None) -> EvalResult:
    """Rank proposals for every annotated query and compute the recall table."""
    ckpt = load_checkpoint(checkpoint_path)
    estimator = restore_estimator(ckpt)
    config = _config_from_checkpoint(ckpt)
    if annotations_path is None or features_dir is None:
        if config is None:
            raise ConfigurationError("checkpoint has no run config; pass annotations and features paths")
        annotations_path = annotations_path or config.paths.annotations
        features_dir = features_dir or config.paths.features
    samples, skipped = load_samples(features_dir, annotations_path, l=estimator.l)
    n_max = max(n_list)
    rankings = []
    annotations = []
    for sample in samples:
        intervals = estimator.rank(sample.features, sample.annotation.duration, sample.tokens, n_max)
        rankings.append([(s, e) for s, e, _score in intervals])
        annotations.append(sample.annotation)
    result = evaluate_rankings(rankings, annotations, n_list, m_list, n_skipped=len(skipped))
    if out_csv is not None:
        result.to_csv(out_csv)
    return result


def predict(checkpoint_path, video_path, query_text: str, dump_map_dir=None):
    """Localize one query in one video file; optionally dump the score map."""
    tokens = tokenize(query_text)
    if not tokens:
        raise InputError("query tokenizes to zero tokens")
    ckpt = load_checkpoint(checkpoint_path)
    estimator = restore_estimator(ckpt)
    raw = load_feature_file(video_path)
    features = interpolate_to_fixed_length(raw, estimator.l)
    prediction, score_map = estimator.localize(
        features, raw.duration_seconds, tokens, return_map=True
    )
    if dump_map_dir is not None:
        out = Path(dump_map_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_map_pgm(score_map, out / f"{raw.video_id}_map.pgm")
        write_map_csv(score_map, out / f"{raw.video_id}_map.csv")
    return prediction


def synthesize(spec_path, out_dir) -> SyntheticSpec:
    """Generate a synthetic dataset from a JSON spec file."""
    spec_path = Path(spec_path)
    try:
        data = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{spec_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{spec_path}: expected a JSON object")
    allowed = {"n_samples", "l", "d", "noise_std", "seed"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"{spec_path}: unknown keys {sorted(unknown)}")
    spec = SyntheticSpec(**data)
    write_synthetic_dataset(spec, out_dir)
    return spec
