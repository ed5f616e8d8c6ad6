"""Scikit-learn style estimator wrapping the full training and inference loop.

``TemporalMomentLocalizer`` follows the sklearn contract: constructor
arguments are stored verbatim (so ``get_params`` / ``set_params`` / ``clone``
work), learned state lives in trailing-underscore attributes, ``fit`` takes a
sequence of samples and returns ``self``, and ``predict`` maps held-out
samples to time intervals.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .config import LossConfig, ModelConfig
from .data import EmbeddingTable, LocalizationSample
from .errors import ConfigurationError, InputError, TrainingDivergedError
from .losses import build_targets, local_loss, map_loss, total_loss
from .metrics import recall_at
from .network import MomentLocalizationNetwork
from .proposal import MomentPrediction, rank_moments, select_moment
from .validation import check_feature_array, check_tokens

logger = logging.getLogger(__name__)


class TemporalMomentLocalizer(BaseEstimator):
    """Localize the moment described by a sentence query in a clip sequence.

    Parameters mirror the run configuration: network sizes (l, d, p, k),
    the ablation switches (attention_mode, eval_mode, fusion), optimizer
    settings and loss weights. ``fit`` expects an iterable of
    :class:`~cmtml.data.LocalizationSample` plus a frozen embedding table.
    """

    def __init__(self, l=64, d=256, p=256, k=32, dropout=0.5,
                 attention_mode="TA", eval_mode="GL", fusion="CM_LSTM",
                 learning_rate=0.001, batch_size=32, epochs=20, seed=0,
                 lambda_local=2.0, lambda_m=2.0, soft_label_sigma=1.0, epsilon=1e-8,
                 global_stack=None, head_stack=None, local_stack=None,
                 share_stream_params=False, grad_clip=None, embedding_dim=300,
                 log_every=0):
        self.l = l
        self.d = d
        self.p = p
        self.k = k
        self.dropout = dropout
        self.attention_mode = attention_mode
        self.eval_mode = eval_mode
        self.fusion = fusion
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.lambda_local = lambda_local
        self.lambda_m = lambda_m
        self.soft_label_sigma = soft_label_sigma
        self.epsilon = epsilon
        self.global_stack = global_stack
        self.head_stack = head_stack
        self.local_stack = local_stack
        self.share_stream_params = share_stream_params
        self.grad_clip = grad_clip
        self.embedding_dim = embedding_dim
        self.log_every = log_every

    # ------------------------------------------------------------------
    # configuration plumbing
    # ------------------------------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            l=self.l, d=self.d, p=self.p, k=self.k, dropout=self.dropout,
            global_stack=self.global_stack, head_stack=self.head_stack,
            local_stack=self.local_stack, share_stream_params=self.share_stream_params,
        )

    def _loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_local=self.lambda_local, lambda_m=self.lambda_m,
            soft_label_sigma=self.soft_label_sigma, epsilon=self.epsilon,
        )

    def build_network(self, d_raw: int) -> MomentLocalizationNetwork:
        return MomentLocalizationNetwork(
            self._model_config(), d_raw, embedding_dim=self.embedding_dim,
            attention_mode=self.attention_mode, eval_mode=self.eval_mode, fusion=self.fusion,
        )

    # ------------------------------------------------------------------
    # batching helpers
    # ------------------------------------------------------------------

    def _embed(self, tokens) -> np.ndarray:
        return self.embedding_table_.lookup(check_tokens(tokens))

    def _batch_queries(self, matrices: Sequence[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
        lengths = [m.shape[1] for m in matrices]
        width = max(lengths)
        padded = np.zeros((len(matrices), matrices[0].shape[0], width), dtype=np.float32)
        for i, m in enumerate(matrices):
            padded[i, :, : m.shape[1]] = m
        return torch.from_numpy(padded), torch.tensor(lengths)

    def _validate_samples(self, samples: Sequence[LocalizationSample], *, need_annotation: bool):
        if not samples:
            raise InputError("no samples given")
        d_raw = None
        for i, sample in enumerate(samples):
            feats = check_feature_array(sample.features, name=f"sample[{i}].features", n_clips=self.l)
            if d_raw is None:
                d_raw = feats.shape[0]
            elif feats.shape[0] != d_raw:
                raise InputError(f"sample[{i}]: feature dim {feats.shape[0]} != {d_raw}")
            check_tokens(sample.tokens)
            if need_annotation and sample.annotation is None:
                raise InputError(f"sample[{i}]: training requires an annotation")
        return d_raw

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    def fit(self, X, y=None, *, embedding_table: EmbeddingTable = None,
            epoch_callback=None):
        """Train on localization samples.

        ``embedding_table`` supplies the frozen word vectors. An optional
        ``epoch_callback(estimator, epoch, mean_loss)`` runs after every
        epoch (used for checkpointing).
        """
        samples = list(X)
        if embedding_table is None:
            raise InputError("fit requires an embedding_table")
        if embedding_table.dim != self.embedding_dim:
            raise ConfigurationError(
                f"embedding table dim {embedding_table.dim} != configured {self.embedding_dim}"
            )
        self.embedding_table_ = embedding_table
        d_raw = self._validate_samples(samples, need_annotation=True)
        loss_cfg = self._loss_config()

        torch.manual_seed(self.seed)
        self.network_ = self.build_network(d_raw)
        self.optimizer_ = torch.optim.Adam(self.network_.parameters(), lr=self.learning_rate)
        self.d_raw_ = d_raw
        shuffle_rng = np.random.default_rng(self.seed)
        self.shuffle_rng_ = shuffle_rng

        clip_tensor = torch.from_numpy(
            np.stack([np.asarray(s.features, dtype=np.float32) for s in samples])
        )
        query_matrices = [self._embed(s.tokens) for s in samples]
        targets = [build_targets(s.annotation, self.l, loss_cfg) for s in samples]
        iou_maps = torch.from_numpy(np.stack([t.iou_map for t in targets]).astype(np.float32))
        gt_start = np.stack([t.gt_start for t in targets]).astype(np.float32)
        gt_end = np.stack([t.gt_end for t in targets]).astype(np.float32)
        gt_moment = np.stack([t.gt_momentness for t in targets]).astype(np.float32)

        self.step_losses_ = []
        self.epoch_losses_ = []
        mask = self.network_.valid_mask
        n = len(samples)
        self.network_.train()
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            epoch_losses = []
            for batch_start in range(0, n, self.batch_size):
                idx = order[batch_start: batch_start + self.batch_size]
                idx_t = torch.from_numpy(idx)
                queries, lengths = self._batch_queries([query_matrices[i] for i in idx])
                output = self.network_(clip_tensor[idx_t], queries, lengths)
                loss_map = map_loss(output.score_map, iou_maps[idx_t], mask, loss_cfg.epsilon)
                if output.boundary is not None:
                    loss_local = local_loss(
                        output.boundary,
                        (gt_start[idx], gt_end[idx], gt_moment[idx]),
                        loss_cfg,
                    )
                else:
                    loss_local = torch.zeros((), dtype=loss_map.dtype)
                loss = total_loss(loss_map, loss_local, loss_cfg)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(self._divergence_report(epoch, batch_start, loss))
                self.optimizer_.zero_grad()
                loss.backward()
                if self.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(self.network_.parameters(), self.grad_clip)
                self.optimizer_.step()
                value = float(loss.detach())
                epoch_losses.append(value)
                self.step_losses_.append(value)
            mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
            self.epoch_losses_.append(mean_loss)
            if self.log_every and (epoch + 1) % self.log_every == 0:
                logger.info("epoch %d/%d mean loss %.6f", epoch + 1, self.epochs, mean_loss)
            if epoch_callback is not None:
                epoch_callback(self, epoch, mean_loss)
        self.network_.eval()
        return self

    def _divergence_report(self, epoch: int, batch_start: int, loss) -> str:
        norms = {
            name: float(param.detach().norm())
            for name, param in self.network_.named_parameters()
        }
        worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
        return (
            f"non-finite loss {loss} at epoch {epoch}, batch offset {batch_start}; "
            f"largest parameter norms: {worst}"
        )

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "network_"):
            raise ConfigurationError("estimator is not fitted")

    def localize(self, features, duration: float, tokens, *, return_map: bool = False):
        """Full forward pass on a single video/query pair.

        Returns a :class:`MomentPrediction`; with ``return_map`` also the
        post-mask score map as a numpy array.
        """
        self._require_fitted()
        feats = check_feature_array(features, n_clips=self.l)
        matrix = self._embed(tokens)
        was_training = self.network_.training
        self.network_.eval()
        try:
            with torch.no_grad():
                clips = torch.from_numpy(np.asarray(feats, dtype=np.float32)).unsqueeze(0)
                queries, lengths = self._batch_queries([matrix])
                output = self.network_(clips, queries, lengths)
        finally:
            self.network_.train(was_training)
        score_map = output.score_map.squeeze(0).numpy()
        prediction = select_moment(score_map, duration)
        if return_map:
            return prediction, score_map
        return prediction

    def rank(self, features, duration: float, tokens, n: int) -> list[tuple[float, float, float]]:
        """Top-n intervals in seconds, best first."""
        _, score_map = self.localize(features, duration, tokens, return_map=True)
        cells = rank_moments(score_map, n)
        scale = duration / self.l
        return [(c.start_idx * scale, (c.end_idx + 1) * scale, c.score) for c in cells]

    def predict(self, X) -> list[MomentPrediction]:
        """Localize each sample, using its annotation's video duration."""
        samples = list(X)
        self._validate_samples(samples, need_annotation=True)
        return [
            self.localize(s.features, s.annotation.duration, s.tokens)
            for s in samples
        ]

    def score(self, X, y=None) -> float:
        """R@1, IoU@0.5 against the samples' own annotations."""
        samples = list(X)
        predictions = self.predict(samples)
        ranked = [[(p.t_start, p.t_end)] for p in predictions]
        truths = [(s.annotation.t_start, s.annotation.t_end) for s in samples]
        return recall_at(ranked, truths, n=1, m=0.5)
