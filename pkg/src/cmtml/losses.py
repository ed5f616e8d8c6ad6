"""Training targets and objective terms.

Targets per annotation: the IoU of every valid map cell against the true
clip span, soft-labelled start/end distributions (discrete Gaussian around
the boundary clip, renormalized) and the binary momentness indicator.

The objective is masked binary cross-entropy on the score map plus
KL-divergence terms on the three boundary sequences, combined as
map + lambda_local * local.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .config import LossConfig
from .data import MomentAnnotation
from .errors import ConfigurationError


def interval_iou(a_start: int, a_end: int, b_start: int, b_end: int) -> float:
    """IoU of two inclusive clip spans, counted in clips."""
    if a_start > a_end:
        raise ValueError(f"invalid interval ({a_start}, {a_end})")
    if b_start > b_end:
        raise ValueError(f"invalid interval ({b_start}, {b_end})")
    inter = min(a_end, b_end) - max(a_start, b_start) + 1
    if inter <= 0:
        return 0.0
    union = (a_end - a_start + 1) + (b_end - b_start + 1) - inter
    return inter / union


@dataclass
class GroundTruthTargets:
    iou_map: np.ndarray        # (l, l), zero below the diagonal
    gt_start: np.ndarray       # (l,), sums to 1
    gt_end: np.ndarray         # (l,), sums to 1
    gt_momentness: np.ndarray  # (l,), binary indicator


def soft_label(center: int, l: int, sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian around a boundary clip; one-hot at sigma = 0."""
    if sigma <= 0:
        out = np.zeros(l)
        out[center] = 1.0
        return out
    idx = np.arange(l, dtype=np.float64)
    weights = np.exp(-0.5 * ((idx - center) / sigma) ** 2)
    return weights / weights.sum()


def build_targets(ann: MomentAnnotation, l: int, cfg: LossConfig) -> GroundTruthTargets:
    if not (0 <= ann.start_idx <= ann.end_idx < l):
        raise ConfigurationError(f"annotation span ({ann.start_idx}, {ann.end_idx}) outside [0, {l})")
    xs = np.arange(l)[:, None]
    ys = np.arange(l)[None, :]
    inter = np.minimum(ys, ann.end_idx) - np.maximum(xs, ann.start_idx) + 1
    union = (ys - xs + 1) + (ann.end_idx - ann.start_idx + 1) - inter
    iou = np.where((ys >= xs) & (inter > 0), inter / np.maximum(union, 1), 0.0)
    momentness = np.zeros(l)
    momentness[ann.start_idx:ann.end_idx + 1] = 1.0
    return GroundTruthTargets(
        iou_map=iou,
        gt_start=soft_label(ann.start_idx, l, cfg.soft_label_sigma),
        gt_end=soft_label(ann.end_idx, l, cfg.soft_label_sigma),
        gt_momentness=momentness,
    )


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value.to(dtype=like.dtype, device=like.device)
    return torch.as_tensor(np.asarray(value), dtype=like.dtype, device=like.device)


def map_loss(pred, target, mask, epsilon: float = 1e-8) -> Tensor:
    """Binary cross-entropy averaged over the valid (mask = 1) cells only.

    Invalid cells are forced to zero upstream and carry no signal, so they
    are excluded from the mean. Predictions are clamped away from {0, 1}.
    """
    if not isinstance(pred, Tensor):
        pred = torch.as_tensor(np.asarray(pred, dtype=np.float64))
    target_t = _as_tensor(target, pred)
    mask_t = _as_tensor(mask, pred)
    p = pred.clamp(min=epsilon, max=1.0 - epsilon)
    per_cell = -(target_t * torch.log(p) + (1.0 - target_t) * torch.log1p(-p))
    mask_b = mask_t.expand_as(per_cell)
    return (per_cell * mask_b).sum() / mask_b.sum()


def kl_div(pred, target, epsilon: float = 1e-8) -> Tensor:
    """KL divergence along the last axis with additive epsilon smoothing.

    The prediction is L1-renormalized first (an all-zero row falls back to
    uniform); the target is expected to already sum to 1.
    """
    if not isinstance(pred, Tensor):
        pred = torch.as_tensor(np.asarray(pred, dtype=np.float64))
    target_t = _as_tensor(target, pred)
    total = pred.sum(dim=-1, keepdim=True)
    n = pred.shape[-1]
    uniform = torch.full_like(pred, 1.0 / n)
    p = torch.where(total > 0, pred / total.clamp(min=epsilon), uniform)
    ratio = (p + epsilon) / (target_t + epsilon)
    return (p * torch.log(ratio)).sum(dim=-1).mean()


def normalize_indicator(indicator: np.ndarray) -> np.ndarray:
    """L1-normalize a momentness indicator; an all-zero row falls back to uniform."""
    arr = np.asarray(indicator, dtype=np.float64)
    total = arr.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        warnings.warn("all-zero momentness target, falling back to a uniform distribution")
        arr = np.where(total == 0, 1.0, arr)
        total = arr.sum(axis=-1, keepdims=True)
    return arr / total


def local_loss(scores, targets, cfg: LossConfig) -> Tensor:
    """KL terms for start, end and momentness: K(start) + K(end) + lambda_m K(momentness).

    ``scores`` holds the predicted sequences (each (..., l)); ``targets`` may
    be a single GroundTruthTargets or a batch given as stacked arrays with
    matching leading dimensions. Both the momentness prediction and its
    binary target are L1-normalized before the KL term.
    """
    if isinstance(targets, GroundTruthTargets):
        gt_start, gt_end = targets.gt_start, targets.gt_end
        gt_m = normalize_indicator(targets.gt_momentness)
    else:
        gt_start, gt_end, gt_m_raw = targets
        gt_m = normalize_indicator(gt_m_raw)
    loss = kl_div(scores.start, gt_start, cfg.epsilon) + kl_div(scores.end, gt_end, cfg.epsilon)
    if cfg.lambda_m > 0:
        loss = loss + cfg.lambda_m * kl_div(scores.momentness, gt_m, cfg.epsilon)
    return loss


def total_loss(map_loss_value, local_loss_value, cfg: LossConfig):
    """Weighted objective: map term plus lambda_local times the local term."""
    return map_loss_value + cfg.lambda_local * local_loss_value
