"""Proposal evaluation: 2D score maps from integrated features (global path)
and from boundary score sequences (local path), masking, ensembling and
moment selection.

Map layout: an (l, l) array whose cell (x, y) scores the moment spanning
clips x..y inclusive; cells with x > y are invalid and forced to exactly 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .errors import ConfigurationError


def prelu(x, a):
    """Parametric ReLU: identity for positive inputs, slope ``a`` otherwise."""
    if isinstance(x, Tensor):
        a_t = a if isinstance(a, Tensor) else torch.as_tensor(a, dtype=x.dtype, device=x.device)
        return torch.where(x > 0, x, a_t * x)
    return x if x > 0 else a * x


class BoundaryScores(NamedTuple):
    start: Tensor       # (..., l), sigmoid outputs
    end: Tensor         # (..., l)
    momentness: Tensor  # (..., l)


@dataclass(frozen=True)
class MomentPrediction:
    t_start: float
    t_end: float
    score: float
    start_idx: int
    end_idx: int
    degenerate: bool = False


class RankedCell(NamedTuple):
    start_idx: int
    end_idx: int
    score: float


def _check_stack(layers: Sequence[Sequence[int]], final_filters: int, name: str) -> list[tuple[int, int, int]]:
    stack = [tuple(int(v) for v in layer) for layer in layers]
    if not stack:
        raise ConfigurationError(f"{name}: empty conv stack")
    for i, (kernel, stride, filters) in enumerate(stack):
        if kernel % 2 == 0 or kernel < 1:
            raise ConfigurationError(f"{name}[{i}]: kernel must be odd, got {kernel}")
        if stride != 1:
            raise ConfigurationError(f"{name}[{i}]: stride must be 1 to preserve the map size")
        if filters < 1:
            raise ConfigurationError(f"{name}[{i}]: filters must be >= 1")
    if stack[-1][2] != final_filters:
        raise ConfigurationError(f"{name}: final layer must emit {final_filters} channels, got {stack[-1][2]}")
    return stack


class _ConvStack(nn.Module):
    """conv -> batch-norm -> pReLU repeated, final conv, sigmoid at the end.

    Batch norm uses batch statistics in train mode and running statistics
    (momentum 0.1) in eval mode; each pReLU carries one learnable slope.
    """

    def __init__(self, in_channels: int, layers, final_filters: int, name: str, *, dims: int):
        super().__init__()
        stack = _check_stack(layers, final_filters, name)
        conv_cls = nn.Conv2d if dims == 2 else nn.Conv1d
        norm_cls = nn.BatchNorm2d if dims == 2 else nn.BatchNorm1d
        ops: list[nn.Module] = []
        channels = in_channels
        for kernel, _stride, filters in stack[:-1]:
            ops.append(conv_cls(channels, filters, kernel, padding=kernel // 2))
            ops.append(norm_cls(filters))
            ops.append(nn.PReLU(num_parameters=1, init=0.25))
            channels = filters
        kernel, _stride, filters = stack[-1]
        ops.append(conv_cls(channels, filters, kernel, padding=kernel // 2))
        self.body = nn.Sequential(*ops)

    def forward(self, x: Tensor) -> Tensor:
        return torch.sigmoid(self.body(x))


class GlobalMapHead(nn.Module):
    """2D score map straight from the integrated features.

    The base tensor pairs boundary columns: channel block one at (x, y) is
    feature column x, block two is column y. A conv stack then mixes
    neighborhoods so each cell can see the surrounding proposals.
    """

    def __init__(self, in_channels: int, layers):
        super().__init__()
        self.stack = _ConvStack(2 * in_channels, layers, 1, "global_stack", dims=2)

    def forward(self, integrated: Tensor) -> Tensor:
        # integrated: (B, P, l) -> map (B, l, l)
        b, p, l = integrated.shape
        start_part = integrated.unsqueeze(3).expand(b, p, l, l)  # dim 2 = start clip x
        end_part = integrated.unsqueeze(2).expand(b, p, l, l)    # dim 3 = end clip y
        base = torch.cat([start_part, end_part], dim=1)
        return self.stack(base).squeeze(1)


class BoundaryHead(nn.Module):
    """Three score sequences (start, end, momentness) from shared 1D convs."""

    def __init__(self, in_channels: int, layers):
        super().__init__()
        self.stack = _ConvStack(in_channels, layers, 3, "head_stack", dims=1)

    def forward(self, integrated: Tensor) -> BoundaryScores:
        out = self.stack(integrated)  # (B, 3, l)
        return BoundaryScores(start=out[:, 0], end=out[:, 1], momentness=out[:, 2])


def span_mean_momentness(momentness: Tensor) -> Tensor:
    """Mean momentness over clips x..y for every valid cell: (..., l) -> (..., l, l)."""
    l = momentness.shape[-1]
    sums = torch.cumsum(momentness, dim=-1)
    sums = torch.cat([torch.zeros_like(sums[..., :1]), sums], dim=-1)  # (..., l + 1)
    span_sum = sums.unsqueeze(-2) - sums.unsqueeze(-1)[..., :-1, :]
    # span_sum[..., x, y + 1] is sum over x..y; slice columns 1.. to align.
    span_sum = span_sum[..., 1:]
    idx = torch.arange(l, device=momentness.device)
    counts = (idx.unsqueeze(0) - idx.unsqueeze(1) + 1).clamp(min=1).to(momentness.dtype)
    valid = (idx.unsqueeze(0) >= idx.unsqueeze(1)).to(momentness.dtype)
    return span_sum / counts * valid


class LocalMapHead(nn.Module):
    """2D score map from the boundary score sequences.

    Base channels at cell (x, y): start score at x, end score at y, and the
    mean momentness over the span x..y (0 below the diagonal).
    """

    def __init__(self, layers):
        super().__init__()
        self.stack = _ConvStack(3, layers, 1, "local_stack", dims=2)

    def forward(self, scores: BoundaryScores) -> Tensor:
        start, end, momentness = scores
        l = start.shape[-1]
        start_plane = start.unsqueeze(-1).expand(*start.shape, l)   # (..., x, y) = start[x]
        end_plane = end.unsqueeze(-2).expand(*end.shape[:-1], l, l)  # (..., x, y) = end[y]
        moment_plane = span_mean_momentness(momentness)
        base = torch.stack([start_plane, end_plane, moment_plane], dim=-3)
        if base.ndim == 3:
            base = base.unsqueeze(0)
            return self.stack(base).squeeze(1).squeeze(0)
        return self.stack(base).squeeze(1)


def make_mask(l: int, *, dtype=torch.float32, device=None) -> Tensor:
    """Validity mask over the (start, end) grid: 1 where start <= end, else 0."""
    if l < 1:
        raise ConfigurationError(f"mask size must be >= 1, got {l}")
    return torch.triu(torch.ones(l, l, dtype=dtype, device=device))


def ensemble(global_map: Tensor, local_map: Tensor, mask: Tensor) -> Tensor:
    """Element-wise product of the two submaps and the validity mask."""
    return global_map * local_map * mask


def _as_score_array(score_map) -> np.ndarray:
    if isinstance(score_map, Tensor):
        score_map = score_map.detach().cpu().numpy()
    arr = np.asarray(score_map, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigurationError(f"expected a square (l, l) score map, got shape {arr.shape}")
    return arr


def select_moment(score_map, duration: float) -> MomentPrediction:
    """Pick the highest-scoring valid cell and convert it to seconds.

    Only cells on or above the diagonal are candidates, so an injected
    below-diagonal value can never win. Ties go to the smallest start clip,
    then the smallest end clip. An all-zero valid region yields cell (0, 0)
    with the degenerate flag set.
    """
    arr = _as_score_array(score_map)
    l = arr.shape[0]
    candidates = np.where(np.triu(np.ones_like(arr, dtype=bool)), arr, -np.inf)
    flat_idx = int(np.argmax(candidates))  # row-major argmax = lexicographic tie-break
    x, y = divmod(flat_idx, l)
    score = float(arr[x, y])
    t_start, t_end = x * duration / l, (y + 1) * duration / l
    return MomentPrediction(
        t_start=t_start,
        t_end=t_end,
        score=score,
        start_idx=x,
        end_idx=y,
        degenerate=(score == 0.0),
    )


def rank_moments(score_map, n: int) -> list[RankedCell]:
    """All valid cells sorted by descending score with the argmax tie-break;
    at most n entries, or every valid cell if n exceeds their count."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    arr = _as_score_array(score_map)
    xs, ys = np.triu_indices(arr.shape[0])
    values = arr[xs, ys]
    order = np.lexsort((ys, xs, -values))
    take = order[: min(n, len(order))]
    return [RankedCell(int(xs[i]), int(ys[i]), float(values[i])) for i in take]


def write_map_pgm(score_map, path) -> None:
    """Plain-text PGM (P2) dump; scores in [0, 1] scaled to 0..255, row = start clip."""
    arr = _as_score_array(score_map)
    levels = np.clip(np.rint(arr * 255), 0, 255).astype(int)
    l = arr.shape[0]
    lines = [f"P2", f"{l} {l}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in levels)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_map_csv(score_map, path) -> None:
    arr = _as_score_array(score_map)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([f"{v:.10g}" for v in row])
