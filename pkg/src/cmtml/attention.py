"""Query-conditioned clip attention and the two-stream selector.

One stream re-weights clip features by their relevance to the sentence
vector; the other passes the raw features through untouched so that the
attention can never suppress context the downstream recurrence needs.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from .errors import ConfigurationError
from .validation import ATTENTION_MODES, check_choice


class ClipAttention(nn.Module):
    """Per-clip scalar attention from a joint clip/query hidden layer.

    H = tanh(W_clip F_v + (W_query f_q) 1^T + b 1^T) with k hidden rows;
    the weight vector scores each column and a softmax over the l clips
    (numerically stabilized by max subtraction) yields one weight per clip.
    Each clip feature is scaled by its weight.
    """

    def __init__(self, feature_size: int, hidden_size: int):
        super().__init__()
        self.feature_size = feature_size
        self.hidden_size = hidden_size
        bound = 1.0 / math.sqrt(feature_size)
        self.w_clip = nn.Parameter(torch.empty(hidden_size, feature_size).uniform_(-bound, bound))
        self.w_query = nn.Parameter(torch.empty(hidden_size, feature_size).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.zeros(hidden_size))
        score_bound = 1.0 / math.sqrt(hidden_size)
        self.w_score = nn.Parameter(torch.empty(hidden_size).uniform_(-score_bound, score_bound))

    def forward(self, clip_seq: Tensor, query: Tensor) -> tuple[Tensor, Tensor]:
        """Return the attended sequence (..., d, l) and the weights (..., l)."""
        if clip_seq.shape[-2] != self.feature_size or query.shape[-1] != self.feature_size:
            raise ConfigurationError(
                f"attention expects feature size {self.feature_size}, "
                f"got clips {clip_seq.shape[-2]} and query {query.shape[-1]}"
            )
        hidden = torch.tanh(
            torch.matmul(self.w_clip, clip_seq)
            + (query @ self.w_query.T).unsqueeze(-1)
            + self.bias.unsqueeze(-1)
        )  # (..., k, l)
        scores = torch.einsum("k,...kl->...l", self.w_score, hidden)
        weights = torch.softmax(scores, dim=-1)
        return clip_seq * weights.unsqueeze(-2), weights


def two_stream(clip_seq: Tensor, query: Tensor, attention: ClipAttention | None,
               mode: str) -> list[Tensor]:
    """Select the recurrent input streams for the given attention mode.

    NA passes the raw features only, SA the attended features only, TA both
    (attended first). NA needs no attention module.
    """
    check_choice(mode, ATTENTION_MODES, "attention mode")
    if mode == "NA":
        return [clip_seq]
    if attention is None:
        raise ConfigurationError(f"attention mode {mode} requires an attention module")
    attended, _ = attention(clip_seq, query)
    if mode == "SA":
        return [attended]
    return [attended, clip_seq]
