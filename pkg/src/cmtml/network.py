"""End-to-end localization network.

Pipeline per batch: project clip features, encode the sentence, select the
attention streams, run each stream through a bidirectional recurrence (the
cross-modal cell, or a plain LSTM over a fused sequence for the baseline
variants), concatenate the hidden states, and score proposals with the
global and/or local submodule. The final map is the masked element-wise
product of whatever submaps the eval mode enables; a disabled submodule
contributes an all-ones map, so GE and LE are exactly the GL pipeline with
one side replaced by ones.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import Tensor, nn

from .attention import ClipAttention, two_stream
from .config import ModelConfig
from .encoders import SentenceEncoder, VideoProjection
from .errors import ConfigurationError
from .proposal import BoundaryHead, BoundaryScores, GlobalMapHead, LocalMapHead, make_mask
from .recurrent import BaselineFusion, BidirectionalCrossModal, BidirectionalSequence
from .validation import ATTENTION_MODES, EVAL_MODES, FUSION_VARIANTS, check_choice


class NetworkOutput(NamedTuple):
    score_map: Tensor            # (B, l, l), masked final map
    global_map: Tensor           # (B, l, l), ones when the global path is off
    local_map: Tensor            # (B, l, l), ones when the local path is off
    boundary: BoundaryScores | None


class MomentLocalizationNetwork(nn.Module):
    def __init__(self, model: ModelConfig, d_raw: int, *, embedding_dim: int = 300,
                 attention_mode: str = "TA", eval_mode: str = "GL", fusion: str = "CM_LSTM"):
        super().__init__()
        check_choice(attention_mode, ATTENTION_MODES, "attention_mode")
        check_choice(eval_mode, EVAL_MODES, "eval_mode")
        check_choice(fusion, FUSION_VARIANTS, "fusion")
        if d_raw < 1:
            raise ConfigurationError(f"d_raw must be >= 1, got {d_raw}")
        self.model = model
        self.attention_mode = attention_mode
        self.eval_mode = eval_mode
        self.fusion = fusion

        self.video_projection = VideoProjection(d_raw, model.d)
        self.sentence_encoder = SentenceEncoder(embedding_dim, model.p, model.d, model.dropout)
        self.attention = ClipAttention(model.d, model.k) if attention_mode != "NA" else None

        n_streams = 2 if attention_mode == "TA" else 1
        if fusion == "CM_LSTM":
            self.fusion_mix = None
            if model.share_stream_params:
                shared = BidirectionalCrossModal(model.d, model.p)
                self.stream_runners = nn.ModuleList([shared] * n_streams)
            else:
                self.stream_runners = nn.ModuleList(
                    BidirectionalCrossModal(model.d, model.p) for _ in range(n_streams)
                )
        else:
            self.fusion_mix = BaselineFusion(fusion, model.d)
            if model.share_stream_params:
                shared = BidirectionalSequence(self.fusion_mix.fused_size, model.p)
                self.stream_runners = nn.ModuleList([shared] * n_streams)
            else:
                self.stream_runners = nn.ModuleList(
                    BidirectionalSequence(self.fusion_mix.fused_size, model.p)
                    for _ in range(n_streams)
                )
        self.integrated_size = 2 * model.p * n_streams
        self.feature_dropout = nn.Dropout(model.dropout)

        self.global_head = (
            GlobalMapHead(self.integrated_size, model.global_stack) if eval_mode in ("GE", "GL") else None
        )
        if eval_mode in ("LE", "GL"):
            self.boundary_head = BoundaryHead(self.integrated_size, model.head_stack)
            self.local_head = LocalMapHead(model.local_stack)
        else:
            self.boundary_head = None
            self.local_head = None
        self.register_buffer("valid_mask", make_mask(model.l))

    def integrated_features(self, clips: Tensor, query_embeddings: Tensor,
                            query_lengths: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Shared front half: returns (integrated features (B, P, l), sentence vector (B, d))."""
        projected = self.video_projection(clips)
        sentence = self.sentence_encoder(query_embeddings, query_lengths)
        streams = two_stream(projected, sentence, self.attention, self.attention_mode)
        hidden = [runner(stream, sentence) if self.fusion == "CM_LSTM"
                  else runner(self.fusion_mix(stream, sentence))
                  for runner, stream in zip(self.stream_runners, streams)]
        return self.feature_dropout(torch.cat(hidden, dim=-2)), sentence

    def forward(self, clips: Tensor, query_embeddings: Tensor,
                query_lengths: Tensor | None = None) -> NetworkOutput:
        if clips.shape[-1] != self.model.l:
            raise ConfigurationError(f"expected {self.model.l} clips, got {clips.shape[-1]}")
        integrated, _ = self.integrated_features(clips, query_embeddings, query_lengths)
        batch = integrated.shape[0]
        l = self.model.l
        ones = integrated.new_ones((batch, l, l))

        global_map = self.global_head(integrated) if self.global_head is not None else ones
        if self.boundary_head is not None:
            boundary = self.boundary_head(integrated)
            local_map = self.local_head(boundary)
        else:
            boundary = None
            local_map = ones
        mask = self.valid_mask.to(dtype=integrated.dtype)
        score_map = global_map * local_map * mask
        return NetworkOutput(score_map=score_map, global_map=global_map,
                             local_map=local_map, boundary=boundary)
