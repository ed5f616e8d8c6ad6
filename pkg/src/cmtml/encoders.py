"""Video and sentence encoders.

The video side is a per-clip affine projection with tanh. The sentence side
embeds words with a frozen table and runs a bidirectional LSTM; the two
final states are concatenated and linearly projected to the common feature
size d.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch
from torch import Tensor, nn

from .data import EmbeddingTable
from .errors import ConfigurationError, InputError
from .recurrent import LSTMCell, zero_state


class QueryEncoding(NamedTuple):
    word_embeddings: Tensor  # (dim, N), no gradient
    sentence_vector: Tensor  # (d,)


class VideoProjection(nn.Module):
    """Affine map applied to every clip feature, followed by tanh."""

    def __init__(self, input_size: int, output_size: int):
        super().__init__()
        self.linear = nn.Linear(input_size, output_size)

    def forward(self, clips: Tensor) -> Tensor:
        # clips: (..., d_raw, l) -> (..., d, l)
        if clips.shape[-2] != self.linear.in_features:
            raise ConfigurationError(
                f"video features have {clips.shape[-2]} dims, projection expects {self.linear.in_features}"
            )
        return torch.tanh(self.linear(clips.transpose(-1, -2))).transpose(-1, -2)


class SentenceEncoder(nn.Module):
    """Bidirectional LSTM over word embeddings; final states projected to d.

    Dropout is applied to the concatenated final hidden states (the
    recurrent-layer output) before the projection. The embedding lookup
    happens outside this module, so no gradient can reach the table.
    """

    def __init__(self, embedding_dim: int, hidden_size: int, output_size: int, dropout: float = 0.0):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.forward_cell = LSTMCell(embedding_dim, hidden_size)
        self.backward_cell = LSTMCell(embedding_dim, hidden_size)
        self.dropout = nn.Dropout(dropout)
        self.projection = nn.Linear(2 * hidden_size, output_size)

    def forward(self, embeddings: Tensor, lengths: Tensor | None = None) -> Tensor:
        """Encode padded word embeddings (B, dim, N) into sentence vectors (B, d).

        ``lengths`` gives the real token count per batch row; padding columns
        beyond a row's length never touch its recurrent state.
        """
        if embeddings.ndim == 2:
            embeddings = embeddings.unsqueeze(0)
        batch, dim, n_words = embeddings.shape
        if dim != self.embedding_dim:
            raise ConfigurationError(f"embedding dim {dim} != configured {self.embedding_dim}")
        if n_words == 0:
            raise InputError("cannot encode an empty sentence")
        if lengths is None:
            lengths = torch.full((batch,), n_words, device=embeddings.device)
        lengths = lengths.reshape(batch, 1).to(embeddings.dtype)
        common = dict(dtype=embeddings.dtype, device=embeddings.device)

        def final_state(cell, time_order):
            pre_gates = cell.precompute_inputs(embeddings)
            u_all = cell.recurrence_matrix()
            state = zero_state(self.hidden_size, (batch,), **common)
            for t in time_order:
                new = cell.step_precomputed(pre_gates[:, t, :], u_all, state)
                active = (t < lengths).to(embeddings.dtype)
                state = type(state)(
                    active * new.hidden + (1 - active) * state.hidden,
                    active * new.cell + (1 - active) * state.cell,
                )
            return state.hidden

        forward_final = final_state(self.forward_cell, range(n_words))
        backward_final = final_state(self.backward_cell, reversed(range(n_words)))
        both = self.dropout(torch.cat([forward_final, backward_final], dim=-1))
        return self.projection(both)


def embed_tokens(tokens, table: EmbeddingTable, *, dtype=torch.float32, device=None) -> Tensor:
    """Look up frozen word vectors as a (dim, N) tensor that carries no gradient."""
    matrix = table.lookup(tokens)
    return torch.as_tensor(np.ascontiguousarray(matrix), dtype=dtype, device=device)


def encode_sentence(tokens, table: EmbeddingTable, encoder: SentenceEncoder) -> QueryEncoding:
    """Convenience single-sentence path: tokens -> frozen embeddings -> sentence vector."""
    params = next(encoder.parameters())
    words = embed_tokens(tokens, table, dtype=params.dtype, device=params.device)
    sentence = encoder(words.unsqueeze(0)).squeeze(0)
    return QueryEncoding(word_embeddings=words, sentence_vector=sentence)
