"""Recurrent cores: the cross-modal LSTM cell, a reference LSTM cell,
bidirectional runners and the baseline fusion schemes.

The cross-modal cell consumes a clip feature and the sentence feature at
every step. A softmax filter computed from both inputs re-weights each
modal path, and a fourth gate (the modal gate) blends the two attended
paths into the cell candidate. Everything else follows the standard LSTM
state update.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import torch
from torch import Tensor, nn

from .errors import ConfigurationError
from .validation import FUSION_VARIANTS, check_choice


class CellState(NamedTuple):
    hidden: Tensor  # (..., p)
    cell: Tensor    # (..., p)


def zero_state(hidden_size: int, batch_shape: tuple[int, ...] = (), *,
               dtype=None, device=None) -> CellState:
    shape = (*batch_shape, hidden_size)
    return CellState(
        torch.zeros(shape, dtype=dtype, device=device),
        torch.zeros(shape, dtype=dtype, device=device),
    )


def _init_uniform(module: nn.Module, hidden_size: int) -> None:
    # Standard recurrent init: U(-1/sqrt(p), 1/sqrt(p)) for every tensor.
    bound = 1.0 / math.sqrt(hidden_size)
    for param in module.parameters():
        nn.init.uniform_(param, -bound, bound)


class LSTMCell(nn.Module):
    """Plain LSTM cell with forget/input/output gates and a tanh candidate.

    Kept as an explicit reference implementation: the sentence encoder and
    the baseline fusion runners are built on it, and tests pin its arithmetic
    against a scalar oracle.
    """

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        p, d = hidden_size, input_size
        for gate in ("f", "i", "o", "c"):
            setattr(self, f"w_{gate}", nn.Parameter(torch.empty(p, d)))
            setattr(self, f"u_{gate}", nn.Parameter(torch.empty(p, p)))
            setattr(self, f"b_{gate}", nn.Parameter(torch.empty(p)))
        _init_uniform(self, hidden_size)

    def forward(self, x: Tensor, state: CellState) -> CellState:
        if x.shape[-1] != self.input_size:
            raise ConfigurationError(f"cell input size {x.shape[-1]} != configured {self.input_size}")
        h_prev, c_prev = state
        forget = torch.sigmoid(x @ self.w_f.T + h_prev @ self.u_f.T + self.b_f)
        update = torch.sigmoid(x @ self.w_i.T + h_prev @ self.u_i.T + self.b_i)
        candidate = torch.tanh(x @ self.w_c.T + h_prev @ self.u_c.T + self.b_c)
        cell = forget * c_prev + update * candidate
        out = torch.sigmoid(x @ self.w_o.T + h_prev @ self.u_o.T + self.b_o)
        hidden = out * torch.tanh(cell)
        return CellState(hidden, cell)

    # -- sequence fast path -------------------------------------------------
    # The input-side pre-activations have no recurrent dependence, so a whole
    # sequence can be projected in one matmul per weight block; per step only
    # the hidden-state recurrence remains. Identical arithmetic to forward()
    # up to floating-point reassociation.

    def precompute_inputs(self, sequence: Tensor) -> Tensor:
        """Gate pre-activations for a (..., d, l) sequence: (..., l, 4p), order f/i/c/o."""
        seq = sequence.transpose(-1, -2)
        w_all = torch.cat([self.w_f, self.w_i, self.w_c, self.w_o])
        b_all = torch.cat([self.b_f, self.b_i, self.b_c, self.b_o])
        return seq @ w_all.T + b_all

    def recurrence_matrix(self) -> Tensor:
        return torch.cat([self.u_f, self.u_i, self.u_c, self.u_o])

    def step_precomputed(self, pre_gates_t: Tensor, u_all: Tensor, state: CellState) -> CellState:
        h_prev, c_prev = state
        acts = pre_gates_t + h_prev @ u_all.T
        pre_f, pre_i, pre_c, pre_o = acts.chunk(4, dim=-1)
        forget = torch.sigmoid(pre_f)
        update = torch.sigmoid(pre_i)
        candidate = torch.tanh(pre_c)
        cell = forget * c_prev + update * candidate
        hidden = torch.sigmoid(pre_o) * torch.tanh(cell)
        return CellState(hidden, cell)


class CrossModalLSTMCell(nn.Module):
    """LSTM cell taking a clip feature and the sentence feature at each step.

    Per step, a softmax filter over the hidden coordinates is derived from
    both inputs and applied to the projected clip path and sentence path;
    a modal gate m blends the two paths into the candidate:

        filter = softmax(Wm tanh(Wq q + Wv v))        over the p coordinates
        clip_path   = tanh(filter * (Wcv v) + Uc h)
        query_path  = tanh(filter * (Wcq q) + Uc h)
        f, i, m, o  = sigmoid(Wx* v + Wy* q + U* h + b*)
        candidate   = m * clip_path + (1 - m) * query_path
        C = f * C_prev + i * candidate;  h = o * tanh(C)

    The recurrence matrix Uc is shared between the two paths.
    """

    def __init__(self, feature_size: int, hidden_size: int):
        super().__init__()
        self.feature_size = feature_size
        self.hidden_size = hidden_size
        p, d = hidden_size, feature_size
        # cross-modal filter
        self.w_filter_query = nn.Parameter(torch.empty(p, d))
        self.w_filter_clip = nn.Parameter(torch.empty(p, d))
        self.w_filter_mix = nn.Parameter(torch.empty(p, p))
        # modal paths with shared recurrence
        self.w_clip_path = nn.Parameter(torch.empty(p, d))
        self.w_query_path = nn.Parameter(torch.empty(p, d))
        self.u_context = nn.Parameter(torch.empty(p, p))
        # gates: x = clip input, y = query input
        for gate in ("f", "i", "m", "o"):
            setattr(self, f"w_x{gate}", nn.Parameter(torch.empty(p, d)))
            setattr(self, f"w_y{gate}", nn.Parameter(torch.empty(p, d)))
            setattr(self, f"u_{gate}", nn.Parameter(torch.empty(p, p)))
            setattr(self, f"b_{gate}", nn.Parameter(torch.empty(p)))
        _init_uniform(self, hidden_size)

    def modal_filter(self, clip_feat: Tensor, query_feat: Tensor) -> Tensor:
        """Softmax filter over the p hidden coordinates; rows sum to 1."""
        mixed = torch.tanh(query_feat @ self.w_filter_query.T + clip_feat @ self.w_filter_clip.T)
        return torch.softmax(mixed @ self.w_filter_mix.T, dim=-1)

    def forward(self, clip_feat: Tensor, query_feat: Tensor, state: CellState) -> CellState:
        if clip_feat.shape[-1] != self.feature_size or query_feat.shape[-1] != self.feature_size:
            raise ConfigurationError(
                f"expected clip/query feature size {self.feature_size}, "
                f"got {clip_feat.shape[-1]} and {query_feat.shape[-1]}"
            )
        h_prev, c_prev = state
        gate_filter = self.modal_filter(clip_feat, query_feat)
        clip_path = torch.tanh(gate_filter * (clip_feat @ self.w_clip_path.T) + h_prev @ self.u_context.T)
        query_path = torch.tanh(gate_filter * (query_feat @ self.w_query_path.T) + h_prev @ self.u_context.T)

        def gate(name: str) -> Tensor:
            w_x = getattr(self, f"w_x{name}")
            w_y = getattr(self, f"w_y{name}")
            u = getattr(self, f"u_{name}")
            b = getattr(self, f"b_{name}")
            return torch.sigmoid(clip_feat @ w_x.T + query_feat @ w_y.T + h_prev @ u.T + b)

        forget, update, modal, out = gate("f"), gate("i"), gate("m"), gate("o")
        candidate = modal * clip_path + (1.0 - modal) * query_path
        cell = forget * c_prev + update * candidate
        hidden = out * torch.tanh(cell)
        return CellState(hidden, cell)

    # -- sequence fast path -------------------------------------------------
    # The filter and every input-side projection depend only on the inputs,
    # never on the hidden state, so they are computed for the whole clip
    # sequence up front; the per-step work reduces to the two recurrence
    # matmuls. Same arithmetic as forward() up to float reassociation.

    def precompute_inputs(self, stream: Tensor, query: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Per-step input pre-activations for a (..., d, l) stream.

        Returns (filtered clip path (..., l, p), filtered query path
        (..., l, p), gate pre-activations (..., l, 4p) in f/i/m/o order).
        """
        seq = stream.transpose(-1, -2)  # (..., l, d)
        q = query.unsqueeze(-2)         # (..., 1, d)
        mixed = torch.tanh(q @ self.w_filter_query.T + seq @ self.w_filter_clip.T)
        gate_filter = torch.softmax(mixed @ self.w_filter_mix.T, dim=-1)
        pre_clip = gate_filter * (seq @ self.w_clip_path.T)
        pre_query = gate_filter * (q @ self.w_query_path.T)
        w_x = torch.cat([self.w_xf, self.w_xi, self.w_xm, self.w_xo])
        w_y = torch.cat([self.w_yf, self.w_yi, self.w_ym, self.w_yo])
        b_all = torch.cat([self.b_f, self.b_i, self.b_m, self.b_o])
        pre_gates = seq @ w_x.T + q @ w_y.T + b_all
        return pre_clip, pre_query, pre_gates

    def recurrence_matrix(self) -> Tensor:
        return torch.cat([self.u_f, self.u_i, self.u_m, self.u_o])

    def step_precomputed(self, pre_clip_t: Tensor, pre_query_t: Tensor, pre_gates_t: Tensor,
                         u_all: Tensor, state: CellState) -> CellState:
        h_prev, c_prev = state
        gates = torch.sigmoid(pre_gates_t + h_prev @ u_all.T)
        forget, update, modal, out = gates.chunk(4, dim=-1)
        recur = h_prev @ self.u_context.T
        clip_path = torch.tanh(pre_clip_t + recur)
        query_path = torch.tanh(pre_query_t + recur)
        candidate = modal * clip_path + (1.0 - modal) * query_path
        cell = forget * c_prev + update * candidate
        hidden = out * torch.tanh(cell)
        return CellState(hidden, cell)


def run_bidirectional(forward_cell: CrossModalLSTMCell, backward_cell: CrossModalLSTMCell,
                      stream: Tensor, query: Tensor) -> Tensor:
    """Run a cross-modal cell over a clip sequence in both directions.

    ``stream`` is (..., d, l) and ``query`` (..., d); the query is held
    constant across all timesteps and both directions start from zero state.
    Output column t stacks the forward state after clips 0..t on top of the
    backward state after clips l-1..t, giving (..., 2p, l).
    """
    length = stream.shape[-1]
    batch_shape = stream.shape[:-2]
    common = dict(dtype=stream.dtype, device=stream.device)

    def one_direction(cell, time_order):
        pre_clip, pre_query, pre_gates = cell.precompute_inputs(stream, query)
        u_all = cell.recurrence_matrix()
        hiddens = [None] * length
        state = zero_state(cell.hidden_size, batch_shape, **common)
        for t in time_order:
            state = cell.step_precomputed(
                pre_clip[..., t, :], pre_query[..., t, :], pre_gates[..., t, :], u_all, state
            )
            hiddens[t] = state.hidden
        return torch.stack(hiddens, dim=-1)

    fwd = one_direction(forward_cell, range(length))
    bwd = one_direction(backward_cell, reversed(range(length)))
    return torch.cat([fwd, bwd], dim=-2)


def run_bidirectional_sequence(forward_cell: LSTMCell, backward_cell: LSTMCell,
                               sequence: Tensor) -> Tensor:
    """Same contract as :func:`run_bidirectional` for the single-input LSTM cell."""
    length = sequence.shape[-1]
    batch_shape = sequence.shape[:-2]
    common = dict(dtype=sequence.dtype, device=sequence.device)

    def one_direction(cell, time_order):
        pre_gates = cell.precompute_inputs(sequence)
        u_all = cell.recurrence_matrix()
        hiddens = [None] * length
        state = zero_state(cell.hidden_size, batch_shape, **common)
        for t in time_order:
            state = cell.step_precomputed(pre_gates[..., t, :], u_all, state)
            hiddens[t] = state.hidden
        return torch.stack(hiddens, dim=-1)

    fwd = one_direction(forward_cell, range(length))
    bwd = one_direction(backward_cell, reversed(range(length)))
    return torch.cat([fwd, bwd], dim=-2)


class BidirectionalCrossModal(nn.Module):
    """A forward/backward pair of cross-modal cells over one stream."""

    def __init__(self, feature_size: int, hidden_size: int):
        super().__init__()
        self.forward_cell = CrossModalLSTMCell(feature_size, hidden_size)
        self.backward_cell = CrossModalLSTMCell(feature_size, hidden_size)

    def forward(self, stream: Tensor, query: Tensor) -> Tensor:
        return run_bidirectional(self.forward_cell, self.backward_cell, stream, query)


class BidirectionalSequence(nn.Module):
    """A forward/backward pair of plain LSTM cells over one fused sequence."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.forward_cell = LSTMCell(input_size, hidden_size)
        self.backward_cell = LSTMCell(input_size, hidden_size)

    def forward(self, sequence: Tensor) -> Tensor:
        return run_bidirectional_sequence(self.forward_cell, self.backward_cell, sequence)


def integrate(streams: Sequence[Tensor], query: Tensor,
              runners: Sequence[BidirectionalCrossModal]) -> Tensor:
    """Run each stream through its bidirectional runner and stack the hidden
    states along the feature axis: (..., 2p * n_streams, l)."""
    if len(streams) != len(runners):
        raise ConfigurationError(f"{len(streams)} streams but {len(runners)} runners")
    return torch.cat([runner(stream, query) for runner, stream in zip(runners, streams)], dim=-2)


class BaselineFusion(nn.Module):
    """Clip/sentence fusion schemes used in place of the cross-modal cell.

    EM multiplies each clip feature by the sentence feature; CAT concatenates
    them; CTRL concatenates the element-wise sum, the element-wise product and
    a learned linear blend of the concatenation. The fused sequence is meant
    to feed a plain bidirectional LSTM.
    """

    def __init__(self, variant: str, feature_size: int):
        super().__init__()
        check_choice(variant, FUSION_VARIANTS[1:], "fusion variant")
        self.variant = variant
        self.feature_size = feature_size
        self.blend = nn.Linear(2 * feature_size, feature_size) if variant == "CTRL" else None

    @property
    def fused_size(self) -> int:
        return {"EM": 1, "CAT": 2, "CTRL": 3}[self.variant] * self.feature_size

    def forward(self, clip_seq: Tensor, query: Tensor) -> Tensor:
        # clip_seq: (..., d, l), query: (..., d)
        q = query.unsqueeze(-1)
        if self.variant == "EM":
            return clip_seq * q
        q_seq = q.expand_as(clip_seq)
        if self.variant == "CAT":
            return torch.cat([clip_seq, q_seq], dim=-2)
        stacked = torch.cat([clip_seq, q_seq], dim=-2)
        blended = self.blend(stacked.transpose(-1, -2)).transpose(-1, -2)
        return torch.cat([clip_seq + q, clip_seq * q, blended], dim=-2)
