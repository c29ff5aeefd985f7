"""Pointer-generator decoder: attention over the read context, a vocabulary
distribution, a scalar switch, and the blended extractive/abstractive output.

The blended distribution concatenates p_t * a_t (one outcome per context
position, duplicates kept separate) with (1 - p_t) * v_t over the global
vocabulary, giving length l_c + |V|. PAD doubles as the stop symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import DiffTensor


class DecoderError(ValueError):
    """Bad decoder input (empty context, dimension mismatch)."""


@dataclass
class DecoderState:
    h: DiffTensor
    c: DiffTensor
    t: int


@dataclass
class BlendedDistribution:
    """Probabilities over l_c pointer outcomes followed by |V| vocab outcomes."""

    dist: DiffTensor
    switch: DiffTensor | None
    context_len: int

    @property
    def p_t(self) -> float:
        return float(self.switch.values) if self.switch is not None else 1.0

    def argmax(self) -> int:
        return int(np.argmax(self.dist.values[0]))


def init_decoder(Y: DiffTensor, w: DiffTensor, b: DiffTensor) -> DecoderState:
    """h_0 projects the mean-pooled context representation; c_0 is zero."""
    if Y.shape[0] < 1:
        raise DecoderError("init_decoder: empty context representation")
    h0 = ag.add(ag.matmul(ag.mean_pool(Y, axis=0), w), b)
    return DecoderState(h=h0, c=ag.zeros(h0.shape), t=0)


def question_pool(hq: DiffTensor, q_mask, w: DiffTensor, b: DiffTensor, v: DiffTensor,
                  pw: DiffTensor, pb: DiffTensor) -> DiffTensor:
    """Attentive pooling over question positions, projected to decoder width."""
    if hq.shape[0] < 1:
        raise DecoderError("question_pool: empty question representation")
    g = ag.tanh(ag.add(ag.matmul(hq, w), b))
    scores = ag.transpose(ag.matmul(g, v))
    mask = np.asarray(q_mask, dtype=bool)[None, :]
    attn = ag.masked_softmax(scores, mask)
    return ag.add(ag.matmul(ag.matmul(attn, hq), pw), pb)


def attention_inputs(Y: DiffTensor, wa: DiffTensor, ba: DiffTensor) -> DiffTensor:
    """Per-position projection of Y, shared by every decode step."""
    return ag.add(ag.matmul(Y, wa), ba)


def decode_attention(Y: DiffTensor, h_prev: DiffTensor, q_vec: DiffTensor, params,
                     ctx_mask) -> tuple[DiffTensor, DiffTensor]:
    """One step of attention over Y; returns (a_t over positions, y_t mix)."""
    return attend_step(attention_inputs(Y, params["wa"], params["ba"]), Y, h_prev,
                       q_vec, params["wh"], params["bh"], params["score"], ctx_mask)


def attend_step(proj_Y, Y, h_prev, q_vec, wh, bh, score_w, ctx_mask):
    """decode_attention with the per-episode Y projection precomputed."""
    step = ag.add(ag.add(ag.matmul(h_prev, wh), bh), q_vec)
    g = ag.tanh(ag.add(proj_Y, step))
    scores = ag.transpose(ag.matmul(g, score_w))
    mask = np.asarray(ctx_mask, dtype=bool)[None, :]
    a = ag.masked_softmax(scores, mask)
    return a, ag.matmul(a, Y)


def decoder_step(y_t: DiffTensor, w_prev: DiffTensor, state: DecoderState,
                 wx: DiffTensor, wh: DiffTensor, b: DiffTensor) -> DecoderState:
    """One LSTM step over [y_t; previous-token embedding]."""
    x = ag.concat([y_t, w_prev], axis=1)
    h, c = ag.lstm_cell(x, state.h, state.c, wx, wh, b)
    return DecoderState(h=h, c=c, t=state.t + 1)


def generate_dist(h: DiffTensor, w: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Vocabulary distribution: softmax(W h + b)."""
    return ag.masked_softmax(ag.add(ag.matmul(h, w), b), None)


def switch(c: DiffTensor, h: DiffTensor, y: DiffTensor, wc: DiffTensor,
           wh: DiffTensor, wy: DiffTensor) -> DiffTensor:
    """Scalar pointer-vs-generate gate from three bias-free linear maps."""
    pre = ag.add(ag.add(ag.matmul(c, wc), ag.matmul(h, wh)), ag.matmul(y, wy))
    return ag.sigmoid(pre)


def blend(a: DiffTensor, v: DiffTensor, p: DiffTensor) -> BlendedDistribution:
    """concat(p * a, (1 - p) * v): a distribution over l_c + |V| outcomes."""
    one_minus = ag.sub(ag.tensor(np.ones(p.shape)), p)
    dist = ag.concat([ag.mul_scalar(a, p), ag.mul_scalar(v, one_minus)], axis=1)
    return BlendedDistribution(dist=dist, switch=p, context_len=a.shape[1])


def pointer_only(a: DiffTensor) -> BlendedDistribution:
    """Degenerate blend for the no-generator ablation: positions only."""
    return BlendedDistribution(dist=a, switch=None, context_len=a.shape[1])
