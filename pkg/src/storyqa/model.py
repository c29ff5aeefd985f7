"""The full reader: encode, align, introspect, aggregate, then point/generate.

A Reader owns every named parameter and exposes the two episode shapes the
trainer needs: teacher-forced step distributions and greedy decoding. All
ablation switches live in ModelConfig so one code path serves every
configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import alignment, autograd as ag, pointer_decoder as pd
from .autograd import DiffTensor, Parameter
from .corpus import BOS, SPECIAL_TOKENS, UNK, Vocab
from .encoder import LstmDirection, SequenceRep, bilstm, embed, init_embedding_table


class ModelError(ValueError):
    """Inconsistent model configuration."""


@dataclass(frozen=True)
class ModelConfig:
    d: int = 128
    n: int = 256
    e: int = 100
    band: int = 200
    nonlinearity: str = "relu"
    ial_off: bool = False
    dense_attention: bool = False
    enhancement_off: bool = False
    pg_off: bool = False

    def __post_init__(self):
        if self.d % 2 != 0:
            raise ModelError(f"encoder width d must be even, got {self.d}")
        if self.band < 0:
            raise ModelError(f"band must be >= 0, got {self.band}")

    @property
    def z_width(self) -> int:
        return 2 * self.d if self.enhancement_off else 4 * self.d


@dataclass
class Encoded:
    """Everything one example's decode steps share."""

    Y: SequenceRep
    hq: SequenceRep
    q_vec: DiffTensor
    proj_Y: DiffTensor
    ctx_mask: np.ndarray


@dataclass
class DecodeTrace:
    tokens: list[str]
    switches: list[float]
    choices: list[dict]


class Reader:
    """Pointer-generator reader over retrieved context windows."""

    def __init__(self, config: ModelConfig, input_vocab_size: int,
                 gen_vocab_size: int, seed: int):
        self.config = config
        self.input_vocab_size = input_vocab_size
        self.gen_vocab_size = gen_vocab_size
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(seed)
        self._build_params(rng)

    # -- parameter construction -------------------------------------------

    def _add(self, name: str, shape, rng, trainable=True, zero=False) -> Parameter:
        if name in self.params:
            raise ModelError(f"duplicate parameter name {name!r}")
        values = np.zeros(shape) if zero else rng.normal(0.0, 0.1, size=shape)
        p = Parameter(name, values, trainable=trainable)
        self.params[name] = p
        return p

    def _lstm_dir(self, prefix: str, in_dim: int, hidden: int, rng) -> None:
        self._add(f"{prefix}.wx", (in_dim, 4 * hidden), rng)
        self._add(f"{prefix}.wh", (hidden, 4 * hidden), rng)
        self._add(f"{prefix}.b", (4 * hidden,), rng, zero=True)

    def _build_params(self, rng) -> None:
        cfg = self.config
        d, n, e = cfg.d, cfg.n, cfg.e
        self.params["emb"] = init_embedding_table("emb", self.input_vocab_size, e, rng)
        self._lstm_dir("enc.fwd", e, d // 2, rng)
        self._lstm_dir("enc.bwd", e, d // 2, rng)
        self._add("align.f.w", (d, d), rng)
        self._add("align.f.b", (d,), rng, zero=True)
        if not cfg.ial_off:
            z = cfg.z_width
            self._add("align.fs.w", (z, z), rng)
            self._add("align.fs.b", (z,), rng, zero=True)
        agg_in = cfg.z_width if cfg.ial_off else 2 * cfg.z_width
        self._lstm_dir("agg.fwd", agg_in, d, rng)
        self._lstm_dir("agg.bwd", agg_in, d, rng)
        self._add("dec.init.w", (2 * d, n), rng)
        self._add("dec.init.b", (n,), rng, zero=True)
        self._add("qpool.w", (d, d), rng)
        self._add("qpool.b", (d,), rng, zero=True)
        self._add("qpool.v", (d, 1), rng)
        self._add("qpool.pw", (d, n), rng)
        self._add("qpool.pb", (n,), rng, zero=True)
        self._add("att.wa", (2 * d, n), rng)
        self._add("att.ba", (n,), rng, zero=True)
        self._add("att.wh", (n, n), rng)
        self._add("att.bh", (n,), rng, zero=True)
        self._add("att.score", (n, 1), rng)
        self._lstm_dir("dec.lstm", 2 * d + e, n, rng)
        if not cfg.pg_off:
            self._add("gen.w", (n, self.gen_vocab_size), rng)
            self._add("gen.b", (self.gen_vocab_size,), rng, zero=True)
            self._add("switch.wc", (n, 1), rng)
            self._add("switch.wh", (n, 1), rng)
            self._add("switch.wy", (2 * d, 1), rng)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.params.values() if p.trainable]

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.tensor.zero_grad()

    def _t(self, name: str) -> DiffTensor:
        return self.params[name].tensor

    def _direction(self, prefix: str) -> LstmDirection:
        return LstmDirection(self._t(f"{prefix}.wx"), self._t(f"{prefix}.wh"),
                             self._t(f"{prefix}.b"))

    # -- forward passes ----------------------------------------------------

    def encode(self, ctx_ids, q_ids) -> Encoded:
        """Run the shared encoder and the alignment stack for one example."""
        cfg = self.config
        ctx = embed(ctx_ids, self._t("emb"))
        q = embed(q_ids, self._t("emb"))
        hc = bilstm(ctx, self._direction("enc.fwd"), self._direction("enc.bwd"))
        hq = bilstm(q, self._direction("enc.fwd"), self._direction("enc.bwd"))

        E = alignment.affinity(hc.matrix, hq.matrix, self._t("align.f.w"),
                               self._t("align.f.b"), cfg.nonlinearity)
        A = alignment.align(E, hq.matrix, hq.mask)
        if cfg.enhancement_off:
            Z = ag.concat([A, hc.matrix], axis=1)
        else:
            Z = alignment.enhance(A, hc.matrix)

        B = None
        if not cfg.ial_off:
            length = Z.shape[0]
            band = length if cfg.dense_attention else min(cfg.band, length)
            scores = alignment.introspective_scores(
                Z, self._t("align.fs.w"), self._t("align.fs.b"), band, cfg.nonlinearity
            )
            B = alignment.introspect(scores, Z)

        Y = alignment.aggregate(B, Z, hc.mask, self._direction("agg.fwd"),
                                self._direction("agg.bwd"))
        q_vec = pd.question_pool(hq.matrix, hq.mask, self._t("qpool.w"),
                                 self._t("qpool.b"), self._t("qpool.v"),
                                 self._t("qpool.pw"), self._t("qpool.pb"))
        proj_Y = pd.attention_inputs(Y.matrix, self._t("att.wa"), self._t("att.ba"))
        return Encoded(Y=Y, hq=hq, q_vec=q_vec, proj_Y=proj_Y, ctx_mask=Y.mask)

    def _step(self, enc: Encoded, state: pd.DecoderState, prev_id: int):
        """One decode step; returns (blended distribution, next state)."""
        a, y_t = pd.attend_step(enc.proj_Y, enc.Y.matrix, state.h, enc.q_vec,
                            self._t("att.wh"), self._t("att.bh"),
                            self._t("att.score"), enc.ctx_mask)
        w_prev = ag.embedding_lookup(self._t("emb"), [prev_id])
        state = pd.decoder_step(y_t, w_prev, state,
                                self._t("dec.lstm.wx"), self._t("dec.lstm.wh"),
                                self._t("dec.lstm.b"))
        if self.config.pg_off:
            return pd.pointer_only(a), state
        v = pd.generate_dist(state.h, self._t("gen.w"), self._t("gen.b"))
        p = pd.switch(state.c, state.h, y_t, self._t("switch.wc"),
                      self._t("switch.wh"), self._t("switch.wy"))
        return pd.blend(a, v, p), state

    def init_state(self, enc: Encoded) -> pd.DecoderState:
        return pd.init_decoder(enc.Y.matrix, self._t("dec.init.w"), self._t("dec.init.b"))

    def teacher_forced(self, enc: Encoded, step_input_ids) -> list[pd.BlendedDistribution]:
        """Blended distributions for each step, conditioning on gold inputs."""
        state = self.init_state(enc)
        dists = []
        for prev_id in step_input_ids:
            bd, state = self._step(enc, state, prev_id)
            dists.append(bd)
        return dists

    def greedy_decode(self, ctx_tokens, ctx_ids, q_ids, max_answer_len: int,
                      input_vocab: Vocab, gen_vocab: Vocab) -> DecodeTrace:
        """Argmax decoding for exactly max_answer_len steps; PAD stops emission."""
        enc = self.encode(ctx_ids, q_ids)
        state = self.init_state(enc)
        prev_id = BOS
        lc = len(ctx_tokens)
        tokens: list[str] = []
        switches: list[float] = []
        choices: list[dict] = []
        for _ in range(max_answer_len):
            bd, state = self._step(enc, state, prev_id)
            idx = bd.argmax()
            if idx < lc:
                token = ctx_tokens[idx]
                choices.append({"route": "pointer", "index": idx})
            else:
                token = gen_vocab.token_of[idx - lc]
                choices.append({"route": "vocab", "index": idx - lc})
            switches.append(bd.p_t)
            if token == SPECIAL_TOKENS[0]:
                break
            tokens.append(token)
            prev_id = input_vocab.id_of.get(token, UNK)
        return DecodeTrace(tokens=tokens, switches=switches, choices=choices)
