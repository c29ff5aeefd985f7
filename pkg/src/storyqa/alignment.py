"""Context-question alignment with banded self-attention over enhanced features.

The context attends over the question (a global view), the aligned and raw
representations are combined through subtraction and Hadamard comparison
features, and a second, locality-banded self-attention reasons over those
features before a BiLSTM aggregates everything. The banded path touches
only score pairs with |i - j| <= band and costs O(length * band) memory;
when the band covers every pair it routes through the dense composition,
so a full band is bit-identical to ordinary dense self-attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import DiffTensor
from .encoder import LstmDirection, SequenceRep, bilstm


class AlignmentError(ValueError):
    """Bad alignment input (negative band, mask mismatch)."""


def feature_map(x: DiffTensor, w: DiffTensor, b: DiffTensor, kind: str = "relu") -> DiffTensor:
    """The shared nonlinear transform sigma(Wx + b) applied row-wise."""
    pre = ag.add(ag.matmul(x, w), b)
    if kind == "relu":
        return ag.relu(pre)
    if kind == "tanh":
        return ag.tanh(pre)
    raise AlignmentError(f"unknown nonlinearity {kind!r}")


def affinity(hc: DiffTensor, hq: DiffTensor, w: DiffTensor, b: DiffTensor,
             kind: str = "relu") -> DiffTensor:
    """Score matrix E with E[i, j] = F(hc_i) . F(hq_j), F shared."""
    return ag.matmul(feature_map(hc, w, b, kind), ag.transpose(feature_map(hq, w, b, kind)))


def align(E: DiffTensor, hq: DiffTensor, q_mask: np.ndarray) -> DiffTensor:
    """Row-softmax E over unmasked question positions, then mix question rows."""
    mask = np.broadcast_to(np.asarray(q_mask, dtype=bool), E.shape)
    return ag.matmul(ag.masked_softmax(E, mask), hq)


def enhance(A: DiffTensor, hc: DiffTensor) -> DiffTensor:
    """[A; Hc; A - Hc; A .* Hc] comparison features, width 4d."""
    return ag.concat([A, hc, ag.sub(A, hc), ag.hadamard(A, hc)], axis=1)


def band_mask(length: int, band: int) -> np.ndarray:
    """Boolean locality mask, True iff |i - j| <= band."""
    if band < 0:
        raise AlignmentError(f"band must be >= 0, got {band}")
    idx = np.arange(length)
    return np.abs(idx[:, None] - idx[None, :]) <= band


@dataclass
class BandedScores:
    """Self-attention scores confined to a band.

    ``proj`` is the projected feature matrix the scores derive from.
    ``dense`` is the full score matrix when the band covers every pair,
    otherwise None (the banded path never materializes it).
    """

    proj: DiffTensor
    band: int
    dense: DiffTensor | None

    @property
    def length(self) -> int:
        return self.proj.shape[0]

    def defined_entries(self) -> int:
        lo_hi = _band_bounds(self.length, self.band)
        return sum(hi - lo for lo, hi in lo_hi)

    def materialize(self) -> np.ndarray:
        """Forward-only score values, -inf outside the band (inspection only)."""
        if self.dense is not None:
            return self.dense.values.copy()
        P = self.proj.values
        out = np.full((self.length, self.length), -np.inf)
        for i, (lo, hi) in enumerate(_band_bounds(self.length, self.band)):
            out[i, lo:hi] = P[lo:hi] @ P[i]
        return out


def _band_bounds(length: int, band: int):
    return [(max(0, i - band), min(length, i + band + 1)) for i in range(length)]


def introspective_scores(Z: DiffTensor, w: DiffTensor, b: DiffTensor, band: int,
                         kind: str = "relu") -> BandedScores:
    """Project the enhanced features and score pairs inside the band."""
    if band < 0:
        raise AlignmentError(f"band must be >= 0, got {band}")
    proj = feature_map(Z, w, b, kind)
    dense = None
    if band >= Z.shape[0] - 1:
        dense = ag.matmul(proj, ag.transpose(proj))
    return BandedScores(proj=proj, band=band, dense=dense)


def introspect(scores: BandedScores, Z: DiffTensor) -> DiffTensor:
    """Row-stochastic attention over Z, confined to the band."""
    if scores.dense is not None:
        return ag.matmul(ag.masked_softmax(scores.dense, None), Z)
    return _banded_attention(scores.proj, Z, scores.band)


def _banded_attention(proj: DiffTensor, Z: DiffTensor, band: int) -> DiffTensor:
    """Fused row-tiled attention: O(length * band) memory, exact gradients."""
    P = proj.values
    Zv = Z.values
    length = P.shape[0]
    bounds = _band_bounds(length, band)
    out = np.empty((length, Zv.shape[1]))
    probs = []
    for i, (lo, hi) in enumerate(bounds):
        s = P[lo:hi] @ P[i]
        e = np.exp(s - s.max())
        p = e / e.sum()
        out[i] = p @ Zv[lo:hi]
        probs.append(p)

    def bwd(g):
        gP = np.zeros_like(P)
        gZ = np.zeros_like(Zv)
        for i, (lo, hi) in enumerate(bounds):
            p = probs[i]
            gZ[lo:hi] += np.outer(p, g[i])
            gp = Zv[lo:hi] @ g[i]
            gs = p * (gp - p @ gp)
            gP[i] += gs @ P[lo:hi]
            gP[lo:hi] += np.outer(gs, P[i])
        return gP, gZ

    return DiffTensor(out, (proj, Z), bwd)


def aggregate(B: DiffTensor | None, Z: DiffTensor, ctx_mask: np.ndarray,
              forward: LstmDirection, backward: LstmDirection) -> SequenceRep:
    """BiLSTM over [B; Z] (or Z alone when the introspection layer is off)."""
    inp = Z if B is None else ag.concat([B, Z], axis=1)
    return bilstm(SequenceRep(matrix=inp, mask=np.asarray(ctx_mask, dtype=bool)),
                  forward, backward)
