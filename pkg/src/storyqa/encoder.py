"""Token embedding and the shared bidirectional LSTM encoder.

Both the context and the question pass through the same BiLSTM parameters.
The embedding table is frozen; its PAD row is the zero vector. PAD tokens
may only appear as a suffix, and the recurrence runs over the valid prefix
so appending PAD never perturbs real positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import DiffTensor, Parameter
from .corpus import PAD


class EncoderError(ValueError):
    """Bad encoder input (interior PAD, empty sequence, odd width)."""


@dataclass
class SequenceRep:
    """A length x width representation plus its validity mask (False at PAD)."""

    matrix: DiffTensor
    mask: np.ndarray

    @property
    def length(self) -> int:
        return self.matrix.shape[0]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def valid_length(self) -> int:
        n = int(self.mask.sum())
        if n == 0:
            raise EncoderError("sequence has no valid (non-PAD) positions")
        if not self.mask[:n].all() or self.mask[n:].any():
            raise EncoderError("PAD must be a contiguous suffix")
        return n


class LstmDirection(NamedTuple):
    wx: DiffTensor
    wh: DiffTensor
    b: DiffTensor


def init_embedding_table(name: str, vocab_size: int, dim: int,
                         rng: np.random.Generator, scale: float = 0.1) -> Parameter:
    """Frozen Gaussian table; row 0 (PAD) is zero and stays zero."""
    values = rng.normal(0.0, scale, size=(vocab_size, dim))
    values[PAD] = 0.0
    return Parameter(name, values, trainable=False)


def load_embedding_file(path, vocab, table: Parameter) -> int:
    """Overwrite table rows from a text vector file (token then floats per line).

    Unknown tokens are skipped; the PAD row stays zero. Returns the number
    of rows loaded.
    """
    dim = table.values.shape[1]
    loaded = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            tok = parts[0]
            if tok in vocab.id_of:
                idx = vocab.id_of[tok]
                if idx == PAD:
                    continue
                table.tensor.values[idx] = [float(x) for x in parts[1:]]
                loaded += 1
    return loaded


def embed(ids, table) -> SequenceRep:
    """Look up frozen embedding rows; the mask marks non-PAD positions."""
    ids = np.asarray(ids, dtype=int)
    if ids.size == 0:
        raise EncoderError("embed: empty id sequence")
    return SequenceRep(matrix=ag.embedding_lookup(table, ids), mask=ids != PAD)


def bilstm(rep: SequenceRep, forward: LstmDirection, backward: LstmDirection) -> SequenceRep:
    """Two independent directions over the valid prefix, concatenated per position.

    Output width is twice the per-direction hidden size; PAD rows are zero.
    """
    hidden = forward.wh.shape[0]
    n_valid = rep.valid_length()

    fwd_rows = _run_direction(rep.matrix, range(n_valid), forward, hidden)
    bwd_rows = _run_direction(rep.matrix, reversed(range(n_valid)), backward, hidden)
    bwd_rows.reverse()

    rows = [ag.concat([fwd_rows[t], bwd_rows[t]], axis=1) for t in range(n_valid)]
    if n_valid < rep.length:
        rows.append(ag.zeros((rep.length - n_valid, 2 * hidden)))
    matrix = rows[0] if len(rows) == 1 else ag.concat(rows, axis=0)
    return SequenceRep(matrix=matrix, mask=rep.mask.copy())


def _run_direction(matrix, positions, params: LstmDirection, hidden):
    h = ag.zeros((1, hidden))
    c = ag.zeros((1, hidden))
    rows = []
    for t in positions:
        x = ag.row_slice(matrix, t, t + 1)
        h, c = ag.lstm_cell(x, h, c, params.wx, params.wh, params.b)
        rows.append(h)
    return rows
