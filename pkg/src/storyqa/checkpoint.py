"""Named-tensor checkpoint container: versioned header, little-endian payload.

Layout: magic ``SQCP``, u32 version, u32 tensor count, then per tensor a
u32 name length, UTF-8 name, u8 dtype code (0 = float64, 1 = float32),
u32 ndim, u64 dims, and the raw little-endian values.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SQCP"
VERSION = 1
_DTYPES = {0: "<f8", 1: "<f4"}
_CODES = {"float64": 0, "float32": 1}


class CheckpointError(ValueError):
    """Malformed checkpoint file or shape mismatch on restore."""


def save_checkpoint(path, params) -> None:
    params = list(params)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            values = p.tensor.values
            name = p.name.encode("utf-8")
            code = _CODES[str(values.dtype)]
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<BI", code, values.ndim))
            fh.write(struct.pack(f"<{values.ndim}Q", *values.shape))
            fh.write(np.ascontiguousarray(values, dtype=_DTYPES[code]).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BI", fh.read(5))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
            dtype = np.dtype(_DTYPES[code])
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(n_items * dtype.itemsize)
            out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.float64)
        return out


def restore(params, path) -> None:
    """Load a checkpoint into existing parameters, validating shapes."""
    stored = load_checkpoint(path)
    for p in params:
        if p.name not in stored:
            raise CheckpointError(f"checkpoint missing tensor {p.name!r}")
        values = stored[p.name]
        if values.shape != p.tensor.values.shape:
            raise CheckpointError(
                f"checkpoint tensor {p.name!r} has shape {values.shape}, "
                f"expected {p.tensor.values.shape}"
            )
        p.tensor.values[...] = values
