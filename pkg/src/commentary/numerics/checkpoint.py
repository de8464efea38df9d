"""Binary checkpoint format.

Layout (little-endian): magic ``CEXP``, u32 version, u32 parameter count, then
per tensor: u16 name length, UTF-8 name, u8 rank, u32 per dim, float64
row-major payload.  The Adam state follows as u32 tensor count, tensors named
``adam.m.<param>`` / ``adam.v.<param>`` in the same layout, and a u64 step.
"""

import struct

import numpy as np

from .optim import AdamState

MAGIC = b"CEXP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensor(fh, name, arr):
    raw = name.encode("utf-8")
    arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
    fh.write(struct.pack("<H", len(raw)) + raw)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint")
    return buf


def _read_tensor(fh):
    (n,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, n).decode("utf-8")
    (rank,) = struct.unpack("<B", _read_exact(fh, 1))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
    count = int(np.prod(dims, dtype=np.int64))
    arr = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(dims)
    return name, arr.astype(np.float64)


def save_checkpoint(path, params, adam=None):
    """``params``: mapping name -> array (e.g. ``ParamStore.values()``)."""
    adam = adam or AdamState()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(params)))
        for name, arr in params.items():
            _write_tensor(fh, name, arr)
        names = [n for n in params if n in adam.m]
        fh.write(struct.pack("<I", 2 * len(names)))
        for n in names:
            _write_tensor(fh, f"adam.m.{n}", adam.m[n])
        for n in names:
            _write_tensor(fh, f"adam.v.{n}", adam.v[n])
        fh.write(struct.pack("<Q", adam.step))


def load_checkpoint(path):
    """Return ``(params, adam_state)``."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a CEXP checkpoint")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        params = dict(_read_tensor(fh) for _ in range(count))
        (n_adam,) = struct.unpack("<I", _read_exact(fh, 4))
        adam = AdamState()
        for _ in range(n_adam):
            name, arr = _read_tensor(fh)
            kind, _, pname = name[len("adam."):].partition(".")
            (adam.m if kind == "m" else adam.v)[pname] = arr.copy()
        (adam.step,) = struct.unpack("<Q", _read_exact(fh, 8))
    return params, adam
