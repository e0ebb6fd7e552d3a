"""Binary container for time-frequency matrices and small atomic-write helpers."""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

TF_MAGIC = b"CFT2"
_HEADER = struct.Struct("<4sIIBB")


class FormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def pack_tf(values: np.ndarray, time_grid: np.ndarray, axis_grid: np.ndarray, axis_code: int) -> bytes:
    """Serialize a (time x axis) matrix; complex payloads are interleaved re/im f64."""
    values = np.asarray(values)
    nt, na = values.shape
    if len(time_grid) != nt or len(axis_grid) != na:
        raise FormatError("grid lengths do not match matrix dimensions")
    is_complex = np.iscomplexobj(values)
    payload = values.astype("<c16" if is_complex else "<f8", copy=False)
    return b"".join([
        _HEADER.pack(TF_MAGIC, nt, na, int(is_complex), int(axis_code)),
        np.asarray(time_grid, "<f8").tobytes(),
        np.asarray(axis_grid, "<f8").tobytes(),
        np.ascontiguousarray(payload).tobytes(),
    ])


def unpack_tf(data: bytes):
    """Inverse of :func:`pack_tf`; returns (values, time_grid, axis_grid, axis_code)."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, nt, na, is_complex, code = _HEADER.unpack_from(data)
    if magic != TF_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    off = _HEADER.size
    width = 16 if is_complex else 8
    need = off + 8 * (nt + na) + width * nt * na
    if len(data) != need:
        raise FormatError(f"expected {need} bytes, found {len(data)}")
    tg = np.frombuffer(data, "<f8", nt, off)
    off += 8 * nt
    ag = np.frombuffer(data, "<f8", na, off)
    off += 8 * na
    vals = np.frombuffer(data, "<c16" if is_complex else "<f8", nt * na, off).reshape(nt, na)
    return vals.copy(), tg.copy(), ag.copy(), code
