"""SLSH binary tensor files and CSV export.

Layout (little-endian): ``b"SLSH"``, u32 version (=1), u32 L, H, n,
span_start, span_end, then ``L*H*n*n`` float64 values, row-major within a
map, heads inside layers.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from topoattn.attnops import AttentionTensor

MAGIC = b"SLSH"
VERSION = 1
_HEADER = struct.Struct("<4s6I")


class TensorFormatError(ValueError):
    pass


def tensor_to_bytes(t: AttentionTensor) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, t.layers, t.heads, t.n, t.span_start, t.span_end)
    payload = np.triu(np.ones((t.n, t.n), dtype=bool), k=1)
    maps = np.where(payload, 0.0, t.maps)
    return header + maps.astype("<f8").tobytes(order="C")


def tensor_from_bytes(data: bytes) -> AttentionTensor:
    if len(data) < _HEADER.size:
        raise TensorFormatError("file too short for SLSH header")
    magic, version, L, H, n, s0, s1 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    expected = _HEADER.size + 8 * L * H * n * n
    if len(data) != expected:
        raise TensorFormatError(f"payload size {len(data)} != expected {expected}")
    maps = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(L, H, n, n)
    return AttentionTensor(maps.astype(np.float64), s0, s1)


def write_tensor(t: AttentionTensor, dest: Union[str, Path, BinaryIO]) -> None:
    blob = tensor_to_bytes(t)
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        Path(dest).write_bytes(blob)


def read_tensor(src: Union[str, Path, BinaryIO]) -> AttentionTensor:
    data = src.read() if hasattr(src, "read") else Path(src).read_bytes()
    return tensor_from_bytes(data)


def payload_offset() -> int:
    return _HEADER.size


def export_csv(t: AttentionTensor, out_dir: Union[str, Path], stem: str = "map") -> list[Path]:
    """Write one ``n x n`` CSV per (layer, head)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for l, h in t.head_ids():
        path = out_dir / f"{stem}_l{l}_h{h}.csv"
        np.savetxt(path, t.maps[l, h], delimiter=",", fmt="%.17g")
        paths.append(path)
    return paths
