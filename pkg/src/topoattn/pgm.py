"""Binary 8-bit PGM (P5) images, max-normalized per image."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np


def to_gray(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    peak = float(a.max()) if a.size else 0.0
    if peak <= 0:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.rint(np.clip(a, 0, None) / peak * 255.0).astype(np.uint8)


def pgm_bytes(a: np.ndarray) -> bytes:
    g = to_gray(a)
    if g.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    h, w = g.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + g.tobytes()


def write_pgm(path: Union[str, Path], a: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(pgm_bytes(a))
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def overlay(truth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Truth-only pixels at 1/3, mask-only at 2/3, agreement at full intensity."""
    t = np.asarray(truth, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    return t * 1.0 + m * 2.0
