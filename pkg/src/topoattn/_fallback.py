"""Pure numpy kernels. Same contract and bit-identical results as ``_kernels``."""

from __future__ import annotations

import numpy as np


def sharpen_rows(A: np.ndarray, gamma: float, eps: float) -> tuple[np.ndarray, int]:
    A = np.ascontiguousarray(A, dtype=np.float64)
    out = A.copy()
    n = A.shape[0]
    if n < 2:
        return out, 0
    lam = A[1:, 0]
    # realized non-sink mass, accumulated left to right like the compiled loop
    rest = np.cumsum(A[1:, 1:], axis=1)[:, -1]
    ok = (lam < 1.0 - eps) & (rest > 0.0)
    rows = np.flatnonzero(ok) + 1
    lam_ok = A[rows, 0]
    scale = 1.0 + (1.0 - gamma) * lam_ok / rest[rows - 1]
    out[rows, 1:] = A[rows, 1:] * scale[:, None]
    out[rows, 0] = gamma * lam_ok
    return out, int(n - 1 - rows.size)


def binary_dilate(B: np.ndarray) -> np.ndarray:
    """3x3 square dilation, outside of the matrix counts as 0."""
    B = (np.asarray(B) != 0).astype(np.uint8)
    r, c = B.shape
    padded = np.zeros((r + 2, c + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = B
    out = np.zeros_like(B)
    for di in range(3):
        for dj in range(3):
            out |= padded[di:di + r, dj:dj + c]
    return out


def binary_erode(B: np.ndarray) -> np.ndarray:
    """3x3 square erosion; out-of-bounds neighbours are ignored (count as 1)."""
    B = (np.asarray(B) != 0).astype(np.uint8)
    r, c = B.shape
    padded = np.ones((r + 2, c + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = B
    out = np.ones_like(B)
    for di in range(3):
        for dj in range(3):
            out &= padded[di:di + r, dj:dj + c]
    return out


def binary_close(B: np.ndarray) -> np.ndarray:
    return binary_erode(binary_dilate(B))
