# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for row sharpening and 3x3 binary morphology.

Results must stay bit-identical to ``topoattn._fallback``: keep the float
expression order of ``sharpen_rows`` in sync and never build with fast-math.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sharpen_rows(A, double gamma, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] src = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = src.copy()
    cdef Py_ssize_t n = src.shape[0], m = src.shape[1]
    cdef Py_ssize_t i, j
    cdef double lam, rest, scale
    cdef long degenerate = 0
    for i in range(1, n):
        lam = src[i, 0]
        rest = 0.0
        for j in range(1, m):
            rest += src[i, j]
        if not (lam < 1.0 - eps and rest > 0.0):
            degenerate += 1
            continue
        scale = 1.0 + (1.0 - gamma) * lam / rest
        out[i, 0] = gamma * lam
        for j in range(1, m):
            out[i, j] = src[i, j] * scale
    return out, int(degenerate)


# The 3x3 square element is separable: a 3-wide pass along rows followed by
# a 3-tall pass along columns. Cells outside the matrix are skipped, which is
# zero padding for the max (dilation) and one padding for the min (erosion).

cdef void _rows_max(const cnp.uint8_t[:, ::1] s, cnp.uint8_t[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t r = s.shape[0], c = s.shape[1], i, j
    for i in range(r):
        if c == 1:
            d[i, 0] = s[i, 0]
            continue
        d[i, 0] = s[i, 0] | s[i, 1]
        for j in range(1, c - 1):
            d[i, j] = s[i, j - 1] | s[i, j] | s[i, j + 1]
        d[i, c - 1] = s[i, c - 2] | s[i, c - 1]


cdef void _rows_min(const cnp.uint8_t[:, ::1] s, cnp.uint8_t[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t r = s.shape[0], c = s.shape[1], i, j
    for i in range(r):
        if c == 1:
            d[i, 0] = s[i, 0]
            continue
        d[i, 0] = s[i, 0] & s[i, 1]
        for j in range(1, c - 1):
            d[i, j] = s[i, j - 1] & s[i, j] & s[i, j + 1]
        d[i, c - 1] = s[i, c - 2] & s[i, c - 1]


cdef void _cols_max(const cnp.uint8_t[:, ::1] s, cnp.uint8_t[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t r = s.shape[0], c = s.shape[1], i, j
    for i in range(r):
        if i == 0 or i == r - 1:
            for j in range(c):
                d[i, j] = s[i, j]
                if i > 0:
                    d[i, j] |= s[i - 1, j]
                if i + 1 < r:
                    d[i, j] |= s[i + 1, j]
        else:
            for j in range(c):
                d[i, j] = s[i - 1, j] | s[i, j] | s[i + 1, j]


cdef void _cols_min(const cnp.uint8_t[:, ::1] s, cnp.uint8_t[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t r = s.shape[0], c = s.shape[1], i, j
    for i in range(r):
        if i == 0 or i == r - 1:
            for j in range(c):
                d[i, j] = s[i, j]
                if i > 0:
                    d[i, j] &= s[i - 1, j]
                if i + 1 < r:
                    d[i, j] &= s[i + 1, j]
        else:
            for j in range(c):
                d[i, j] = s[i - 1, j] & s[i, j] & s[i + 1, j]


cdef _square(B, bint take_max):
    src = np.ascontiguousarray(np.asarray(B) != 0, dtype=np.uint8)
    tmp = np.empty_like(src)
    out = np.empty_like(src)
    cdef cnp.uint8_t[:, ::1] s = src, t = tmp, o = out
    if src.size == 0:
        return out
    with nogil:
        if take_max:
            _rows_max(s, t)
            _cols_max(t, o)
        else:
            _rows_min(s, t)
            _cols_min(t, o)
    return out


def binary_dilate(B):
    """3x3 square dilation, outside of the matrix counts as 0."""
    return _square(B, True)


def binary_erode(B):
    """3x3 square erosion; out-of-bounds neighbours are ignored."""
    return _square(B, False)


def binary_close(B):
    return binary_erode(binary_dilate(B))
