# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Behaviour mirrors ``_pykernels``."""
from libc.stdint cimport uint64_t, int64_t, uint8_t

import numpy as np


def splitmix64(object state):
    cdef uint64_t s = <uint64_t>(state & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t z
    s = s + <uint64_t>0x9E3779B97F4A7C15
    z = s
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return s, z ^ (z >> 31)


def rasterize(int width, int height, object rects, int size):
    cdef bytearray out = bytearray(b"\xff" * (width * height * 3))
    cdef uint8_t[::1] buf = out
    cdef int half = size // 2
    cdef int cx, cy, x0, x1, y0, y1, row, col, k
    cdef uint8_t r, g, b
    for rect in rects:
        cx, cy, r, g, b = rect
        x0 = max(cx - half, 0)
        x1 = min(cx - half + size, width)
        y0 = max(cy - half, 0)
        y1 = min(cy - half + size, height)
        for row in range(y0, y1):
            for col in range(x0, x1):
                k = (row * width + col) * 3
                buf[k] = r
                buf[k + 1] = g
                buf[k + 2] = b
    return bytes(out)


def count_mismatches(object a, object b):
    cdef const int64_t[:, :] va = np.ascontiguousarray(a, dtype=np.int64)
    cdef const int64_t[:, :] vb = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t rows = va.shape[0], cols = va.shape[1], i, j
    cdef long long count = 0
    cdef long long first = -1
    if vb.shape[0] != rows or vb.shape[1] != cols:
        raise ValueError("grids must have equal shape")
    for i in range(rows):
        for j in range(cols):
            if va[i, j] != vb[i, j]:
                count += 1
                if first < 0:
                    first = i
    return count, first
