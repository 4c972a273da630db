"""Pure-Python kernels. Must stay behaviourally identical to ``_ckernels.pyx``."""
from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 generator; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def rasterize(width: int, height: int, rects, size: int) -> bytes:
    """White RGB raster with ``size``x``size`` filled squares.

    ``rects`` holds ``(cx, cy, r, g, b)`` tuples; each square spans columns
    ``cx - size//2 .. cx - size//2 + size - 1`` (rows likewise), clipped.
    """
    buf = bytearray(b"\xff" * (width * height * 3))
    half = size // 2
    for cx, cy, r, g, b in rects:
        x0 = max(cx - half, 0)
        x1 = min(cx - half + size, width)
        if x0 >= x1:
            continue
        run = bytes((r, g, b)) * (x1 - x0)
        for row in range(max(cy - half, 0), min(cy - half + size, height)):
            start = (row * width + x0) * 3
            buf[start:start + len(run)] = run
    return bytes(buf)


def count_mismatches(a, b) -> tuple[int, int]:
    """Compare two equal-shape 2D int64 grids (rows = ticks).

    Returns ``(differing cells, first differing row or -1)``.
    """
    rows, cols = a.shape
    count = 0
    first = -1
    for i in range(rows):
        ra = a[i].tolist()
        rb = b[i].tolist()
        for j in range(cols):
            if ra[j] != rb[j]:
                count += 1
                if first < 0:
                    first = i
    return count, first
