"""Boundary tracing and polygonal contour geometry for binary regions."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage as ndi

# clockwise on screen (y down), starting west
_MOORE_DIRS = [(-1, 0), (-1, -1), (0, -1), (1, -1),
               (1, 0), (1, 1), (0, 1), (-1, 1)]
_DIR_INDEX = {d: i for i, d in enumerate(_MOORE_DIRS)}


def trace_boundary(mask: np.ndarray) -> tuple[np.ndarray, bool]:
    """Trace the outer boundary of an 8-connected region.

    Returns the closed boundary chain as an (N, 2) array of (x, y)
    pixel coordinates oriented so its shoelace signed area is positive,
    and a flag set when the region has interior holes (only the outer
    boundary is traced).
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty region")
    filled = ndi.binary_fill_holes(mask)
    has_holes = bool((filled != mask).any())
    ys, xs = np.nonzero(filled)
    if xs.size == 1:
        return np.array([[xs[0], ys[0]]], dtype=float), has_holes

    # pad by one so neighbor lookups never leave the array
    fg = np.zeros((filled.shape[0] + 2, filled.shape[1] + 2), dtype=bool)
    fg[1:-1, 1:-1] = filled
    start = (int(xs[0]) + 1, int(ys[0]) + 1)  # topmost row, leftmost column
    backtrack = (start[0] - 1, start[1])  # west neighbor, guaranteed background
    contour = [start]
    cur = start
    # The walk is deterministic in the (pixel, backtrack) state, so the
    # first repeated state closes the boundary cycle.  (Comparing against
    # the initial state alone is not enough: on spur-heavy regions the
    # cycle can re-enter the start pixel with a different backtrack.)
    seen = {(cur, backtrack)}
    max_steps = 16 * xs.size + 8
    for _ in range(max_steps):
        i0 = _DIR_INDEX[(backtrack[0] - cur[0], backtrack[1] - cur[1])]
        nxt = None
        for k in range(1, 9):
            d = _MOORE_DIRS[(i0 + k) % 8]
            cand = (cur[0] + d[0], cur[1] + d[1])
            if fg[cand[1], cand[0]]:
                nxt = cand
                prev_d = _MOORE_DIRS[(i0 + k - 1) % 8]
                backtrack = (cur[0] + prev_d[0], cur[1] + prev_d[1])
                break
        if nxt is None:  # isolated pixel cluster fallback
            break
        cur = nxt
        if (cur, backtrack) in seen:
            break
        seen.add((cur, backtrack))
        contour.append(cur)
    pts = np.array(contour, dtype=float) - 1.0
    if len(pts) >= 3 and shoelace_area(pts) < 0:
        pts = pts[::-1].copy()
    return pts, has_holes


def shoelace_area(poly: np.ndarray) -> float:
    """Signed area of a closed polygon (positive for counter-clockwise
    vertex order in the (x, y) plane)."""
    poly = np.asarray(poly, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def contour_perimeter(contour: np.ndarray) -> float:
    """Polygonal length of a closed boundary chain (sqrt(2) diagonals)."""
    contour = np.asarray(contour, dtype=float)
    if len(contour) < 2:
        return 0.0
    diffs = np.roll(contour, -1, axis=0) - contour
    return float(np.sqrt((diffs ** 2).sum(axis=1)).sum())


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone-chain convex hull, counter-clockwise vertices."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                a = out[-1] - out[-2]
                b = p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def convex_hull_area(mask: np.ndarray) -> float:
    """Convex area of a region: the pixel count of its filled hull.

    The hull is taken over boundary pixel centers and rasterized
    boundary-inclusive, matching the usual region-properties convention:
    convex regions score (almost exactly) their own pixel area, so the
    area/convex-area ratio stays near 1 for discs of any radius instead
    of drifting with the perimeter-to-area ratio.
    """
    mask = np.asarray(mask, dtype=bool)
    boundary = mask & ~ndi.binary_erosion(mask)
    ys, xs = np.nonzero(boundary)
    if xs.size == 0:
        return 0.0
    hull = convex_hull(np.stack([xs, ys], axis=1).astype(float))
    if len(hull) < 3:
        return float(mask.sum())
    return float(fill_convex_rows(hull))


def fill_convex_rows(hull: np.ndarray, eps: float = 1e-9) -> int:
    """Count lattice points inside or on a convex polygon by row spans."""
    hx, hy = hull[:, 0], hull[:, 1]
    nxt = np.roll(np.arange(len(hull)), -1)
    total = 0
    for y in range(int(math.ceil(hy.min() - eps)), int(math.floor(hy.max() + eps)) + 1):
        xs_row = []
        for i in range(len(hull)):
            j = nxt[i]
            ya, yb = hy[i], hy[j]
            if abs(ya - y) <= eps:
                xs_row.append(hx[i])
            if (ya < y) != (yb < y) and abs(yb - ya) > eps:
                t = (y - ya) / (yb - ya)
                xs_row.append(hx[i] + t * (hx[j] - hx[i]))
        if not xs_row:
            continue
        lo = int(math.ceil(min(xs_row) - eps))
        hi = int(math.floor(max(xs_row) + eps))
        if hi >= lo:
            total += hi - lo + 1
    return total
