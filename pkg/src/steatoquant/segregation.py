"""Splitting two-way overlapped steatosis regions.

Concave high-curvature points on the region boundary mark the necks
between two touching vacuoles.  Every pair of such points defines a
candidate split chord; each candidate is scored by fitting an ellipse
to both induced sub-regions and taking the intersection-over-union of
sub-region and fitted ellipse.  The best-scoring chord wins if its
quality exceeds the acceptance threshold, otherwise the region is
reported non-separable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage as ndi

from .contours import trace_boundary
from .detection import EIGHT_CONNECTED, Region


class EllipseFitError(Exception):
    """Raised when a direct conic fit does not yield an ellipse."""


@dataclass(frozen=True)
class CurvaturePoint:
    contour_index: int
    x: float
    y: float
    kappa: float
    span: tuple[int, int]  # contour index range merged into this point


@dataclass(frozen=True)
class EllipseParams:
    cx: float
    cy: float
    a: float  # semi-major
    b: float  # semi-minor
    phi: float  # major-axis angle in (-pi/2, pi/2]

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)


@dataclass(frozen=True)
class SplitCandidate:
    i: int
    j: int
    p_i: CurvaturePoint
    p_j: CurvaturePoint
    fit_a: float
    fit_b: float
    quality: float


@dataclass
class SegregationResult:
    split: bool
    best_quality: float
    candidate: SplitCandidate | None = None
    sub_masks: tuple[np.ndarray, np.ndarray] | None = None
    sub_ellipses: tuple[EllipseParams, EllipseParams] | None = None


@dataclass(frozen=True)
class SegregationParams:
    kappa_threshold: float = 0.08
    smooth_window: int = 5
    merge_gap: int = 5
    max_points: int = 12
    accept_quality: float = 0.7
    aggregate: str = "min"  # min | mean
    chord_margin: float = 1.5
    min_region_area: int = 50
    min_sub_fraction: float = 0.1

    def __post_init__(self):
        if self.aggregate not in ("min", "mean"):
            raise ValueError("aggregate must be 'min' or 'mean'")


def compute_curvature(contour: np.ndarray, smooth_window: int = 5) -> np.ndarray:
    """Signed curvature along a closed contour.

    Coordinates are smoothed with a circular moving average, derivatives
    taken by central differences with wraparound.  Positive curvature on
    convex (positively oriented) arcs, negative at concavities.
    """
    contour = np.asarray(contour, dtype=float)
    n = len(contour)
    if n < 2 * smooth_window + 5:
        return np.empty(0)
    # moving average applied twice (triangular kernel): a single pass
    # leaves enough pixel jitter to flip the curvature sign on circles
    x = contour[:, 0]
    y = contour[:, 1]
    for _ in range(2):
        x = ndi.uniform_filter1d(x, smooth_window, mode="wrap")
        y = ndi.uniform_filter1d(y, smooth_window, mode="wrap")
    step = max(1, smooth_window // 2 + 1)
    dx = (np.roll(x, -step) - np.roll(x, step)) / (2.0 * step)
    dy = (np.roll(y, -step) - np.roll(y, step)) / (2.0 * step)
    ddx = (np.roll(x, -step) - 2.0 * x + np.roll(x, step)) / step ** 2
    ddy = (np.roll(y, -step) - 2.0 * y + np.roll(y, step)) / step ** 2
    speed = (dx * dx + dy * dy) ** 1.5
    speed[speed < 1e-12] = 1e-12
    return (dx * ddy - dy * ddx) / speed


def detect_high_curvature_points(kappa: np.ndarray, contour: np.ndarray,
                                 kappa_threshold: float = 0.08,
                                 merge_gap: int = 5) -> list[CurvaturePoint]:
    """Concave contour points with kappa < -threshold; adjacent runs
    (circular index gaps <= merge_gap) collapse to their kappa minimum."""
    n = len(kappa)
    sel = np.nonzero(kappa < -kappa_threshold)[0]
    if sel.size == 0:
        return []
    # group circularly
    groups: list[list[int]] = [[int(sel[0])]]
    for idx in sel[1:]:
        if idx - groups[-1][-1] <= merge_gap:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    if len(groups) > 1 and (sel[0] + n - groups[-1][-1]) <= merge_gap:
        groups[0] = groups.pop() + groups[0]
    points = []
    for g in groups:
        best = min(g, key=lambda i: kappa[i])
        points.append(CurvaturePoint(best, contour[best, 0], contour[best, 1],
                                     float(kappa[best]),
                                     (g[0], g[-1])))
    points.sort(key=lambda p: p.contour_index)
    return points


def fit_ellipse(points: np.ndarray) -> EllipseParams:
    """Direct least-squares conic fit constrained to an ellipse
    (stable Fitzgibbon variant), returning geometric parameters."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 5:
        raise EllipseFitError("need at least 5 points")
    mean = pts.mean(axis=0)
    scale = pts.std(axis=0).mean()
    if scale < 1e-9:
        raise EllipseFitError("degenerate point set")
    x, y = ((pts - mean) / scale).T
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise EllipseFitError("degenerate conic") from exc
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    evals, evecs = np.linalg.eig(m)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    valid = np.nonzero((cond > 0) & np.isfinite(evals))[0]
    if valid.size == 0:
        raise EllipseFitError("degenerate conic")
    a1 = np.real(evecs[:, valid[0]])
    coeffs = np.concatenate([a1, t @ a1])
    return _conic_to_geometric(coeffs, mean, scale)


def _conic_to_geometric(coeffs: np.ndarray, mean: np.ndarray,
                        scale: float) -> EllipseParams:
    A, B, C, D, E, F = coeffs
    den = B * B - 4.0 * A * C
    if den >= 0:
        raise EllipseFitError("conic is not an ellipse")
    cx = (2.0 * C * D - B * E) / den
    cy = (2.0 * A * E - B * D) / den
    # value of the quadratic form at the center
    f0 = A * cx * cx + B * cx * cy + C * cy * cy + D * cx + E * cy + F
    m = np.array([[A, B / 2.0], [B / 2.0, C]])
    evals, evecs = np.linalg.eigh(m)
    axes2 = -f0 / evals
    if np.any(axes2 <= 0):
        raise EllipseFitError("conic is not a real ellipse")
    radii = np.sqrt(axes2)
    order = np.argsort(-radii)
    a, b = radii[order]
    major = evecs[:, order[0]]
    phi = math.atan2(major[1], major[0])
    if phi <= -math.pi / 2:
        phi += math.pi
    elif phi > math.pi / 2:
        phi -= math.pi
    return EllipseParams(cx=float(cx * scale + mean[0]),
                         cy=float(cy * scale + mean[1]),
                         a=float(a * scale), b=float(b * scale), phi=phi)


def ellipse_mask(e: EllipseParams, shape: tuple[int, int],
                 offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Rasterize an ellipse over a (H, W) grid whose pixel (0, 0) sits at
    ``offset`` in the ellipse's coordinate frame."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx + offset[0] - e.cx
    dy = yy + offset[1] - e.cy
    c, s = math.cos(e.phi), math.sin(e.phi)
    u = (dx * c + dy * s) / e.a
    v = (-dx * s + dy * c) / e.b
    return u * u + v * v <= 1.0


def fit_quality(mask: np.ndarray, e: EllipseParams,
                offset: tuple[float, float] = (0.0, 0.0)) -> float:
    """Intersection-over-union of a region mask and a fitted ellipse.

    The grid is grown to cover the ellipse when it extends past the mask
    frame, so out-of-frame ellipse area counts against the union.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    pad_x0 = max(0, int(math.ceil(offset[0] - (e.cx - e.a))))
    pad_y0 = max(0, int(math.ceil(offset[1] - (e.cy - e.a))))
    pad_x1 = max(0, int(math.ceil((e.cx + e.a) - (offset[0] + w))))
    pad_y1 = max(0, int(math.ceil((e.cy + e.a) - (offset[1] + h))))
    if pad_x0 or pad_y0 or pad_x1 or pad_y1:
        mask = np.pad(mask, ((pad_y0, pad_y1), (pad_x0, pad_x1)))
        offset = (offset[0] - pad_x0, offset[1] - pad_y0)
    emask = ellipse_mask(e, mask.shape, offset)
    union = np.count_nonzero(mask | emask)
    if union == 0:
        return 0.0
    return np.count_nonzero(mask & emask) / union


def split_region(mask: np.ndarray, p_i: tuple[float, float],
                 p_j: tuple[float, float]) -> tuple[np.ndarray, np.ndarray] | None:
    """Partition region pixels by the chord p_i-p_j.

    Pixels on the chord line go to the first sub-region (deterministic
    tie rule).  Returns None when either side is empty or disconnected,
    in which case the candidate is discarded.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    side = ((p_j[0] - p_i[0]) * (yy - p_i[1])
            - (p_j[1] - p_i[1]) * (xx - p_i[0]))
    sub_a = mask & (side >= 0)
    sub_b = mask & (side < 0)
    for sub in (sub_a, sub_b):
        if not sub.any():
            return None
        _, n = ndi.label(sub, structure=EIGHT_CONNECTED)
        if n != 1:
            return None
    return sub_a, sub_b


def _point_segment_distance(pts: np.ndarray, a: np.ndarray,
                            b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _sub_boundary_points(sub: np.ndarray, p_i: np.ndarray, p_j: np.ndarray,
                         margin: float) -> np.ndarray:
    """Boundary points of a sub-region excluding those near the split
    chord; chord pixels are cut artifacts and bias the ellipse fit."""
    contour, _ = trace_boundary(sub)
    if len(contour) < 5:
        return contour
    dist = _point_segment_distance(contour, p_i, p_j)
    kept = contour[dist > margin]
    return kept if len(kept) >= 5 else contour


def segregate(region: Region, params: SegregationParams) -> SegregationResult:
    """Score all concave-point pairs of an overlapped region and split at
    the best chord when its ellipse-fit quality exceeds the threshold."""
    contour_local = region.contour - np.array(region.offset, dtype=float)
    kappa = compute_curvature(contour_local, params.smooth_window)
    points = detect_high_curvature_points(kappa, contour_local,
                                          params.kappa_threshold,
                                          params.merge_gap)
    if len(points) > params.max_points:
        points = sorted(points, key=lambda p: p.kappa)[: params.max_points]
        points.sort(key=lambda p: p.contour_index)
    if len(points) < 2:
        return SegregationResult(split=False, best_quality=0.0)

    parent_area = int(region.mask.sum())
    min_sub = max(params.min_region_area,
                  int(params.min_sub_fraction * parent_area))
    best: SegregationResult | None = None
    for i, j in combinations(range(len(points)), 2):
        pi = np.array([points[i].x, points[i].y])
        pj = np.array([points[j].x, points[j].y])
        parts = split_region(region.mask, tuple(pi), tuple(pj))
        if parts is None:
            continue
        if min(parts[0].sum(), parts[1].sum()) < min_sub:
            continue
        fits = []
        qualities = []
        try:
            for sub in parts:
                bpts = _sub_boundary_points(sub, pi, pj, params.chord_margin)
                e = fit_ellipse(bpts)
                fits.append(e)
                qualities.append(fit_quality(sub, e))
        except EllipseFitError:
            continue
        agg = min(qualities) if params.aggregate == "min" else float(np.mean(qualities))
        cand = SplitCandidate(i=i, j=j, p_i=points[i], p_j=points[j],
                              fit_a=qualities[0], fit_b=qualities[1],
                              quality=agg)
        if best is None or agg > best.best_quality:
            best = SegregationResult(split=False, best_quality=agg,
                                     candidate=cand,
                                     sub_masks=(parts[0], parts[1]),
                                     sub_ellipses=(fits[0], fits[1]))
    if best is None:
        return SegregationResult(split=False, best_quality=0.0)
    if best.best_quality > params.accept_quality:
        best.split = True
    else:
        best.sub_masks = None
        best.sub_ellipses = None
    return best
