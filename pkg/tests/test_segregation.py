"""Curvature, concave-point detection, ellipse fitting and splitting."""

import math

import numpy as np
import pytest

from steatoquant.contours import trace_boundary
from steatoquant.segregation import (
    EllipseFitError,
    EllipseParams,
    SegregationParams,
    compute_curvature,
    detect_high_curvature_points,
    ellipse_mask,
    fit_ellipse,
    fit_quality,
    segregate,
    split_region,
)
from conftest import disc_mask, ellipse_mask_at, make_region, two_disc_mask


# ---------------------------------------------------------------------------
# curvature

def test_curvature_circle_analytic():
    for r in (10, 20, 40):
        contour, _ = trace_boundary(disc_mask(r))
        kappa = compute_curvature(contour, smooth_window=5)
        assert np.all(kappa > 0)
        assert abs(kappa.mean() - 1 / r) / (1 / r) < 0.15


def test_curvature_straight_edges():
    mask = np.zeros((120, 120), dtype=bool)
    mask[10:110, 10:110] = True
    contour, _ = trace_boundary(mask)
    kappa = compute_curvature(contour, smooth_window=5)
    # straight spans away from the four corners
    n = len(contour)
    corner_idx = {i for i in range(n)
                  if min(abs(contour[i, 0] - 10), abs(contour[i, 0] - 109)) < 8
                  and min(abs(contour[i, 1] - 10), abs(contour[i, 1] - 109)) < 8}
    straight = [k for i, k in enumerate(kappa) if i not in corner_idx]
    assert np.all(np.abs(straight) < 0.01)


def test_curvature_necks_near_analytic_intersections():
    """The two most negative curvatures occur near the analytic
    circle-circle intersection points (oracle: exact lens geometry)."""
    r, d = 20, 30
    mask = two_disc_mask(r, r, d)
    contour, _ = trace_boundary(mask)
    kappa = compute_curvature(contour, smooth_window=5)
    # analytic intersections of the two circles, in mask coordinates
    cx1 = r + 4
    cy = mask.shape[0] / 2.0
    x_int = cx1 + d / 2.0
    y_off = math.sqrt(r * r - (d / 2.0) ** 2)
    necks = [(x_int, cy - y_off), (x_int, cy + y_off)]
    order = np.argsort(kappa)
    found = contour[order[:2]]
    for nx, ny in necks:
        dist = np.hypot(found[:, 0] - nx, found[:, 1] - ny).min()
        assert dist <= 4.0


def test_curvature_short_contour_empty():
    contour = np.array([[0, 0], [1, 0], [1, 1]], dtype=float)
    assert compute_curvature(contour, smooth_window=5).size == 0


# ---------------------------------------------------------------------------
# concave point detection

def test_no_concave_points_on_ellipse():
    mask = ellipse_mask_at(40, 30, 30, 18, 0.4, (60, 80))
    contour, _ = trace_boundary(mask)
    kappa = compute_curvature(contour, 5)
    assert detect_high_curvature_points(kappa, contour, 0.08, 5) == []


def test_two_disc_gives_one_point_per_neck():
    mask = two_disc_mask(20, 20, 30)
    contour, _ = trace_boundary(mask)
    kappa = compute_curvature(contour, 5)
    points = detect_high_curvature_points(kappa, contour, 0.08, 5)
    assert len(points) == 2


def test_concave_run_merges_to_minimum():
    kappa = np.full(100, 0.05)
    run = np.arange(40, 52)  # 12-point concave run
    kappa[run] = -0.1
    kappa[45] = -0.5
    contour = np.stack([np.arange(100), np.zeros(100)], axis=1).astype(float)
    points = detect_high_curvature_points(kappa, contour, 0.08, merge_gap=5)
    assert len(points) == 1
    assert points[0].contour_index == 45
    assert points[0].kappa == -0.5


def test_merge_wraps_around_contour_start():
    kappa = np.full(60, 0.05)
    kappa[[58, 59, 0, 1]] = -0.2
    kappa[59] = -0.3
    contour = np.stack([np.arange(60), np.zeros(60)], axis=1).astype(float)
    points = detect_high_curvature_points(kappa, contour, 0.08, merge_gap=5)
    assert len(points) == 1
    assert points[0].contour_index == 59


# ---------------------------------------------------------------------------
# ellipse fitting

def _ellipse_samples(a, b, phi, n=40, cx=0.0, cy=0.0):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x = a * np.cos(t)
    y = b * np.sin(t)
    c, s = math.cos(phi), math.sin(phi)
    return np.stack([cx + c * x - s * y, cy + s * x + c * y], axis=1)


def test_fit_ellipse_exact_samples():
    phi = math.radians(25)
    e = fit_ellipse(_ellipse_samples(30, 15, phi, cx=100, cy=50))
    assert abs(e.a - 30) / 30 < 0.01
    assert abs(e.b - 15) / 15 < 0.01
    assert abs(e.phi - phi) < math.radians(1)
    assert abs(e.cx - 100) < 0.5 and abs(e.cy - 50) < 0.5


def test_fit_ellipse_circle():
    e = fit_ellipse(_ellipse_samples(10, 10, 0.0))
    assert abs(e.a - 10) / 10 < 0.01
    assert abs(e.b - 10) / 10 < 0.01


def test_fit_ellipse_errors():
    with pytest.raises(EllipseFitError):
        fit_ellipse(np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float))
    collinear = np.stack([np.arange(5), 2 * np.arange(5)], axis=1).astype(float)
    with pytest.raises(EllipseFitError):
        fit_ellipse(collinear)


# ---------------------------------------------------------------------------
# fit quality

def test_fit_quality_self():
    e = EllipseParams(30, 25, 18, 11, 0.3)
    mask = ellipse_mask(e, (50, 60))
    assert fit_quality(mask, e) >= 0.98


def test_fit_quality_disjoint():
    e = EllipseParams(100, 100, 10, 10, 0.0)
    mask = disc_mask(10)
    assert fit_quality(mask, e) == 0.0


def test_fit_quality_half_overlap_is_one_third():
    """Congruent circles offset so the lens covers half of each
    (analytic offset 0.8079 r) give IoU = (A/2)/(3A/2) = 1/3."""
    r = 40.0
    d = 0.807946 * r
    e = EllipseParams(60 + d, 60, r, r, 0.0)
    mask = ellipse_mask(EllipseParams(60, 60, r, r, 0.0), (120, 180))
    assert abs(fit_quality(mask, e) - 1 / 3) < 0.03


def test_fit_quality_counts_out_of_frame_ellipse_area():
    e = EllipseParams(5, 5, 20, 20, 0.0)  # extends far beyond the mask frame
    mask = np.ones((10, 10), dtype=bool)
    assert fit_quality(mask, e) < 0.2


# ---------------------------------------------------------------------------
# splitting

def test_split_square_mid_chord():
    mask = np.zeros((30, 30), dtype=bool)
    mask[5:25, 5:25] = True
    parts = split_region(mask, (14.5, 0.0), (14.5, 29.0))
    assert parts is not None
    a, b = int(parts[0].sum()), int(parts[1].sum())
    assert abs(a - b) <= 20  # within one pixel column of equal halves
    assert a + b == mask.sum()


def test_split_disconnected_side_rejected():
    mask = np.zeros((20, 40), dtype=bool)
    mask[8:12, 2:18] = True
    mask[8:12, 22:38] = True
    mask[9:11, 18:22] = True  # thin bridge spanning rows 9-10 only
    # chord between the lobes' top rows and the bridge: one side becomes
    # the two disconnected top strips of the lobes
    parts = split_region(mask, (0.0, 8.5), (39.0, 8.5))
    assert parts is None


def test_split_two_disc_areas_match_generating_discs():
    r, d = 20, 30
    mask = two_disc_mask(r, r, d)
    h = mask.shape[0]
    x_neck = r + 4 + d / 2.0
    parts = split_region(mask, (x_neck, 0.0), (x_neck, float(h - 1)))
    assert parts is not None
    visible = mask.sum() / 2.0  # symmetric halves
    for sub in parts:
        assert abs(int(sub.sum()) - visible) / visible < 0.1


def test_segregate_two_discs_recovers_circles():
    mask = two_disc_mask(20, 20, 30)
    region = make_region(mask)
    result = segregate(region, SegregationParams())
    assert result.split
    assert result.best_quality > 0.7
    e1, e2 = result.sub_ellipses
    cy = mask.shape[0] / 2.0
    centers_true = [(24.0, cy), (54.0, cy)]
    got = sorted([(e1.cx, e1.cy), (e2.cx, e2.cy)])
    for (gx, gy), (tx, ty) in zip(got, centers_true):
        assert math.hypot(gx - tx, gy - ty) <= 2.0
    for e in (e1, e2):
        assert abs(e.a - 20) / 20 < 0.10
        assert abs(e.b - 20) / 20 < 0.10


def test_segregate_sub_areas_nearly_symmetric():
    mask = two_disc_mask(18, 18, 27)
    result = segregate(make_region(mask), SegregationParams())
    assert result.split
    a, b = (int(m.sum()) for m in result.sub_masks)
    assert abs(a - b) / max(a, b) < 0.1


def test_segregate_clean_ellipse_nonseparable():
    mask = ellipse_mask_at(40, 30, 28, 20, 0.2, (60, 80))
    result = segregate(make_region(mask), SegregationParams())
    assert not result.split
    assert result.best_quality == 0.0  # no concave point pairs at all


def test_segregate_dumbbell_nonseparable():
    mask = np.zeros((40, 120), dtype=bool)
    yy, xx = np.mgrid[0:40, 0:120]
    mask |= (xx - 15) ** 2 + (yy - 20) ** 2 <= 100
    mask |= (xx - 105) ** 2 + (yy - 20) ** 2 <= 100
    mask[18:23, 15:105] = True  # long thin bridge
    result = segregate(make_region(mask), SegregationParams())
    assert not result.split
    assert result.best_quality <= 0.7


def test_segregate_deterministic():
    mask = two_disc_mask(20, 16, 28)
    p = SegregationParams()
    r1 = segregate(make_region(mask), p)
    r2 = segregate(make_region(mask), p)
    assert r1.split == r2.split
    assert r1.best_quality == r2.best_quality
    if r1.candidate is not None:
        assert (r1.candidate.i, r1.candidate.j) == (r2.candidate.i, r2.candidate.j)


def test_segregate_rotation_equivariance():
    mask = two_disc_mask(20, 20, 30)
    r0 = segregate(make_region(mask), SegregationParams())
    r90 = segregate(make_region(np.rot90(mask)), SegregationParams())
    assert r0.split == r90.split
    assert abs(r0.best_quality - r90.best_quality) < 0.05


def test_split_sub_regions_reclassify_isolated():
    """Accepted splits of symmetric disc pairs produce convex halves
    whose solidity clears the isolated gate."""
    from steatoquant.detection import compute_shape_features
    hits = total = 0
    for r, d in [(20, 30), (16, 25), (24, 38), (18, 30)]:
        result = segregate(make_region(two_disc_mask(r, r, d)),
                           SegregationParams())
        if not result.split:
            continue
        for sub in result.sub_masks:
            total += 1
            if compute_shape_features(sub).solidity > 0.95:
                hits += 1
    assert total >= 6
    assert hits / total >= 0.9
