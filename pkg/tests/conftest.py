"""Shared fixtures and geometric helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from steatoquant.detection import (
    DetectionParams,
    Region,
    classify_region,
    compute_shape_features,
)
from steatoquant.contours import trace_boundary


def disc_mask(radius: int, pad: int = 3) -> np.ndarray:
    """Rasterized filled disc with effective radius ``radius + 0.5`` so
    the pixelated disc's area matches pi*r^2 over its (2r+1)^2 bounding
    box (the analytic-value convention used in the feature examples)."""
    n = 2 * (radius + pad) + 1
    c = radius + pad
    yy, xx = np.mgrid[0:n, 0:n]
    return (xx - c) ** 2 + (yy - c) ** 2 <= radius * radius + radius


def ellipse_mask_at(cx, cy, a, b, phi, shape) -> np.ndarray:
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    dx, dy = xx - cx, yy - cy
    c, s = math.cos(phi), math.sin(phi)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return u * u + v * v <= 1.0


def two_disc_mask(r1: int, r2: int, d: float, pad: int = 4) -> np.ndarray:
    """Two overlapping discs with centers ``d`` apart on the x axis."""
    w = int(math.ceil(d)) + r1 + r2 + 2 * pad
    h = 2 * max(r1, r2) + 2 * pad
    yy, xx = np.mgrid[0:h, 0:w]
    c1 = (r1 + pad, h / 2.0)
    c2 = (r1 + pad + d, h / 2.0)
    m1 = (xx - c1[0]) ** 2 + (yy - c1[1]) ** 2 <= r1 ** 2
    m2 = (xx - c2[0]) ** 2 + (yy - c2[1]) ** 2 <= r2 ** 2
    return m1 | m2


def make_region(mask: np.ndarray, params: DetectionParams | None = None,
                region_id: int = 1) -> Region:
    """Build a Region (contour, features, classification) from a mask."""
    params = params or DetectionParams()
    contour, has_holes = trace_boundary(mask)
    feats = compute_shape_features(mask, contour)
    return Region(id=region_id, mask=np.asarray(mask, dtype=bool),
                  offset=(0, 0), contour=contour, features=feats,
                  classification=classify_region(feats, params),
                  border=False, has_holes=has_holes)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
