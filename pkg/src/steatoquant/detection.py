"""Steatosis candidate segmentation and shape-feature classification.

The rotated tissue image is converted to grayscale, contrast-enhanced
with contrast-limited adaptive histogram equalization, binarized by
hysteresis thresholding (steatosis is bright: fat vacuoles are
unstained), cleaned up morphologically, and each connected candidate is
classified by an inverse-circularity / solidity / extent cascade.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage as ndi

from .contours import contour_perimeter, convex_hull_area, trace_boundary

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class RegionClass(enum.Enum):
    ISOLATED = "isolated"
    OVERLAPPED = "overlapped"
    REJECTED_NONCIRCULAR = "rejected:non-circular"
    REJECTED_LOW_EXTENT = "rejected:low-extent"

    @property
    def rejected(self) -> bool:
        return self.value.startswith("rejected")


@dataclass(frozen=True)
class ShapeFeatures:
    area: float
    perimeter: float
    inv_circularity: float
    solidity: float
    extent: float


@dataclass(frozen=True)
class DetectionParams:
    hysteresis_low: float = 0.65
    hysteresis_high: float = 0.8
    inv_circ_max: float = 3.0
    solidity_single: float = 0.95
    extent_min: float = 0.5
    min_region_area: int = 50
    morph_radius: int = 2
    clahe_tile: int = 64
    clahe_clip: float = 2.0
    invert: bool = False

    def __post_init__(self):
        if not 0.0 <= self.hysteresis_low < self.hysteresis_high <= 1.0:
            raise ValueError("need 0 <= low < high <= 1")
        for name in ("inv_circ_max", "solidity_single", "extent_min",
                     "min_region_area", "morph_radius", "clahe_tile",
                     "clahe_clip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class Region:
    """One steatosis candidate in the rotated tissue frame."""

    id: int
    mask: np.ndarray              # local to bbox
    offset: tuple[int, int]       # (x, y) of bbox in the tissue image
    contour: np.ndarray           # (N, 2) tissue-frame pixel coords
    features: ShapeFeatures
    classification: RegionClass
    border: bool = False
    has_holes: bool = False

    @property
    def area(self) -> float:
        return self.features.area


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an RGB uint8 image, scaled to [0, 1]."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an RGB image")
    rgb = img.astype(float)
    return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0


def _clipped_cdf_luts(hists: np.ndarray, clip: float) -> np.ndarray:
    """Per-tile CDF lookup tables from 256-bin histograms with the
    classic clip-limit (multiple of the mean bin count); clipped excess
    is redistributed uniformly."""
    counts = hists.sum(axis=-1, keepdims=True).astype(float)
    counts[counts == 0] = 1.0
    limit = np.maximum(clip * counts / 256.0, 1.0)
    clipped = np.minimum(hists, limit)
    excess = hists.sum(axis=-1, keepdims=True) - clipped.sum(axis=-1, keepdims=True)
    clipped = clipped + excess / 256.0
    cdf = np.cumsum(clipped, axis=-1) / counts
    return np.clip(cdf, 0.0, 1.0)


def equalize_adaptive(img: np.ndarray, tile: int = 64, clip: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Tile histograms (256 bins) are clipped at ``clip`` times the mean
    bin count; per-pixel output is the bilinear blend of the four
    surrounding tile mappings.  Images smaller than one tile fall back
    to a single global (clipped) equalization.
    """
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    bins = np.clip((img * 256).astype(int), 0, 255)
    if h < tile or w < tile:
        hist = np.bincount(bins.ravel(), minlength=256)
        lut = _clipped_cdf_luts(hist[None, :], clip)[0]
        return lut[bins]
    gh, gw = (h + tile - 1) // tile, (w + tile - 1) // tile
    tile_row = np.minimum(np.arange(h) // tile, gh - 1)
    tile_col = np.minimum(np.arange(w) // tile, gw - 1)
    tid = tile_row[:, None] * gw + tile_col[None, :]
    hists = np.zeros((gh * gw, 256), dtype=np.int64)
    np.add.at(hists, (tid.ravel(), bins.ravel()), 1)
    luts = _clipped_cdf_luts(hists, clip).reshape(gh, gw, 256)

    # tile-center based bilinear blending
    centers_y = np.minimum(np.arange(gh) * tile + tile / 2.0, h - 0.5)
    centers_x = np.minimum(np.arange(gw) * tile + tile / 2.0, w - 0.5)
    fy = np.interp(np.arange(h) + 0.5, centers_y, np.arange(gh))
    fx = np.interp(np.arange(w) + 0.5, centers_x, np.arange(gw))
    y0 = np.floor(fy).astype(int)
    x0 = np.floor(fx).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (fy - y0)[:, None]
    wx = (fx - x0)[None, :]

    def lookup(rows, cols):
        return luts[rows[:, None], cols[None, :], bins]

    out = ((1 - wy) * (1 - wx) * lookup(y0, x0)
           + (1 - wy) * wx * lookup(y0, x1)
           + wy * (1 - wx) * lookup(y1, x0)
           + wy * wx * lookup(y1, x1))
    return np.clip(out, 0.0, 1.0)


def hysteresis_binarize(img: np.ndarray, low: float = 0.65,
                        high: float = 0.8) -> np.ndarray:
    """Two-threshold binarization: keep >= high pixels plus >= low pixels
    8-connected to them through >= low pixels."""
    weak = img >= low
    strong = img >= high
    if not strong.any():
        return np.zeros_like(weak)
    labels, _ = ndi.label(weak, structure=EIGHT_CONNECTED)
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0])


def disc_footprint(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r: r + 1, -r: r + 1]
    return xx * xx + yy * yy <= r * r


def remove_small_objects(mask: np.ndarray, min_area: int) -> np.ndarray:
    labels, n = ndi.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return mask.copy()
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def morphological_cleanup(mask: np.ndarray, morph_radius: int = 2,
                          min_region_area: int = 50) -> np.ndarray:
    """Opening then closing with a disc element, then small-object removal."""
    out = np.asarray(mask, dtype=bool)
    if morph_radius > 0:
        footprint = disc_footprint(morph_radius)
        out = ndi.binary_opening(out, structure=footprint)
        out = ndi.binary_closing(out, structure=footprint)
    return remove_small_objects(out, min_region_area)


def compute_shape_features(mask: np.ndarray,
                           contour: np.ndarray | None = None) -> ShapeFeatures:
    """Shape features of a single region.

    Area is the pixel count; perimeter is the polygonal length of the
    traced boundary (sqrt(2) diagonal steps); solidity is area over the
    boundary-center convex hull area, clamped at 1 so convex regions
    score exactly 1; extent uses the tight pixel bounding box.
    """
    mask = np.asarray(mask, dtype=bool)
    area = float(mask.sum())
    if area == 0:
        raise ValueError("empty region")
    if contour is None:
        contour, _ = trace_boundary(mask)
    perimeter = contour_perimeter(contour)
    inv_circ = perimeter ** 2 / (4.0 * np.pi * area) if perimeter > 0 else 0.0
    hull_area = convex_hull_area(mask)
    solidity = area / hull_area if hull_area > 0 else 1.0
    ys, xs = np.nonzero(mask)
    bbox_area = float((xs.max() - xs.min() + 1) * (ys.max() - ys.min() + 1))
    return ShapeFeatures(area=area, perimeter=perimeter,
                         inv_circularity=inv_circ,
                         solidity=min(solidity, 1.0),
                         extent=area / bbox_area)


def classify_region(f: ShapeFeatures, params: DetectionParams) -> RegionClass:
    """Fixed-order cascade: non-circular -> isolated -> low-extent -> overlapped."""
    if f.inv_circularity > params.inv_circ_max:
        return RegionClass.REJECTED_NONCIRCULAR
    if f.solidity > params.solidity_single:
        return RegionClass.ISOLATED
    if f.extent < params.extent_min:
        return RegionClass.REJECTED_LOW_EXTENT
    return RegionClass.OVERLAPPED


def detect_regions(rgb: np.ndarray, params: DetectionParams) -> list[Region]:
    """Full detection pass over one rotated tissue image."""
    gray = to_grayscale(rgb)
    eq = equalize_adaptive(gray, params.clahe_tile, params.clahe_clip)
    if params.invert:
        eq = 1.0 - eq
    mask = hysteresis_binarize(eq, params.hysteresis_low, params.hysteresis_high)
    mask = morphological_cleanup(mask, params.morph_radius, params.min_region_area)
    labels, n = ndi.label(mask, structure=EIGHT_CONNECTED)
    h, w = mask.shape
    regions = []
    for rid, sl in enumerate(ndi.find_objects(labels), start=1):
        if sl is None:
            continue
        sub = labels[sl] == rid
        oy, ox = sl[0].start, sl[1].start
        contour_local, has_holes = trace_boundary(sub)
        contour = contour_local + np.array([ox, oy], dtype=float)
        feats = compute_shape_features(sub, contour_local)
        border = (ox == 0 or oy == 0
                  or sl[1].stop == w or sl[0].stop == h)
        regions.append(Region(id=rid, mask=sub, offset=(ox, oy),
                              contour=contour, features=feats,
                              classification=classify_region(feats, params),
                              border=border, has_holes=has_holes))
    return regions
