"""Whole-tissue detection, rotation estimation and rotated extraction.

Tissue components are found on the low-resolution level (default L=4),
their rotation is estimated by PCA of the component mask, and a
background-minimal rotated crop is produced at full resolution by
inverse-mapping every output pixel through the rotation and bilinearly
interpolating the source crop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .pyramid import (
    GLOBAL,
    LOCAL,
    BoundingBox,
    Point2,
    PyramidImage,
    frame_tag,
    read_region,
)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class RotationEstimate:
    """PCA principal axes of a mask; ``angle`` is the major-axis angle
    to +x, normalized to (-pi/2, pi/2]."""

    angle: float
    center: Point2
    major_axis: np.ndarray
    minor_axis: np.ndarray


@dataclass
class RotatedExtent:
    """Extent of the rotated tissue: widths along the principal axes and
    the boundary point pairs that realize them."""

    width: float
    height: float
    p1: Point2
    p2: Point2
    p3: Point2
    p4: Point2


@dataclass
class TissueComponent:
    """One connected tissue piece; fields beyond ``mask`` are filled in
    as the extraction pipeline progresses."""

    mask: np.ndarray
    bbox_low: BoundingBox | None = None
    bbox_base: BoundingBox | None = None
    rotation: RotationEstimate | None = None
    boundary_base: np.ndarray | None = None  # (N, 2) local@L0 coords


def otsu_threshold(img: np.ndarray) -> tuple[float, np.ndarray]:
    """Otsu threshold over a 256-bin histogram of a [0, 1] gray image.

    Returns the threshold and a tissue mask (foreground = pixels *below*
    the threshold, since tissue is darker than the glass background).
    """
    img = np.asarray(img, dtype=float)
    hist, edges = np.histogram(img, bins=256, range=(0.0, 1.0))
    if np.count_nonzero(hist) < 2:
        raise ValueError("degenerate histogram: image has a single gray level")
    total = hist.sum()
    p = hist / total
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256))
    mu_t = mu[-1]
    # between-class variance for threshold after bin k
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    k = int(np.argmax(sigma_b))
    threshold = edges[k + 1]
    return threshold, img < threshold


def find_tissue_components(mask: np.ndarray, min_area: int) -> list[TissueComponent]:
    """8-connected components with area >= min_area, largest first."""
    labels, n = ndi.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())[1:]
    order = np.argsort(-areas, kind="stable")
    comps = []
    for idx in order:
        if areas[idx] < min_area:
            continue
        comps.append(TissueComponent(mask=labels == idx + 1))
    return comps


def estimate_rotation(mask: np.ndarray, level: int = 4,
                      isotropy_ratio: float = 1.05) -> RotationEstimate:
    """Principal-axis rotation of a binary mask.

    Near-isotropic masks (eigenvalue ratio < ``isotropy_ratio``) get
    angle 0 with axis-aligned axes; rotation buys nothing for them and
    the eigenvectors are unstable.
    """
    ys, xs = np.nonzero(mask)
    if xs.size < 3:
        raise ValueError("mask needs at least 3 foreground pixels")
    pts = np.stack([xs, ys], axis=1).astype(float)
    center = pts.mean(axis=0)
    cov = np.cov((pts - center).T)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    center_pt = Point2(center[0], center[1], frame_tag(GLOBAL, level))
    if evals[0] <= 0 or evals[1] / evals[0] < isotropy_ratio:
        return RotationEstimate(0.0, center_pt,
                                np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    major = evecs[:, 1]
    angle = math.atan2(major[1], major[0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    major = np.array([math.cos(angle), math.sin(angle)])
    minor = np.array([-major[1], major[0]])
    return RotationEstimate(angle, center_pt, major, minor)


def fit_bounding_box(mask: np.ndarray, level: int = 4) -> BoundingBox:
    """Tight axis-aligned box over foreground pixels."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise ValueError("empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return BoundingBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1, level)


def _axis_crossings(boundary: np.ndarray, center: np.ndarray,
                    axis: np.ndarray) -> np.ndarray:
    """Signed positions along ``axis`` where the closed boundary polygon
    crosses the line through ``center`` parallel to ``axis``."""
    perp = np.array([-axis[1], axis[0]])
    d = boundary - center
    along = d @ axis
    offset = d @ perp
    nxt = np.roll(np.arange(len(boundary)), -1)
    crossings = []
    for i, j in zip(range(len(boundary)), nxt):
        oi, oj = offset[i], offset[j]
        if oi == 0.0:
            crossings.append(along[i])
        elif (oi < 0) != (oj < 0):
            t = oi / (oi - oj)
            crossings.append(along[i] + t * (along[j] - along[i]))
    return np.asarray(crossings)


def rotated_extent(boundary: np.ndarray, center: Point2,
                   rot: RotationEstimate) -> RotatedExtent:
    """Extent of the tissue along its principal axes.

    P1/P2 are the extreme intersections of the major-axis line through
    the center with the boundary polygon; P3/P4 likewise for the minor
    axis.  If an axis line misses the boundary (pathological contour),
    fall back to the min/max projection of all boundary points.
    """
    boundary = np.asarray(boundary, dtype=float)
    if not center.frame.startswith(LOCAL):
        raise ValueError(f"expected local-frame center, got {center.frame}")
    c = center.as_array()
    frame = center.frame

    def span(axis: np.ndarray) -> tuple[float, float]:
        crossings = _axis_crossings(boundary, c, axis)
        if crossings.size >= 2:
            return float(crossings.min()), float(crossings.max())
        proj = (boundary - c) @ axis
        return float(proj.min()), float(proj.max())

    lo_w, hi_w = span(rot.major_axis)
    lo_h, hi_h = span(rot.minor_axis)
    p1 = c + lo_w * rot.major_axis
    p2 = c + hi_w * rot.major_axis
    p3 = c + lo_h * rot.minor_axis
    p4 = c + hi_h * rot.minor_axis
    return RotatedExtent(hi_w - lo_w, hi_h - lo_h,
                         Point2(*p1, frame), Point2(*p2, frame),
                         Point2(*p3, frame), Point2(*p4, frame))


def _rotation_matrix(angle: float) -> np.ndarray:
    """Forward rotation applied to the tissue so its major axis (at
    ``angle`` to +x) lands on the x axis, i.e. rotation by -angle."""
    c, s = math.cos(-angle), math.sin(-angle)
    return np.array([[c, -s], [s, c]])


def rotate_crop(crop: np.ndarray, angle: float, out_w: int, out_h: int,
                fill: tuple[int, int, int] = (255, 255, 255)) -> np.ndarray:
    """Produce the rotated tissue image from a full-resolution crop.

    Each output pixel is inverse-mapped through the rotation into the
    crop and bilinearly interpolated; out-of-bounds sources take the
    fill color.  Pixel index i is treated as continuous position i+0.5
    so integer-angle rotations are pixel-exact.
    """
    src_h, src_w = crop.shape[:2]
    rinv = _rotation_matrix(angle).T  # rotation matrices: inverse == transpose
    xt, yt = np.meshgrid(np.arange(out_w, dtype=float),
                         np.arange(out_h, dtype=float))
    pos = np.stack([xt + 0.5 - out_w / 2.0, yt + 0.5 - out_h / 2.0])
    src = np.tensordot(rinv, pos, axes=(1, 0))
    sx = src[0] + src_w / 2.0 - 0.5
    sy = src[1] + src_h / 2.0 - 0.5
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    for ch in range(3):
        out[..., ch] = np.clip(np.rint(ndi.map_coordinates(
            crop[..., ch].astype(float), [sy, sx], order=1,
            mode="constant", cval=float(fill[ch]))), 0, 255)
    return out


def extract_rotated_tissue(p: PyramidImage, comp: TissueComponent,
                           ext: RotatedExtent,
                           fill: tuple[int, int, int] = (255, 255, 255)) -> np.ndarray:
    """Read the component's base-level crop and rotate it to the
    background-minimal frame given by ``ext``."""
    if comp.bbox_base is None or comp.rotation is None:
        raise ValueError("component is missing bbox_base or rotation")
    out_w = max(1, int(round(ext.width)))
    out_h = max(1, int(round(ext.height)))
    crop = read_region(p, comp.bbox_base.level, comp.bbox_base)
    return rotate_crop(crop, comp.rotation.angle, out_w, out_h, fill)


@dataclass(frozen=True)
class TissueFrameMapper:
    """Maps points between the rotated tissue frame and global@L0.

    rotated -> local crop:  x^ = R^-1 (x~ - (W/2, H/2)) + (W'/2, H'/2)
    local -> global:        x' = x^ + center - (W'/2, H'/2)
    """

    angle: float
    out_w: int
    out_h: int
    crop_center_global: tuple[float, float]

    def rotated_to_global(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rinv = _rotation_matrix(self.angle).T
        local = (pts - [self.out_w / 2.0, self.out_h / 2.0]) @ rinv.T
        return local + np.asarray(self.crop_center_global)

    def global_to_rotated(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = _rotation_matrix(self.angle)
        local = pts - np.asarray(self.crop_center_global)
        return local @ r.T + [self.out_w / 2.0, self.out_h / 2.0]
