"""Multi-resolution slide pyramid and cross-level coordinate mapping.

Conventions used throughout the package:

* RGB rasters are uint8 numpy arrays of shape (H, W, 3); grayscale rasters
  are float arrays in [0, 1] of shape (H, W); binary masks are bool arrays.
* Points are (x, y) with x along columns and y along rows.  Every
  :class:`Point2` carries an explicit frame tag so cross-frame arithmetic
  is impossible to do silently.
* Pyramid level L is downsampled by exactly ``2**L`` from level 0.

On-disk layout: a directory containing ``pyramid.json`` with fields
``width0``, ``height0`` and ``levels: [{level, width, height, file}]``,
plus one 8-bit RGB PNG/TIFF per level.  ``microns_per_pixel`` is an
optional metadata field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

GLOBAL = "global"
LOCAL = "local"
ROTATED = "rotated"


class PyramidError(Exception):
    """Raised for malformed or unreadable pyramid layouts."""


@dataclass(frozen=True)
class Point2:
    """A sub-pixel 2D point with an explicit coordinate frame.

    ``frame`` is one of ``"global@L<k>"``, ``"local@L0"`` (coordinates of
    the extracted tissue crop) or ``"rotated@L0"`` (coordinates of the
    rotated tissue image).
    """

    x: float
    y: float
    frame: str = "global@L0"

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def frame_tag(kind: str, level: int = 0) -> str:
    return f"{kind}@L{level}"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box at a given pyramid level (top-left origin)."""

    x: int
    y: int
    width: int
    height: int
    level: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("bounding box must have positive extent")

    @property
    def center(self) -> Point2:
        return Point2(self.x + self.width / 2.0, self.y + self.height / 2.0,
                      frame_tag(GLOBAL, self.level))


@dataclass(frozen=True)
class LevelInfo:
    level: int
    width: int
    height: int
    file: str | None = None


def downsample2x(img: np.ndarray) -> np.ndarray:
    """2x2 box-filter downsample with floor semantics on odd dimensions."""
    h, w = img.shape[:2]
    h2, w2 = h // 2, w // 2
    trimmed = img[: h2 * 2, : w2 * 2].astype(np.float64)
    if img.ndim == 3:
        pooled = trimmed.reshape(h2, 2, w2, 2, img.shape[2]).mean(axis=(1, 3))
    else:
        pooled = trimmed.reshape(h2, 2, w2, 2).mean(axis=(1, 3))
    if np.issubdtype(img.dtype, np.integer):
        return np.rint(pooled).astype(img.dtype)
    return pooled.astype(img.dtype)


class PyramidImage:
    """Immutable multi-resolution raster.

    Levels absent from the source are synthesized by repeated 2x2
    box-filter downsampling from the nearest finer stored level, so
    levels 0..4 are always available.
    """

    def __init__(self, rasters: dict[int, np.ndarray],
                 microns_per_pixel: float | None = None,
                 min_levels: int = 5):
        if 0 not in rasters:
            raise PyramidError("no base level")
        self._rasters: dict[int, np.ndarray] = {}
        h0, w0 = rasters[0].shape[:2]
        for lvl in sorted(rasters):
            arr = rasters[lvl]
            eh, ew = h0 // 2 ** lvl, w0 // 2 ** lvl
            if abs(arr.shape[0] - eh) > 1 or abs(arr.shape[1] - ew) > 1:
                raise PyramidError(
                    f"inconsistent pyramid: level {lvl} is "
                    f"{arr.shape[1]}x{arr.shape[0]}, expected ~{ew}x{eh}")
            self._rasters[lvl] = arr
        max_level = max(max(rasters), min_levels - 1)
        for lvl in range(1, max_level + 1):
            if lvl not in self._rasters:
                self._rasters[lvl] = downsample2x(self._rasters[lvl - 1])
        self.microns_per_pixel = microns_per_pixel

    @property
    def levels(self) -> list[LevelInfo]:
        return [LevelInfo(lvl, a.shape[1], a.shape[0])
                for lvl, a in sorted(self._rasters.items())]

    @property
    def width0(self) -> int:
        return self._rasters[0].shape[1]

    @property
    def height0(self) -> int:
        return self._rasters[0].shape[0]

    def level_raster(self, level: int) -> np.ndarray:
        if level not in self._rasters:
            raise PyramidError(f"level {level} not available")
        return self._rasters[level]

    def level_size(self, level: int) -> tuple[int, int]:
        arr = self.level_raster(level)
        return arr.shape[1], arr.shape[0]


def load_pyramid(path: str | Path) -> PyramidImage:
    """Load a pyramid from the on-disk directory layout."""
    path = Path(path)
    meta_path = path / "pyramid.json"
    if not meta_path.is_file():
        raise PyramidError(f"path not found or not a pyramid: {path}")
    meta = json.loads(meta_path.read_text())
    rasters: dict[int, np.ndarray] = {}
    for entry in meta.get("levels", []):
        lvl = int(entry["level"])
        fp = path / entry["file"]
        try:
            arr = np.asarray(Image.open(fp).convert("RGB"))
        except OSError as exc:
            raise PyramidError(f"unreadable raster {fp}: {exc}") from exc
        if arr.shape[1] != entry["width"] or arr.shape[0] != entry["height"]:
            raise PyramidError(
                f"level {lvl} raster size does not match metadata")
        rasters[lvl] = arr
    if 0 not in rasters:
        raise PyramidError("no base level")
    if rasters[0].shape[1] != meta["width0"] or rasters[0].shape[0] != meta["height0"]:
        raise PyramidError("base level size does not match metadata")
    return PyramidImage(rasters, microns_per_pixel=meta.get("microns_per_pixel"))


def save_pyramid(p: PyramidImage, path: str | Path) -> None:
    """Write a pyramid in the on-disk directory layout."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    levels = []
    for info in p.levels:
        fname = f"level_{info.level}.png"
        Image.fromarray(p.level_raster(info.level)).save(path / fname)
        levels.append({"level": info.level, "width": info.width,
                       "height": info.height, "file": fname})
    meta = {"width0": p.width0, "height0": p.height0, "levels": levels}
    if p.microns_per_pixel is not None:
        meta["microns_per_pixel"] = p.microns_per_pixel
    (path / "pyramid.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_region(p: PyramidImage, level: int, box: BoundingBox) -> np.ndarray:
    """Pixel-exact crop of the stored raster at ``level``; no resampling."""
    if box.level != level:
        raise ValueError(f"box level {box.level} != requested level {level}")
    arr = p.level_raster(level)
    h, w = arr.shape[:2]
    if box.x < 0 or box.y < 0 or box.x + box.width > w or box.y + box.height > h:
        raise ValueError(
            f"box {box} out of bounds for level {level} ({w}x{h})")
    return arr[box.y: box.y + box.height, box.x: box.x + box.width].copy()


def map_level_coords(pt: Point2, from_level: int, to_level: int) -> Point2:
    """Scale global coordinates between pyramid levels (sub-pixel exact)."""
    if not pt.frame.startswith(GLOBAL):
        raise ValueError(f"expected a global-frame point, got {pt.frame}")
    scale = 2.0 ** (from_level - to_level)
    return Point2(pt.x * scale, pt.y * scale, frame_tag(GLOBAL, to_level))


def map_level_points(pts: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
    """Array form of :func:`map_level_coords` for (N, 2) point arrays."""
    return np.asarray(pts, dtype=float) * 2.0 ** (from_level - to_level)


def global_from_local(local: Point2, center: Point2,
                      box_width: float, box_height: float) -> Point2:
    """Map a point local to an extracted crop into global level-0 coordinates.

    The crop is ``box_width`` x ``box_height`` with global center ``center``;
    the map is the pure translation (x', y') = (x^, y^) + (xc, yc) - (W/2, H/2).
    """
    if not local.frame.startswith(LOCAL):
        raise ValueError(f"expected a local-frame point, got {local.frame}")
    if not center.frame.startswith(GLOBAL):
        raise ValueError(f"expected a global-frame center, got {center.frame}")
    return Point2(local.x + center.x - box_width / 2.0,
                  local.y + center.y - box_height / 2.0,
                  frame_tag(GLOBAL, 0))


def local_from_global(pt: Point2, center: Point2,
                      box_width: float, box_height: float) -> Point2:
    """Exact inverse of :func:`global_from_local`."""
    if not pt.frame.startswith(GLOBAL):
        raise ValueError(f"expected a global-frame point, got {pt.frame}")
    return Point2(pt.x - center.x + box_width / 2.0,
                  pt.y - center.y + box_height / 2.0,
                  frame_tag(LOCAL, 0))
