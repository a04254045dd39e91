"""
Image pyramids, region reads and coordinate mapping
===================================================

Builds a small pyramid from a synthetic base raster, reads matching
regions at different levels and maps coordinates between the global
slide frame and the local frame of an extracted crop.
"""

import numpy as np

from steatoquant.pyramid import (
    BoundingBox,
    Point2,
    PyramidImage,
    global_from_local,
    local_from_global,
    map_level_coords,
    read_region,
)

# A 256x256 base raster with a recognizable gradient texture.  Missing
# levels are synthesized by repeated 2x2 box filtering, so every level L
# is an exact 2^L downsampling of level 0.
yy, xx = np.mgrid[0:256, 0:256]
base = np.stack([xx, yy, (xx + yy) // 2], axis=-1).astype(np.uint8)
pyr = PyramidImage({0: base})
for info in pyr.levels:
    print(f"level {info.level}: {info.width}x{info.height}")

# Reading the same physical area at two levels: a 64x64 window at level 0
# covers the same ground as a 32x32 window at level 1 with halved origin.
crop0 = read_region(pyr, 0, BoundingBox(64, 64, 64, 64, level=0))
crop1 = read_region(pyr, 1, BoundingBox(32, 32, 32, 32, level=1))
print("level-0 crop mean:", crop0.mean().round(2))
print("level-1 crop mean:", crop1.mean().round(2))

# map_level_coords scales global coordinates between levels: a point at
# (10, 20) on level 4 sits at (160, 320) on the base raster.
p4 = Point2(10, 20, "global@L4")
print("global@L4 (10, 20) ->", map_level_coords(p4, 4, 0))

# Extracted crops carry their own local frame.  The local<->global map is
# a pure translation built from the crop's global center and size.
center = Point2(96.0, 96.0, "global@L0")
local = Point2(5.0, 7.0, "local@L0")
g = global_from_local(local, center, 64, 64)
back = local_from_global(g, center, 64, 64)
print("local", (local.x, local.y), "-> global", (g.x, g.y),
      "-> local", (back.x, back.y))
