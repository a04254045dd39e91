"""End-to-end orchestration: load slide, extract tissues, detect,
segregate, and report."""

from __future__ import annotations

import dataclasses
import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .detection import DetectionParams, RegionClass, detect_regions, to_grayscale
from .pyramid import (
    BoundingBox,
    Point2,
    PyramidImage,
    frame_tag,
    load_pyramid,
    read_region,
)
from .report import (
    OverlayStyle,
    QuantReport,
    TissueResult,
    aggregate,
    render_overlay,
    write_report,
)
from .segregation import SegregationParams, segregate
from .tissue import (
    TissueComponent,
    TissueFrameMapper,
    estimate_rotation,
    extract_rotated_tissue,
    find_tissue_components,
    fit_bounding_box,
    otsu_threshold,
    rotated_extent,
)
from .contours import trace_boundary


@dataclass(frozen=True)
class PipelineConfig:
    detection: DetectionParams = field(default_factory=DetectionParams)
    segregation: SegregationParams = field(default_factory=SegregationParams)
    fill: tuple[int, int, int] = (255, 255, 255)
    min_tissue_area: int = 5000
    analysis_level: int = 4
    workers: int | None = None
    out_dir: str | None = None
    debug_dir: str | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        d.pop("debug_dir")
        return d


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Build a config from an optional TOML/JSON file plus keyword
    overrides (flat keys for pipeline fields, nested dicts under
    ``detection`` / ``segregation``)."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if path.suffix == ".json":
            data = json.loads(path.read_text())
        else:
            data = tomllib.loads(path.read_text())
    det = {**data.get("detection", {}), **overrides.pop("detection", {})}
    seg = {**data.get("segregation", {}), **overrides.pop("segregation", {})}
    pipe = {k: v for k, v in data.items() if k not in ("detection", "segregation")}
    pipe.update(overrides)
    if "fill" in pipe:
        pipe["fill"] = tuple(pipe["fill"])
    return PipelineConfig(detection=DetectionParams(**det),
                          segregation=SegregationParams(**seg), **pipe)


def _component_boundary_local(comp: TissueComponent, scale: int) -> np.ndarray:
    """Tissue boundary at base level, in the crop's local frame, derived
    by scaling the low-resolution contour rather than re-tracing at L0."""
    boundary_low, _ = trace_boundary(comp.mask)
    boundary_base = (boundary_low + 0.5) * scale  # pixel centers, then scale
    origin = np.array([comp.bbox_base.x, comp.bbox_base.y], dtype=float)
    return boundary_base - origin


def process_tissue(pyr: PyramidImage, comp: TissueComponent, tissue_index: int,
                   config: PipelineConfig) -> TissueResult:
    level = config.analysis_level
    scale = 2 ** level
    comp.bbox_low = fit_bounding_box(comp.mask, level)
    comp.rotation = estimate_rotation(comp.mask, level)
    # map the low-resolution box to base level, clipped to the raster
    x0 = comp.bbox_low.x * scale
    y0 = comp.bbox_low.y * scale
    w = min(comp.bbox_low.width * scale, pyr.width0 - x0)
    h = min(comp.bbox_low.height * scale, pyr.height0 - y0)
    comp.bbox_base = BoundingBox(x0, y0, w, h, 0)
    boundary_local = _component_boundary_local(comp, scale)
    comp.boundary_base = boundary_local
    center_local = Point2(w / 2.0, h / 2.0, frame_tag("local", 0))
    ext = rotated_extent(boundary_local, center_local, comp.rotation)
    # pad the rotated extent: the contour comes from the coarse level and
    # underestimates the true extent by up to one coarse pixel
    pad = 2.0 * scale
    ext = replace(ext, width=ext.width + 2 * pad, height=ext.height + 2 * pad)
    rotated = extract_rotated_tissue(pyr, comp, ext, config.fill)
    regions = detect_regions(rotated, config.detection)
    seg_results = {}
    for region in regions:
        if region.classification is RegionClass.OVERLAPPED:
            seg_params = replace(config.segregation,
                                 min_region_area=max(
                                     config.segregation.min_region_area,
                                     config.detection.min_region_area))
            seg_results[region.id] = segregate(region, seg_params)
    center = comp.bbox_base.center
    mapper = TissueFrameMapper(angle=comp.rotation.angle,
                               out_w=rotated.shape[1], out_h=rotated.shape[0],
                               crop_center_global=(center.x, center.y))
    tissue_area = float(comp.mask.sum()) * scale * scale
    return TissueResult(tissue_index=tissue_index, regions=regions,
                        seg_results=seg_results, mapper=mapper,
                        tissue_area_px=tissue_area, rotated_image=rotated)


def run_pipeline_on_pyramid(pyr: PyramidImage, slide_id: str,
                            config: PipelineConfig) -> QuantReport:
    """Run the full analysis on an already-loaded pyramid."""
    level = config.analysis_level
    gray = to_grayscale(pyr.level_raster(level))
    try:
        _, tissue_mask = otsu_threshold(gray)
    except ValueError:
        tissue_mask = np.zeros(gray.shape, dtype=bool)
    comps = find_tissue_components(tissue_mask, config.min_tissue_area)

    if config.debug_dir:
        dbg = Path(config.debug_dir)
        dbg.mkdir(parents=True, exist_ok=True)
        for k, comp in enumerate(comps):
            Image.fromarray((comp.mask * 255).astype(np.uint8)).save(
                dbg / f"tissue_{k}_L{level}_mask.png")

    def work(args):
        idx, comp = args
        return process_tissue(pyr, comp, idx, config)

    if config.workers and config.workers > 1 and len(comps) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, enumerate(comps)))
    else:
        results = [work(item) for item in enumerate(comps)]
    results.sort(key=lambda r: r.tissue_index)

    report = aggregate(slide_id, results, config.to_dict(),
                       microns_per_pixel=pyr.microns_per_pixel)

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(report, "json", out_dir / f"{slide_id}_report.json")
        write_report(report, "csv", out_dir / f"{slide_id}_report.csv")
        for res in results:
            overlay = render_overlay(res.rotated_image, res.regions,
                                     res.seg_results, OverlayStyle())
            Image.fromarray(overlay).save(
                out_dir / f"{slide_id}_tissue_{res.tissue_index}_overlay.png")
    if config.debug_dir:
        dbg = Path(config.debug_dir)
        for res in results:
            Image.fromarray(res.rotated_image).save(
                dbg / f"tissue_{res.tissue_index}_rotated.png")
    return report


def run_pipeline(slide_path: str | Path, config: PipelineConfig) -> QuantReport:
    slide_path = Path(slide_path)
    pyr = load_pyramid(slide_path)
    return run_pipeline_on_pyramid(pyr, slide_path.name, config)
