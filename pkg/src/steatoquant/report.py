"""Per-slide quantification reports and overlay rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detection import Region, RegionClass
from .segregation import SegregationResult
from .tissue import TissueFrameMapper

ISOLATED = "isolated"
SPLIT = "overlapped-split"
NONSEPARABLE = "overlapped-nonseparable"

STEATOSIS_CLASSES = (ISOLATED, SPLIT, NONSEPARABLE)

CSV_COLUMNS = ["region_id", "tissue_index", "class", "x0_global", "y0_global",
               "area_px", "perimeter_px", "inv_circularity", "solidity",
               "extent", "split_partner_id", "border_flag"]


@dataclass
class RegionRecord:
    region_id: int
    tissue_index: int
    cls: str
    x0_global: float
    y0_global: float
    area_px: float
    perimeter_px: float
    inv_circularity: float
    solidity: float
    extent: float
    split_partner_id: int | None
    border_flag: bool
    contour_global: np.ndarray  # (N, 2) global@L0

    @property
    def is_instance(self) -> bool:
        return self.cls in STEATOSIS_CLASSES


@dataclass
class TissueSummary:
    tissue_index: int
    isolated_count: int
    overlapped_count: int
    split_success_count: int
    nonseparable_count: int
    total_steatosis_area_px: float
    tissue_area_px: float
    steatosis_area_fraction: float


@dataclass
class QuantReport:
    slide_id: str
    params: dict
    tissues: list[TissueSummary]
    regions: list[RegionRecord]
    microns_per_pixel: float | None = None

    @property
    def total_instances(self) -> int:
        return sum(1 for r in self.regions if r.is_instance)


@dataclass
class TissueResult:
    """Raw per-tissue pipeline output fed into :func:`aggregate`."""

    tissue_index: int
    regions: list[Region]
    seg_results: dict[int, SegregationResult]
    mapper: TissueFrameMapper
    tissue_area_px: float
    rotated_image: np.ndarray | None = None


def _region_centroid(mask: np.ndarray, offset: tuple[int, int]) -> tuple[float, float]:
    ys, xs = np.nonzero(mask)
    return float(xs.mean() + offset[0]), float(ys.mean() + offset[1])


def aggregate(slide_id: str, tissue_results: list[TissueResult],
              params: dict,
              microns_per_pixel: float | None = None) -> QuantReport:
    """Merge per-tissue detections and splits into one report with all
    coordinates mapped back to global level-0."""
    from .contours import trace_boundary  # local import to avoid cycle
    from .detection import compute_shape_features

    records: list[RegionRecord] = []
    summaries: list[TissueSummary] = []
    next_id = 1
    for tres in sorted(tissue_results, key=lambda t: t.tissue_index):
        mapper = tres.mapper
        isolated = overlapped = split_ok = nonsep = 0
        steat_area = 0.0

        def add_record(cls, mask, offset, contour, feats, border,
                       partner=None) -> RegionRecord:
            nonlocal next_id
            cx, cy = _region_centroid(mask, offset)
            gx, gy = mapper.rotated_to_global([[cx, cy]])[0]
            rec = RegionRecord(
                region_id=next_id, tissue_index=tres.tissue_index, cls=cls,
                x0_global=gx, y0_global=gy, area_px=feats.area,
                perimeter_px=feats.perimeter,
                inv_circularity=feats.inv_circularity,
                solidity=feats.solidity, extent=feats.extent,
                split_partner_id=partner, border_flag=border,
                contour_global=mapper.rotated_to_global(contour))
            next_id += 1
            records.append(rec)
            return rec

        for region in tres.regions:
            cls = region.classification
            if cls is RegionClass.ISOLATED:
                isolated += 1
                steat_area += region.area
                add_record(ISOLATED, region.mask, region.offset,
                           region.contour, region.features, region.border)
            elif cls is RegionClass.OVERLAPPED:
                overlapped += 1
                steat_area += region.area
                seg = tres.seg_results.get(region.id)
                if seg is None:
                    raise ValueError(
                        f"overlapped region {region.id} has no segregation result")
                if seg.split and seg.sub_masks is not None:
                    split_ok += 1
                    subs = []
                    for sub in seg.sub_masks:
                        contour_local, _ = trace_boundary(sub)
                        feats = compute_shape_features(sub, contour_local)
                        off = region.offset
                        subs.append(add_record(
                            SPLIT, sub, off,
                            contour_local + np.array(off, dtype=float),
                            feats, region.border))
                    subs[0].split_partner_id = subs[1].region_id
                    subs[1].split_partner_id = subs[0].region_id
                else:
                    nonsep += 1
                    add_record(NONSEPARABLE, region.mask, region.offset,
                               region.contour, region.features, region.border)
            else:
                add_record(cls.value, region.mask, region.offset,
                           region.contour, region.features, region.border)

        fraction = steat_area / tres.tissue_area_px if tres.tissue_area_px else 0.0
        summaries.append(TissueSummary(
            tissue_index=tres.tissue_index, isolated_count=isolated,
            overlapped_count=overlapped, split_success_count=split_ok,
            nonseparable_count=nonsep, total_steatosis_area_px=steat_area,
            tissue_area_px=tres.tissue_area_px,
            steatosis_area_fraction=fraction))

    report = QuantReport(slide_id=slide_id, params=params, tissues=summaries,
                         regions=records, microns_per_pixel=microns_per_pixel)
    expected = (sum(s.isolated_count for s in summaries)
                + 2 * sum(s.split_success_count for s in summaries)
                + sum(s.nonseparable_count for s in summaries))
    assert report.total_instances == expected, "instance counting identity broken"
    return report


# ---------------------------------------------------------------------------
# serialization

def _round6(value):
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, dict):
        return {k: _round6(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_round6(v) for v in value]
    if isinstance(value, np.ndarray):
        return _round6(value.tolist())
    if isinstance(value, (np.floating,)):
        return round(float(value), 6)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def report_to_dict(r: QuantReport) -> dict:
    out = {
        "slide_id": r.slide_id,
        "params": _round6(r.params),
        "microns_per_pixel": r.microns_per_pixel,
        "total_instances": r.total_instances,
        "tissues": [
            {
                "tissue_index": s.tissue_index,
                "isolated_count": s.isolated_count,
                "overlapped_count": s.overlapped_count,
                "split_success_count": s.split_success_count,
                "nonseparable_count": s.nonseparable_count,
                "total_steatosis_area_px": _round6(s.total_steatosis_area_px),
                "tissue_area_px": _round6(s.tissue_area_px),
                "steatosis_area_fraction": _round6(s.steatosis_area_fraction),
            }
            for s in r.tissues
        ],
        "regions": [
            {
                "region_id": rec.region_id,
                "tissue_index": rec.tissue_index,
                "class": rec.cls,
                "x0_global": _round6(rec.x0_global),
                "y0_global": _round6(rec.y0_global),
                "area_px": _round6(rec.area_px),
                "perimeter_px": _round6(rec.perimeter_px),
                "inv_circularity": _round6(rec.inv_circularity),
                "solidity": _round6(rec.solidity),
                "extent": _round6(rec.extent),
                "split_partner_id": rec.split_partner_id,
                "border_flag": rec.border_flag,
                "contour_global": _round6(rec.contour_global),
            }
            for rec in r.regions
        ],
    }
    if r.microns_per_pixel:
        mpp2 = r.microns_per_pixel ** 2
        for s, sd in zip(r.tissues, out["tissues"]):
            sd["total_steatosis_area_um2"] = _round6(s.total_steatosis_area_px * mpp2)
            sd["tissue_area_um2"] = _round6(s.tissue_area_px * mpp2)
    return out


def report_from_dict(d: dict) -> QuantReport:
    tissues = [TissueSummary(
        tissue_index=t["tissue_index"], isolated_count=t["isolated_count"],
        overlapped_count=t["overlapped_count"],
        split_success_count=t["split_success_count"],
        nonseparable_count=t["nonseparable_count"],
        total_steatosis_area_px=t["total_steatosis_area_px"],
        tissue_area_px=t["tissue_area_px"],
        steatosis_area_fraction=t["steatosis_area_fraction"]) for t in d["tissues"]]
    regions = [RegionRecord(
        region_id=r["region_id"], tissue_index=r["tissue_index"],
        cls=r["class"], x0_global=r["x0_global"], y0_global=r["y0_global"],
        area_px=r["area_px"], perimeter_px=r["perimeter_px"],
        inv_circularity=r["inv_circularity"], solidity=r["solidity"],
        extent=r["extent"], split_partner_id=r["split_partner_id"],
        border_flag=r["border_flag"],
        contour_global=np.asarray(r["contour_global"], dtype=float))
        for r in d["regions"]]
    return QuantReport(slide_id=d["slide_id"], params=d["params"],
                       tissues=tissues, regions=regions,
                       microns_per_pixel=d.get("microns_per_pixel"))


def render_json(r: QuantReport) -> str:
    return json.dumps(report_to_dict(r), sort_keys=True, indent=2) + "\n"


def render_csv(r: QuantReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in r.regions:
        writer.writerow([
            rec.region_id, rec.tissue_index, rec.cls,
            f"{rec.x0_global:.6f}", f"{rec.y0_global:.6f}",
            f"{rec.area_px:.6f}", f"{rec.perimeter_px:.6f}",
            f"{rec.inv_circularity:.6f}", f"{rec.solidity:.6f}",
            f"{rec.extent:.6f}",
            "" if rec.split_partner_id is None else rec.split_partner_id,
            int(rec.border_flag)])
    for s in r.tissues:
        writer.writerow([
            "# summary", s.tissue_index,
            f"isolated={s.isolated_count}",
            f"overlapped={s.overlapped_count}",
            f"split_success={s.split_success_count}",
            f"nonseparable={s.nonseparable_count}",
            f"steatosis_area_px={s.total_steatosis_area_px:.6f}",
            f"tissue_area_px={s.tissue_area_px:.6f}",
            f"steatosis_area_fraction={s.steatosis_area_fraction:.6f}",
            "", "", ""])
    writer.writerow(["# total_instances", r.total_instances] + [""] * 10)
    return buf.getvalue()


def write_report(r: QuantReport, fmt: str, path: str | Path) -> Path:
    """Serialize a report; output is byte-stable (sorted keys, floats at
    6 decimals) so identical runs give identical files."""
    path = Path(path)
    if fmt == "json":
        path.write_text(render_json(r))
    elif fmt == "csv":
        path.write_text(render_csv(r))
    else:
        raise ValueError(f"unknown report format: {fmt}")
    return path


def load_report(path: str | Path) -> QuantReport:
    return report_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# overlays

@dataclass(frozen=True)
class OverlayStyle:
    isolated_color: tuple[int, int, int] = (0, 180, 0)
    overlapped_color: tuple[int, int, int] = (230, 40, 40)
    split_line_color: tuple[int, int, int] = (40, 40, 230)
    line_width: int = 1

    def __post_init__(self):
        colors = {self.isolated_color, self.overlapped_color,
                  self.split_line_color}
        if len(colors) != 3:
            raise ValueError("overlay colors must be distinct")


def _stroke(img: np.ndarray, pts: np.ndarray, color, width: int) -> None:
    h, w = img.shape[:2]
    ix = np.clip(np.rint(pts[:, 0]).astype(int), 0, w - 1)
    iy = np.clip(np.rint(pts[:, 1]).astype(int), 0, h - 1)
    r = max(0, width // 2)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            img[np.clip(iy + dy, 0, h - 1), np.clip(ix + dx, 0, w - 1)] = color


def _segment_points(p0, p1) -> np.ndarray:
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    t = np.linspace(0.0, 1.0, max(n, 2))
    return np.stack([p0[0] + t * (p1[0] - p0[0]),
                     p0[1] + t * (p1[1] - p0[1])], axis=1)


def render_overlay(tissue_img: np.ndarray, regions: list[Region],
                   seg_results: dict[int, SegregationResult],
                   style: OverlayStyle = OverlayStyle()) -> np.ndarray:
    """Stroke region contours by class and accepted split chords; pixels
    away from stroked geometry are left untouched."""
    out = tissue_img.copy()
    for region in regions:
        if region.classification is RegionClass.ISOLATED:
            _stroke(out, region.contour, style.isolated_color, style.line_width)
        elif region.classification is RegionClass.OVERLAPPED:
            _stroke(out, region.contour, style.overlapped_color, style.line_width)
            seg = seg_results.get(region.id)
            if seg is not None and seg.split and seg.candidate is not None:
                off = np.array(region.offset, dtype=float)
                p0 = np.array([seg.candidate.p_i.x, seg.candidate.p_i.y]) + off
                p1 = np.array([seg.candidate.p_j.x, seg.candidate.p_j.y]) + off
                _stroke(out, _segment_points(p0, p1),
                        style.split_line_color, style.line_width)
    return out
