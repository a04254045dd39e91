"""Report aggregation, serialization stability and overlays."""

import numpy as np
import pytest

from steatoquant.detection import DetectionParams
from steatoquant.report import (
    CSV_COLUMNS,
    ISOLATED,
    NONSEPARABLE,
    SPLIT,
    OverlayStyle,
    QuantReport,
    TissueResult,
    aggregate,
    load_report,
    render_csv,
    render_json,
    render_overlay,
    report_from_dict,
    report_to_dict,
    write_report,
)
from steatoquant.segregation import SegregationParams, segregate
from steatoquant.tissue import TissueFrameMapper
from conftest import disc_mask, make_region, two_disc_mask


def _identity_mapper(w=400, h=400):
    return TissueFrameMapper(angle=0.0, out_w=w, out_h=h,
                             crop_center_global=(w / 2.0, h / 2.0))


def _place(mask, x0, y0, canvas=(400, 400)):
    big = np.zeros(canvas, dtype=bool)
    big[y0:y0 + mask.shape[0], x0:x0 + mask.shape[1]] = mask
    return big


def _tissue_result(region_specs, tissue_area=100000.0):
    """region_specs: list of (mask, x0, y0); regions built and segregated
    as the pipeline would."""
    regions = []
    seg = {}
    for rid, (mask, x0, y0) in enumerate(region_specs, start=1):
        region = make_region(_place(mask, x0, y0), region_id=rid)
        regions.append(region)
        if region.classification.value == "overlapped":
            seg[rid] = segregate(region, SegregationParams())
    return TissueResult(tissue_index=0, regions=regions, seg_results=seg,
                        mapper=_identity_mapper(), tissue_area_px=tissue_area)


def test_counting_identity_isolated_plus_split():
    res = _tissue_result([
        (disc_mask(12), 10, 10),
        (disc_mask(12), 80, 10),
        (disc_mask(12), 150, 10),
        (two_disc_mask(18, 18, 28), 10, 120),
    ])
    report = aggregate("slide", [res], {})
    s = report.tissues[0]
    assert s.isolated_count == 3
    assert s.split_success_count == 1
    assert s.nonseparable_count == 0
    assert report.total_instances == 5
    split_recs = [r for r in report.regions if r.cls == SPLIT]
    assert len(split_recs) == 2
    assert split_recs[0].split_partner_id == split_recs[1].region_id
    assert split_recs[1].split_partner_id == split_recs[0].region_id


def test_empty_report_all_zero():
    res = TissueResult(tissue_index=0, regions=[], seg_results={},
                       mapper=_identity_mapper(), tissue_area_px=0.0)
    report = aggregate("empty", [res], {})
    s = report.tissues[0]
    assert s.isolated_count == 0
    assert s.steatosis_area_fraction == 0.0
    assert report.total_instances == 0


def test_area_fraction_arithmetic():
    masks = [(disc_mask(12), 10 + 60 * k, 10) for k in range(4)]
    res = _tissue_result(masks, tissue_area=0.0)
    total = sum(disc_mask(12).sum() for _ in range(4))
    res.tissue_area_px = total / 0.4  # construct a known 40% fraction
    report = aggregate("slide", [res], {})
    assert report.tissues[0].steatosis_area_fraction == pytest.approx(0.4, abs=0.02)


def test_overlapped_without_segregation_result_errors():
    region = make_region(_place(two_disc_mask(18, 18, 28), 10, 10))
    res = TissueResult(tissue_index=0, regions=[region], seg_results={},
                       mapper=_identity_mapper(), tissue_area_px=1.0)
    with pytest.raises(ValueError, match="no segregation result"):
        aggregate("slide", [res], {})


def test_serialization_round_trip_byte_identical(tmp_path):
    res = _tissue_result([(disc_mask(12), 10, 10),
                          (two_disc_mask(18, 18, 28), 10, 120)])
    report = aggregate("slide", [res], {"detection": {"invert": False}})
    text1 = render_json(report)
    reparsed = report_from_dict(__import__("json").loads(text1))
    assert render_json(reparsed) == text1
    p = write_report(report, "json", tmp_path / "r.json")
    assert load_report(p).total_instances == report.total_instances


def test_csv_structure():
    res = _tissue_result([(disc_mask(12), 10, 10)])
    report = aggregate("slide", [res], {})
    lines = render_csv(report).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    region_rows = [ln for ln in lines[1:] if not ln.startswith("# ")]
    assert len(region_rows) == len(report.regions)
    assert lines[-1].startswith("# total_instances,1")


def test_empty_report_serializes():
    report = aggregate("empty", [], {})
    text = render_csv(report)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert "# total_instances,0" in text
    d = report_to_dict(report)
    assert d["regions"] == [] and d["tissues"] == []


def test_write_report_unknown_format(tmp_path):
    report = aggregate("empty", [], {})
    with pytest.raises(ValueError, match="unknown report format"):
        write_report(report, "xml", tmp_path / "r.xml")


def test_overlay_no_regions_is_identity():
    img = np.random.default_rng(0).integers(0, 255, (50, 50, 3), dtype=np.uint8)
    out = render_overlay(img, [], {})
    np.testing.assert_array_equal(out, img)


def test_overlay_touches_only_contour_pixels():
    img = np.zeros((200, 200, 3), dtype=np.uint8)
    region = make_region(_place(disc_mask(15), 50, 50, canvas=(200, 200)))
    out = render_overlay(img, [region], {}, OverlayStyle(line_width=1))
    diff = np.any(out != img, axis=-1)
    contour_px = {(int(round(x)), int(round(y))) for x, y in region.contour}
    for y, x in zip(*np.nonzero(diff)):
        assert (x, y) in contour_px


def test_overlay_split_chord_drawn():
    region = make_region(_place(two_disc_mask(18, 18, 28), 20, 20,
                                canvas=(120, 120)))
    assert region.classification.value == "overlapped"
    seg = {region.id: segregate(region, SegregationParams())}
    assert seg[region.id].split
    style = OverlayStyle()
    img = np.zeros((120, 120, 3), dtype=np.uint8)
    out = render_overlay(img, [region], seg, style)
    split_px = np.all(out == style.split_line_color, axis=-1)
    assert split_px.sum() > 0


def test_overlay_rejects_duplicate_colors():
    with pytest.raises(ValueError):
        OverlayStyle(isolated_color=(1, 2, 3), overlapped_color=(1, 2, 3))
