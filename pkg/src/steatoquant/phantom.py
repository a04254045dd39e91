"""Synthetic slide phantoms with ground-truth steatosis geometry.

A phantom is a rendered tissue blob on a glass-colored background with
steatosis vacuoles placed at known positions: isolated ellipses and
two-way overlapping pairs.  The palette approximates an H&E slide so the
grayscale/equalization/hysteresis chain behaves as it does on real
tissue.  Phantoms are deterministic for a fixed seed and are written in
the standard pyramid layout plus a ``phantom.json`` ground-truth sidecar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .pyramid import PyramidImage, save_pyramid
from .report import ISOLATED, NONSEPARABLE, SPLIT, QuantReport
from .segregation import EllipseParams, ellipse_mask


class PlacementError(Exception):
    """Raised when instances cannot be placed without collisions."""


@dataclass(frozen=True)
class PhantomSpec:
    canvas_size: int = 2048
    tissue_shape: str = "ellipse"  # ellipse | blob
    tissue_rotation: float = 0.3   # radians
    n_isolated: int = 50
    n_overlap_pairs: int = 10
    radius_range: tuple[float, float] = (8.0, 30.0)
    overlap_fraction_range: tuple[float, float] = (0.1, 0.4)
    max_eccentricity: float = 1.5  # a/b
    background_rgb: tuple[int, int, int] = (245, 245, 245)
    tissue_rgb: tuple[int, int, int] = (200, 120, 160)
    steatosis_rgb: tuple[int, int, int] = (240, 240, 245)
    noise_sigma: float = 4.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.overlap_fraction_range[0]
                <= self.overlap_fraction_range[1] <= 0.6):
            raise ValueError("overlap_fraction_range must lie in (0, 0.6]")
        if self.radius_range[0] < 5.0:
            raise ValueError("radii must be >= 5 px")
        if self.tissue_shape not in ("ellipse", "blob"):
            raise ValueError("tissue_shape must be 'ellipse' or 'blob'")


@dataclass
class GTInstance:
    id: int
    cx: float
    cy: float
    a: float
    b: float
    phi: float
    pair_id: int | None = None

    def as_ellipse(self) -> EllipseParams:
        return EllipseParams(self.cx, self.cy, self.a, self.b, self.phi)


@dataclass
class GroundTruth:
    instances: list[GTInstance]
    theta_true: float
    tissue_area_px: int
    canvas_size: int
    seed: int
    slide_id: str | None = None

    @property
    def isolated(self) -> list[GTInstance]:
        return [g for g in self.instances if g.pair_id is None]

    @property
    def pairs(self) -> dict[int, list[GTInstance]]:
        out: dict[int, list[GTInstance]] = {}
        for g in self.instances:
            if g.pair_id is not None:
                out.setdefault(g.pair_id, []).append(g)
        return out


@dataclass
class EvalMetrics:
    isolated_accuracy: float
    overlap_split_accuracy: float
    n_isolated_gt: int
    n_pairs_gt: int
    matched: int
    missed: int
    spurious: int
    spurious_splits: int
    iou_threshold: float
    instance_ious: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["instance_ious"] = {str(k): round(v, 6)
                              for k, v in sorted(self.instance_ious.items())}
        return d


def _tissue_mask(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.canvas_size
    cx = cy = n / 2.0
    a, b = 0.42 * n, 0.30 * n
    yy, xx = np.mgrid[0:n, 0:n]
    dx, dy = xx - cx, yy - cy
    c, s = math.cos(spec.tissue_rotation), math.sin(spec.tissue_rotation)
    u = (dx * c + dy * s)
    v = (-dx * s + dy * c)
    if spec.tissue_shape == "ellipse":
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    # blob: ellipse with a smooth low-order radial perturbation
    amps = rng.uniform(0.02, 0.06, size=4)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=4)
    theta = np.arctan2(v / b, u / a)
    wobble = np.ones_like(theta)
    for k, (amp, ph) in enumerate(zip(amps, phases), start=2):
        wobble += amp * np.cos(k * theta + ph)
    return (u / a) ** 2 + (v / b) ** 2 <= wobble ** 2


def _inside_tissue_ellipse(spec: PhantomSpec, cx: float, cy: float,
                           margin: float) -> bool:
    n = spec.canvas_size
    a, b = 0.42 * n - margin, 0.30 * n - margin
    if a <= 0 or b <= 0:
        return False
    c, s = math.cos(spec.tissue_rotation), math.sin(spec.tissue_rotation)
    dx, dy = cx - n / 2.0, cy - n / 2.0
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _sample_ellipse(spec: PhantomSpec, rng: np.random.Generator) -> tuple[float, float, float]:
    a = rng.uniform(*spec.radius_range)
    b = a / rng.uniform(1.0, spec.max_eccentricity)
    phi = rng.uniform(-math.pi / 2, math.pi / 2)
    return a, b, phi


def generate_phantom(spec: PhantomSpec,
                     max_tries: int = 400) -> tuple[PyramidImage, GroundTruth]:
    """Render a phantom pyramid and its ground truth, deterministically
    for a fixed ``rng_seed``."""
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.canvas_size
    tissue = _tissue_mask(spec, rng)

    placed: list[tuple[float, float, float]] = []  # (cx, cy, bounding radius)

    def collides(cx, cy, r) -> bool:
        for px, py, pr in placed:
            if math.hypot(cx - px, cy - py) < r + pr + 3.0:
                return True
        return False

    instances: list[GTInstance] = []
    next_id = 1

    for _ in range(spec.n_isolated):
        for attempt in range(max_tries):
            a, b, phi = _sample_ellipse(spec, rng)
            cx = rng.uniform(0, n)
            cy = rng.uniform(0, n)
            if not _inside_tissue_ellipse(spec, cx, cy, a + 10.0):
                continue
            if collides(cx, cy, a):
                continue
            instances.append(GTInstance(next_id, cx, cy, a, b, phi))
            placed.append((cx, cy, a))
            next_id += 1
            break
        else:
            raise PlacementError("placement failure: canvas too crowded")

    for pair_id in range(1, spec.n_overlap_pairs + 1):
        for attempt in range(max_tries):
            a1, b1, phi1 = _sample_ellipse(spec, rng)
            # similar-size partner; grossly unequal pairs degenerate into
            # containment rather than a two-lobed overlap
            a2 = a1 * rng.uniform(0.7, 1.0)
            b2 = a2 / rng.uniform(1.0, spec.max_eccentricity)
            phi2 = rng.uniform(-math.pi / 2, math.pi / 2)
            frac = rng.uniform(*spec.overlap_fraction_range)
            ang = rng.uniform(0.0, 2.0 * math.pi)
            # overlap_fraction measures how deep the smaller member
            # penetrates the pair, as a fraction of its own radius along
            # the connection direction: d = r1 + r2 - frac * min(r1, r2).
            # d < r1 + r2 guarantees the two ellipses intersect, and the
            # fraction cap of 0.6 sits just below the depth at which the
            # union loses its concave neck and stops being a visually
            # separable two-body shape.
            r1 = math.hypot(a1 * math.cos(ang - phi1), b1 * math.sin(ang - phi1))
            r2 = math.hypot(a2 * math.cos(ang - phi2), b2 * math.sin(ang - phi2))
            d = r1 + r2 - frac * min(r1, r2)
            if d + r2 <= a1 or d + r1 <= a2:
                continue  # one ellipse would swallow the other
            cx1 = rng.uniform(0, n)
            cy1 = rng.uniform(0, n)
            cx2 = cx1 + d * math.cos(ang)
            cy2 = cy1 + d * math.sin(ang)
            bound = d / 2.0 + max(a1, a2)
            mx, my = (cx1 + cx2) / 2.0, (cy1 + cy2) / 2.0
            if not (_inside_tissue_ellipse(spec, cx1, cy1, a1 + 10.0)
                    and _inside_tissue_ellipse(spec, cx2, cy2, a2 + 10.0)):
                continue
            if collides(mx, my, bound):
                continue
            instances.append(GTInstance(next_id, cx1, cy1, a1, b1, phi1, pair_id))
            next_id += 1
            instances.append(GTInstance(next_id, cx2, cy2, a2, b2, phi2, pair_id))
            next_id += 1
            placed.append((mx, my, bound))
            break
        else:
            raise PlacementError("placement failure: canvas too crowded")

    # render
    img = np.empty((n, n, 3), dtype=float)
    img[:] = spec.background_rgb
    img[tissue] = spec.tissue_rgb
    for inst in instances:
        e = inst.as_ellipse()
        r = int(math.ceil(inst.a)) + 2
        x0, x1 = max(0, int(inst.cx) - r), min(n, int(inst.cx) + r + 1)
        y0, y1 = max(0, int(inst.cy) - r), min(n, int(inst.cy) + r + 1)
        win = ellipse_mask(e, (y1 - y0, x1 - x0), offset=(x0, y0))
        img[y0:y1, x0:x1][win] = spec.steatosis_rgb
    if spec.noise_sigma > 0:
        img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
    base = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    pyramid = PyramidImage({0: base}, min_levels=5)
    gt = GroundTruth(instances=instances, theta_true=spec.tissue_rotation,
                     tissue_area_px=int(tissue.sum()), canvas_size=n,
                     seed=spec.rng_seed)
    return pyramid, gt


def save_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    data = {
        "theta_true": gt.theta_true,
        "tissue_area_px": gt.tissue_area_px,
        "canvas_size": gt.canvas_size,
        "seed": gt.seed,
        "slide_id": gt.slide_id,
        "instances": [asdict(i) for i in gt.instances],
    }
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def load_ground_truth(path: str | Path) -> GroundTruth:
    data = json.loads(Path(path).read_text())
    return GroundTruth(
        instances=[GTInstance(**i) for i in data["instances"]],
        theta_true=data["theta_true"], tissue_area_px=data["tissue_area_px"],
        canvas_size=data["canvas_size"], seed=data["seed"],
        slide_id=data.get("slide_id"))


def save_phantom(pyramid: PyramidImage, gt: GroundTruth,
                 path: str | Path) -> None:
    path = Path(path)
    save_pyramid(pyramid, path)
    if gt.slide_id is None:
        gt.slide_id = path.name
    save_ground_truth(gt, path / "phantom.json")


# ---------------------------------------------------------------------------
# evaluation

def polygon_mask(poly: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Scanline-fill a closed polygon; returns a local mask and its
    (x, y) offset in the polygon's frame."""
    poly = np.asarray(poly, dtype=float)
    x0 = int(math.floor(poly[:, 0].min()))
    y0 = int(math.floor(poly[:, 1].min()))
    x1 = int(math.ceil(poly[:, 0].max())) + 1
    y1 = int(math.ceil(poly[:, 1].max())) + 1
    w, h = x1 - x0, y1 - y0
    mask = np.zeros((h, w), dtype=bool)
    px = poly[:, 0] - x0
    py = poly[:, 1] - y0
    nxt = np.roll(np.arange(len(poly)), -1)
    for row in range(h):
        yc = row + 0.0
        xs = []
        for i in range(len(poly)):
            j = nxt[i]
            ya, yb = py[i], py[j]
            if (ya <= yc) != (yb <= yc):
                t = (yc - ya) / (yb - ya)
                xs.append(px[i] + t * (px[j] - px[i]))
        xs.sort()
        for k in range(0, len(xs) - 1, 2):
            lo = int(math.ceil(xs[k]))
            hi = int(math.floor(xs[k + 1]))
            if hi >= lo:
                mask[row, lo:hi + 1] = True
    return mask, (x0, y0)


def _mask_iou(ma, offa, mb, offb) -> float:
    ax0, ay0 = offa
    bx0, by0 = offb
    ix0 = max(ax0, bx0)
    iy0 = max(ay0, by0)
    ix1 = min(ax0 + ma.shape[1], bx0 + mb.shape[1])
    iy1 = min(ay0 + ma.shape[0], by0 + mb.shape[0])
    inter = 0
    if ix1 > ix0 and iy1 > iy0:
        wa = ma[iy0 - ay0: iy1 - ay0, ix0 - ax0: ix1 - ax0]
        wb = mb[iy0 - by0: iy1 - by0, ix0 - bx0: ix1 - bx0]
        inter = int(np.count_nonzero(wa & wb))
    union = int(ma.sum()) + int(mb.sum()) - inter
    return inter / union if union else 0.0


def evaluate(report: QuantReport, gt: GroundTruth,
             iou_thresh: float = 0.75) -> EvalMetrics:
    """Greedy maximum-IoU matching of detected instances to ground truth.

    An overlap pair counts as correctly segregated only when both of its
    ellipses are matched (at the IoU threshold) by distinct split
    sub-regions.
    """
    detections = []
    for rec in report.regions:
        if rec.cls in (ISOLATED, SPLIT, NONSEPARABLE) and len(rec.contour_global) >= 3:
            mask, off = polygon_mask(rec.contour_global)
            if mask.any():
                detections.append((rec, mask, off))

    gt_masks = []
    for inst in gt.instances:
        r = int(math.ceil(inst.a)) + 2
        x0, y0 = int(inst.cx) - r, int(inst.cy) - r
        size = 2 * r + 1
        mask = ellipse_mask(inst.as_ellipse(), (size, size), offset=(x0, y0))
        gt_masks.append((inst, mask, (x0, y0)))

    scored = []
    for di, (rec, dmask, doff) in enumerate(detections):
        for gi, (inst, gmask, goff) in enumerate(gt_masks):
            iou = _mask_iou(dmask, doff, gmask, goff)
            if iou > 0.0:
                scored.append((iou, di, gi))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))

    det_match: dict[int, tuple[int, float]] = {}
    gt_match: dict[int, tuple[int, float]] = {}
    for iou, di, gi in scored:
        if di in det_match or gi in gt_match:
            continue
        det_match[di] = (gi, iou)
        gt_match[gi] = (di, iou)

    instance_ious = {}
    n_iso = 0
    iso_ok = 0
    for gi, (inst, _, _) in enumerate(gt_masks):
        iou = gt_match.get(gi, (None, 0.0))[1]
        instance_ious[inst.id] = iou
        if inst.pair_id is None:
            n_iso += 1
            if iou >= iou_thresh:
                iso_ok += 1

    pairs = gt.pairs
    pair_ok = 0
    inst_index = {inst.id: gi for gi, (inst, _, _) in enumerate(gt_masks)}
    for pair_id, members in pairs.items():
        ok = True
        for inst in members:
            gi = inst_index[inst.id]
            m = gt_match.get(gi)
            if m is None or m[1] < iou_thresh:
                ok = False
                break
            if detections[m[0]][0].cls != SPLIT:
                ok = False
                break
        if ok and len(members) == 2:
            pair_ok += 1

    matched = sum(1 for gi, (_, iou) in gt_match.items() if iou >= iou_thresh)
    missed = len(gt_masks) - matched
    spurious = sum(1 for di in range(len(detections))
                   if det_match.get(di, (None, 0.0))[1] < iou_thresh)
    spurious_splits = sum(
        1 for di in range(len(detections))
        if detections[di][0].cls == SPLIT
        and det_match.get(di, (None, 0.0))[1] < iou_thresh)

    return EvalMetrics(
        isolated_accuracy=iso_ok / n_iso if n_iso else 1.0,
        overlap_split_accuracy=pair_ok / len(pairs) if pairs else 1.0,
        n_isolated_gt=n_iso, n_pairs_gt=len(pairs), matched=matched,
        missed=missed, spurious=spurious, spurious_splits=spurious_splits,
        iou_threshold=iou_thresh, instance_ious=instance_ious)
