"""Command line interface: ``analyze``, ``phantom`` and ``eval``.

Exit codes: 0 success, 2 input error (bad paths, malformed files or
specs), 3 pipeline error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .phantom import (
    PhantomSpec,
    PlacementError,
    evaluate,
    generate_phantom,
    load_ground_truth,
    save_phantom,
)
from .pipeline import PipelineConfig, load_config, run_pipeline
from .pyramid import PyramidError
from .report import load_report

EXIT_INPUT = 2
EXIT_PIPELINE = 3


@click.group()
def main():
    """Steatosis quantification for whole-slide pyramids."""


def _load_config_or_exit(config, **overrides) -> PipelineConfig:
    try:
        return load_config(config, **overrides)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        click.echo(f"input error: bad config: {exc}", err=True)
        sys.exit(EXIT_INPUT)


@main.command()
@click.argument("slide_path", type=click.Path())
@click.option("--config", type=click.Path(exists=True), default=None,
              help="TOML/JSON parameter file; flags override file values.")
@click.option("--out", "out_dir", type=click.Path(), default="steatoquant_out")
@click.option("--debug-dir", type=click.Path(), default=None,
              help="Write stage intermediates (masks, rotated tissues).")
@click.option("--invert", is_flag=True,
              help="Treat dark regions as steatosis foreground.")
@click.option("--workers", type=int, default=None)
@click.option("--show-config", is_flag=True,
              help="Print the effective configuration and exit.")
def analyze(slide_path, config, out_dir, debug_dir, invert, workers,
            show_config):
    """Run the full pipeline on a slide pyramid directory."""
    overrides = {"out_dir": out_dir, "debug_dir": debug_dir,
                 "workers": workers}
    if invert:
        overrides["detection"] = {"invert": True}
    cfg = _load_config_or_exit(config, **overrides)
    if show_config:
        click.echo(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return
    try:
        report = run_pipeline(slide_path, cfg)
    except (PyramidError, FileNotFoundError) as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except Exception as exc:  # noqa: BLE001 - surfaced with exit code 3
        click.echo(f"pipeline error: {exc}", err=True)
        sys.exit(EXIT_PIPELINE)
    total = report.total_instances
    click.echo(f"slide {report.slide_id}: {len(report.tissues)} tissue(s), "
               f"{total} steatosis instance(s)")
    for s in report.tissues:
        click.echo(f"  tissue {s.tissue_index}: isolated={s.isolated_count} "
                   f"split={s.split_success_count} "
                   f"nonseparable={s.nonseparable_count} "
                   f"fraction={s.steatosis_area_fraction:.4f}")
    click.echo(f"reports written to {out_dir}")


@main.command()
@click.argument("out_dir", type=click.Path())
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON phantom spec; inline flags override its fields.")
@click.option("--seed", type=int, default=0)
@click.option("--isolated", type=int, default=50)
@click.option("--pairs", type=int, default=10)
@click.option("--canvas", type=int, default=2048)
@click.option("--tissue-shape", type=click.Choice(["ellipse", "blob"]),
              default="ellipse")
def phantom(out_dir, spec_path, seed, isolated, pairs, canvas, tissue_shape):
    """Generate a synthetic slide with ground-truth steatosis geometry."""
    fields = {}
    if spec_path:
        fields = json.loads(Path(spec_path).read_text())
    fields.update(rng_seed=seed, n_isolated=isolated, n_overlap_pairs=pairs,
                  canvas_size=canvas, tissue_shape=tissue_shape)
    try:
        spec = PhantomSpec(**{k: tuple(v) if isinstance(v, list) else v
                              for k, v in fields.items()})
    except (TypeError, ValueError) as exc:
        click.echo(f"input error: invalid phantom spec: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    try:
        pyr, gt = generate_phantom(spec)
    except PlacementError as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    save_phantom(pyr, gt, out_dir)
    click.echo(f"phantom written to {out_dir} (seed {spec.rng_seed}, "
               f"{len(gt.instances)} instances)")


@main.command("eval")
@click.argument("report_path", type=click.Path(exists=True))
@click.argument("truth_path", type=click.Path(exists=True))
@click.option("--iou", type=float, default=0.75)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Also write the metrics as JSON.")
def eval_cmd(report_path, truth_path, iou, out_path):
    """Score a pipeline report against phantom ground truth."""
    try:
        report = load_report(report_path)
        gt = load_ground_truth(truth_path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        click.echo(f"input error: schema mismatch: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    if gt.slide_id is not None and gt.slide_id != report.slide_id:
        click.echo(f"input error: slide id mismatch: report is for "
                   f"{report.slide_id!r} but ground truth is for "
                   f"{gt.slide_id!r}", err=True)
        sys.exit(EXIT_INPUT)
    metrics = evaluate(report, gt, iou_thresh=iou)
    click.echo(f"{'class':<12}{'accuracy':>10}{'total':>8}")
    click.echo(f"{'IS':<12}{metrics.isolated_accuracy:>10.3f}"
               f"{metrics.n_isolated_gt:>8}")
    click.echo(f"{'OS':<12}{metrics.overlap_split_accuracy:>10.3f}"
               f"{metrics.n_pairs_gt:>8}")
    click.echo(f"matched={metrics.matched} missed={metrics.missed} "
               f"spurious={metrics.spurious} "
               f"spurious_splits={metrics.spurious_splits}")
    if out_path:
        Path(out_path).write_text(
            json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
