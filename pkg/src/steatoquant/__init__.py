"""Whole-slide liver steatosis quantification.

Pipeline stages: multi-resolution slide model (:mod:`steatoquant.pyramid`),
whole-tissue extraction with PCA rotation (:mod:`steatoquant.tissue`),
steatosis detection via a shape-feature cascade (:mod:`steatoquant.detection`),
two-way overlap segregation by concave-point pairing and ellipse-fit
scoring (:mod:`steatoquant.segregation`), reporting
(:mod:`steatoquant.report`), and a phantom generator for validation
(:mod:`steatoquant.phantom`).
"""

from .detection import DetectionParams, RegionClass, detect_regions
from .phantom import PhantomSpec, evaluate, generate_phantom, save_phantom
from .pipeline import PipelineConfig, load_config, run_pipeline, run_pipeline_on_pyramid
from .pyramid import BoundingBox, Point2, PyramidImage, load_pyramid, save_pyramid
from .report import QuantReport, load_report, write_report
from .segregation import SegregationParams, segregate

__all__ = [
    "BoundingBox", "DetectionParams", "PhantomSpec", "PipelineConfig",
    "Point2", "PyramidImage", "QuantReport", "RegionClass",
    "SegregationParams", "detect_regions", "evaluate", "generate_phantom",
    "load_config", "load_pyramid", "load_report", "run_pipeline",
    "run_pipeline_on_pyramid", "save_phantom", "save_pyramid", "segregate",
    "write_report",
]

__version__ = "0.1.0"
