"""Benchmark of three U-Net variants for left-ventricle segmentation on synthetic echo phantoms."""

from .core import (
    BenchmarkRow,
    Contour,
    ImageFrame,
    MetricPair,
    ModelConfig,
    Normalization,
    Operator,
    ScenarioLabel,
    ScenarioResult,
    SegMask,
    Split,
    TrainConfig,
    Upsampling,
    Variant,
)

__version__ = "0.1.0"
