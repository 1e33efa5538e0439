"""Domain types shared across the pipeline.

All types are immutable after construction. Array-backed types copy their
input and mark the stored array read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

DEFAULT_INPUT_SIZE = 256


class Operator(str, enum.Enum):
    OA = "OA"
    OB = "OB"

    @classmethod
    def parse(cls, text: str) -> "Operator":
        key = text.strip().upper()
        aliases = {"A": cls.OA, "OA": cls.OA, "B": cls.OB, "OB": cls.OB}
        if key not in aliases:
            raise ValueError(f"unknown operator {text!r}; expected A or B")
        return aliases[key]


class Variant(str, enum.Enum):
    UNET = "UNET"
    UNET1 = "UNET1"
    UNET2 = "UNET2"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        try:
            return cls(text.strip().upper().replace("-", "").replace("_", ""))
        except ValueError:
            raise ValueError(f"unknown variant {text!r}; expected unet, unet1 or unet2") from None


class Upsampling(str, enum.Enum):
    DECONVOLUTION = "DECONVOLUTION"
    NEAREST_REPEAT = "NEAREST_REPEAT"


class Normalization(str, enum.Enum):
    NONE = "NONE"
    BATCHNORM = "BATCHNORM"


class Split(str, enum.Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


class ScenarioLabel(str, enum.Enum):
    OA_VS_OB = "OA_VS_OB"
    POA_VS_OA = "POA_VS_OA"
    POA_VS_OB = "POA_VS_OB"
    POB_VS_OB = "POB_VS_OB"
    POB_VS_OA = "POB_VS_OA"


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageFrame:
    """A 2D grayscale frame with intensities in [0, 1]."""

    pixels: np.ndarray
    frame_id: str = ""
    patient_id: str = ""

    def __post_init__(self):
        arr = _frozen_array(self.pixels, np.float32)
        if arr.ndim != 2:
            raise ValueError(f"ImageFrame needs a 2D grid, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("ImageFrame is empty")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("ImageFrame intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True, eq=False)
class SegMask:
    """Binary LV-cavity mask (1 = cavity, 0 = background)."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim != 2:
            raise ValueError(f"SegMask needs a 2D grid, got shape {raw.shape}")
        if raw.dtype == bool:
            raw = raw.astype(np.uint8)
        if raw.size and not np.isin(raw, (0, 1)).all():
            raise ValueError("SegMask values must be 0 or 1")
        object.__setattr__(self, "values", _frozen_array(raw, np.uint8))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def area(self) -> int:
        return int(self.values.sum())

    def is_empty(self) -> bool:
        return self.area == 0

    def __eq__(self, other):
        if not isinstance(other, SegMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


def check_pair(image: ImageFrame, mask: SegMask) -> None:
    if image.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {image.shape}")


@dataclass(frozen=True, eq=False)
class LabeledFrame:
    """An image paired with one annotation; shapes are checked on construction."""

    image: ImageFrame
    mask: SegMask

    def __post_init__(self):
        check_pair(self.image, self.mask)


@dataclass(frozen=True)
class Contour:
    """Ordered closed boundary of a mask as (row, col) pixel coordinates."""

    points: Tuple[Tuple[int, int], ...] = ()
    closed: bool = True

    def __post_init__(self):
        pts = tuple((int(r), int(c)) for r, c in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            object.__setattr__(self, "closed", False)

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.points, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class AnnotationRecord:
    frame_id: str
    patient_id: str
    operator: Operator
    mask: SegMask


VARIANT_WIDTHS = {
    Variant.UNET: ((64, 128, 256, 512, 1024), 64, Upsampling.DECONVOLUTION, Normalization.NONE),
    Variant.UNET1: ((32, 64, 128), 16, Upsampling.NEAREST_REPEAT, Normalization.NONE),
    Variant.UNET2: ((48, 96, 192, 384, 768), 48, Upsampling.DECONVOLUTION, Normalization.BATCHNORM),
}


def _scaled(width: int, scale: float) -> int:
    value = int(round(width * scale))
    if value < 1:
        raise ValueError(f"width_scale {scale} reduces width {width} below 1")
    return value


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description of one encoder-decoder network.

    Use :meth:`for_variant` to obtain one of the three benchmarked rows.
    Direct construction with ``variant=None`` describes a custom topology
    (used for tiny gradient checks); the level structure is still validated.
    """

    variant: Optional[Variant]
    encoder_widths: Tuple[int, ...]
    decoder_end_width: int
    upsampling: Upsampling
    normalization: Normalization
    width_scale: float = 1.0
    input_size: int = DEFAULT_INPUT_SIZE
    in_channels: int = 1

    def __post_init__(self):
        widths = tuple(int(w) for w in self.encoder_widths)
        object.__setattr__(self, "encoder_widths", widths)
        object.__setattr__(self, "upsampling", Upsampling(self.upsampling))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if self.variant is not None:
            object.__setattr__(self, "variant", Variant(self.variant))
        if len(widths) < 2:
            raise ValueError("at least two encoder levels are required")
        if min(widths) < 1 or self.decoder_end_width < 1:
            raise ValueError("all widths must be >= 1")
        if not self.width_scale > 0:
            raise ValueError("width_scale must be positive")
        if self.input_size < 1 or self.input_size % self.divisor:
            raise ValueError(f"input_size {self.input_size} must be divisible by {self.divisor}")
        if self.variant is not None and not self.conforms_to_variant():
            raise ValueError(f"configuration does not match the {self.variant.value} row")

    @classmethod
    def for_variant(cls, variant, width_scale: float = 1.0, input_size: int = DEFAULT_INPUT_SIZE) -> "ModelConfig":
        variant = Variant(variant)
        widths, end, up, norm = VARIANT_WIDTHS[variant]
        return cls(
            variant=variant,
            encoder_widths=tuple(_scaled(w, width_scale) for w in widths),
            decoder_end_width=_scaled(end, width_scale),
            upsampling=up,
            normalization=norm,
            width_scale=float(width_scale),
            input_size=input_size,
        )

    def conforms_to_variant(self) -> bool:
        widths, end, up, norm = VARIANT_WIDTHS[self.variant]
        try:
            expected = tuple(_scaled(w, self.width_scale) for w in widths)
            expected_end = _scaled(end, self.width_scale)
        except ValueError:
            return False
        return (
            self.encoder_widths == expected
            and self.decoder_end_width == expected_end
            and self.upsampling is up
            and self.normalization is norm
        )

    @property
    def levels(self) -> int:
        return len(self.encoder_widths)

    @property
    def divisor(self) -> int:
        return 2 ** (len(self.encoder_widths) - 1)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value if self.variant is not None else None,
            "encoder_widths": list(self.encoder_widths),
            "decoder_end_width": self.decoder_end_width,
            "upsampling": self.upsampling.value,
            "normalization": self.normalization.value,
            "width_scale": self.width_scale,
            "input_size": self.input_size,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        variant = data.pop("variant")
        return cls(
            variant=Variant(variant) if variant is not None else None,
            encoder_widths=tuple(data.pop("encoder_widths")),
            **data,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 250
    batch_size: int = 8
    seed: int = 0
    loss: str = "NLL"
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "NLL":
            raise ValueError("only the NLL loss is supported")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "loss": self.loss,
            "adam_betas": list(self.betas),
            "adam_eps": self.eps,
            "class_weighting": "none",
            "augmentation": "none",
        }


@dataclass(frozen=True)
class MetricPair:
    dice: float
    hausdorff: float
    failed: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise ValueError(f"dice {self.dice} outside [0, 1]")
        if not self.hausdorff >= 0.0 or math.isnan(self.hausdorff):
            raise ValueError(f"hausdorff {self.hausdorff} must be >= 0")


@dataclass(frozen=True)
class ScenarioResult:
    label: ScenarioLabel
    dice_mean: float
    dice_sd: float
    hd_mean: float
    hd_sd: float
    n_frames: int
    failed_frames: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "label", ScenarioLabel(self.label))
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.dice_sd < 0 or self.hd_sd < 0:
            raise ValueError("standard deviations must be >= 0")


@dataclass(frozen=True)
class BenchmarkRow:
    variant: Variant
    dice_mean: float
    dice_sd: float
    hd_mean: float
    hd_sd: float
    n_frames: int
    failed_frames: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")


# Published clinical results, kept for documentation only; the data behind them is private.
PUBLISHED_BENCHMARK = {
    Variant.UNET: ((0.92, 0.05), (3.97, 0.82)),
    Variant.UNET1: ((0.92, 0.04), (4.16, 0.73)),
    Variant.UNET2: ((0.90, 0.12), (4.09, 0.80)),
}
PUBLISHED_SCENARIOS = {
    ScenarioLabel.OA_VS_OB: ((0.88, 0.06), (4.50, 0.87)),
    ScenarioLabel.POA_VS_OA: ((0.92, 0.05), (3.97, 0.82)),
    ScenarioLabel.POA_VS_OB: ((0.90, 0.05), (4.08, 0.91)),
    ScenarioLabel.POB_VS_OB: ((0.91, 0.06), (4.24, 0.75)),
    ScenarioLabel.POB_VS_OA: ((0.89, 0.07), (4.14, 0.80)),
}


def as_points(contour: Contour | Sequence | np.ndarray) -> np.ndarray:
    if isinstance(contour, Contour):
        return contour.as_array()
    arr = np.asarray(contour, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)
