"""Synthetic apical-view echo phantoms, dataset I/O, resizing and splitting.

A phantom is a fan-shaped scan sector containing a dark elliptical LV
cavity inside a brighter myocardial ring, with multiplicative speckle,
depth attenuation and optional wall dropout. Operator B's annotation is the
ground-truth ellipse warped by a smooth random displacement field.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import ImageFrame, Operator, SegMask, Split, check_pair
from .metrics import largest_component

MANIFEST_NAME = "manifest.csv"
PARAMS_NAME = "params.json"
MANIFEST_COLUMNS = ("patient_id", "frame_id", "split")

# Reflectivity of the scene regions before attenuation and speckle.
_CAVITY_LEVEL = 0.08
_TISSUE_LEVEL = 0.30
_RING_LEVEL = 0.80
_DROPOUT_LEVEL = 0.12
_DROPOUT_SEGMENTS = 12


@dataclass(frozen=True)
class PhantomParams:
    """Geometry and degradation settings of one phantom, in native pixels.

    ``operator_b_perturbation`` is the peak displacement of the warp that
    produces operator B's tracing, for a cavity with the nominal
    ``cavity_axes``; it scales with the actual cavity size of each frame.
    ``shape_jitter`` and ``center_jitter`` control per-seed variation of
    the cavity around the nominal geometry.
    """

    size: int = 256
    cavity_axes: Tuple[float, float] = (76.0, 46.0)
    cavity_center: Tuple[float, float] = (138.0, 128.0)
    ring_thickness: float = 10.0
    sector_angle: float = 80.0
    apex: Tuple[float, float] = (0.0, 128.0)
    sector_depth: float = 250.0
    speckle_strength: float = 0.5
    border_dropout_prob: float = 0.1
    operator_b_perturbation: float = 21.0
    warp_smoothness: float = 20.0
    shape_jitter: float = 0.1
    center_jitter: float = 6.0
    attenuation: float = 0.35

    def __post_init__(self):
        object.__setattr__(self, "cavity_axes", tuple(float(v) for v in self.cavity_axes))
        object.__setattr__(self, "cavity_center", tuple(float(v) for v in self.cavity_center))
        object.__setattr__(self, "apex", tuple(float(v) for v in self.apex))
        if self.size < 8:
            raise ValueError("phantom size must be >= 8")
        if min(self.cavity_axes) <= 0 or self.ring_thickness <= 0:
            raise ValueError("cavity axes and ring thickness must be positive")
        if not 0 < self.sector_angle < 180 or self.sector_depth <= 0:
            raise ValueError("sector angle must lie in (0, 180) and depth must be positive")
        if self.speckle_strength < 0 or self.operator_b_perturbation < 0:
            raise ValueError("speckle_strength and operator_b_perturbation must be >= 0")
        if not 0.0 <= self.border_dropout_prob <= 1.0:
            raise ValueError("border_dropout_prob must lie in [0, 1]")
        if not 0 <= self.shape_jitter < 1 or self.center_jitter < 0:
            raise ValueError("invalid jitter settings")
        if self.warp_smoothness <= 0:
            raise ValueError("warp_smoothness must be positive")
        # the worst case of the jittered geometry must still fit the sector
        grow = 1.0 + self.shape_jitter
        a, b = self.cavity_axes
        _check_inside_sector(self, (a * grow, b * grow), self.cavity_center, self.center_jitter)

    @classmethod
    def for_size(cls, size: int, **overrides) -> "PhantomParams":
        """Default geometry scaled from the 256-pixel layout to ``size`` pixels."""
        f = size / 256.0
        base = cls()
        scaled = dict(
            size=size,
            cavity_axes=tuple(v * f for v in base.cavity_axes),
            cavity_center=tuple(v * f for v in base.cavity_center),
            ring_thickness=base.ring_thickness * f,
            apex=tuple(v * f for v in base.apex),
            sector_depth=base.sector_depth * f,
            operator_b_perturbation=base.operator_b_perturbation * f,
            warp_smoothness=base.warp_smoothness * f,
            center_jitter=base.center_jitter * f,
        )
        scaled.update(overrides)
        return cls(**scaled)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhantomParams":
        return cls(**data)


def _check_inside_sector(params: PhantomParams, axes, center, slack: float = 0.0) -> None:
    a, b = axes
    outer_a, outer_b = a + params.ring_thickness, b + params.ring_thickness
    t = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
    rows = center[0] + outer_a * np.cos(t)
    cols = center[1] + outer_b * np.sin(t)
    dr, dc = rows - params.apex[0], cols - params.apex[1]
    radius = np.hypot(dr, dc)
    angle = np.degrees(np.arctan2(np.abs(dc), dr))
    half = params.sector_angle / 2.0
    margin_r = params.sector_depth - (radius + slack)
    # distance to the straight sector edges
    margin_a = radius * np.sin(np.radians(half - angle)) - slack
    if (dr <= 0).any() or margin_r.min() <= 0 or margin_a.min() <= 0:
        raise ValueError("cavity ellipse and ring do not fit inside the scan sector")
    size = params.size
    if rows.min() - slack < 0 or cols.min() - slack < 0 or rows.max() + slack >= size or cols.max() + slack >= size:
        raise ValueError("cavity ellipse and ring do not fit inside the frame")


def _ellipse(shape, center, axes, scale=1.0) -> np.ndarray:
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    a, b = axes[0] * scale, axes[1] * scale
    return ((rr - center[0]) / a) ** 2 + ((cc - center[1]) / b) ** 2 <= 1.0


def _sector(params: PhantomParams) -> Tuple[np.ndarray, np.ndarray]:
    n = params.size
    rr, cc = np.mgrid[0:n, 0:n].astype(np.float64)
    dr, dc = rr - params.apex[0], cc - params.apex[1]
    radius = np.hypot(dr, dc)
    angle = np.degrees(np.arctan2(np.abs(dc), dr))
    inside = (dr >= 0) & (radius <= params.sector_depth) & (angle <= params.sector_angle / 2.0)
    return inside, radius


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    peak = np.abs(field).max()
    return field / peak if peak > 0 else field


def _warp_mask(gt: np.ndarray, rng: np.random.Generator, magnitude: float, smoothness: float) -> np.ndarray:
    if magnitude == 0:
        return gt.copy()
    shape = gt.shape
    d_row = _smooth_field(rng, shape, smoothness) * magnitude
    d_col = _smooth_field(rng, shape, smoothness) * magnitude
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    warped = ndimage.map_coordinates(gt.astype(np.float64), [rr + d_row, cc + d_col], order=1, mode="constant")
    out = warped >= 0.5
    if not out.any():
        return gt.copy()
    return largest_component(out).values.astype(bool)


def generate_phantom(seed: int, params: PhantomParams = PhantomParams()) -> Tuple[ImageFrame, SegMask, SegMask]:
    """Render one phantom frame with both operators' tracings.

    Returns:
        ``(image, gt, operator_b)``. ``gt`` is the rasterized cavity
        ellipse; identical ``seed`` and ``params`` give bit-identical output.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5EED]))
    n = params.size
    jitter = params.shape_jitter
    scale = 1.0 + rng.uniform(-jitter, jitter, size=2)
    axes = (params.cavity_axes[0] * scale[0], params.cavity_axes[1] * scale[1])
    offset = rng.uniform(-params.center_jitter, params.center_jitter, size=2)
    center = (params.cavity_center[0] + offset[0], params.cavity_center[1] + offset[1])
    _check_inside_sector(params, axes, center)

    inside, radius = _sector(params)
    cavity = _ellipse((n, n), center, axes)
    outer = _ellipse((n, n), center, (axes[0] + params.ring_thickness, axes[1] + params.ring_thickness))
    ring = outer & ~cavity

    scene = np.where(inside, _TISSUE_LEVEL, 0.0)
    scene[ring] = _RING_LEVEL
    if params.border_dropout_prob > 0:
        rr, cc = np.mgrid[0:n, 0:n]
        theta = np.arctan2((rr - center[0]) / axes[0], (cc - center[1]) / axes[1])
        segment = ((theta + np.pi) / (2 * np.pi) * _DROPOUT_SEGMENTS).astype(int) % _DROPOUT_SEGMENTS
        dropped = rng.random(_DROPOUT_SEGMENTS) < params.border_dropout_prob
        scene[ring & dropped[segment]] = _DROPOUT_LEVEL
    else:
        rng.random(_DROPOUT_SEGMENTS)  # keep the stream aligned across settings
    scene[cavity] = _CAVITY_LEVEL
    scene *= np.exp(-params.attenuation * radius / params.sector_depth)

    s = params.speckle_strength
    if s > 0:
        shape_k = 1.0 / (s * s)
        speckle = rng.gamma(shape_k, 1.0 / shape_k, size=(n, n))
        speckle = ndimage.gaussian_filter(speckle, 0.8)
        speckle /= speckle.mean()
        scene = scene * speckle
    else:
        rng.gamma(1.0, 1.0, size=(n, n))
    pixels = np.clip(np.where(inside, scene, 0.0), 0.0, 1.0)

    mean_axis = 0.5 * (axes[0] + axes[1])
    nominal_axis = 0.5 * (params.cavity_axes[0] + params.cavity_axes[1])
    # per-frame disagreement varies between frames, as between real tracings
    magnitude = params.operator_b_perturbation * mean_axis / nominal_axis * rng.uniform(0.4, 1.6)
    op_b = _warp_mask(cavity, rng, magnitude, params.warp_smoothness * mean_axis / nominal_axis)

    return ImageFrame(pixels.astype(np.float32)), SegMask(cavity), SegMask(op_b)


def frame_seed(base_seed: int, patient_index: int, frame_index: int) -> int:
    """Order-independent per-frame seed derived by hashing its coordinates."""
    key = f"{int(base_seed)}:{int(patient_index)}:{int(frame_index)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def frame_params(base: PhantomParams, frame_index: int) -> PhantomParams:
    """Per-frame geometry: even frames are end-diastolic, odd frames end-systolic."""
    if frame_index % 2 == 0:
        return base
    a, b = base.cavity_axes
    return dataclasses.replace(base, cavity_axes=(a * 0.85, b * 0.85))


def patient_id_for(index: int) -> str:
    return f"P{index:03d}"


def frame_id_for(patient_index: int, frame_index: int) -> str:
    return f"P{patient_index:03d}_F{frame_index:02d}"


@dataclass(frozen=True)
class FrameEntry:
    patient_id: str
    frame_id: str
    split: Optional[Split] = None


def _write_png(path: Path, array: np.ndarray) -> None:
    try:
        Image.fromarray(array, mode="L").save(path, format="PNG", optimize=False)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def _to_u8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(pixels, dtype=np.float64) * 255.0).astype(np.uint8)


def generate_dataset(
    n_patients: int,
    frames_per_patient: int,
    base_seed: int,
    params: PhantomParams = PhantomParams(),
    out_dir: str | Path = "data",
) -> List[FrameEntry]:
    """Write a phantom corpus to ``out_dir`` and return its manifest.

    Layout: ``<out>/<patient_id>/<frame_id>_img.png``, ``_maskA.png`` and
    ``_maskB.png`` (0 background, 255 cavity), plus ``manifest.csv`` and
    ``params.json``.
    """
    if n_patients < 1 or frames_per_patient < 1:
        raise ValueError("n_patients and frames_per_patient must be >= 1")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create {root}: {exc}") from exc
    entries = []
    for p in range(n_patients):
        pid = patient_id_for(p)
        pdir = root / pid
        try:
            pdir.mkdir(exist_ok=True)
        except OSError as exc:
            raise OSError(f"could not create {pdir}: {exc}") from exc
        for f in range(frames_per_patient):
            fid = frame_id_for(p, f)
            fparams = frame_params(params, f)
            image, gt, op_b = generate_phantom(frame_seed(base_seed, p, f), fparams)
            _write_png(pdir / f"{fid}_img.png", _to_u8(image.pixels))
            _write_png(pdir / f"{fid}_maskA.png", gt.values * 255)
            _write_png(pdir / f"{fid}_maskB.png", op_b.values * 255)
            entries.append(FrameEntry(pid, fid))
    write_manifest(root / MANIFEST_NAME, entries)
    provenance = {
        "n_patients": n_patients,
        "frames_per_patient": frames_per_patient,
        "base_seed": base_seed,
        "params": params.to_dict(),
        "frame_seed": "sha256('<base_seed>:<patient_index>:<frame_index>')[:8] little-endian",
        "end_systolic_scale": 0.85,
    }
    (root / PARAMS_NAME).write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return entries


def write_manifest(path: str | Path, entries: Iterable[FrameEntry]) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            for e in entries:
                writer.writerow([e.patient_id, e.frame_id, e.split.value if e.split else ""])
    except OSError as exc:
        raise OSError(f"could not write manifest {path}: {exc}") from exc


def read_manifest(path: str | Path) -> List[FrameEntry]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(MANIFEST_COLUMNS)}")
        return [
            FrameEntry(row["patient_id"], row["frame_id"], Split(row["split"]) if row["split"] else None)
            for row in reader
        ]


def _largest_remainder(n: int, ratios: Sequence[float]) -> List[int]:
    quotas = [r * n for r in ratios]
    sizes = [int(math.floor(q)) for q in quotas]
    leftover = n - sum(sizes)
    # ties go to the earlier group
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def split_patients(
    patient_ids: Sequence[str],
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> Dict[str, Split]:
    """Assign whole patients to TRAIN/VAL/TEST.

    Patients are shuffled with ``seed`` and group sizes follow
    largest-remainder rounding of ``ratios * n``.
    """
    ids = list(dict.fromkeys(patient_ids))
    if len(ids) != len(patient_ids):
        raise ValueError("patient ids must be unique")
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3:
        raise ValueError("three ratios (train, val, test) are required")
    if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be positive and sum to 1")
    if len(ids) < 3:
        raise ValueError(f"need at least 3 patients for 3 groups, got {len(ids)}")
    sizes = _largest_remainder(len(ids), ratios)
    order = np.random.default_rng(seed).permutation(len(ids))
    groups = [Split.TRAIN] * sizes[0] + [Split.VAL] * sizes[1] + [Split.TEST] * sizes[2]
    return {ids[i]: g for i, g in zip(order, groups)}


def apply_split(entries: Sequence[FrameEntry], assignment: Dict[str, Split]) -> List[FrameEntry]:
    missing = sorted({e.patient_id for e in entries} - set(assignment))
    if missing:
        raise ValueError(f"patients without a split: {', '.join(missing)}")
    return [dataclasses.replace(e, split=assignment[e.patient_id]) for e in entries]


def resize_frame(image: ImageFrame, mask: SegMask, target: int = 256) -> Tuple[ImageFrame, SegMask]:
    """Resize to ``target``×``target``: bilinear for the image, nearest for the mask."""
    check_pair(image, mask)
    if min(image.shape) < 8:
        raise ValueError(f"source frame {image.shape} is too small to resize")
    if target < 1:
        raise ValueError("target size must be positive")
    if image.shape == (target, target):
        return image, mask
    img = Image.fromarray(np.asarray(image.pixels, dtype=np.float32), mode="F")
    img = img.resize((target, target), resample=Image.BILINEAR)
    pixels = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    msk = Image.fromarray(mask.values * 255, mode="L").resize((target, target), resample=Image.NEAREST)
    values = (np.asarray(msk) > 127).astype(np.uint8)
    return ImageFrame(pixels, image.frame_id, image.patient_id), SegMask(values)


def resize_mask(mask: SegMask, target: int) -> SegMask:
    if mask.shape == (target, target):
        return mask
    msk = Image.fromarray(mask.values * 255, mode="L").resize((target, target), resample=Image.NEAREST)
    return SegMask((np.asarray(msk) > 127).astype(np.uint8))


def load_image(path: str | Path, frame_id: str = "", patient_id: str = "") -> ImageFrame:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    return ImageFrame(arr, frame_id, patient_id)


def load_mask(path: str | Path) -> SegMask:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return SegMask((arr > 127).astype(np.uint8))


def save_mask(path: str | Path, mask: SegMask) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_png(path, mask.values * 255)


def mask_path(root: str | Path, entry: FrameEntry, operator: Operator) -> Path:
    suffix = "maskA" if Operator(operator) is Operator.OA else "maskB"
    return Path(root) / entry.patient_id / f"{entry.frame_id}_{suffix}.png"


def image_path(root: str | Path, entry: FrameEntry) -> Path:
    return Path(root) / entry.patient_id / f"{entry.frame_id}_img.png"
