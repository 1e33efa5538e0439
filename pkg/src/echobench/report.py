"""Tables, contour overlays and training curves."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .core import PUBLISHED_BENCHMARK, PUBLISHED_SCENARIOS, BenchmarkRow, Contour, ImageFrame, ScenarioResult, as_points
from .metrics import hd_fallback
from .scenarios import write_benchmark_csv, write_scenarios_csv

MANUAL_COLOR = (0, 0, 255)
AUTOMATED_COLOR = (255, 255, 0)
BANNER_HEIGHT = 12

_MODEL_NAMES = {"UNET": "U-Net", "UNET1": "U-Net 1", "UNET2": "U-Net 2"}
_SCENARIO_NAMES = {
    "OA_VS_OB": "OA VS OB",
    "POA_VS_OA": "POA VS OA",
    "POA_VS_OB": "POA VS OB",
    "POB_VS_OB": "POB VS OB",
    "POB_VS_OA": "POB VS OA",
}


def fmt(mean: float, sd: float) -> str:
    """``mean±sd`` with two decimals, independent of locale."""
    return "{:.2f}±{:.2f}".format(mean, sd)


def render_overlay(
    image: ImageFrame,
    manual: Contour,
    automated: Optional[Contour],
    out,
    dice: Optional[float] = None,
    hd: Optional[float] = None,
) -> np.ndarray:
    """Draw the manual (blue) and automated (yellow) contours on the frame.

    The manual contour is drawn first, so where the two coincide only yellow
    shows. A text banner under the frame carries the per-frame Dice and HD,
    or ``FAILED`` when the automated contour is empty.

    Returns:
        The RGB pixel array that was written to ``out``.
    """
    h, w = image.shape
    pm, pa = as_points(manual), as_points(automated if automated is not None else ())
    for pts in (pm, pa):
        if len(pts) and (pts.min() < 0 or pts[:, 0].max() >= h or pts[:, 1].max() >= w):
            raise ValueError(f"contour point outside the {h}x{w} image")
    gray = np.round(np.asarray(image.pixels, dtype=np.float64) * 255).astype(np.uint8)
    canvas = np.zeros((h + BANNER_HEIGHT, w, 3), dtype=np.uint8)
    canvas[:h] = gray[..., None]
    if len(pm):
        canvas[pm[:, 0], pm[:, 1]] = MANUAL_COLOR
    if len(pa):
        canvas[pa[:, 0], pa[:, 1]] = AUTOMATED_COLOR
    if len(pa) == 0:
        text = "FAILED"
    else:
        parts = []
        if dice is not None:
            parts.append(f"DC {dice:.2f}")
        if hd is not None:
            parts.append(f"HD {hd:.2f}")
        text = " ".join(parts)
    img = Image.fromarray(canvas)
    if text:
        ImageDraw.Draw(img).text((1, h), text, fill=(255, 255, 255))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    img.save(out, format="PNG")
    return np.asarray(img)


def markdown_tables(rows: Sequence[BenchmarkRow], scenarios: Sequence[ScenarioResult]) -> str:
    lines = ["| Model | DC | HD | n |", "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {_MODEL_NAMES[r.variant.value]} | {fmt(r.dice_mean, r.dice_sd)} | {fmt(r.hd_mean, r.hd_sd)} | {r.n_frames} |")
    lines += ["", "| Compared scenarios | DC | HD | n |", "|---|---|---|---|"]
    for s in scenarios:
        lines.append(f"| {_SCENARIO_NAMES[s.label.value]} | {fmt(s.dice_mean, s.dice_sd)} | {fmt(s.hd_mean, s.hd_sd)} | {s.n_frames} |")
    return "\n".join(lines) + "\n"


def emit_tables(
    rows: Sequence[BenchmarkRow],
    scenarios: Sequence[ScenarioResult],
    out_dir,
    frame_size: Optional[int] = None,
) -> Path:
    """Write ``benchmark.csv``, ``scenarios.csv`` and ``report.md``; return the report path."""
    if not rows or not scenarios:
        raise ValueError("emit_tables needs benchmark rows and scenario results")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_benchmark_csv(out_dir / "benchmark.csv", rows)
    write_scenarios_csv(out_dir / "scenarios.csv", scenarios)

    parts = [
        "# Segmentation benchmark",
        "",
        "Dice coefficient (DC) and Hausdorff distance (HD, pixels, on traced contours) as mean±SD.",
        "",
        markdown_tables(rows, scenarios),
    ]
    failed = [(r.variant.value, r.failed_frames) for r in rows if r.failed_frames]
    failed += [(s.label.value, s.failed_frames) for s in scenarios if s.failed_frames]
    if failed:
        parts += ["## Failed frames", ""]
        parts += [f"- **{name}**: {', '.join(frames)}" for name, frames in failed]
        parts.append("")
    fallback = (
        f"{hd_fallback((frame_size, frame_size)):.2f} px (half the {frame_size}x{frame_size} diagonal)"
        if frame_size else "half the frame diagonal"
    )
    parts += [
        "## Conventions",
        "",
        "- Dice of two empty masks is 1.0.",
        f"- An empty mask against a nonempty one scores Dice 0.0 and HD {fallback}; such frames are listed above.",
        "- Masks are reduced to their largest 4-connected component before contour tracing.",
        "- SD is the sample standard deviation (n-1).",
        "",
        "## Published reference values (clinical data, not reproducible here)",
        "",
        "| Row | DC | HD |",
        "|---|---|---|",
    ]
    for v, (d, h) in PUBLISHED_BENCHMARK.items():
        parts.append(f"| {_MODEL_NAMES[v.value]} | {fmt(*d)} | {fmt(*h)} |")
    for s, (d, h) in PUBLISHED_SCENARIOS.items():
        parts.append(f"| {_SCENARIO_NAMES[s.value]} | {fmt(*d)} | {fmt(*h)} |")
    path = out_dir / "report.md"
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def plot_history(history, out) -> Path:
    """Loss and validation-Dice curves against epoch, with the best epoch marked."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not len(history):
        raise ValueError("history is empty")
    epochs = [r.epoch for r in history.records]
    best = history.best_epoch
    best_rec = next(r for r in history.records if r.epoch == best)
    fig, (ax_loss, ax_dice) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [r.train_loss for r in history.records], marker=".", label="train")
    ax_loss.plot(epochs, [r.val_loss for r in history.records], marker=".", label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("NLL loss")
    ax_loss.legend()
    ax_dice.plot(epochs, [r.val_dice for r in history.records], marker=".", color="tab:green")
    ax_dice.plot([best], [best_rec.val_dice], marker="*", markersize=14, color="tab:red", linestyle="none",
                 label=f"best epoch {best}")
    ax_dice.set_xlabel("epoch")
    ax_dice.set_ylabel("validation Dice")
    ax_dice.legend()
    fig.tight_layout()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
