"""Model benchmark and inter-observer scenario tables.

Both consume prediction sets (frame id -> mask) so that the human-only
comparison runs without any model.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .core import BenchmarkRow, MetricPair, ScenarioLabel, ScenarioResult, SegMask, Variant
from .metrics import evaluate_pair, mean_sd
from .synthdata import load_mask, save_mask

BENCHMARK_COLUMNS = ("model", "dice_mean", "dice_sd", "hd_mean", "hd_sd", "n", "failed_frames")
SCENARIO_COLUMNS = ("scenario", "dice_mean", "dice_sd", "hd_mean", "hd_sd", "n", "failed_frames")
FRAME_COLUMNS = ("frame_id", "dice", "hausdorff", "failed")
PRED_SUFFIX = "_pred.png"

Masks = Mapping[str, SegMask]


def evaluate_frames(pred: Masks, ref: Masks) -> Dict[str, MetricPair]:
    """Per-frame metrics in sorted frame-id order; both sets must cover the same frames."""
    missing = sorted(set(ref) ^ set(pred))
    if missing:
        raise ValueError(f"prediction and reference frame sets differ: {', '.join(missing)}")
    if not ref:
        raise ValueError("no frames to evaluate")
    return {fid: evaluate_pair(pred[fid], ref[fid]) for fid in sorted(ref)}


def _summary(per_frame: Mapping[str, MetricPair]):
    dm, ds = mean_sd(m.dice for m in per_frame.values())
    hm, hs = mean_sd(m.hausdorff for m in per_frame.values())
    failed = tuple(fid for fid, m in per_frame.items() if m.failed)
    return dm, ds, hm, hs, len(per_frame), failed


def run_benchmark(
    predictions: Mapping[Variant, Masks],
    references: Masks,
    variants: Sequence[Variant] = tuple(Variant),
) -> List[BenchmarkRow]:
    """One row per variant, ordered UNET, UNET1, UNET2, against the reference masks."""
    predictions = {Variant(k): v for k, v in predictions.items()}
    missing = [v.value for v in variants if v not in predictions]
    if missing:
        raise ValueError(f"missing predictions for: {', '.join(missing)}")
    rows = []
    for variant in sorted(variants, key=list(Variant).index):
        per_frame = evaluate_frames(predictions[variant], references)
        rows.append(BenchmarkRow(variant, *_summary(per_frame)))
    return rows


def run_scenarios(pred_oa: Masks, pred_ob: Masks, oa: Masks, ob: Masks) -> List[ScenarioResult]:
    """The five human/automated comparisons, in table order.

    Each pair is evaluated as ``evaluate_pair(first, second)`` where the
    label reads ``FIRST_VS_SECOND``.
    """
    sets = {"POA": pred_oa, "POB": pred_ob, "OA": oa, "OB": ob}
    frames = set().union(*(set(s) for s in sets.values()))
    problems = []
    for name, s in sets.items():
        absent = sorted(frames - set(s))
        if absent:
            problems.append(f"{name} lacks {', '.join(absent)}")
    if problems:
        raise ValueError("assessments cover different frames: " + "; ".join(problems))
    results = []
    for label in ScenarioLabel:
        first, second = label.value.split("_VS_")
        per_frame = evaluate_frames(sets[first], sets[second])
        results.append(ScenarioResult(label, *_summary(per_frame)))
    return results


def benchmark_row_matches(row: BenchmarkRow, scenario: ScenarioResult) -> bool:
    """Exact equality of the four statistics and the frame count."""
    return (
        row.dice_mean == scenario.dice_mean
        and row.dice_sd == scenario.dice_sd
        and row.hd_mean == scenario.hd_mean
        and row.hd_sd == scenario.hd_sd
        and row.n_frames == scenario.n_frames
    )


# ---------------------------------------------------------------------------
# file I/O


def save_predictions(out_dir, predictions: Masks, patient_of: Mapping[str, str]) -> None:
    """Write ``<out>/<patient_id>/<frame_id>_pred.png`` for every prediction."""
    out_dir = Path(out_dir)
    for fid, mask in predictions.items():
        save_mask(out_dir / patient_of[fid] / f"{fid}{PRED_SUFFIX}", mask)


def load_predictions(pred_dir) -> Dict[str, SegMask]:
    pred_dir = Path(pred_dir)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    out = {}
    for path in sorted(pred_dir.glob(f"*/*{PRED_SUFFIX}")):
        out[path.name[: -len(PRED_SUFFIX)]] = load_mask(path)
    if not out:
        raise FileNotFoundError(f"no *{PRED_SUFFIX} masks under {pred_dir}")
    return out


def write_frame_metrics(path, per_frame: Mapping[str, MetricPair]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRAME_COLUMNS)
        for fid, m in per_frame.items():
            writer.writerow([fid, repr(m.dice), repr(m.hausdorff), int(m.failed)])


def _write_rows(path, header, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for name, dm, ds, hm, hs, n, failed in rows:
            writer.writerow([name, repr(dm), repr(ds), repr(hm), repr(hs), n, ";".join(failed)])


def write_benchmark_csv(path, rows: Sequence[BenchmarkRow]) -> None:
    _write_rows(path, BENCHMARK_COLUMNS, (
        (r.variant.value, r.dice_mean, r.dice_sd, r.hd_mean, r.hd_sd, r.n_frames, r.failed_frames) for r in rows
    ))


def write_scenarios_csv(path, results: Sequence[ScenarioResult]) -> None:
    _write_rows(path, SCENARIO_COLUMNS, (
        (r.label.value, r.dice_mean, r.dice_sd, r.hd_mean, r.hd_sd, r.n_frames, r.failed_frames) for r in results
    ))


def _read_rows(path, key: str):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            failed = tuple(f for f in (row.get("failed_frames") or "").split(";") if f)
            yield (
                row[key], float(row["dice_mean"]), float(row["dice_sd"]),
                float(row["hd_mean"]), float(row["hd_sd"]), int(row["n"]), failed,
            )


def read_benchmark_csv(path) -> List[BenchmarkRow]:
    return [BenchmarkRow(Variant(r[0]), *r[1:]) for r in _read_rows(path, "model")]


def read_scenarios_csv(path) -> List[ScenarioResult]:
    return [ScenarioResult(ScenarioLabel(r[0]), *r[1:]) for r in _read_rows(path, "scenario")]
