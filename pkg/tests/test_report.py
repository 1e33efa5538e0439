import csv

import numpy as np
import pytest
from PIL import Image

from echobench.core import BenchmarkRow, Contour, ImageFrame, ScenarioLabel, ScenarioResult, Variant
from echobench.metrics import dilate, extract_contour, hausdorff_bruteforce
from echobench.report import AUTOMATED_COLOR, MANUAL_COLOR, emit_tables, fmt, plot_history, render_overlay
from echobench.synthdata import PhantomParams, generate_phantom
from echobench.trainer import EpochRecord, TrainingHistory


def _rows():
    rows = [BenchmarkRow(v, 0.923456 - i / 100, 0.051, 3.97 + i, 0.82, 10) for i, v in enumerate(Variant)]
    scen = [ScenarioResult(s, 0.9, 0.05, 4.0 + i / 3, 0.8, 10) for i, s in enumerate(ScenarioLabel)]
    return rows, scen


def _colored(arr, color):
    return {tuple(map(int, p)) for p in np.argwhere((arr[..., :3] == color).all(axis=-1))}


def test_format():
    assert fmt(0.923456, 0.051) == "0.92±0.05"


def test_tables(tmp_path):
    rows, scen = _rows()
    report = emit_tables(rows, scen, tmp_path)
    text = report.read_text(encoding="utf-8")
    data_lines = [l for l in text.split("## Failed")[0].split("## Conventions")[0].splitlines()
                  if l.startswith("| ") and not l.startswith("| Model") and not l.startswith("| Compared")]
    assert len(data_lines) == 3 + 5
    assert "0.92±0.05" in text
    with open(tmp_path / "benchmark.csv") as fh:
        parsed = list(csv.DictReader(fh))
    for row, orig in zip(parsed, rows):
        assert round(float(row["dice_mean"]), 6) == round(orig.dice_mean, 6)
        assert round(float(row["hd_sd"]), 6) == round(orig.hd_sd, 6)
    first = (tmp_path / "report.md").read_bytes()
    emit_tables(rows, scen, tmp_path)
    assert (tmp_path / "report.md").read_bytes() == first


def test_failed_frames_listed(tmp_path):
    rows, scen = _rows()
    rows[0] = BenchmarkRow(Variant.UNET, 0.5, 0.1, 50.0, 10.0, 10, ("P001_F00",))
    text = emit_tables(rows, scen, tmp_path, frame_size=64).read_text(encoding="utf-8")
    assert "Failed frames" in text and "P001_F00" in text
    assert "45.25 px" in text


def _scene():
    image, gt, _ = generate_phantom(1, PhantomParams.for_size(64))
    return image, gt


def test_overlay_same_contour_is_all_yellow(tmp_path):
    image, gt = _scene()
    c = extract_contour(gt)
    arr = render_overlay(image, c, c, tmp_path / "o.png", dice=1.0, hd=0.0)
    assert not _colored(arr[:64], MANUAL_COLOR)
    assert _colored(arr[:64], AUTOMATED_COLOR) == set(c.points)


def test_overlay_dilated_is_two_curves_one_pixel_apart(tmp_path):
    image, gt = _scene()
    manual, auto = extract_contour(gt), extract_contour(dilate(gt, 1))
    render_overlay(image, manual, auto, tmp_path / "o.png")
    arr = np.asarray(Image.open(tmp_path / "o.png").convert("RGB"))
    blue, yellow = _colored(arr[:64], MANUAL_COLOR), _colored(arr[:64], AUTOMATED_COLOR)
    assert blue == set(manual.points)
    assert yellow == set(auto.points)
    assert hausdorff_bruteforce(sorted(blue), sorted(yellow)) == 1.0


def test_overlay_failed_banner(tmp_path):
    image, gt = _scene()
    arr = render_overlay(image, extract_contour(gt), Contour(), tmp_path / "o.png")
    assert arr.shape[0] > 64
    assert arr[64:].any()  # banner text


def test_overlay_out_of_bounds(tmp_path):
    image, _ = _scene()
    with pytest.raises(ValueError):
        render_overlay(image, Contour(((70, 1),)), Contour(), tmp_path / "o.png")


def test_plot_history(tmp_path):
    hist = TrainingHistory([EpochRecord(e, 1.0 / e, 1.2 / e, 0.5 + e / 20) for e in range(1, 6)])
    assert hist.best_epoch == 5
    assert plot_history(hist, tmp_path / "h.png").is_file()
    single = TrainingHistory([EpochRecord(1, 0.6, 0.6, 0.3)])
    assert plot_history(single, tmp_path / "s.png").is_file()


def test_best_epoch_tie_goes_early():
    hist = TrainingHistory([EpochRecord(1, 1, 1, 0.8), EpochRecord(2, 1, 1, 0.9), EpochRecord(3, 1, 1, 0.9)])
    assert hist.best_epoch == 2
