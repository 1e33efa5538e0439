"""Command-line entry point: ``echobench <subcommand> ...``.

Exit codes: 0 success, 1 invalid arguments or missing inputs, 2 failure
while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from .core import ModelConfig, Operator, SegMask, Split, TrainConfig, Variant

log = logging.getLogger("echobench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _echo(out_dir: Path, name: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(config, indent=2, sort_keys=True, default=str) + "\n")


def _existing(path: str, kind: str = "file") -> Path:
    p = Path(path)
    ok = p.is_file() if kind == "file" else p.is_dir()
    if not ok:
        raise UsageError(f"{kind} not found: {p}")
    return p


def _ratios(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--ratios must be numbers, got {text!r}") from None
    if len(values) != 3:
        raise UsageError(f"--ratios needs three values (train,val,test), got {len(values)}")
    if min(values) <= 0 or abs(sum(values) - 1.0) > 1e-9:
        raise UsageError("--ratios must be positive and sum to 1")
    return values


def _operator(text: str) -> Operator:
    try:
        return Operator.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _variant(text: str) -> Variant:
    try:
        return Variant.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_gen(args) -> None:
    from .synthdata import PhantomParams, generate_dataset

    params = PhantomParams()
    if args.params:
        try:
            params = PhantomParams.from_dict(json.loads(_existing(args.params).read_text()))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid phantom parameters in {args.params}: {exc}") from None
    if args.patients < 1 or args.frames_per_patient < 1:
        raise UsageError("--patients and --frames-per-patient must be >= 1")
    entries = generate_dataset(args.patients, args.frames_per_patient, args.seed, params, args.out)
    log.info("wrote %d frames for %d patients to %s", len(entries), args.patients, args.out)


def cmd_split(args) -> None:
    from .synthdata import apply_split, read_manifest, split_patients, write_manifest

    ratios = _ratios(args.ratios)
    manifest = _existing(args.manifest)
    entries = read_manifest(manifest)
    patients = sorted({e.patient_id for e in entries})
    if len(patients) < 3:
        raise UsageError(f"need at least 3 patients to split, found {len(patients)}")
    assignment = split_patients(patients, ratios, args.seed)
    write_manifest(manifest, apply_split(entries, assignment))
    counts = {s.value: sum(1 for g in assignment.values() if g is s) for s in Split}
    _echo(manifest.parent, "split_config.json", {"ratios": ratios, "seed": args.seed, "patients": counts,
                                                "rounding": "largest remainder"})
    log.info("split %d patients: %s", len(patients), counts)


def cmd_train(args) -> None:
    from .report import plot_history
    from .trainer import Dataset, train

    variant = _variant(args.variant)
    operator = _operator(args.operator)
    data = _existing(args.data, "dir")
    _existing(str(data / "manifest.csv"))
    try:
        config = ModelConfig.for_variant(variant, args.scale, args.size)
        tconfig = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset = Dataset.open(data)
    out = Path(args.out)
    _, history = train(config, tconfig, dataset, operator, run_dir=out)
    plot_history(history, out / "history.png")
    log.info("best epoch %d, validation Dice %.4f", history.best_epoch,
             max(r.val_dice for r in history.records))


def cmd_evaluate(args) -> None:
    from .scenarios import evaluate_frames, save_predictions, write_frame_metrics
    from .trainer import Dataset, predict_frames, read_checkpoint

    ckpt_path = _existing(args.checkpoint)
    data = _existing(args.data, "dir")
    operator = _operator(args.operator)
    try:
        which = Split(args.split.upper())
    except ValueError:
        raise UsageError(f"--split must be train, val or test, got {args.split!r}") from None
    ckpt = read_checkpoint(ckpt_path)
    dataset = Dataset.open(data)
    frames = dataset.frames(which, operator, ckpt.config.input_size)
    if not len(frames):
        raise UsageError(f"split {which.value} has no frames")
    preds = predict_frames(ckpt, frames)
    refs = {fid: SegMask(m.numpy()) for fid, m in zip(frames.frame_ids, frames.masks)}
    out = Path(args.out)
    save_predictions(out, preds, dict(zip(frames.frame_ids, frames.patient_ids)))
    per_frame = evaluate_frames(preds, refs)
    write_frame_metrics(out / "metrics.csv", per_frame)
    _echo(out, "evaluate_config.json", {
        "checkpoint": str(ckpt_path), "checkpoint_epoch": ckpt.epoch, "model": ckpt.config.to_dict(),
        "data": str(data), "split": which.value, "reference_operator": operator.value,
        "frames": len(frames), "failed_frames": [f for f, m in per_frame.items() if m.failed],
    })


def _references(data: Path, operator: Operator, frame_ids, size: int) -> Dict[str, SegMask]:
    from .synthdata import load_mask, mask_path, read_manifest, resize_mask

    by_id = {e.frame_id: e for e in read_manifest(data / "manifest.csv")}
    unknown = sorted(set(frame_ids) - set(by_id))
    if unknown:
        raise UsageError(f"frames not in {data}/manifest.csv: {', '.join(unknown)}")
    out = {}
    for fid in frame_ids:
        path = mask_path(data, by_id[fid], operator)
        if not path.is_file():
            raise UsageError(f"missing {operator.value} mask for frame {fid}: {path}")
        out[fid] = resize_mask(load_mask(path), size)
    return out


def _prediction_size(preds: Dict[str, SegMask]) -> int:
    shapes = {m.shape for m in preds.values()}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2 or len(set(next(iter(shapes)))) != 1:
        raise UsageError(f"predictions must share one square shape, found {sorted(shapes)}")
    return next(iter(shapes))[0]


def cmd_benchmark(args) -> None:
    from .scenarios import load_predictions, run_benchmark, write_benchmark_csv

    data = _existing(args.data, "dir")
    operator = _operator(args.operator)
    predictions = {}
    for item in args.pred:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--pred expects VARIANT=DIR, got {item!r}")
        predictions[_variant(name)] = load_predictions(_existing(path, "dir"))
    frame_ids = sorted(set().union(*(set(p) for p in predictions.values())))
    size = _prediction_size({k: v for p in predictions.values() for k, v in p.items()})
    refs = _references(data, operator, frame_ids, size)
    rows = run_benchmark(predictions, refs, variants=list(predictions))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_benchmark_csv(out / "benchmark.csv", rows)
    _echo(out, "benchmark_config.json", {"predictions": args.pred, "data": str(data),
                                         "reference_operator": operator.value, "frame_size": size})


def cmd_scenarios(args) -> None:
    from .scenarios import load_predictions, run_scenarios, write_scenarios_csv

    data = _existing(args.data, "dir")
    pred_oa = load_predictions(_existing(args.pred_oa, "dir"))
    pred_ob = load_predictions(_existing(args.pred_ob, "dir"))
    size = _prediction_size({**pred_oa, **pred_ob})
    frame_ids = sorted(set(pred_oa) | set(pred_ob))
    oa = _references(data, Operator.OA, frame_ids, size)
    ob = _references(data, Operator.OB, frame_ids, size)
    results = run_scenarios(pred_oa, pred_ob, oa, ob)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scenarios_csv(out / "scenarios.csv", results)
    _echo(out, "scenarios_config.json", {"pred_oa": args.pred_oa, "pred_ob": args.pred_ob,
                                         "data": str(data), "frame_size": size})


def cmd_report(args) -> None:
    from .metrics import evaluate_pair, extract_contour, largest_component
    from .report import emit_tables, plot_history, render_overlay
    from .scenarios import load_predictions, read_benchmark_csv, read_scenarios_csv
    from .synthdata import image_path, load_image, read_manifest, resize_frame, load_mask, mask_path
    from .core import Contour
    from .trainer import TrainingHistory

    rows = read_benchmark_csv(_existing(args.benchmark))
    scenarios = read_scenarios_csv(_existing(args.scenarios))
    out = Path(args.out)
    size = None
    if args.overlays:
        if not args.data:
            raise UsageError("--overlays needs --data to locate images and manual masks")
        data = _existing(args.data, "dir")
        preds = load_predictions(_existing(args.overlays, "dir"))
        size = _prediction_size(preds)
        operator = _operator(args.operator)
        by_id = {e.frame_id: e for e in read_manifest(data / "manifest.csv")}
        for fid in sorted(preds)[: args.limit]:
            entry = by_id[fid]
            image = load_image(image_path(data, entry), fid, entry.patient_id)
            image, manual = resize_frame(image, load_mask(mask_path(data, entry, operator)), size)
            pair = evaluate_pair(preds[fid], manual)
            auto = Contour() if preds[fid].is_empty() else extract_contour(largest_component(preds[fid]))
            render_overlay(image, extract_contour(manual), auto, out / "overlays" / f"{fid}.png",
                           dice=pair.dice, hd=pair.hausdorff)
    for hist in args.history or []:
        path = _existing(hist)
        plot_history(TrainingHistory.read_csv(path), out / f"{path.parent.name}_history.png")
    emit_tables(rows, scenarios, out, frame_size=size)
    _echo(out, "report_config.json", vars(args))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="echobench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-gen", help="generate a synthetic phantom corpus")
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--frames-per-patient", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--params", help="JSON file with phantom parameters")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("split", help="assign patients to train/val/test in the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one variant on one operator's annotations")
    p.add_argument("--variant", required=True, choices=["unet", "unet1", "unet2"], type=str.lower)
    p.add_argument("--operator", default="A", choices=["A", "B"], type=str.upper)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--size", type=int, default=256, help="network input size (frames are resized)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="predict a split and score it against one operator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"], type=str.lower)
    p.add_argument("--operator", default="A", choices=["A", "B"], type=str.upper)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="summarize several models' predictions against one operator")
    p.add_argument("--pred", action="append", required=True, metavar="VARIANT=DIR")
    p.add_argument("--data", required=True)
    p.add_argument("--operator", default="A", choices=["A", "B"], type=str.upper)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("scenarios", help="the five human/automated comparisons")
    p.add_argument("--pred-oa", required=True)
    p.add_argument("--pred-ob", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("report", help="write markdown/CSV tables and overlays")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--overlays", help="prediction directory to overlay on the frames")
    p.add_argument("--data", help="dataset directory (needed with --overlays)")
    p.add_argument("--operator", default="A", choices=["A", "B"], type=str.upper)
    p.add_argument("--limit", type=int, default=20, help="maximum number of overlays")
    p.add_argument("--history", action="append", help="history.csv of a training run to plot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"echobench {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"echobench {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
