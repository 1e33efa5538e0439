"""Training loop, prediction and checkpoint I/O."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .core import ImageFrame, ModelConfig, Operator, SegMask, Split, TrainConfig
from .metrics import dice
from .nets import SegmentationModel, build_model
from .synthdata import FrameEntry, image_path, load_image, load_mask, mask_path, read_manifest, resize_frame

log = logging.getLogger(__name__)

DEVICE_ENV = "ECHOBENCH_DEVICE"
CHECKPOINT_FORMAT = "echobench-checkpoint/1"


class CheckpointError(RuntimeError):
    pass


def device() -> torch.device:
    return torch.device(os.environ.get(DEVICE_ENV, "cpu"))


def nll_loss(logprobs: torch.Tensor, target) -> torch.Tensor:
    """Mean over all pixels of the negative log-probability of the target class."""
    if not isinstance(target, torch.Tensor):
        target = torch.from_numpy(np.stack([np.asarray(m.values) for m in target]))
    target = target.to(device=logprobs.device, dtype=torch.long)
    if logprobs.dim() != 4 or logprobs.shape[1] != 2:
        raise ValueError(f"expected logprobs of shape (batch, 2, H, W), got {tuple(logprobs.shape)}")
    if target.shape != logprobs.shape[:1] + logprobs.shape[2:]:
        raise ValueError(f"target shape {tuple(target.shape)} does not match logprobs {tuple(logprobs.shape)}")
    picked = logprobs.gather(1, target.unsqueeze(1))
    return -picked.mean()


def logprobs_to_masks(logprobs: torch.Tensor) -> torch.Tensor:
    """Per-pixel argmax with ties going to background."""
    return (logprobs[:, 1] > logprobs[:, 0]).to(torch.uint8)


@dataclass
class FrameSet:
    """Frames of one split held in memory at the model's input size."""

    images: torch.Tensor  # (N, 1, S, S) float32
    masks: torch.Tensor  # (N, S, S) int64
    frame_ids: List[str]
    patient_ids: List[str]

    def __len__(self) -> int:
        return len(self.frame_ids)


def load_frames(root, entries: Sequence[FrameEntry], operator: Operator, size: int) -> FrameSet:
    missing = [e.frame_id for e in entries if not mask_path(root, e, operator).is_file()]
    if missing:
        raise FileNotFoundError(f"missing {Operator(operator).value} masks for frames: {', '.join(missing)}")
    images, masks = [], []
    for e in entries:
        image = load_image(image_path(root, e), e.frame_id, e.patient_id)
        image, mask = resize_frame(image, load_mask(mask_path(root, e, operator)), size)
        images.append(image.pixels)
        masks.append(mask.values)
    if not entries:
        return FrameSet(torch.zeros(0, 1, size, size), torch.zeros(0, size, size, dtype=torch.long), [], [])
    return FrameSet(
        images=torch.from_numpy(np.stack(images)).unsqueeze(1).float(),
        masks=torch.from_numpy(np.stack(masks)).long(),
        frame_ids=[e.frame_id for e in entries],
        patient_ids=[e.patient_id for e in entries],
    )


@dataclass
class Dataset:
    """A phantom corpus on disk together with its patient split."""

    root: Path
    entries: List[FrameEntry]

    @classmethod
    def open(cls, root) -> "Dataset":
        root = Path(root)
        return cls(root, read_manifest(root / "manifest.csv"))

    def split(self, which: Split) -> List[FrameEntry]:
        if any(e.split is None for e in self.entries):
            raise ValueError("manifest has frames without a split; run split first")
        return [e for e in self.entries if e.split is Split(which)]

    def frames(self, which: Split, operator: Operator, size: int) -> FrameSet:
        return load_frames(self.root, self.split(which), operator, size)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best_epoch(self) -> int:
        """Epoch with the highest validation Dice; ties go to the earlier epoch."""
        best = max(self.records, key=lambda r: (r.val_dice, -r.epoch))
        return best.epoch

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "val_dice"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_dice)])

    @classmethod
    def read_csv(cls, path) -> "TrainingHistory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([
            EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]), float(r["val_dice"]))
            for r in rows
        ])


@dataclass
class Checkpoint:
    config: ModelConfig
    state: Dict[str, torch.Tensor]
    epoch: int = 0
    metadata: dict = field(default_factory=dict)

    def build(self) -> SegmentationModel:
        model = SegmentationModel(self.config)
        model.load_state_dict(self.state)
        return model.eval()


def _checkpoint_of(model: SegmentationModel, epoch: int, metadata: Optional[dict] = None) -> Checkpoint:
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    return Checkpoint(model.config, state, epoch, dict(metadata or {}))


def save_checkpoint(model, path, epoch: int = 0, metadata: Optional[dict] = None) -> None:
    """Write a model (or :class:`Checkpoint`) with its embedded configuration."""
    ckpt = model if isinstance(model, Checkpoint) else _checkpoint_of(model, epoch, metadata)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": ckpt.config.to_dict(),
        "state": ckpt.state,
        "epoch": int(ckpt.epoch),
        "metadata": json.dumps(ckpt.metadata, sort_keys=True),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    torch.save(payload, buf)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"could not read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an echobench checkpoint")
    try:
        config = ModelConfig.from_dict(payload["config"])
        ckpt = Checkpoint(config, payload["state"], payload["epoch"], json.loads(payload["metadata"]))
        ckpt.build()  # validates tensor names and shapes
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    return ckpt


def load_checkpoint(path) -> SegmentationModel:
    return read_checkpoint(path).build()


def _model_of(model_or_ckpt) -> SegmentationModel:
    if isinstance(model_or_ckpt, Checkpoint):
        return model_or_ckpt.build()
    if isinstance(model_or_ckpt, (str, Path)):
        return load_checkpoint(model_or_ckpt)
    return model_or_ckpt


@torch.no_grad()
def _evaluate(model: SegmentationModel, frames: FrameSet, batch_size: int) -> Tuple[float, float]:
    model.eval()
    dev = next(model.parameters()).device
    loss_sum, dices = 0.0, []
    for i in range(0, len(frames), batch_size):
        x = frames.images[i:i + batch_size].to(dev)
        y = frames.masks[i:i + batch_size].to(dev)
        logp = model(x)
        loss_sum += float(nll_loss(logp, y)) * len(x)
        pred = logprobs_to_masks(logp).cpu().numpy()
        truth = y.cpu().numpy()
        dices.extend(dice(p, t) for p, t in zip(pred, truth))
    return loss_sum / len(frames), float(np.mean(dices))


def train(
    config: ModelConfig,
    tconfig: TrainConfig,
    dataset: Dataset,
    operator: Operator = Operator.OA,
    run_dir=None,
) -> Tuple[Checkpoint, TrainingHistory]:
    """Fit a model with Adam on the NLL loss and keep the best validation epoch.

    Only TRAIN and VAL frames are loaded. After every epoch the validation
    Dice of the argmax masks is measured; the returned checkpoint is the
    epoch with the highest value (earliest on ties). If ``run_dir`` is
    given, ``config.txt``, ``history.csv``, ``best.ckpt`` and ``last.ckpt``
    are written there.
    """
    operator = Operator(operator)
    size = config.input_size
    train_set = dataset.frames(Split.TRAIN, operator, size)
    val_set = dataset.frames(Split.VAL, operator, size)
    if not len(train_set) or not len(val_set):
        raise ValueError("training needs nonempty TRAIN and VAL groups")
    return fit(config, tconfig, train_set, val_set, operator=operator, run_dir=run_dir)


def fit(
    config: ModelConfig,
    tconfig: TrainConfig,
    train_set: FrameSet,
    val_set: FrameSet,
    operator: Operator = Operator.OA,
    run_dir=None,
) -> Tuple[Checkpoint, TrainingHistory]:
    """In-memory core of :func:`train`."""
    dev = device()
    model = build_model(config, seed=tconfig.seed).to(dev)
    optimizer = torch.optim.Adam(model.parameters(), lr=tconfig.learning_rate, betas=tconfig.betas, eps=tconfig.eps)
    rng = np.random.default_rng(tconfig.seed)
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_config(run_dir / "config.txt", config, tconfig, operator, len(train_set), len(val_set))

    history = TrainingHistory()
    best: Optional[Checkpoint] = None
    best_dice = -1.0
    meta = {"operator": operator.value, "train_config": tconfig.to_dict()}
    for epoch in range(1, tconfig.epochs + 1):
        start = time.perf_counter()
        model.train()
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        for i in range(0, len(order), tconfig.batch_size):
            idx = torch.from_numpy(order[i:i + tconfig.batch_size])
            x = train_set.images[idx].to(dev)
            y = train_set.masks[idx].to(dev)
            optimizer.zero_grad(set_to_none=True)
            loss = nll_loss(model(x), y)
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.detach()) * len(idx)
        val_loss, val_dice = _evaluate(model, val_set, tconfig.batch_size)
        record = EpochRecord(epoch, loss_sum / len(order), val_loss, val_dice)
        history.records.append(record)
        if val_dice > best_dice:
            best_dice = val_dice
            best = _checkpoint_of(model, epoch, meta)
        log.info(
            "epoch %d/%d train_loss=%.4f val_loss=%.4f val_dice=%.4f (%.1fs)",
            epoch, tconfig.epochs, record.train_loss, val_loss, val_dice, time.perf_counter() - start,
        )
        if run_dir is not None:
            history.write_csv(run_dir / "history.csv")
    if run_dir is not None:
        save_checkpoint(best, run_dir / "best.ckpt")
        save_checkpoint(model, run_dir / "last.ckpt", epoch=tconfig.epochs, metadata=meta)
    return best, history


def _write_config(path: Path, config: ModelConfig, tconfig: TrainConfig, operator: Operator, n_train: int, n_val: int):
    lines = [f"model.{k} = {v}" for k, v in config.to_dict().items()]
    lines += [f"train.{k} = {v}" for k, v in tconfig.to_dict().items()]
    lines += [
        f"operator = {operator.value}",
        f"train_frames = {n_train}",
        f"val_frames = {n_val}",
        "checkpoint_selection = best validation Dice (earliest epoch on ties)",
        f"device = {device()}",
    ]
    path.write_text("\n".join(lines) + "\n")


@torch.no_grad()
def predict(model_or_ckpt, image) -> SegMask:
    """Argmax segmentation of one frame; ties go to background."""
    model = _model_of(model_or_ckpt).eval()
    pixels = image.pixels if isinstance(image, ImageFrame) else np.asarray(image, dtype=np.float32)
    size = model.config.input_size
    if pixels.shape != (size, size):
        raise ValueError(f"image shape {pixels.shape} does not match model input size {(size, size)}")
    param = next(model.parameters())
    x = torch.from_numpy(np.array(pixels, dtype=np.float32))[None, None].to(param.device, param.dtype)
    return SegMask(logprobs_to_masks(model(x))[0].cpu().numpy())


@torch.no_grad()
def predict_frames(model_or_ckpt, frames: FrameSet, batch_size: int = 8) -> Dict[str, SegMask]:
    model = _model_of(model_or_ckpt).eval()
    param = next(model.parameters())
    out: Dict[str, SegMask] = {}
    for i in range(0, len(frames), batch_size):
        x = frames.images[i:i + batch_size].to(param.device, param.dtype)
        masks = logprobs_to_masks(model(x)).cpu().numpy()
        for fid, m in zip(frames.frame_ids[i:i + batch_size], masks):
            out[fid] = SegMask(m)
    return out
