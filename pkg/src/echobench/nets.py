"""Configurable U-Net style encoder-decoder networks.

One class covers the three benchmarked variants; they differ only in the
per-level widths, the upsampling layer and whether convolutions are batch
normalized.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

import torch
from torch import nn
import torch.nn.functional as F

from .core import ModelConfig, Normalization, Upsampling, Variant


class ConvBlock(nn.Module):
    """Two same-padded 3x3 convolutions, each followed by optional BatchNorm and ReLU."""

    def __init__(self, in_ch: int, mid_ch: int, out_ch: int, batchnorm: bool):
        super().__init__()
        layers: List[nn.Module] = []
        for cin, cout in ((in_ch, mid_ch), (mid_ch, out_ch)):
            layers.append(nn.Conv2d(cin, cout, kernel_size=3, padding=1))
            if batchnorm:
                layers.append(nn.BatchNorm2d(cout))
            layers.append(nn.ReLU(inplace=True))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class NearestRepeat(nn.Module):
    """2x2 nearest-neighbour repeat followed by a 3x3 convolution."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)

    def forward(self, x):
        return self.conv(x.repeat_interleave(2, dim=2).repeat_interleave(2, dim=3))


def _upsampler(kind: Upsampling, in_ch: int, out_ch: int) -> nn.Module:
    if kind is Upsampling.DECONVOLUTION:
        return nn.ConvTranspose2d(in_ch, out_ch, kernel_size=2, stride=2)
    return NearestRepeat(in_ch, out_ch)


class SegmentationModel(nn.Module):
    """Encoder-decoder with skip connections and a 2-class log-softmax head.

    Encoder level ``i`` produces ``encoder_widths[i]`` feature maps; all but
    the deepest level are followed by 2x2 max pooling. Decoder level ``i``
    upsamples to ``encoder_widths[i]`` maps, concatenates encoder level
    ``i`` and applies a :class:`ConvBlock`. The last convolution of decoder
    level 0 has ``decoder_end_width`` maps.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = config.encoder_widths
        bn = config.normalization is Normalization.BATCHNORM
        self.encoders = nn.ModuleList()
        cin = config.in_channels
        for w in widths:
            self.encoders.append(ConvBlock(cin, w, w, bn))
            cin = w
        self.pool = nn.MaxPool2d(2)
        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        # index j of these lists handles encoder level len(widths) - 2 - j
        for level in range(len(widths) - 2, -1, -1):
            w = widths[level]
            out = config.decoder_end_width if level == 0 else w
            self.upsamplers.append(_upsampler(config.upsampling, widths[level + 1], w))
            self.decoders.append(ConvBlock(2 * w, w, out, bn))
        self.head = nn.Conv2d(config.decoder_end_width, 2, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        divisor = self.config.divisor
        if x.dim() != 4:
            raise ValueError(f"expected a (batch, channels, H, W) tensor, got shape {tuple(x.shape)}")
        if x.shape[-1] % divisor or x.shape[-2] % divisor:
            raise ValueError(
                f"input size {tuple(x.shape[-2:])} must be divisible by {divisor} "
                f"for {self.config.levels} encoder levels"
            )
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            if i < len(self.encoders) - 1:
                skips.append(x)
                x = self.pool(x)
        for up, dec in zip(self.upsamplers, self.decoders):
            x = up(x)
            x = dec(torch.cat([skips.pop(), x], dim=1))
        return F.log_softmax(self.head(x), dim=1)


def init_parameters(model: SegmentationModel, seed: int = 0) -> None:
    """He (fan-in) initialization driven by ``seed``.

    The 1x1 head starts with small weights so the initial prediction is
    close to uniform over the two classes.
    """
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
                if module is model.head:
                    nn.init.normal_(module.weight, std=0.01, generator=gen)
                else:
                    nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu", generator=gen)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)


def build_model(config: ModelConfig, seed: int = 0, dtype: Optional[torch.dtype] = None) -> SegmentationModel:
    model = SegmentationModel(config)
    init_parameters(model, seed)
    if dtype is not None:
        model = model.to(dtype)
    return model


def forward(model: SegmentationModel, batch) -> torch.Tensor:
    """Per-pixel log-probabilities, shape ``(batch, 2, H, W)``.

    ``batch`` may be a tensor of shape (B, H, W) or (B, 1, H, W), or a
    sequence of :class:`~echobench.core.ImageFrame`.
    """
    x = as_batch(batch, dtype=next(model.parameters()).dtype)
    return model(x)


def as_batch(batch, dtype=torch.float32) -> torch.Tensor:
    if isinstance(batch, torch.Tensor):
        x = batch
    else:
        x = torch.from_numpy(np.stack([np.asarray(f.pixels, dtype=np.float32) for f in batch]))
    if x.dim() == 3:
        x = x.unsqueeze(1)
    return x.to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _convs(module: nn.Module) -> List[nn.Conv2d]:
    return [m for m in module.modules() if isinstance(m, nn.Conv2d)]


def structure(model: SegmentationModel) -> dict:
    """Describe the built layer graph, for conformance checks against the config."""
    ups = list(model.upsamplers)
    if all(isinstance(u, nn.ConvTranspose2d) for u in ups):
        upsampling = Upsampling.DECONVOLUTION
    elif all(isinstance(u, NearestRepeat) for u in ups):
        upsampling = Upsampling.NEAREST_REPEAT
    else:
        upsampling = None
    blocks = list(model.encoders) + list(model.decoders)
    block_convs = sum(len(_convs(b)) for b in blocks)
    norms = sum(1 for m in model.modules() if isinstance(m, nn.BatchNorm2d))
    # every block convolution must be followed by its own BatchNorm
    normalized = all(
        isinstance(layers[i + 1], nn.BatchNorm2d)
        for layers in (list(b.body) for b in blocks)
        for i, layer in enumerate(layers)
        if isinstance(layer, nn.Conv2d)
    )
    if norms == 0:
        normalization = Normalization.NONE
    elif normalized and norms == block_convs:
        normalization = Normalization.BATCHNORM
    else:
        normalization = None
    return {
        "encoder_widths": [_convs(enc)[-1].out_channels for enc in model.encoders],
        "decoder_end_width": _convs(model.decoders[-1])[-1].out_channels,
        "upsampling": upsampling,
        "normalization": normalization,
        "block_convolutions": block_convs,
        "batchnorm_layers": norms,
        "output_channels": model.head.out_channels,
    }
