"""Image and organ-mask feature extraction.

Two small convolutional backbones produce feature grids of shape (P, d)
per sample: the raw-image encoder is tapped twice (a middle stage and the
final stage), and the mask encoder runs each organ's channel stack through
an organ-specific 1x1 input adapter followed by a shared trunk. Organ
image features are the elementwise product of the organ's mask features
with the raw mid-stage features.

Feature grids are plain tensors shaped (batch, P, d); P must be a square
number (the spatial map is average-pooled to a sqrt(P) x sqrt(P) grid).
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .organs import MASK_CHANNELS, Organ, ORGAN_ORDER


def _grid_side(positions: int) -> int:
    side = int(math.isqrt(positions))
    if side * side != positions:
        raise ValueError(f"positions must be square, got {positions}")
    return side


class _ConvStack(nn.Module):
    """Stride-2 conv blocks with GELU; smooth activations keep the
    finite-difference gradient checks clean."""

    def __init__(self, in_channels: int, widths: tuple[int, ...]):
        super().__init__()
        blocks = []
        prev = in_channels
        for w in widths:
            blocks.append(nn.Sequential(nn.Conv2d(prev, w, 3, stride=2, padding=1), nn.GELU()))
            prev = w
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: torch.Tensor, tap: int | None = None):
        mid = None
        for i, block in enumerate(self.blocks):
            x = block(x)
            if tap is not None and i == tap:
                mid = x
        return x, mid


def _to_grid(feature_map: torch.Tensor, positions: int) -> torch.Tensor:
    side = _grid_side(positions)
    pooled = nn.functional.adaptive_avg_pool2d(feature_map, side)
    return pooled.flatten(2).transpose(1, 2)  # (B, P, C)


class RawImageEncoder(nn.Module):
    """Backbone over the raw radiology image; returns (mid, final) grids,
    each projected to (P, dim)."""

    def __init__(self, image_size: int, in_channels: int, positions: int, dim: int,
                 widths: tuple[int, ...] = (8, 16, 32)):
        super().__init__()
        if len(widths) < 2:
            raise ValueError("need at least two stages for a mid tap")
        self.image_size = image_size
        self.in_channels = in_channels
        self.positions = positions
        _grid_side(positions)
        self.stack = _ConvStack(in_channels, widths)
        self.mid_tap = len(widths) // 2 - 1 if len(widths) % 2 == 0 else len(widths) // 2
        self.mid_proj = nn.Linear(widths[self.mid_tap], dim)
        self.final_proj = nn.Linear(widths[-1], dim)

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        expected = (self.in_channels, self.image_size, self.image_size)
        if tuple(image.shape[1:]) != expected:
            raise ValueError(f"expected image of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                             f"got {tuple(image.shape)}")
        final_map, mid_map = self.stack(image, tap=self.mid_tap)
        mid = self.mid_proj(_to_grid(mid_map, self.positions))
        final = self.final_proj(_to_grid(final_map, self.positions))
        return mid, final


class MaskFeatureEncoder(nn.Module):
    """Per-organ mask-stack encoder: a 1x1 adapter per organ (its channel
    count is fixed by the segmentation protocol) feeding a shared trunk."""

    def __init__(self, image_size: int, positions: int, dim: int,
                 adapter_width: int = 8, trunk_widths: tuple[int, ...] = (8, 16)):
        super().__init__()
        self.image_size = image_size
        self.positions = positions
        self.adapters = nn.ModuleDict({
            o.value: nn.Conv2d(MASK_CHANNELS[o], adapter_width, 1) for o in ORGAN_ORDER
        })
        self.trunk = _ConvStack(adapter_width, trunk_widths)
        self.proj = nn.Linear(trunk_widths[-1], dim)

    def forward(self, masks: dict[Organ, torch.Tensor]) -> dict[Organ, torch.Tensor]:
        out: dict[Organ, torch.Tensor] = {}
        for organ in ORGAN_ORDER:
            if organ not in masks:
                raise ValueError(f"missing mask stack for organ {organ.value}")
            stack = masks[organ]
            expected = (MASK_CHANNELS[organ], self.image_size, self.image_size)
            if tuple(stack.shape[1:]) != expected:
                raise ValueError(
                    f"organ {organ.value}: expected mask stack of shape (B, {expected[0]}, "
                    f"{expected[1]}, {expected[2]}), got {tuple(stack.shape)}")
            feature_map, _ = self.trunk(nn.functional.gelu(self.adapters[organ.value](stack)))
            out[organ] = self.proj(_to_grid(feature_map, self.positions))
        return out


def organ_image_features(mask_feats: dict[Organ, torch.Tensor],
                         raw_mid: torch.Tensor) -> dict[Organ, torch.Tensor]:
    """Gate the raw mid-stage grid by each organ's mask features
    (elementwise product)."""
    out: dict[Organ, torch.Tensor] = {}
    for organ in ORGAN_ORDER:
        feats = mask_feats[organ]
        if feats.shape != raw_mid.shape:
            raise ValueError(f"organ {organ.value}: mask features {tuple(feats.shape)} do not "
                             f"match raw features {tuple(raw_mid.shape)}")
        out[organ] = feats * raw_mid
    return out
