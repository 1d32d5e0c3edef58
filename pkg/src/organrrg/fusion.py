"""Organ-based cross-modal fusion.

Fine-grained path: each organ's gated image grid queries that organ's
description embedding through multi-head cross-attention. Coarse path:
the summed organ image grids query the concatenation of all five
descriptions (with positional and organ embeddings added).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .corpus import PAD_ID
from .organs import DESC_LENGTHS, Organ, ORGAN_ORDER, TOTAL_DESC_LENGTH


class DescriptionEmbedder(nn.Module):
    """Token embedding for organ diagnosis descriptions, padded or truncated
    to each organ's fixed token length."""

    def __init__(self, vocab_size: int, dim: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.embedding = nn.Embedding(vocab_size, dim)

    def forward(self, tokens: dict[Organ, torch.Tensor]) -> dict[Organ, torch.Tensor]:
        out: dict[Organ, torch.Tensor] = {}
        for organ in ORGAN_ORDER:
            ids = tokens[organ]
            if int(ids.max()) >= self.vocab_size or int(ids.min()) < 0:
                raise ValueError(f"organ {organ.value}: token id out of range for vocab "
                                 f"of size {self.vocab_size}")
            length = DESC_LENGTHS[organ]
            if ids.shape[1] > length:
                ids = ids[:, :length]
            elif ids.shape[1] < length:
                pad = ids.new_full((ids.shape[0], length - ids.shape[1]), PAD_ID)
                ids = torch.cat([ids, pad], dim=1)
            out[organ] = self.embedding(ids)
        return out


class MultiHeadCrossAttention(nn.Module):
    """Scaled dot-product cross-attention with explicit Q/K/V/output
    projections; attention rows are softmax-normalized over the keys."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.w_q = nn.Linear(dim, dim)
        self.w_k = nn.Linear(dim, dim)
        self.w_v = nn.Linear(dim, dim)
        self.w_out = nn.Linear(dim, dim)

    def forward(self, query: torch.Tensor, keyvalue: torch.Tensor,
                return_weights: bool = False):
        b, p, _ = query.shape
        l = keyvalue.shape[1]
        q = self.w_q(query).view(b, p, self.heads, self.head_dim).transpose(1, 2)
        k = self.w_k(keyvalue).view(b, l, self.heads, self.head_dim).transpose(1, 2)
        v = self.w_v(keyvalue).view(b, l, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)  # (B, H, P, L)
        attended = (weights @ v).transpose(1, 2).reshape(b, p, self.dim)
        out = self.w_out(attended)
        if return_weights:
            return out, weights
        return out


def coarse_image_feature(organ_feats: dict[Organ, torch.Tensor]) -> torch.Tensor:
    """Positionwise sum of the five organ image grids."""
    grids = [organ_feats[o] for o in ORGAN_ORDER]
    shape = grids[0].shape
    for organ, g in zip(ORGAN_ORDER, grids):
        if g.shape != shape:
            raise ValueError(f"organ {organ.value}: grid shape {tuple(g.shape)} != {tuple(shape)}")
    return torch.stack(grids, dim=0).sum(dim=0)


class CoarseDescriptionAssembler(nn.Module):
    """Concatenate the five description embeddings in canonical order and add
    learned positional embeddings plus per-organ embeddings broadcast over
    each organ's span."""

    def __init__(self, dim: int):
        super().__init__()
        self.pos_embed = nn.Parameter(torch.zeros(TOTAL_DESC_LENGTH, dim))
        self.organ_embed = nn.Parameter(torch.zeros(len(ORGAN_ORDER), dim))
        nn.init.normal_(self.pos_embed, std=0.02)
        nn.init.normal_(self.organ_embed, std=0.02)

    def forward(self, desc_feats: dict[Organ, torch.Tensor]) -> torch.Tensor:
        parts = []
        for idx, organ in enumerate(ORGAN_ORDER):
            feats = desc_feats[organ]
            if feats.shape[1] != DESC_LENGTHS[organ]:
                raise ValueError(f"organ {organ.value}: expected {DESC_LENGTHS[organ]} rows, "
                                 f"got {feats.shape[1]}")
            parts.append(feats + self.organ_embed[idx])
        stacked = torch.cat(parts, dim=1)
        return stacked + self.pos_embed


@dataclass
class CrossModalFeatures:
    """Per-organ fine-grained grids plus the single coarse grid, all (B, P, d)."""

    fine: dict[Organ, torch.Tensor]
    coarse: torch.Tensor


class OrganFusion(nn.Module):
    """The full fusion module: one cross-attention shared across organs for
    the fine path (organ identity is carried by the inputs) and a separate
    one for the coarse path."""

    def __init__(self, dim: int, heads: int, share_fine_weights: bool = True):
        super().__init__()
        self.share_fine_weights = share_fine_weights
        if share_fine_weights:
            self.fine_mha = MultiHeadCrossAttention(dim, heads)
        else:
            self.fine_mha = nn.ModuleDict(
                {o.value: MultiHeadCrossAttention(dim, heads) for o in ORGAN_ORDER})
        self.coarse_mha = MultiHeadCrossAttention(dim, heads)
        self.coarse_desc = CoarseDescriptionAssembler(dim)

    def _fine(self, organ: Organ) -> MultiHeadCrossAttention:
        if self.share_fine_weights:
            return self.fine_mha
        return self.fine_mha[organ.value]

    def forward(self, organ_feats: dict[Organ, torch.Tensor],
                desc_feats: dict[Organ, torch.Tensor]) -> CrossModalFeatures:
        fine = {o: self._fine(o)(organ_feats[o], desc_feats[o]) for o in ORGAN_ORDER}
        image_total = coarse_image_feature(organ_feats)
        desc_total = self.coarse_desc(desc_feats)
        coarse = self.coarse_mha(image_total, desc_total)
        return CrossModalFeatures(fine=fine, coarse=coarse)
