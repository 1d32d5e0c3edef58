"""Organ importance coefficient analysis.

Cross-modal grids are mean-pooled to six node vectors (five organs plus the
coarse "total" node), a small graph attention network propagates them over
the prior-knowledge adjacency, and a shared two-layer perceptron squashes
each organ node to a coefficient in (0, 1). The final input feature adds
the coarse grid, the coefficient-weighted fine grids, and the raw final
image grid.
"""

from __future__ import annotations

import torch
from torch import nn

from .fusion import CrossModalFeatures
from .organs import ORGAN_ORDER


def pool_nodes(cm: CrossModalFeatures) -> torch.Tensor:
    """Mean over positions of each grid; node order is the five organs in
    canonical order followed by the total node. Returns (B, 6, d)."""
    vectors = [cm.fine[o].mean(dim=1) for o in ORGAN_ORDER]
    vectors.append(cm.coarse.mean(dim=1))
    return torch.stack(vectors, dim=1)


class GraphAttentionLayer(nn.Module):
    """Multi-head graph attention over a fixed binary adjacency.

    Attention logits use the additive source/destination scoring with a
    LeakyReLU; non-neighbors are masked to -inf before the softmax, so they
    receive exactly zero weight.
    """

    def __init__(self, dim: int, heads: int, activation: bool = True):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.w = nn.Linear(dim, dim, bias=False)
        self.a_src = nn.Parameter(torch.empty(heads, self.head_dim))
        self.a_dst = nn.Parameter(torch.empty(heads, self.head_dim))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.activation = activation
        nn.init.normal_(self.a_src, std=0.3)
        nn.init.normal_(self.a_dst, std=0.3)

    def forward(self, nodes: torch.Tensor, adj: torch.Tensor,
                return_weights: bool = False):
        b, n, _ = nodes.shape
        h = self.w(nodes).view(b, n, self.heads, self.head_dim).transpose(1, 2)  # (B,H,N,hd)
        src = (h * self.a_src[None, :, None, :]).sum(-1)  # (B,H,N)
        dst = (h * self.a_dst[None, :, None, :]).sum(-1)
        logits = nn.functional.leaky_relu(src.unsqueeze(-1) + dst.unsqueeze(-2), 0.2)  # (B,H,N,N)
        mask = adj.to(dtype=torch.bool, device=nodes.device)
        logits = logits.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(logits, dim=-1)  # rows over neighborhoods
        out = (weights @ h).transpose(1, 2).reshape(b, n, -1) + self.bias
        if self.activation:
            out = nn.functional.elu(out)
        if return_weights:
            return out, weights
        return out


class ImportanceAnalyzer(nn.Module):
    """GAT stack plus the coefficient head: organ nodes map through a shared
    two-layer perceptron and a logistic squashing to (0, 1)."""

    def __init__(self, dim: int, heads: int = 8, layers: int = 2):
        super().__init__()
        self.layers = nn.ModuleList(
            [GraphAttentionLayer(dim, heads, activation=i < layers - 1) for i in range(layers)])
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, 1))

    def forward(self, nodes: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        h = nodes
        for layer in self.layers:
            h = layer(h, adj)
        organ_nodes = h[:, : len(ORGAN_ORDER)]  # total node excluded
        return torch.sigmoid(self.mlp(organ_nodes).squeeze(-1))  # (B, 5)


def importance_coefficients(analyzer: ImportanceAnalyzer, cm: CrossModalFeatures,
                            adj: torch.Tensor) -> torch.Tensor:
    return analyzer(pool_nodes(cm), adj)


def weighted_cross_feature(cm: CrossModalFeatures, alpha: torch.Tensor,
                           include_coarse: bool = True) -> torch.Tensor:
    """coarse + sum_o alpha_o * fine_o (elementwise); the coarse term can be
    dropped for the fine-only ablation."""
    if alpha.shape[-1] != len(ORGAN_ORDER):
        raise ValueError(f"expected {len(ORGAN_ORDER)} coefficients, got {alpha.shape[-1]}")
    out = cm.coarse.clone() if include_coarse else torch.zeros_like(cm.coarse)
    for idx, organ in enumerate(ORGAN_ORDER):
        grid = cm.fine[organ]
        if grid.shape != cm.coarse.shape:
            raise ValueError(f"organ {organ.value}: grid shape {tuple(grid.shape)} does not match")
        out = out + alpha[:, idx, None, None] * grid
    return out


def assemble_final(cm: CrossModalFeatures, alpha: torch.Tensor,
                   raw_final: torch.Tensor) -> torch.Tensor:
    """x = coarse + sum_o alpha_o * fine_o + raw_final, all elementwise."""
    cross = weighted_cross_feature(cm, alpha)
    if cross.shape != raw_final.shape:
        raise ValueError(f"cross-modal shape {tuple(cross.shape)} does not match raw "
                         f"feature shape {tuple(raw_final.shape)}")
    return cross + raw_final
