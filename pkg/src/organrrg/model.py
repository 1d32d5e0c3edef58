"""End-to-end network: vision extractors, cross-modal fusion, organ
importance weighting, and the report generator, with ablation toggles.

Toggle semantics (each disabled module is an exact identity bypass, so its
parameters cannot influence the output):

* ``use_mask`` off: every organ image feature is the raw mid-stage grid.
* ``use_ocf_fine`` off: no cross-modal fusion; the generator input is the
  raw final grid, plus the summed organ grids when masks are on.
* ``use_ocf_coarse`` off: the coarse grid is dropped from the assembly.
* ``use_oica`` off: all importance coefficients are fixed at 1.

``force_alpha`` is a test hook: when set to a tensor of five values, it
replaces the computed coefficients exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ModelConfig, Toggles
from .fusion import CrossModalFeatures, DescriptionEmbedder, OrganFusion, coarse_image_feature
from .generator import EncodedImage, ReportGenerator, consistency_loss, cross_entropy_loss
from .importance import ImportanceAnalyzer, pool_nodes, weighted_cross_feature
from .organs import Organ, ORGAN_ORDER
from .vision import MaskFeatureEncoder, RawImageEncoder, organ_image_features


@dataclass
class ForwardState:
    """Intermediates exposed for tests and transcripts."""

    organ_feats: dict[Organ, torch.Tensor]
    cross_modal: CrossModalFeatures | None
    alpha: torch.Tensor | None
    cross_fused: torch.Tensor | None   # x^C_F: assembled cross-modal feature
    fused: torch.Tensor                # generator input (cross_fused + raw final)
    encoded: EncodedImage


class OrganReportModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int, adjacency: torch.Tensor,
                 toggles: Toggles | None = None):
        super().__init__()
        self.cfg = cfg
        self.toggles = toggles or Toggles()
        self.toggles.validate()
        self.raw_encoder = RawImageEncoder(cfg.image_size, cfg.image_channels,
                                           cfg.positions, cfg.dim, cfg.raw_widths)
        self.mask_encoder = MaskFeatureEncoder(cfg.image_size, cfg.positions, cfg.dim,
                                               cfg.mask_adapter_width, cfg.mask_trunk_widths)
        self.desc_embedder = DescriptionEmbedder(vocab_size, cfg.dim)
        self.fusion = OrganFusion(cfg.dim, cfg.heads, cfg.share_fine_mha)
        self.importance = ImportanceAnalyzer(cfg.dim, cfg.heads, cfg.gat_layers)
        self.generator = ReportGenerator(vocab_size, cfg.dim, cfg.heads,
                                         cfg.enc_layers, cfg.dec_layers,
                                         max_len=max(cfg.max_report_len, 64))
        self.register_buffer("adjacency", adjacency.clone().detach(), persistent=True)
        self.force_alpha: torch.Tensor | None = None

    def image_extractor_parameters(self):
        """The raw-image backbone group (trained at its own learning rate)."""
        return self.raw_encoder.parameters()

    def other_parameters(self):
        raw_ids = {id(p) for p in self.raw_encoder.parameters()}
        return (p for p in self.parameters() if id(p) not in raw_ids)

    def forward_features(self, image: torch.Tensor,
                         masks: dict[Organ, torch.Tensor],
                         desc_tokens: dict[Organ, torch.Tensor]) -> ForwardState:
        raw_mid, raw_final = self.raw_encoder(image)

        if self.toggles.use_mask:
            mask_feats = self.mask_encoder(masks)
            organ_feats = organ_image_features(mask_feats, raw_mid)
        else:
            organ_feats = {o: raw_mid for o in ORGAN_ORDER}

        cross_modal = None
        alpha = None
        cross_fused = None
        if self.toggles.use_ocf_fine:
            desc_feats = self.desc_embedder(desc_tokens)
            cross_modal = self.fusion(organ_feats, desc_feats)
            if self.toggles.use_oica:
                alpha = self.importance(pool_nodes(cross_modal), self.adjacency)
            else:
                alpha = torch.ones(image.shape[0], len(ORGAN_ORDER),
                                   dtype=raw_final.dtype, device=raw_final.device)
            if self.force_alpha is not None:
                alpha = self.force_alpha.to(raw_final.dtype).expand_as(alpha)
            cross_fused = weighted_cross_feature(cross_modal, alpha,
                                                 include_coarse=self.toggles.use_ocf_coarse)
            fused = cross_fused + raw_final
        elif self.toggles.use_mask:
            fused = coarse_image_feature(organ_feats) + raw_final
        else:
            fused = raw_final

        encoded = self.generator.encode(fused)
        return ForwardState(organ_feats, cross_modal, alpha, cross_fused, fused, encoded)

    def training_losses(self, batch: dict, beta: float = 0.1) -> dict[str, torch.Tensor]:
        state = self.forward_features(batch["image"], batch["masks"], batch["descriptions"])
        target = batch["report"]
        logits = self.generator.decode_teacher_forced(state.encoded, target)
        ce = cross_entropy_loss(logits, target)
        if beta == 0:
            return {"loss": ce, "ce": ce}
        target_emb = self.generator.embed_target(target)
        cs = consistency_loss(state.encoded.pooled, target_emb)
        return {"loss": ce + beta * cs, "ce": ce, "cs": cs}

    @torch.no_grad()
    def generate(self, batch: dict, width: int, max_len: int) -> tuple[list[list[int]], torch.Tensor | None]:
        """Beam-search decode each sample; returns token sequences and the
        per-sample importance coefficients (None when fusion is off)."""
        state = self.forward_features(batch["image"], batch["masks"], batch["descriptions"])
        sequences = []
        for i in range(batch["image"].shape[0]):
            enc = EncodedImage(state.encoded.memory[i : i + 1], state.encoded.pooled[i : i + 1])
            sequences.append(self.generator.generate(enc, width, max_len))
        return sequences, state.alpha
