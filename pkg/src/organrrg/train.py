"""Training loop: seeded end-to-end optimization with two learning-rate
groups (image extractor vs everything else), teacher forcing, gradient
clipping, per-epoch validation loss, and best-validation checkpointing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .corpus import DatasetManifest, Vocabulary, build_vocabulary, tokenize
from .ds_graph import build_adjacency, default_ds_graph, load_ds_graph
from .model import OrganReportModel
from .organs import DESC_LENGTHS, ORGAN_ORDER
from .synth import Sample, load_sample, synth_dataset

CHECKPOINT_VERSION = 1


def set_determinism(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def load_dataset(config: RunConfig) -> dict[str, list[Sample]]:
    """Samples per split, from the inline synthetic generator or a manifest
    directory."""
    if config.synth_n > 0:
        _, samples = synth_dataset(config.synth_seed, config.synth_n,
                                   image_size=config.model.image_size,
                                   split_ratios=config.synth_split_ratios)
    else:
        data_dir = Path(config.data_dir)
        manifest = DatasetManifest.load(data_dir / "manifest.jsonl")
        samples = [load_sample(data_dir, rec) for rec in manifest.records]
    out: dict[str, list[Sample]] = {"train": [], "val": [], "test": []}
    for sample in samples:
        out.setdefault(sample.split, []).append(sample)
    return out


def load_graph(config: RunConfig):
    if config.ds_graph_path:
        return load_ds_graph(config.ds_graph_path)
    return default_ds_graph()


def collate(samples: list[Sample], vocab: Vocabulary, config: RunConfig,
            dtype=torch.float32) -> dict:
    """Tensorize a batch: image (B,C,H,W), per-organ masks, per-organ
    description tokens at their fixed lengths, and report tokens."""
    stacked = np.stack([s.image for s in samples])
    if stacked.ndim == 4:          # (B, H, W, C) -> (B, C, H, W)
        images = stacked.transpose(0, 3, 1, 2)
    else:
        images = stacked[:, None, :, :]
    if images.shape[1] == 1 and config.model.image_channels > 1:
        images = np.repeat(images, config.model.image_channels, axis=1)
    masks = {
        o: torch.from_numpy(np.stack([s.masks[o] for s in samples])).to(dtype)
        for o in ORGAN_ORDER
    }
    descriptions = {
        o: torch.tensor([tokenize(s.descriptions[o], vocab, DESC_LENGTHS[o]) for s in samples],
                        dtype=torch.long)
        for o in ORGAN_ORDER
    }
    reports = torch.tensor(
        [tokenize(s.report, vocab, config.model.max_report_len) for s in samples],
        dtype=torch.long)
    return {
        "ids": [s.id for s in samples],
        "image": torch.from_numpy(images).to(dtype),
        "masks": masks,
        "descriptions": descriptions,
        "report": reports,
    }


def augment_batch(batch: dict, config: RunConfig, rng: torch.Generator) -> dict:
    """Train-time random crop (reflection-padded) and horizontal flip,
    applied identically to the image and every mask stack."""
    pad = config.augment.crop_pad
    image = batch["image"]
    masks = batch["masks"]
    if pad > 0:
        dy = int(torch.randint(0, 2 * pad + 1, (1,), generator=rng))
        dx = int(torch.randint(0, 2 * pad + 1, (1,), generator=rng))
        h, w = image.shape[-2:]

        def crop(x):
            padded = torch.nn.functional.pad(x, (pad, pad, pad, pad), mode="reflect")
            return padded[..., dy : dy + h, dx : dx + w]

        image = crop(image)
        masks = {o: crop(m) for o, m in masks.items()}
    if float(torch.rand(1, generator=rng)) < config.augment.flip_prob:
        image = torch.flip(image, dims=[-1])
        masks = {o: torch.flip(m, dims=[-1]) for o, m in masks.items()}
    out = dict(batch)
    out["image"] = image
    out["masks"] = masks
    return out


def build_model(config: RunConfig, vocab: Vocabulary) -> OrganReportModel:
    graph = load_graph(config)
    adjacency = torch.from_numpy(build_adjacency(graph)).float()
    return OrganReportModel(config.model, len(vocab), adjacency, config.toggles)


def build_optimizer(model: OrganReportModel, config: RunConfig) -> torch.optim.Adam:
    return torch.optim.Adam([
        {"params": list(model.image_extractor_parameters()), "lr": config.lr_image_extractor},
        {"params": list(model.other_parameters()), "lr": config.lr_other},
    ])


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    train_ce: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")


@dataclass
class TrainResult:
    checkpoint_path: Path
    log: TrainLog
    vocab: Vocabulary
    model: OrganReportModel


def _batches(samples: list[Sample], batch_size: int, order: list[int]):
    for start in range(0, len(order), batch_size):
        yield [samples[i] for i in order[start : start + batch_size]]


def train(config: RunConfig) -> TrainResult:
    config.validate()
    set_determinism(config.seed)

    splits = load_dataset(config)
    train_samples = splits["train"]
    if not train_samples:
        raise ValueError("training split is empty")
    val_samples = splits["val"] or train_samples

    vocab = build_vocabulary([s.report for s in train_samples], config.vocab_min_count)
    model = build_model(config, vocab)
    optimizer = build_optimizer(model, config)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "best.ckpt"

    deterministic = config.is_deterministic()
    aug_rng = torch.Generator().manual_seed(config.seed + 1)
    shuffle_rng = np.random.default_rng(config.seed + 2)
    val_batch = collate(val_samples, vocab, config)

    log = TrainLog()
    for epoch in range(config.epochs):
        model.train()
        order = list(shuffle_rng.permutation(len(train_samples)))
        epoch_loss, epoch_ce, n_batches = 0.0, 0.0, 0
        for samples in _batches(train_samples, config.batch_size, order):
            batch = collate(samples, vocab, config)
            if not deterministic:
                batch = augment_batch(batch, config, aug_rng)
            losses = model.training_losses(batch, config.beta)
            loss = losses["loss"]
            if not torch.isfinite(loss):
                _abort_non_finite(out_dir, epoch, losses)
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            epoch_loss += float(loss.detach())
            epoch_ce += float(losses["ce"].detach())
            n_batches += 1
        log.train_loss.append(epoch_loss / n_batches)
        log.train_ce.append(epoch_ce / n_batches)

        model.eval()
        with torch.no_grad():
            val_loss = float(model.training_losses(val_batch, config.beta)["loss"])
        log.val_loss.append(val_loss)
        if val_loss < log.best_val_loss:
            log.best_val_loss = val_loss
            log.best_epoch = epoch
            save_checkpoint(ckpt_path, model, vocab, config)
        if config.early_stop_train_ce > 0 and log.train_ce[-1] < config.early_stop_train_ce:
            break

    if log.best_epoch < 0:
        save_checkpoint(ckpt_path, model, vocab, config)
    return TrainResult(ckpt_path, log, vocab, model)


def _abort_non_finite(out_dir: Path, epoch: int, losses: dict) -> None:
    snapshot = out_dir / "diagnostic_snapshot.txt"
    details = {k: float(v) for k, v in losses.items()}
    snapshot.write_text(f"non-finite loss at epoch {epoch}: {details}\n", encoding="utf-8")
    raise RuntimeError(f"non-finite loss at epoch {epoch} (snapshot: {snapshot})")


def save_checkpoint(path: str | Path, model: OrganReportModel, vocab: Vocabulary,
                    config: RunConfig) -> None:
    tokens = [vocab.id_to_token[i] for i in range(len(vocab))]
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "vocab": tokens,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path: str | Path) -> tuple[OrganReportModel, Vocabulary, RunConfig]:
    payload = torch.load(path, weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('format_version')}")
    config = RunConfig.from_dict(payload["config"])
    vocab = Vocabulary.from_tokens(payload["vocab"][4:])
    model = build_model(config, vocab)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, vocab, config
