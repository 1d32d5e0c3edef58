"""Shared fixtures: toy-dimension model stacks, a finite-difference
gradient oracle, and the (expensive, session-scoped) overfit run."""

from __future__ import annotations

import numpy as np
import pytest
import torch

# Filled by the acceptance module; echoed at the end of the run so the
# per-criterion lines survive pytest's output capture.
ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number, label, status in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(f"criterion {number} ({label}): {status}")

from organrrg.config import ModelConfig, RunConfig, Toggles
from organrrg.corpus import build_vocabulary, words as normalized_words
from organrrg.ds_graph import build_adjacency, default_ds_graph
from organrrg.model import OrganReportModel
from organrrg.synth import synth_dataset
from organrrg.train import collate


def toy_model_config() -> ModelConfig:
    return ModelConfig(
        image_size=8,
        image_channels=1,
        positions=4,
        dim=8,
        heads=8,
        enc_layers=1,
        dec_layers=1,
        gat_layers=2,
        raw_widths=(4, 8),
        mask_adapter_width=4,
        mask_trunk_widths=(4, 8),
        max_report_len=10,
    )


def toy_run_config(**updates) -> RunConfig:
    cfg = RunConfig(synth_n=2, synth_seed=5, model=toy_model_config(),
                    deterministic=True, out_dir="/tmp/organrrg-toy")
    for key, value in updates.items():
        setattr(cfg, key, value)
    return cfg


TOY_VOCAB_SIZE = 11


def build_toy_stack(seed: int = 0, toggles: Toggles | None = None,
                    double: bool = True):
    """A full toy model plus a collated 2-sample double-precision batch."""
    torch.manual_seed(seed)
    cfg = toy_run_config()
    _, samples = synth_dataset(cfg.synth_seed, 2, image_size=cfg.model.image_size,
                               split_ratios=(1.0, 0.0, 0.0))
    distinct = sorted({w for s in samples for w in normalized_words(s.report)})
    vocab = build_vocabulary([" ".join(distinct[: TOY_VOCAB_SIZE - 4])] * 3, min_count=3)
    assert len(vocab) == TOY_VOCAB_SIZE
    adjacency = torch.from_numpy(build_adjacency(default_ds_graph())).float()
    model = OrganReportModel(cfg.model, len(vocab), adjacency, toggles)
    dtype = torch.float64 if double else torch.float32
    if double:
        model.double()
    batch = collate(samples, vocab, cfg, dtype=dtype)
    return model, batch, vocab, cfg


def finite_difference_grads(loss_fn, params: list[torch.Tensor], h: float = 1e-5):
    """Central-difference gradient of ``loss_fn()`` for each parameter
    tensor, entry by entry. Parameters must be double precision."""
    grads = []
    with torch.no_grad():
        for p in params:
            grad = torch.zeros_like(p)
            flat = p.data.view(-1)
            gflat = grad.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * h)
            grads.append(grad)
    return grads


def max_relative_error(analytic: list[torch.Tensor], numeric: list[torch.Tensor],
                       atol: float = 1e-7) -> float:
    """Worst-case |a - f| / max(|a|, |f|) over all entries, with an absolute
    floor so near-zero gradients do not blow up the ratio."""
    worst = 0.0
    for a, f in zip(analytic, numeric):
        diff = (a - f).abs()
        scale = torch.maximum(a.abs(), f.abs()).clamp(min=atol / 1e-4)
        worst = max(worst, float((diff / scale).max()))
    return worst


@pytest.fixture(scope="session")
def overfit_run():
    """Train to memorization on 16 synthetic samples at the desk preset;
    shared by the harness tests and the acceptance suite."""
    from organrrg.train import train

    config = RunConfig(
        synth_n=16,
        synth_seed=3,
        synth_split_ratios=(1.0, 0.0, 0.0),
        epochs=500,
        batch_size=4,
        seed=1,
        deterministic=True,
        early_stop_train_ce=0.005,
        out_dir="/tmp/organrrg-overfit",
    )
    import time

    start = time.monotonic()
    result = train(config)
    elapsed = time.monotonic() - start
    return config, result, elapsed


@pytest.fixture(scope="session")
def default_graph():
    return default_ds_graph()


def rng_tokens(rng: np.random.Generator, vocab_size: int, length: int) -> list[int]:
    body = rng.integers(4, vocab_size, size=length).tolist()
    return [1] + body + [2]
