"""The five-row module ablation: baseline, +mask, +fine fusion,
+coarse fusion, +importance analysis. Each row trains and evaluates a
fresh model under the same seed and data."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .config import RunConfig, Toggles
from .evaluate import EvalTranscript, evaluate_model
from .train import train

ABLATION_ROWS: dict[int, Toggles] = {
    1: Toggles(use_mask=False, use_ocf_fine=False, use_ocf_coarse=False, use_oica=False),
    2: Toggles(use_mask=True, use_ocf_fine=False, use_ocf_coarse=False, use_oica=False),
    3: Toggles(use_mask=True, use_ocf_fine=True, use_ocf_coarse=False, use_oica=False),
    4: Toggles(use_mask=True, use_ocf_fine=True, use_ocf_coarse=True, use_oica=False),
    5: Toggles(use_mask=True, use_ocf_fine=True, use_ocf_coarse=True, use_oica=True),
}


def row_config(base: RunConfig, row: int) -> RunConfig:
    if row not in ABLATION_ROWS:
        raise ValueError(f"unknown ablation row {row}; expected 1..5")
    out_dir = str(Path(base.out_dir) / f"row{row}")
    return replace(base, toggles=replace(ABLATION_ROWS[row]), out_dir=out_dir)


def ablate(base: RunConfig, split: str = "val") -> dict[int, EvalTranscript]:
    """Run all five rows end-to-end and return their transcripts."""
    base.validate()
    transcripts: dict[int, EvalTranscript] = {}
    for row in sorted(ABLATION_ROWS):
        config = row_config(base, row)
        result = train(config)
        transcripts[row] = evaluate_model(result.model, result.vocab, config, split)
    return transcripts
