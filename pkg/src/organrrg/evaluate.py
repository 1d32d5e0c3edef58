"""Evaluation: beam-search generation over a split, the NLG/CE metric
table, and per-sample importance coefficients in a serializable transcript.

References are compared in tokenized space (normalized, vocabulary-filtered,
length-capped), i.e. against the exact sequences the model was trained to
produce.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .config import RunConfig
from .corpus import Vocabulary, build_vocabulary, detokenize, tokenize
from .metrics import ce_labels, ce_prf, corpus_nlg_scores
from .model import OrganReportModel
from .train import collate, load_checkpoint, load_dataset, load_graph

NLG_COLUMNS = ("BLEU@1", "BLEU@2", "BLEU@3", "BLEU@4", "METEOR", "ROUGE-L")


@dataclass
class TranscriptRow:
    id: str
    generated: str
    target: str
    alpha: list[float] | None = None


@dataclass
class EvalTranscript:
    split: str
    rows: list[TranscriptRow] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalTranscript":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        rows = [TranscriptRow(**r) for r in raw["rows"]]
        return cls(split=raw["split"], rows=rows, metrics=raw["metrics"])


def evaluate_model(model: OrganReportModel, vocab: Vocabulary, config: RunConfig,
                   split: str = "test", batch_size: int | None = None) -> EvalTranscript:
    splits = load_dataset(config)
    samples = splits.get(split) or []
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    graph = load_graph(config)

    model.eval()
    rows: list[TranscriptRow] = []
    candidates: list[list[str]] = []
    references: list[list[str]] = []
    bs = batch_size or config.batch_size
    max_len = config.model.max_report_len
    for start in range(0, len(samples), bs):
        chunk = samples[start : start + bs]
        batch = collate(chunk, vocab, config)
        sequences, alpha = model.generate(batch, config.beam_width, max_len)
        for i, sample in enumerate(chunk):
            generated = detokenize(sequences[i], vocab)
            target = detokenize(tokenize(sample.report, vocab, max_len), vocab)
            coeffs = None
            if config.toggles.use_oica and alpha is not None:
                coeffs = [float(a) for a in alpha[i]]
            rows.append(TranscriptRow(sample.id, generated, target, coeffs))
            candidates.append(generated.split())
            references.append(target.split())

    metrics = corpus_nlg_scores(candidates, references)
    pred_labels = [ce_labels(r.generated, graph) for r in rows]
    ref_labels = [ce_labels(r.target, graph) for r in rows]
    precision, recall, f1 = ce_prf(pred_labels, ref_labels)
    metrics.update({"CE-Precision": precision, "CE-Recall": recall, "CE-F1": f1})
    return EvalTranscript(split=split, rows=rows, metrics=metrics)


def evaluate(checkpoint_path: str | Path, split: str = "test") -> EvalTranscript:
    """Load a checkpoint and evaluate it on its configured dataset.

    The vocabulary rebuilt from the dataset's training split must match the
    checkpoint's; a mismatch means the checkpoint is being pointed at a
    different dataset.
    """
    model, vocab, config = load_checkpoint(checkpoint_path)
    splits = load_dataset(config)
    rebuilt = build_vocabulary([s.report for s in splits["train"]], config.vocab_min_count)
    if rebuilt.token_to_id != vocab.token_to_id:
        raise ValueError("vocabulary mismatch between checkpoint and dataset")
    return evaluate_model(model, vocab, config, split)
