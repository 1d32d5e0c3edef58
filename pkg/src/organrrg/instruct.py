"""Organ-level instruction QA dataset construction.

Converts an (id, report) corpus into per-organ question-answer pairs,
enforcing four dataset-quality rules:

1. positive-finding answers are favored over normal-only answers,
2. verbatim duplicate answers are capped,
3. images with more organ groups are processed first,
4. per-organ pair counts are balanced within a tolerance of the mean.

Answers are capped below 20 tokens, truncating at sentence boundaries.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .corpus import normalize_text, words
from .ds_graph import DSGraph, assign_sentence_to_organ
from .organs import Organ, ORGAN_ORDER

PROMPT_TEMPLATE = "What have you found in {organ}?"
IMAGE_MARKER = "\n<image>"
MAX_ANSWER_TOKENS = 19

# Sentence-final period: a period not followed by a digit (keeps "1.5" whole).
_SENTENCE_SPLIT = re.compile(r"\.(?!\d)")


def segment_report(report: str) -> list[str]:
    """Split a report into normalized sentences, dropping empties."""
    out = []
    for chunk in _SENTENCE_SPLIT.split(report):
        sentence = normalize_text(chunk)
        if sentence:
            out.append(sentence)
    return out


@dataclass(frozen=True)
class QAPair:
    image_id: str
    organ: Organ
    prompt: str    # the question proper; files carry prompt + IMAGE_MARKER
    answer: str

    def to_json(self) -> str:
        return json.dumps(
            {"image_id": self.image_id, "organ": self.organ.value,
             "prompt": self.prompt + IMAGE_MARKER, "answer": self.answer},
            sort_keys=True,
        )


@dataclass
class BuilderConfig:
    positive_boost: float = 2.0
    max_duplicate_answers: int = 3
    min_pairs_per_image: int = 0
    balance_tolerance: float = 0.1

    def __post_init__(self):
        if self.positive_boost < 1:
            raise ValueError("positive_boost must be >= 1")
        if self.max_duplicate_answers < 1:
            raise ValueError("max_duplicate_answers must be >= 1")
        if self.min_pairs_per_image < 0:
            raise ValueError("min_pairs_per_image must be >= 0")
        if not 0 < self.balance_tolerance <= 1:
            raise ValueError("balance_tolerance must be in (0, 1]")


@dataclass
class BuildStats:
    per_organ_counts: dict[str, int]
    n_pairs: int
    n_positive: int
    positive_ratio: float
    mean_answer_tokens: float
    trimmed: int
    config: dict = field(default_factory=dict)   # thresholds used for the build
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _truncate_answer(sentences: list[str]) -> str:
    """Join sentences while staying under 20 tokens, cutting at sentence
    boundaries; a single over-long sentence is hard-truncated."""
    kept: list[str] = []
    total = 0
    for sentence in sentences:
        n = len(sentence.split())
        if total + n > MAX_ANSWER_TOKENS:
            break
        kept.append(sentence)
        total += n
    if not kept:
        return " ".join(sentences[0].split()[:MAX_ANSWER_TOKENS])
    return ". ".join(kept)


def _is_positive(answer: str, g: DSGraph) -> bool:
    answer_words = words(answer)
    joined = " ".join(answer_words)
    return any(f" {kw} " in f" {joined} " for kw in g.all_keywords())


def build_qa_pairs(
    corpus: list[tuple[str, str]],
    g: DSGraph,
    cfg: BuilderConfig | None = None,
    seed: int = 0,
) -> tuple[list[QAPair], BuildStats]:
    """Build QA pairs from (image_id, report) records.

    Sampling decisions are drawn from per-image generators seeded by
    (seed, image index in sorted id order), so parallel and serial builds
    agree.
    """
    cfg = cfg or BuilderConfig()
    id_rank = {img_id: k for k, (img_id, _) in enumerate(sorted(corpus, key=lambda r: r[0]))}

    # Group sentences by organ per image.
    grouped: list[tuple[str, dict[Organ, list[str]]]] = []
    for img_id, report in corpus:
        groups: dict[Organ, list[str]] = {}
        for sentence in segment_report(report):
            for organ in assign_sentence_to_organ(sentence, g):
                groups.setdefault(organ, []).append(sentence)
        if len(groups) >= max(1, cfg.min_pairs_per_image):
            grouped.append((img_id, groups))

    # Rule 3: richer images first, ties broken by id.
    grouped.sort(key=lambda item: (-len(item[1]), item[0]))

    pairs: list[QAPair] = []
    warnings: list[str] = []
    answer_counts: dict[str, int] = {}
    for img_id, groups in grouped:
        rng = np.random.default_rng([seed, id_rank[img_id]])
        for organ in ORGAN_ORDER:
            if organ not in groups:
                continue
            answer = _truncate_answer(groups[organ])
            # Rule 2: cap verbatim duplicate answers.
            if answer_counts.get(answer, 0) >= cfg.max_duplicate_answers:
                continue
            # Rule 1: keep positives, down-sample normal-only answers.
            if not _is_positive(answer, g) and cfg.positive_boost > 1:
                if rng.random() >= 1.0 / cfg.positive_boost:
                    continue
            answer_counts[answer] = answer_counts.get(answer, 0) + 1
            prompt = PROMPT_TEMPLATE.format(organ=organ.value)
            pairs.append(QAPair(img_id, organ, prompt, answer))

    if not any(_is_positive(p.answer, g) for p in pairs) and cfg.positive_boost > 1:
        warnings.append("corpus contains no positive pairs; positive_boost had no effect")

    pairs, trimmed = _balance_organs(pairs, cfg.balance_tolerance, seed)
    stats = build_stats(pairs, g)
    stats.trimmed = trimmed
    stats.config = asdict(cfg)
    stats.warnings.extend(warnings)
    return pairs, stats


def _balance_organs(pairs: list[QAPair], tolerance: float, seed: int) -> tuple[list[QAPair], int]:
    """Rule 4: trim seeded-random pairs from over-represented organs until
    every per-organ count is within ``tolerance`` of the mean."""
    rng = np.random.default_rng([seed, 0xBA1A])
    alive = list(pairs)
    trimmed = 0
    while True:
        counts = {o: sum(1 for p in alive if p.organ == o) for o in ORGAN_ORDER}
        # Organs with no pairs at all cannot be balanced by trimming others.
        active = [o for o in ORGAN_ORDER if counts[o] > 0]
        if not active:
            break
        mean = sum(counts[o] for o in active) / len(active)
        lo, hi = (1 - tolerance) * mean, (1 + tolerance) * mean
        if all(lo <= counts[o] <= hi for o in active):
            break
        worst = max(active, key=lambda o: counts[o])
        candidates = [k for k, p in enumerate(alive) if p.organ == worst]
        drop = candidates[int(rng.integers(len(candidates)))]
        del alive[drop]
        trimmed += 1
    return alive, trimmed


def build_stats(pairs: list[QAPair], g: DSGraph) -> BuildStats:
    if not pairs:
        raise ValueError("no pairs to summarize")
    counts = {o.value: sum(1 for p in pairs if p.organ == o) for o in ORGAN_ORDER}
    n_positive = sum(1 for p in pairs if _is_positive(p.answer, g))
    lengths = [len(p.answer.split()) for p in pairs]
    return BuildStats(
        per_organ_counts=counts,
        n_pairs=len(pairs),
        n_positive=n_positive,
        positive_ratio=n_positive / len(pairs),
        mean_answer_tokens=float(np.mean(lengths)),
        trimmed=0,
    )


def save_qa_pairs(pairs: list[QAPair], path: str | Path) -> None:
    Path(path).write_text("\n".join(p.to_json() for p in pairs) + "\n", encoding="utf-8")


def load_qa_pairs(path: str | Path) -> list[QAPair]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            raw = json.loads(line)
            prompt = raw["prompt"]
            if prompt.endswith(IMAGE_MARKER):
                prompt = prompt[: -len(IMAGE_MARKER)]
            out.append(QAPair(raw["image_id"], Organ(raw["organ"]), prompt, raw["answer"]))
    return out
