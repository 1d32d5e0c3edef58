"""Rule-based clinical-efficacy labeling and micro-averaged P/R/F1.

A deterministic keyword/negation labeler stands in for the neural labelers
usually run on full-scale report corpora; it is swappable behind
:func:`ce_labels`. The observation set is the standard 14 chest findings.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..corpus import words
from ..ds_graph import DSGraph, _contains_phrase
from ..instruct import segment_report

OBSERVATIONS: tuple[str, ...] = (
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "enlarged cardiomediastinum",
    "fracture",
    "lung lesion",
    "lung opacity",
    "no finding",
    "pleural effusion",
    "pleural other",
    "pneumonia",
    "pneumothorax",
    "support devices",
)

# Diseases proper: everything except the bookkeeping labels.
_DISEASES = tuple(o for o in OBSERVATIONS if o not in ("no finding", "support devices"))

_BASE_KEYWORDS: dict[str, tuple[str, ...]] = {
    "atelectasis": ("atelectasis", "atelectatic"),
    "cardiomegaly": ("cardiomegaly", "enlarged heart", "heart is enlarged", "cardiac enlargement"),
    "consolidation": ("consolidation", "consolidations"),
    "edema": ("edema", "pulmonary edema"),
    "enlarged cardiomediastinum": ("enlarged cardiomediastinum", "widened mediastinum", "mediastinal widening"),
    "fracture": ("fracture", "fractures", "rib fracture"),
    "lung lesion": ("lung lesion", "nodule", "nodules", "lesion"),
    "lung opacity": ("opacity", "opacities", "lung opacity"),
    "pleural effusion": ("pleural effusion", "effusion", "effusions"),
    "pleural other": ("pleural thickening", "pleural scarring"),
    "pneumonia": ("pneumonia",),
    "pneumothorax": ("pneumothorax",),
    "support devices": ("support device", "support devices", "tube", "catheter", "pacemaker", "picc"),
}

NEGATION_CUES: tuple[str, ...] = ("no", "without", "free of", "clear of", "resolved")


class Label(str, Enum):
    PRESENT = "present"
    ABSENT = "absent"
    UNMENTIONED = "unmentioned"


@dataclass
class LabelVector:
    """Ternary label per observation, in OBSERVATIONS order."""

    labels: dict[str, Label]

    def __post_init__(self):
        if set(self.labels) != set(OBSERVATIONS):
            raise ValueError("label vector must cover exactly the 14 observations")
        if self.labels["no finding"] is Label.PRESENT:
            bad = [o for o in _DISEASES if self.labels[o] is Label.PRESENT]
            if bad:
                raise ValueError(f"no finding cannot coexist with present diseases: {bad}")

    def __getitem__(self, observation: str) -> Label:
        return self.labels[observation]

    def positives(self) -> set[str]:
        return {o for o, v in self.labels.items() if v is Label.PRESENT}


def _keyword_table(g: DSGraph | None) -> dict[str, tuple[str, ...]]:
    table = {o: list(kw) for o, kw in _BASE_KEYWORDS.items()}
    if g is not None:
        # Graph keywords that literally name an observation extend its aliases.
        for kw in g.all_keywords():
            if kw in table and kw not in table[kw]:
                table[kw].append(kw)
    return {o: tuple(kws) for o, kws in table.items()}


def _cue_before(sentence_words: list[str], position: int) -> bool:
    prefix = sentence_words[:position]
    for cue in NEGATION_CUES:
        cue_words = cue.split()
        span = len(cue_words)
        if any(prefix[i : i + span] == cue_words for i in range(len(prefix) - span + 1)):
            return True
    return False


def ce_labels(report: str, g: DSGraph | None = None) -> LabelVector:
    """Label one report. A keyword mention is *present* unless a negation cue
    appears earlier in the same sentence, in which case it is *absent*; an
    affirmed mention anywhere outranks negated ones."""
    table = _keyword_table(g)
    seen: dict[str, Label] = {o: Label.UNMENTIONED for o in OBSERVATIONS}
    for sentence in segment_report(report):
        sentence_words = words(sentence)
        for obs, keywords in table.items():
            for kw in keywords:
                kw_words = kw.split()
                span = len(kw_words)
                for i in range(len(sentence_words) - span + 1):
                    if sentence_words[i : i + span] != kw_words:
                        continue
                    if _cue_before(sentence_words, i):
                        if seen[obs] is Label.UNMENTIONED:
                            seen[obs] = Label.ABSENT
                    else:
                        seen[obs] = Label.PRESENT
    if any(seen[o] is Label.PRESENT for o in _DISEASES):
        seen["no finding"] = Label.UNMENTIONED
    else:
        seen["no finding"] = Label.PRESENT
    return LabelVector(seen)


def ce_prf(pred_labels: list[LabelVector], ref_labels: list[LabelVector]) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over all (sample, observation)
    cells, treating *present* as the positive class."""
    if len(pred_labels) != len(ref_labels):
        raise ValueError("prediction and reference label lists must align")
    tp = fp = fn = 0
    for pred, ref in zip(pred_labels, ref_labels):
        for obs in OBSERVATIONS:
            p = pred[obs] is Label.PRESENT
            r = ref[obs] is Label.PRESENT
            tp += p and r
            fp += p and not r
            fn += r and not p
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
