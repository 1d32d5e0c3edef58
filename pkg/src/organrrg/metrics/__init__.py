from .kernels import BACKEND
from .nlg import bleu, corpus_nlg_scores, meteor, rouge_l
from .clinical import OBSERVATIONS, Label, LabelVector, ce_labels, ce_prf

__all__ = [
    "BACKEND",
    "bleu",
    "rouge_l",
    "meteor",
    "corpus_nlg_scores",
    "OBSERVATIONS",
    "Label",
    "LabelVector",
    "ce_labels",
    "ce_prf",
]
