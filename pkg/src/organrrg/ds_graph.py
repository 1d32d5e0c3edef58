"""Prior-knowledge disease-symptom graph.

Maps each organ to its finding keywords, assigns report sentences to organs
by contiguous phrase matching, and derives the 6-node adjacency matrix
(5 organs + a total node) that drives the graph attention network.

File format::

    lung: pulmonary edema, pneumonia, ...
    heart: cardiomegaly, heart size
    ...
    edges: lung-pleural, heart-mediastinum

Lines starting with ``#`` are comments. Keyword matching is exact contiguous
word-sequence matching after normalization; no stemming.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import normalize_text, words
from .organs import Organ, ORGAN_ALIASES, ORGAN_ORDER

# Node order of the adjacency matrix: five organs then the total node.
NODE_ORDER: tuple[str, ...] = tuple(o.value for o in ORGAN_ORDER) + ("total",)
TOTAL_NODE = len(ORGAN_ORDER)


@dataclass(frozen=True)
class DSGraph:
    """Organ-to-findings keyword map plus configured co-morbidity edges."""

    organ_diseases: dict[Organ, tuple[str, ...]]
    comorbid_edges: tuple[frozenset[Organ], ...] = ()

    def __post_init__(self):
        for organ in ORGAN_ORDER:
            if organ not in self.organ_diseases:
                raise ValueError(f"missing organ key: {organ.value}")
            if not self.organ_diseases[organ]:
                raise ValueError(f"empty keyword set for organ: {organ.value}")

    def keywords(self, organ: Organ) -> tuple[str, ...]:
        return self.organ_diseases[organ]

    def all_keywords(self) -> set[str]:
        out: set[str] = set()
        for organ in ORGAN_ORDER:
            out.update(self.organ_diseases[organ])
        return out


def parse_ds_graph(text: str) -> DSGraph:
    organ_diseases: dict[Organ, tuple[str, ...]] = {}
    edges: list[frozenset[Organ]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(":")
        key = key.strip().lower()
        items = [normalize_text(item) for item in rest.split(",")]
        items = [item for item in items if item]
        if key == "edges":
            for item in items:
                a, _, b = item.partition("-")
                edges.append(frozenset((Organ(a.strip()), Organ(b.strip()))))
        else:
            organ_diseases[Organ(key)] = tuple(items)
    return DSGraph(organ_diseases, tuple(edges))


def load_ds_graph(path: str | Path) -> DSGraph:
    return parse_ds_graph(Path(path).read_text(encoding="utf-8"))


def default_ds_graph() -> DSGraph:
    """The bundled default graph."""
    text = resources.files("organrrg.data").joinpath("ds_graph.txt").read_text("utf-8")
    return parse_ds_graph(text)


def _contains_phrase(sentence_words: list[str], phrase: str) -> bool:
    target = phrase.split()
    n = len(target)
    if n == 0 or n > len(sentence_words):
        return False
    return any(sentence_words[i : i + n] == target for i in range(len(sentence_words) - n + 1))


def assign_sentence_to_organ(sentence: str, g: DSGraph) -> set[Organ]:
    """Organs whose finding keywords or name aliases occur in ``sentence``.

    The sentence is expected to be normalized already; normalization is
    idempotent so raw input also works.
    """
    sentence_words = words(sentence)
    assigned: set[Organ] = set()
    for organ in ORGAN_ORDER:
        names = ORGAN_ALIASES[organ]
        if any(w in names for w in sentence_words):
            assigned.add(organ)
            continue
        if any(_contains_phrase(sentence_words, kw) for kw in g.keywords(organ)):
            assigned.add(organ)
    return assigned


def build_adjacency(g: DSGraph) -> np.ndarray:
    """Binary symmetric 6x6 adjacency over (five organs, total).

    Organs i != j are connected iff they share a finding keyword or appear
    as a configured co-morbidity pair. The total node connects to everything
    and every node carries a self-loop.
    """
    n = len(NODE_ORDER)
    adj = np.zeros((n, n), dtype=np.float64)
    np.fill_diagonal(adj, 1.0)
    adj[TOTAL_NODE, :] = 1.0
    adj[:, TOTAL_NODE] = 1.0
    for i, oi in enumerate(ORGAN_ORDER):
        for j, oj in enumerate(ORGAN_ORDER):
            if i >= j:
                continue
            shared = set(g.keywords(oi)) & set(g.keywords(oj))
            if shared or frozenset((oi, oj)) in g.comorbid_edges:
                adj[i, j] = adj[j, i] = 1.0
    return adj
