"""Text normalization, vocabulary construction, tokenization, and dataset
manifest IO.

Normalization rule used everywhere in the package: lowercase, keep
alphanumerics, keep hyphens joining two word characters ("x-ray") and
periods joining two digits ("1.5"), map every other character to a space.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .organs import Organ, ORGAN_ORDER

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

# Hyphens survive between word characters, periods between digits; every other
# non-alphanumeric character becomes a space.
_KEEP_HYPHEN = re.compile(r"(?<=\w)-(?=\w)")
_KEEP_DECIMAL = re.compile(r"(?<=\d)\.(?=\d)")
_DROP = re.compile(r"[^a-z0-9\s\x00]")


def normalize_text(text: str) -> str:
    """Lowercase and strip punctuation, keeping intra-word hyphens and
    intra-number decimal points."""
    text = text.lower()
    # Protect the keepers with a sentinel, drop the rest, then restore.
    text = _KEEP_HYPHEN.sub("\x00h", text)
    text = _KEEP_DECIMAL.sub("\x00d", text)
    text = _DROP.sub(" ", text)
    text = text.replace("\x00h", "-").replace("\x00d", ".")
    return " ".join(text.split())


def words(text: str) -> list[str]:
    """Normalized word list of ``text``."""
    norm = normalize_text(text)
    return norm.split() if norm else []


@dataclass
class Vocabulary:
    """Bijective token/id maps with PAD=0, BOS=1, EOS=2, UNK=3 fixed."""

    token_to_id: dict[str, int]
    id_to_token: dict[int, str]

    pad = PAD_ID
    bos = BOS_ID
    eos = EOS_ID
    unk = UNK_ID

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode_word(self, word: str) -> int:
        return self.token_to_id.get(word, UNK_ID)

    def save(self, path: str | Path) -> None:
        tokens = [self.id_to_token[i] for i in range(len(self))]
        Path(path).write_text(json.dumps(tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_tokens(tokens[len(SPECIAL_TOKENS):])

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocabulary":
        """Build a vocabulary from an ordered list of non-special tokens."""
        token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        for tok in tokens:
            if tok in token_to_id:
                raise ValueError(f"duplicate token {tok!r}")
            token_to_id[tok] = len(token_to_id)
        id_to_token = {i: t for t, i in token_to_id.items()}
        return cls(token_to_id, id_to_token)


def build_vocabulary(reports: list[str], min_count: int = 3) -> Vocabulary:
    """Build a vocabulary from raw report strings.

    Words occurring fewer than ``min_count`` times across the normalized
    corpus are excluded and will tokenize to UNK.
    """
    if not reports:
        raise ValueError("empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for report in reports:
        counts.update(words(report))
    kept = [w for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda w: (-counts[w], w))
    return Vocabulary.from_tokens(kept)


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> list[int]:
    """``[BOS] + word ids + [EOS]``, truncated to ``max_len - 2`` words and
    right-padded with PAD to exactly ``max_len``."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    ids = [vocab.encode_word(w) for w in words(text)][: max_len - 2]
    seq = [BOS_ID] + ids + [EOS_ID]
    seq.extend([PAD_ID] * (max_len - len(seq)))
    return seq


def detokenize(ids: list[int], vocab: Vocabulary) -> str:
    """Inverse of :func:`tokenize` up to normalization; specials are dropped."""
    out = []
    for i in ids:
        if i in (PAD_ID, BOS_ID):
            continue
        if i == EOS_ID:
            break
        out.append(vocab.id_to_token.get(i, SPECIAL_TOKENS[UNK_ID]))
    return " ".join(out)


@dataclass
class ManifestRecord:
    """One dataset row: file pointers plus the raw texts."""

    id: str
    image_path: str
    mask_path: str
    descriptions: dict[Organ, str]
    report: str
    split: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "image_path": self.image_path,
                "mask_path": self.mask_path,
                "descriptions": {o.value: t for o, t in self.descriptions.items()},
                "report": self.report,
                "split": self.split,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        raw = json.loads(line)
        descriptions = {Organ(k): v for k, v in raw["descriptions"].items()}
        missing = [o.value for o in ORGAN_ORDER if o not in descriptions]
        if missing:
            raise ValueError(f"record {raw['id']!r} missing descriptions for {missing}")
        return cls(
            id=raw["id"],
            image_path=raw["image_path"],
            mask_path=raw["mask_path"],
            descriptions=descriptions,
            report=raw["report"],
            split=raw["split"],
        )


@dataclass
class DatasetManifest:
    """Ordered list of records; serialized as one JSON object per line."""

    records: list[ManifestRecord] = field(default_factory=list)

    def split_records(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def save(self, path: str | Path) -> None:
        lines = [r.to_json() for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        records = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(ManifestRecord.from_json(line))
        return cls(records)
