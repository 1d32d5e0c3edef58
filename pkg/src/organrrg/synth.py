"""Deterministic synthetic radiology corpus for desk-scale experiments.

Each synthetic case fixes a finding (or normal state) per organ, renders a
geometric pattern for it inside the organ's image region, emits matching
mask stacks with the protocol channel counts, and writes one template
sentence per organ into both the organ description and the report. The
report is therefore recoverable from the image+masks and from the
descriptions, which makes the generation task learnable at toy sizes, and
every report sentence maps back to its source organ through the
disease-symptom graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DatasetManifest, ManifestRecord
from .ds_graph import DSGraph, default_ds_graph
from .organs import MASK_CHANNELS, Organ, ORGAN_ORDER

DESK_IMAGE_SIZE = 64


@dataclass(frozen=True)
class Finding:
    """One abnormal state of an organ: its graph keyword, the sentence
    templates that report it, and the intensity used to paint it."""

    keyword: str
    sentences: tuple[str, ...]
    paint: float


@dataclass(frozen=True)
class SynthGrammar:
    findings: dict[Organ, tuple[Finding, ...]]
    normals: dict[Organ, tuple[str, ...]]
    finding_prob: float = 0.5


def default_grammar() -> SynthGrammar:
    """Grammar whose keywords come from the bundled disease-symptom graph.

    Every sentence mentions exactly one organ (by name alias or finding
    keyword), so sentence-to-organ assignment recovers the generating organ.
    """
    findings = {
        Organ.LUNG: (
            Finding("pneumonia", ("there is pneumonia in the right lung",
                                  "pneumonia is seen in the left lung"), 0.85),
            Finding("atelectasis", ("mild atelectasis in the left lung",
                                    "atelectasis is noted in the lung base"), 0.65),
            Finding("opacity", ("a focal opacity is seen in the lung",), 0.45),
        ),
        Organ.HEART: (
            Finding("cardiomegaly", ("cardiomegaly is present",
                                     "the heart is enlarged with cardiomegaly"), 0.9),
        ),
        Organ.BONE: (
            Finding("rib fracture", ("there is an acute rib fracture",
                                     "a displaced rib fracture is seen"), 0.95),
            Finding("degenerative changes", ("degenerative changes are noted in the bones",), 0.55),
        ),
        Organ.PLEURAL: (
            Finding("pleural effusion", ("there is a small left pleural effusion",
                                         "a moderate pleural effusion is present"), 0.8),
            Finding("pleural thickening", ("pleural thickening is present",), 0.5),
        ),
        Organ.MEDIASTINUM: (
            Finding("hilar enlargement", ("there is hilar enlargement",), 0.75),
            Finding("aortic calcification", ("aortic calcification is noted in the mediastinum",), 0.6),
        ),
    }
    normals = {
        Organ.LUNG: ("the lungs are clear", "both lungs are well expanded"),
        Organ.HEART: ("the heart is normal in size",),
        Organ.BONE: ("the bones are intact",),
        Organ.PLEURAL: ("no pleural effusion is seen",),
        Organ.MEDIASTINUM: ("the mediastinum is unremarkable",),
    }
    return SynthGrammar(findings=findings, normals=normals)


@dataclass
class Sample:
    """One in-memory case: image, per-organ mask stacks, texts, split tag."""

    id: str
    image: np.ndarray                      # (H, W) or (H, W, C) float32 in [0, 1]
    masks: dict[Organ, np.ndarray]         # organ -> (C_o, H, W) uint8
    descriptions: dict[Organ, str]
    report: str
    split: str
    organ_states: dict[Organ, str] = field(default_factory=dict)  # keyword or "normal"

    def missing_masks(self) -> set[Organ]:
        """Organs whose entire stack is zero (upstream segmentation failure)."""
        return {o for o in ORGAN_ORDER if not self.masks[o].any()}


def _ellipse(h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    ys, xs = np.ogrid[:h, :w]
    return (((ys - cy * h) / (ry * h)) ** 2 + ((xs - cx * w) / (rx * w)) ** 2) <= 1.0


def organ_regions(h: int, w: int) -> dict[Organ, np.ndarray]:
    """Fixed geometric layout of the five organ regions."""
    lung = _ellipse(h, w, 0.45, 0.30, 0.28, 0.15) | _ellipse(h, w, 0.45, 0.70, 0.28, 0.15)
    lung_halo = _ellipse(h, w, 0.45, 0.30, 0.33, 0.19) | _ellipse(h, w, 0.45, 0.70, 0.33, 0.19)
    heart = _ellipse(h, w, 0.62, 0.55, 0.16, 0.15)
    bone = np.zeros((h, w), dtype=bool)
    for band in range(5):
        y0 = int((0.18 + 0.14 * band) * h)
        bone[y0 : y0 + max(1, int(0.035 * h)), int(0.08 * w) : int(0.92 * w)] = True
    pleural = lung_halo & ~lung
    ys, xs = np.ogrid[:h, :w]
    mediastinum = (xs >= int(0.44 * w)) & (xs < int(0.56 * w)) & (ys >= int(0.12 * h)) & (ys < int(0.75 * h))
    return {
        Organ.LUNG: lung,
        Organ.HEART: heart,
        Organ.BONE: bone,
        Organ.PLEURAL: pleural,
        Organ.MEDIASTINUM: mediastinum,
    }


_BASE_INTENSITY = {
    Organ.LUNG: 0.15,
    Organ.HEART: 0.35,
    Organ.BONE: 0.30,
    Organ.PLEURAL: 0.20,
    Organ.MEDIASTINUM: 0.25,
}


def _paint_image(rng: np.random.Generator, regions: dict[Organ, np.ndarray],
                 states: dict[Organ, str], grammar: SynthGrammar,
                 h: int, w: int) -> np.ndarray:
    img = rng.uniform(0.02, 0.08, size=(h, w))
    for organ in ORGAN_ORDER:
        img[regions[organ]] += _BASE_INTENSITY[organ] * 0.3
    for organ in ORGAN_ORDER:
        state = states[organ]
        if state == "normal":
            continue
        finding = next(f for f in grammar.findings[organ] if f.keyword == state)
        region = regions[organ]
        ys, xs = np.nonzero(region)
        # Deterministic low-contrast blob centred in the region, intensity
        # keyed to the finding; kept near the noise floor so the image carries
        # the finding weakly while the description states it outright.
        cy, cx = ys.mean(), xs.mean()
        blob = _ellipse(h, w, cy / h, cx / w, 0.10, 0.10) & region
        img[blob] += finding.paint * 0.25
        img[region] += finding.paint * 0.05
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _make_mask_stack(rng: np.random.Generator, region: np.ndarray, channels: int) -> np.ndarray:
    """Decompose a region into the protocol channel count: channel 0 is the
    full region, the rest are seeded sub-boxes clipped to it."""
    h, w = region.shape
    stack = np.zeros((channels, h, w), dtype=np.uint8)
    stack[0] = region.astype(np.uint8)
    ys, xs = np.nonzero(region)
    if len(ys) == 0:
        return stack
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    for c in range(1, channels):
        ay = rng.integers(y0, y1)
        ax = rng.integers(x0, x1)
        by = min(y1, ay + max(2, (y1 - y0) // 3))
        bx = min(x1, ax + max(2, (x1 - x0) // 3))
        sub = np.zeros_like(region)
        sub[ay:by, ax:bx] = True
        stack[c] = (sub & region).astype(np.uint8)
    return stack


def _assign_splits(n: int, rng: np.random.Generator,
                   ratios: tuple[float, float, float]) -> list[str]:
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    order = rng.permutation(n)
    splits = [""] * n
    for rank, idx in enumerate(order):
        if rank < n_train:
            splits[idx] = "train"
        elif rank < n_train + n_val:
            splits[idx] = "val"
        else:
            splits[idx] = "test"
    return splits


def synth_report_corpus(seed: int, n: int, grammar: SynthGrammar | None = None) -> list[tuple[str, str]]:
    """Reports only (no images): list of (id, report) pairs."""
    grammar = grammar or default_grammar()
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        states, sentences = _draw_states(rng, grammar)
        out.append((f"synth-{seed}-{i:05d}", ". ".join(sentences) + "."))
    return out


def _draw_states(rng: np.random.Generator, grammar: SynthGrammar) -> tuple[dict[Organ, str], list[str]]:
    states: dict[Organ, str] = {}
    sentences: list[str] = []
    for organ in ORGAN_ORDER:
        if rng.random() < grammar.finding_prob:
            finding = grammar.findings[organ][rng.integers(len(grammar.findings[organ]))]
            states[organ] = finding.keyword
            sentences.append(finding.sentences[rng.integers(len(finding.sentences))])
        else:
            states[organ] = "normal"
            normals = grammar.normals[organ]
            sentences.append(normals[rng.integers(len(normals))])
    return states, sentences


def synth_dataset(
    seed: int,
    n: int,
    grammar: SynthGrammar | None = None,
    out_dir: str | Path | None = None,
    image_size: int = DESK_IMAGE_SIZE,
    split_ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
) -> tuple[DatasetManifest, list[Sample]]:
    """Generate ``n`` cases deterministically from ``seed``.

    When ``out_dir`` is given, images and masks are written as ``.npz``
    files and the manifest records point at them; otherwise paths are
    in-memory placeholders.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    grammar = grammar or default_grammar()
    h = w = image_size
    regions = organ_regions(h, w)
    splits = _assign_splits(n, np.random.default_rng([seed, 0xFACE]), split_ratios)

    samples: list[Sample] = []
    records: list[ManifestRecord] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    for i in range(n):
        rng = np.random.default_rng([seed, i])
        states, sentences = _draw_states(rng, grammar)
        report = ". ".join(sentences) + "."
        descriptions = {o: s for o, s in zip(ORGAN_ORDER, sentences)}
        image = _paint_image(rng, regions, states, grammar, h, w)
        masks = {o: _make_mask_stack(rng, regions[o], MASK_CHANNELS[o]) for o in ORGAN_ORDER}
        sid = f"synth-{seed}-{i:05d}"
        sample = Sample(sid, image, masks, descriptions, report, splits[i], dict(states))
        samples.append(sample)

        if out_path is not None:
            image_rel, mask_rel = f"{sid}.image.npz", f"{sid}.masks.npz"
            np.savez_compressed(out_path / image_rel, image=image)
            np.savez_compressed(out_path / mask_rel, **{o.value: masks[o] for o in ORGAN_ORDER})
            records.append(ManifestRecord(sid, image_rel, mask_rel, descriptions, report, splits[i]))
        else:
            records.append(ManifestRecord(sid, "", "", descriptions, report, splits[i]))

    manifest = DatasetManifest(records)
    if out_path is not None:
        manifest.save(out_path / "manifest.jsonl")
    return manifest, samples


def load_sample(data_dir: str | Path, record: ManifestRecord) -> Sample:
    """Read one case back from its ``.npz`` containers."""
    data_dir = Path(data_dir)
    with np.load(data_dir / record.image_path) as zf:
        image = zf["image"].astype(np.float32)
    masks: dict[Organ, np.ndarray] = {}
    with np.load(data_dir / record.mask_path) as zf:
        for organ in ORGAN_ORDER:
            if organ.value not in zf:
                raise ValueError(f"mask file for {record.id!r} missing organ {organ.value}")
            masks[organ] = zf[organ.value].astype(np.uint8)
    return Sample(record.id, image, masks, dict(record.descriptions), record.report, record.split)
