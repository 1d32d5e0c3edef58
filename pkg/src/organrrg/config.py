"""Run configuration: model dimensions, optimizer settings, module toggles,
and YAML round-tripping with dotted-path command-line overrides.

Toggles respect the dependency chain coarse-fusion => fine-fusion and
importance-analysis => coarse-fusion, mirroring the five ablation rows.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

DETERMINISTIC_ENV = "ORGANRRG_DETERMINISTIC"


@dataclass
class ModelConfig:
    image_size: int = 64
    image_channels: int = 1
    positions: int = 16          # P; must be a square number
    dim: int = 32                # d; divisible by heads
    heads: int = 8
    enc_layers: int = 3
    dec_layers: int = 3
    gat_layers: int = 2
    raw_widths: tuple[int, ...] = (8, 16, 32)
    mask_adapter_width: int = 8
    mask_trunk_widths: tuple[int, ...] = (8, 16)
    share_fine_mha: bool = True
    max_report_len: int = 60


@dataclass
class Toggles:
    use_mask: bool = True
    use_ocf_fine: bool = True
    use_ocf_coarse: bool = True
    use_oica: bool = True

    def validate(self) -> None:
        if self.use_ocf_coarse and not self.use_ocf_fine:
            raise ValueError("use_ocf_coarse requires use_ocf_fine")
        if self.use_oica and not self.use_ocf_coarse:
            raise ValueError("use_oica requires use_ocf_coarse")


@dataclass
class AugmentConfig:
    crop_pad: int = 8
    flip_prob: float = 0.5


@dataclass
class RunConfig:
    # Data: either a manifest directory or an inline synthetic dataset.
    data_dir: str = ""
    synth_seed: int = 0
    synth_n: int = 0             # > 0 generates data in memory
    synth_split_ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)
    ds_graph_path: str = ""      # empty selects the bundled default graph

    model: ModelConfig = field(default_factory=ModelConfig)
    toggles: Toggles = field(default_factory=Toggles)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    epochs: int = 100
    batch_size: int = 8
    lr_image_extractor: float = 1e-4
    lr_other: float = 5e-4
    beta: float = 0.1
    grad_clip: float = 5.0
    seed: int = 0
    beam_width: int = 3
    vocab_min_count: int = 3
    early_stop_train_ce: float = 0.0   # 0 disables early stopping
    deterministic: bool = False
    out_dir: str = "runs/default"

    def validate(self) -> None:
        self.toggles.validate()
        if self.model.dim % self.model.heads != 0:
            raise ValueError("model.dim must be divisible by model.heads")
        if not (self.data_dir or self.synth_n > 0):
            raise ValueError("either data_dir or synth_n must be set")

    def is_deterministic(self) -> bool:
        return self.deterministic or bool(os.environ.get(DETERMINISTIC_ENV))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return _build_dataclass(cls, raw)


def _build_dataclass(dc_type, raw: dict):
    kwargs = {}
    for f in fields(dc_type):
        if f.name in raw:
            kwargs[f.name] = _coerce(dc_type, f.name, raw[f.name])
    return dc_type(**kwargs)


_NESTED = {"model": ModelConfig, "toggles": Toggles, "augment": AugmentConfig}


def _coerce(dc_type, name: str, value):
    if dc_type is RunConfig and name in _NESTED and isinstance(value, dict):
        return _build_dataclass(_NESTED[name], value)
    if isinstance(value, list):
        return tuple(value)
    return value


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` (or ``key=value``) overrides; values are
    parsed as YAML scalars."""
    raw = config.to_dict()
    for item in overrides:
        path, _, literal = item.partition("=")
        if not _:
            raise ValueError(f"override {item!r} must look like key=value")
        value = yaml.safe_load(literal)
        node = raw
        parts = path.strip().split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"unknown config section {part!r} in {item!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValueError(f"unknown config key {path!r}")
        node[parts[-1]] = value
    return RunConfig.from_dict(raw)


def desk_preset(**updates) -> RunConfig:
    """CPU-friendly configuration for tests and demos."""
    cfg = RunConfig(
        synth_n=40,
        epochs=30,
        batch_size=8,
        deterministic=True,
    )
    return replace(cfg, **updates) if updates else cfg


def full_preset(**updates) -> RunConfig:
    """Paper-scale dimensions (needs real data and a long run)."""
    cfg = RunConfig(
        model=ModelConfig(image_size=224, image_channels=3, positions=49, dim=512,
                          raw_widths=(32, 64, 128, 256), mask_trunk_widths=(32, 64)),
        epochs=100,
        batch_size=8,
    )
    return replace(cfg, **updates) if updates else cfg
