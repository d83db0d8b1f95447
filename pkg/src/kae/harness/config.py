"""Run configuration (JSON on disk, dataclasses in memory)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..losses import LossConfig


@dataclass
class DataConfig:
    path: str = "data/toy_corpus.csv"
    smiles_column: str = "smiles"
    # "toy" computes the built-in descriptor; anything else names a column
    property: str = "toy"
    split: tuple[float, float, float] = (0.9, 0.004, 0.096)
    test_path: str | None = None

    def __post_init__(self):
        self.split = tuple(float(x) for x in self.split)
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError("split must be three non-negative fractions summing to 1")


@dataclass
class ModelSection:
    embedding_size: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    latent_positions: int = 4
    ff_width: int | None = None
    conditional: bool = False
    dropout: float = 0.1
    kl_mode: bool = False
    dtype: str = "float32"
    max_len: int | None = None  # derived from the training split when unset


@dataclass
class OptimConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    clip_norm: float | None = 1.0
    schedule: str = "constant"  # or "cosine" (decays to min_lr over the run)
    min_lr: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError("schedule must be 'constant' or 'cosine'")


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 10
    noise_scale: float = 1.0
    eval_every: int = 1  # 0 disables per-epoch evaluation
    eval_samples: int = 1000
    eval_beam: int = 1
    recon_samples: int = 1000
    train_recon_samples: int = 0
    keep_checkpoints: str = "all"  # or "last"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.keep_checkpoints not in ("all", "last"):
            raise ValueError("keep_checkpoints must be 'all' or 'last'")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = "runs/default"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"]["split"] = list(self.data.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        sections = {"data": DataConfig, "model": ModelSection, "loss": LossConfig, "optim": OptimConfig, "train": TrainConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, typ in sections.items():
            sub = d.get(name, {})
            valid = {f.name for f in fields(typ)}
            bad = set(sub) - valid
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            kw[name] = typ(**sub)
        for k in ("seed", "out_dir"):
            if k in d:
                kw[k] = d[k]
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def digest(self) -> str:
        """Short content hash; the output directory is excluded so the same
        experiment in two places has one digest."""
        d = self.to_dict()
        d.pop("out_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **sections) -> "RunConfig":
        d = self.to_dict()
        for name, changes in sections.items():
            if isinstance(changes, dict):
                d[name].update(changes)
            else:
                d[name] = changes
        return RunConfig.from_dict(d)
