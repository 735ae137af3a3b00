"""Model/run configuration, per-dataset presets and JSON round-tripping."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

HORIZONS = (96, 192, 336, 720)
DECODERS = ("multibasis", "cholesky", "linear_head", "mlp_head")

# dataset -> (periods, lambda, learning rate, batch size)
PRESETS = {
    "ETTh1": ([24], 0.5, 1e-4, 32),
    "ETTh2": ([24], 0.0, 1e-4, 16),
    "ETTm1": ([96], 0.5, 1e-3, 16),
    "ETTm2": ([96], 0.5, 1e-4, 32),
    "Weather": ([144], 0.5, 1e-4, 16),
    "Electricity": ([24], 0.5, 1e-3, 16),
    "Traffic": ([24, 168], 0.5, 1e-4, 16),
    "synthetic": ([24], 0.5, 1e-3, 32),
}


@dataclass
class ModelConfig:
    dataset: str = "synthetic"
    data_path: str | None = None
    I: int = 96
    O: int = 96
    psi_set: list[int] = field(default_factory=lambda: [24])
    K: int | None = None
    P: int = 2
    M: int = 16
    encoder: str = "unet"
    base_channels: int = 8
    latent_dim: int = 16
    depth: int = 2
    grid_rows: int = 16
    grid_cols: int = 16
    anchor_stride: int = 1
    h: int = 9
    w: int = 9
    r: float = 3.0
    decoder: str = "multibasis"
    fusion: str = "channel_adaptive"
    lam: float = 0.5
    lr: float = 1e-3
    batch_size: int = 32
    eval_batch_size: int = 256
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    time_budget: float | None = None
    max_steps: int | None = None
    synthetic_length: int = 2400

    @property
    def periods(self) -> list[int]:
        """Branch periods, repeating a single period when K asks for more branches."""
        ps = list(self.psi_set)
        if self.K is not None and self.K != len(ps):
            if len(ps) != 1:
                raise ValueError(f"K={self.K} conflicts with psi_set={ps}")
            ps = ps * self.K
        return ps

    def validate(self) -> "ModelConfig":
        ps = self.periods
        if not ps or any(p < 2 for p in ps):
            raise ValueError(f"every period must be >= 2, got {ps}")
        if self.w > min(ps):
            raise ValueError(f"kernel width w={self.w} exceeds the smallest period {min(ps)}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}; choose from {DECODERS}")
        for name in ("I", "O", "P", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)


def preset(dataset: str, **overrides) -> ModelConfig:
    """Defaults for a named dataset, with any field overridden by keyword."""
    base = {"dataset": dataset}
    if dataset in PRESETS:
        psi, lam, lr, bs = PRESETS[dataset]
        base.update(psi_set=list(psi), lam=lam, lr=lr, batch_size=bs)
    base.update(overrides)
    return ModelConfig.from_dict(base)


def load_config(path) -> ModelConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return preset(data.pop("dataset", "synthetic"), **data)


def save_config(cfg: ModelConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
