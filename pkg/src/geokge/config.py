"""Run configuration: dataclasses plus strict JSON parsing.

Config files are plain JSON (no comments). Unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .query_models import ModelKind, PAIR_MODELS, parse_models

VARIANTS = ("SEA", "SEPA", "SE", "SEP")
OPTIMIZERS = ("adam", "adagrad")
DTYPES = ("single", "double")
PREFACTORS = ("paper", "sqrt")
ATTENTION_SCOPES = ("per_relation", "global")


@dataclass
class TrainConfig:
    d: int = 32
    models: tuple[ModelKind, ...] = field(
        default_factory=lambda: parse_models(["transe", "complex", "distmult"]))
    variant: str = "SEA"
    optimizer: str = "adam"
    lr: float = 0.001
    negatives: int = 250          # -1 means full negative sampling
    batch_size: int = 500
    dtype: str = "single"
    attention_reg: bool = False   # alpha^2 in place of alpha
    double_neg: bool = False
    max_epochs: int = 100
    patience: int = 20
    eval_every: int = 5
    seed: int = 0
    distance_power: int = 2
    distance_prefactor: str = "paper"
    attention_scope: str = "per_relation"
    init_scale: float = 1e-3

    def __post_init__(self) -> None:
        self.models = parse_models(self.models)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.optimizer = str(self.optimizer).lower()
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {DTYPES}")
        if self.distance_prefactor not in PREFACTORS:
            raise ValueError(f"distance_prefactor must be one of {PREFACTORS}")
        if self.attention_scope not in ATTENTION_SCOPES:
            raise ValueError(f"attention_scope must be one of {ATTENTION_SCOPES}")
        if self.distance_power not in (1, 2):
            raise ValueError("distance_power must be 1 or 2")
        if self.d <= 0:
            raise ValueError("d must be positive")
        if self.d % 2 != 0 and any(m in PAIR_MODELS for m in self.models):
            raise ValueError("d must be even when a pair-based model is active")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.negatives != -1 and self.negatives < 1:
            raise ValueError("negatives must be -1 (full) or >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0 or self.patience < 0 or self.eval_every < 1:
            raise ValueError("bad epoch/patience/eval_every values")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    @property
    def hyperbolic(self) -> bool:
        return self.variant in ("SEPA", "SEP")

    @property
    def attention_enabled(self) -> bool:
        return self.variant in ("SEA", "SEPA")

    def torch_dtype(self):
        import torch
        return torch.float64 if self.dtype == "double" else torch.float32

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["models"] = [m.value for m in self.models]
        return out


@dataclass
class RunConfig:
    """TrainConfig plus dataset location and run-directory plumbing."""

    train: TrainConfig
    dataset: str = ""
    output_dir: str = ""
    threads: int | None = None

    def to_dict(self) -> dict:
        out = self.train.to_dict()
        out["dataset"] = self.dataset
        out["output_dir"] = self.output_dir
        if self.threads is not None:
            out["threads"] = self.threads
        return out


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_RUN_ONLY_KEYS = {"dataset", "output_dir", "threads"}


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - _TRAIN_KEYS - _RUN_ONLY_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    train_kwargs = {k: v for k, v in data.items() if k in _TRAIN_KEYS}
    train = TrainConfig(**train_kwargs)
    return RunConfig(
        train=train,
        dataset=str(data.get("dataset", "")),
        output_dir=str(data.get("output_dir", "")),
        threads=data.get("threads"),
    )


def load_run_config(path: str | Path) -> RunConfig:
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return run_config_from_dict(data)
