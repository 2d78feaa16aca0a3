"""Pipeline configuration loaded from a ``pipeline.toml`` file.

Every hyperparameter lives here; command-line flags only choose paths and
modes. Values marked "published" are the reference settings; desk defaults are
smaller where the published scale is impractical on one CPU.
"""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DATA_DIR_ENV = "PRUNEX_DATA_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class BenchEntry:
    family: str
    size: int
    seed: int = 0
    count: int = 1
    num_pis: int | None = None
    tag: str | None = None
    name: str | None = None


@dataclass
class OperatorSection:
    k_leaves: int = 12
    m_distance: int = 3
    max_divisors: int = 150
    zero_cost: bool = False


@dataclass
class FeatureSection:
    m_max: int = 64


@dataclass
class AggregateSection:
    policy: str = "size_balanced_odd_even"
    M: int = 2


@dataclass
class ModelSection:
    kind: str = "cog"  # or "ensemble_mlp"
    embed_dim: int = 128  # published
    trunk: list[int] = field(default_factory=lambda: [1024, 1024, 1024])  # published
    n_estimators: int = 5  # published: 15
    normalize: bool = True


@dataclass
class TrainSection:
    lr: float = 1e-4  # published
    decay_step: int = 100  # published
    decay_rate: float = 0.96  # published
    batch_size: int = 1024  # published: 10240
    epochs: int = 300  # published: 3000
    gamma: float = 2.0  # published
    alpha: float | None = None  # inverse class frequency
    seed: int = 0


@dataclass
class SplitSection:
    test: list[str] = field(default_factory=list)


@dataclass
class PruneSection:
    k: float = 0.5  # published
    scorer: str = "model"  # model / oracle / random
    repeats: int = 5
    verify: str = "auto"


@dataclass
class EvalSection:
    k_values: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.7])
    random_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])


@dataclass
class PipelineConfig:
    data_dir: str | None = None
    bench: list[BenchEntry] = field(default_factory=list)
    operator: OperatorSection = field(default_factory=OperatorSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    aggregate: AggregateSection = field(default_factory=AggregateSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    split: SplitSection = field(default_factory=SplitSection)
    prune: PruneSection = field(default_factory=PruneSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def resolve_data_dir(self, override: str | None = None) -> Path:
        return Path(override or os.environ.get(DATA_DIR_ENV) or self.data_dir or "prunex-data")


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def config_from_dict(raw: dict) -> PipelineConfig:
    raw = dict(raw)
    kwargs = {}
    if "data_dir" in raw:
        kwargs["data_dir"] = raw.pop("data_dir")
    if "bench" in raw:
        entries = raw.pop("bench")
        if not isinstance(entries, list):
            raise ConfigError("bench must be an array of tables ([[bench]])")
        kwargs["bench"] = [_build(BenchEntry, e, "bench") for e in entries]
    sections = {f.name: f for f in fields(PipelineConfig) if f.name not in ("data_dir", "bench")}
    for name, value in raw.items():
        if name not in sections:
            raise ConfigError(f"unknown section [{name}]")
        default = sections[name].default_factory()
        kwargs[name] = _build(type(default), value, name)
    cfg = PipelineConfig(**kwargs)
    _check(cfg)
    return cfg


def _check(cfg: PipelineConfig) -> None:
    if cfg.model.kind not in ("cog", "ensemble_mlp"):
        raise ConfigError(f"model.kind must be 'cog' or 'ensemble_mlp', not {cfg.model.kind!r}")
    if cfg.prune.scorer not in ("model", "oracle", "random"):
        raise ConfigError(f"prune.scorer {cfg.prune.scorer!r} is not model/oracle/random")
    if not 0.0 < cfg.prune.k <= 1.0:
        raise ConfigError("prune.k must lie in (0, 1]")
    if cfg.prune.repeats < 1:
        raise ConfigError("prune.repeats must be >= 1")
    if any(not 0.0 < k <= 1.0 for k in cfg.eval.k_values):
        raise ConfigError("eval.k_values must lie in (0, 1]")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
