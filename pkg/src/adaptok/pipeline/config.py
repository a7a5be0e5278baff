"""Experiment configuration and dataset loading."""

from __future__ import annotations

import glob
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..ar import ArConfig, ArTrainConfig
from ..geometry import CLASSES, read_any, synth_corpus
from ..sampler import SamplerConfig
from ..tokenizer import DecoderConfig, EncoderConfig, TokenizerConfig, TrainConfig


@dataclass
class DataSpec:
    kind: str = "synthetic"  # "synthetic" or "files"
    n: int = 2000
    holdout: int = 96
    min_len: int = 40
    max_len: int = 64
    class_mix: list | None = None
    seed: int = 1
    glob: str = ""

    def __post_init__(self):
        if self.kind not in ("synthetic", "files"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "files" and not self.glob:
            raise ValueError("file datasets need a glob pattern")

    def key(self) -> str:
        return hashlib.sha1(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:12]


def desk_tokenizer() -> TokenizerConfig:
    return TokenizerConfig(encoder=EncoderConfig(2, 64, 4), decoder=DecoderConfig(layers=4, channels=128, heads=4),
                           rotate=False)


@dataclass
class ExperimentConfig:
    tokenizer: TokenizerConfig = field(default_factory=desk_tokenizer)
    tokenizer_train: TrainConfig = field(default_factory=TrainConfig)
    ar: ArConfig = field(default_factory=ArConfig)
    ar_train: ArTrainConfig = field(default_factory=ArTrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    stop: str = "fixed:16"
    sampling: str = "minp:0.1"
    temperature: float = 1.0
    data: DataSpec = field(default_factory=DataSpec)
    seed: int = 0
    out: str = "runs/default"
    eval_every: int = 500
    eval_chains: int = 16

    def __post_init__(self):
        conv = {"tokenizer": TokenizerConfig, "tokenizer_train": TrainConfig, "ar": ArConfig,
                "ar_train": ArTrainConfig, "data": DataSpec}
        for name, cls in conv.items():
            if isinstance(getattr(self, name), dict):
                setattr(self, name, cls(**getattr(self, name)))
        if isinstance(self.sampler, dict):
            self.sampler = SamplerConfig.from_dict(self.sampler)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tokenizer"] = self.tokenizer.to_dict()
        d["sampler"] = self.sampler.to_dict()
        return d

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Propagate one global seed to every component."""
        d = self.to_dict()
        d["seed"] = seed
        for k in ("tokenizer", "tokenizer_train", "ar", "ar_train", "sampler"):
            d[k]["seed"] = seed
        return ExperimentConfig(**d)


@dataclass
class Dataset:
    train: list
    holdout: list
    train_labels: list
    holdout_labels: list
    names: list


def load_dataset(spec: DataSpec) -> Dataset:
    if spec.kind == "synthetic":
        items = synth_corpus(spec.n + spec.holdout, spec.class_mix, seed=spec.seed, min_len=spec.min_len,
                             max_len=spec.max_len)
        coords = [c for c, _ in items]
        labels = [lab for _, lab in items]
        names = [f"synth_{i:05d}" for i in range(len(items))]
    else:
        paths = sorted(glob.glob(spec.glob))
        if not paths:
            raise ValueError(f"no files match {spec.glob!r}")
        coords = [read_any(p) for p in paths]
        labels = [""] * len(paths)
        names = [Path(p).stem for p in paths]
    if not coords:
        raise ValueError("dataset is empty")
    h = min(spec.holdout, len(coords) // 2) if spec.kind == "files" else spec.holdout
    n_train = len(coords) - h
    if n_train < 1:
        raise ValueError("dataset is empty after the held-out split")
    return Dataset(coords[:n_train], coords[n_train:], labels[:n_train], labels[n_train:], names)


def class_index(labels) -> np.ndarray:
    return np.array([CLASSES.index(lab) for lab in labels])
