"""Prefix-masked token classifier, probes and the mean-pool baseline.

A token prefix becomes a fixed vector of k_max * M numbers: each level
index is mapped to [-1, 1] (index / (levels - 1) * 2 - 1), positions after
the prefix are zero, and the (k_max, M) grid is flattened. The dimension
depends only on the quantizer, never on chain length.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as N
from ..numerics import Adam, Tensor, nn
from ..numerics.checkpoint import load as load_ckpt
from ..numerics.checkpoint import save as save_ckpt
from ..quantizer import FsqConfig, TokenSequence
from ..rng import stream


def prefix_features(tokens: TokenSequence, cfg: FsqConfig, m: int | None = None) -> np.ndarray:
    """Flattened, zero-masked level grid for the first ``m`` tokens (all by default)."""
    idx = tokens.indices[: cfg.k_max]
    m = len(idx) if m is None else min(int(m), len(idx))
    if m < 0:
        raise ValueError("prefix length must be >= 0")
    grid = np.zeros((cfg.k_max, cfg.channels), dtype=np.float32)
    lv = np.asarray(cfg.levels, dtype=np.float32)
    grid[:m] = idx[:m] / (lv - 1) * 2 - 1
    return grid.reshape(-1)


def feature_matrix(seqs, cfg: FsqConfig, m: int | None = None) -> np.ndarray:
    return np.stack([prefix_features(s, cfg, m) for s in seqs])


@dataclass
class ClassifierConfig:
    n_in: int = 256
    n_classes: int = 4
    hidden: int = 128  # 0 -> linear probe
    epochs: int = 200
    batch_size: int = 64
    lr: float = 3e-3
    weight_decay: float = 0.0
    prefix_masking: bool = True
    seed: int = 0


class PrefixClassifier(nn.Module):
    """Two-layer perceptron (or a linear map when ``hidden == 0``)."""

    def __init__(self, cfg: ClassifierConfig, labels=None):
        self.cfg = cfg
        self.labels = list(labels) if labels is not None else [str(i) for i in range(cfg.n_classes)]
        if len(self.labels) != cfg.n_classes:
            raise ValueError("label count does not match n_classes")
        rng = stream(cfg.seed, "classifier-init")
        if cfg.hidden:
            self.net = nn.MLP(cfg.n_in, cfg.hidden, cfg.n_classes, rng)
        else:
            self.net = nn.Linear(cfg.n_in, cfg.n_classes, rng)
        self.mu = np.zeros(cfg.n_in, np.float32)
        self.sd = np.ones(cfg.n_in, np.float32)

    def logits(self, x: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim != 2 or x.shape[1] != self.cfg.n_in:
            raise ValueError(f"expected features of dimension {self.cfg.n_in}, got shape {x.shape}")
        return self.net(Tensor((x - self.mu) / self.sd))

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        with N.no_grad():
            z = self.logits(x).data.astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)

    def accuracy(self, x, y) -> float:
        return float((self.predict(x) == np.asarray(y)).mean())

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"kind": "classifier", "config": asdict(self.cfg), "labels": self.labels, **(extra or {})}
        tensors = {f"param.{k}": v for k, v in self.state_dict().items()}
        tensors.update(mu=self.mu, sd=self.sd)
        save_ckpt(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["PrefixClassifier", dict]:
        tensors, meta = load_ckpt(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path} is not a classifier checkpoint")
        m = cls(ClassifierConfig(**meta["config"]), meta["labels"])
        m.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("param.")})
        m.mu, m.sd = tensors["mu"], tensors["sd"]
        return m, meta


def _mask_rows(x: np.ndarray, channels: int, rng) -> np.ndarray:
    """Zero every row after a prefix length drawn uniformly from 1..k_max."""
    k_max = x.shape[1] // channels
    m = rng.integers(1, k_max + 1, size=len(x))
    keep = np.arange(k_max)[None, :] < m[:, None]
    return x * np.repeat(keep, channels, axis=1).astype(x.dtype)


def train_classifier(x: np.ndarray, y: np.ndarray, cfg: ClassifierConfig, labels=None,
                     channels: int | None = None) -> PrefixClassifier:
    """Cross-entropy training; with ``prefix_masking`` each example sees a random prefix every epoch.

    ``channels`` (levels per token) is needed for masking; features are
    standardised with training-set statistics unless masking is on (masked
    zeros must stay zeros).
    """
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("need matching, non-empty features and labels")
    cfg = ClassifierConfig(**{**asdict(cfg), "n_in": x.shape[1]})
    clf = PrefixClassifier(cfg, labels)
    if not cfg.prefix_masking:
        clf.mu = x.mean(axis=0)
        clf.sd = x.std(axis=0) + 1e-3
    elif channels is None:
        raise ValueError("prefix masking needs the number of levels per token")
    opt = Adam(clf.parameters(), lr=cfg.lr, clip=5.0)
    rng = stream(cfg.seed, "classifier-train")
    n = len(x)
    for ep in range(cfg.epochs):
        xe = _mask_rows(x, channels, rng) if cfg.prefix_masking else x
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            loss = N.cross_entropy(clf.logits(xe[b]), y[b])
            if cfg.weight_decay:
                for p in clf.parameters():
                    loss = loss + cfg.weight_decay * N.tsum(p * p)
            N.backward(loss)
            opt.step()
    return clf


def train_prefix_classifier(tokens, labels, fsq: FsqConfig, cfg: ClassifierConfig | None = None,
                            label_names=None) -> PrefixClassifier:
    cfg = cfg or ClassifierConfig()
    return train_classifier(feature_matrix(tokens, fsq), labels, cfg, label_names, fsq.channels)


def mean_pool_features(model, coords) -> np.ndarray:
    """Mean over residues of the continuous encoder latent (dimension M)."""
    with N.no_grad():
        out = []
        for c in coords:
            z, _ = model.encode_latent([c])
            out.append(z.data[0, : len(c)].mean(axis=0))
    return np.stack(out).astype(np.float32)
