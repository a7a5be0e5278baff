"""Decoder-only transformer over token codes with rotary positions.

Vocabulary is the FSQ codebook followed by two specials: BOS (index
``codebook_size``) and EOS (``codebook_size + 1``). A training example for
codes ``c_1..c_n`` is the input ``[BOS, c_1, .., c_n]`` with targets
``[c_1, .., c_n, EOS]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as N
from ..numerics import Tensor, nn
from ..numerics.checkpoint import load as load_ckpt
from ..numerics.checkpoint import save as save_ckpt
from ..rng import stream


@dataclass
class ArConfig:
    layers: int = 6
    channels: int = 256
    heads: int = 8
    codebook_size: int = 1000
    k_max: int = 64
    rope_base: float = 10000.0
    seed: int = 0

    def __post_init__(self):
        if self.channels % self.heads or (self.channels // self.heads) % 2:
            raise ValueError(f"channels {self.channels} must split into an even head size over {self.heads} heads")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    @property
    def bos(self) -> int:
        return self.codebook_size

    @property
    def eos(self) -> int:
        return self.codebook_size + 1

    @property
    def vocab(self) -> int:
        return self.codebook_size + 2

    @property
    def max_positions(self) -> int:
        # BOS plus up to k_max codes on the input side
        return self.k_max + 1


class _Block(nn.Module):
    def __init__(self, dim, heads, rng):
        self.ln1 = nn.LayerNorm(dim)
        self.attn = nn.Attention(dim, heads, rng)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.MLP(dim, 4 * dim, dim, rng)


def causal_doc_mask(doc: np.ndarray) -> np.ndarray:
    """Additive (B, 1, N, N) mask: causal, within one document, pads see only themselves."""
    doc = np.asarray(doc)
    n = doc.shape[1]
    same = (doc[:, :, None] == doc[:, None, :]) & (doc[:, None, :] >= 0)
    allowed = same & np.tril(np.ones((n, n), bool))[None]
    allowed |= np.eye(n, dtype=bool)[None]
    return np.where(allowed, 0.0, nn.NEG_INF).astype(np.float32)[:, None]


class ArModel(nn.Module):
    def __init__(self, cfg: ArConfig | None = None):
        cfg = cfg or ArConfig()
        self.cfg = cfg
        rng = stream(cfg.seed, "ar-init")
        c = cfg.channels
        self.head_dim = c // cfg.heads
        self.emb = nn.Embedding(cfg.vocab, c, rng)
        self.blocks = [_Block(c, cfg.heads, rng) for _ in range(cfg.layers)]
        self.ln_out = nn.LayerNorm(c)
        # small output init keeps the initial prediction close to uniform
        self.head = nn.Linear(c, cfg.vocab, rng, scale=0.02)

    def _rot(self, pos: np.ndarray):
        cos, sin = nn.rope_angles(pos, self.head_dim, self.cfg.rope_base)
        return cos[:, None], sin[:, None]

    def __call__(self, idx: np.ndarray, pos: np.ndarray, mask: np.ndarray) -> Tensor:
        """Logits (B, N, V) for inputs ``idx`` at rotary positions ``pos``."""
        idx = np.asarray(idx)
        if np.asarray(pos).max(initial=0) >= self.cfg.max_positions:
            raise ValueError(f"position exceeds k_max={self.cfg.k_max}")
        h = self.emb(idx)
        rot = self._rot(np.asarray(pos))
        for b in self.blocks:
            h = h + b.attn(b.ln1(h), mask, rot)
            h = h + b.mlp(b.ln2(h))
        return self.head(self.ln_out(h))

    def step(self, idx: np.ndarray, pos: int, cache: "KVCache") -> np.ndarray:
        """Logits (B, V) for one new input per row, attending to the cache."""
        if pos >= self.cfg.max_positions:
            raise ValueError(f"position {pos} exceeds k_max={self.cfg.k_max}")
        idx = np.asarray(idx).reshape(-1, 1)
        with N.no_grad():
            h = self.emb(idx)
            rot = self._rot(np.full(idx.shape, pos))
            for layer, b in enumerate(self.blocks):
                q, k, v = b.attn.project(b.ln1(h), rot)
                ks, vs = cache.append(layer, k.data, v.data)
                h = h + b.attn.attend(q, Tensor(ks), Tensor(vs), None)
                h = h + b.mlp(b.ln2(h))
            return self.head(self.ln_out(h)).data[:, 0]

    def full_logits(self, inputs: np.ndarray) -> np.ndarray:
        """Recompute logits for unpadded rows of equal length without a cache."""
        inputs = np.asarray(inputs)
        B, n = inputs.shape
        with N.no_grad():
            return self(inputs, np.broadcast_to(np.arange(n), (B, n)), causal_doc_mask(np.zeros((B, n), int))).data

    def save(self, path, extra: dict | None = None, arrays: dict | None = None) -> None:
        meta = {"kind": "ar", "config": asdict(self.cfg), **(extra or {})}
        tensors = {f"param.{k}": v for k, v in self.state_dict().items()}
        tensors.update(arrays or {})
        save_ckpt(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["ArModel", dict, dict]:
        tensors, meta = load_ckpt(path)
        if meta.get("kind") != "ar":
            raise ValueError(f"{path} is not an AR checkpoint (kind={meta.get('kind')!r})")
        model = cls(ArConfig(**meta["config"]))
        model.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("param.")})
        return model, meta, {k: v for k, v in tensors.items() if not k.startswith("param.")}


def ar_config_hash(cfg: ArConfig) -> str:
    import hashlib

    return hashlib.sha1(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()[:12]


class KVCache:
    """Per-layer keys and values of one batch of rollouts."""

    def __init__(self, layers: int):
        self.k = [None] * layers
        self.v = [None] * layers

    def append(self, layer: int, k: np.ndarray, v: np.ndarray):
        if self.k[layer] is None:
            self.k[layer], self.v[layer] = k, v
        else:
            self.k[layer] = np.concatenate([self.k[layer], k], axis=2)
            self.v[layer] = np.concatenate([self.v[layer], v], axis=2)
        return self.k[layer], self.v[layer]

    def __len__(self) -> int:
        return 0 if self.k[0] is None else self.k[0].shape[2]
