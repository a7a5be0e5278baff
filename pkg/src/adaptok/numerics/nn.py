"""Small module system on top of the tape engine."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=p.data.dtype)
            if value.shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {value.shape} != parameter shape {p.shape}")
            p.data = value.copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, scale: float = 1.0):
        std = scale / math.sqrt(n_in)
        self.weight = parameter(rng.normal(0.0, std, size=(n_in, n_out)))
        self.bias = parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x) * self.weight + self.bias


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, std: float = 0.02):
        self.weight = parameter(rng.normal(0.0, std, size=(n, dim)))

    def __call__(self, idx) -> Tensor:
        return T.embedding(self.weight, idx)


class MLP(Module):
    """Linear -> SiLU -> Linear."""

    def __init__(self, n_in: int, hidden: int, n_out: int, rng: np.random.Generator, out_scale: float = 1.0):
        self.fc1 = Linear(n_in, hidden, rng)
        self.fc2 = Linear(hidden, n_out, rng, scale=out_scale)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.silu(self.fc1(x)))


def sinusoidal_table(n: int, dim: int, base: float = 10000.0) -> np.ndarray:
    """Fixed absolute position table of shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    freqs = base ** (-np.arange(0, dim, 2, dtype=np.float64) / dim)
    ang = pos * freqs[None, :]
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang[:, : dim // 2])
    return table.astype(np.float32)


def timestep_features(t: np.ndarray, dim: int, max_period: float = 1000.0) -> np.ndarray:
    """Sinusoidal features of scalar times in [0, 1]; shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1) * max_period
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=-1).astype(np.float32)


def rope_angles(positions: np.ndarray, head_dim: int, base: float = 10000.0) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables with shape positions.shape + (head_dim // 2,)."""
    inv = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    ang = np.asarray(positions, dtype=np.float64)[..., None] * inv
    return np.cos(ang).astype(np.float32), np.sin(ang).astype(np.float32)


class Attention(Module):
    """Multi-head self-attention with optional rotary positions and an additive mask."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"channels {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def project(self, x: Tensor, rot: tuple[np.ndarray, np.ndarray] | None):
        B, N, C = x.shape
        qkv = self.qkv(x).reshape(B, N, 3, self.heads, self.head_dim).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        if rot is not None:
            q = T.rope(q, *rot)
            k = T.rope(k, *rot)
        return q, k, v

    def attend(self, q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None) -> Tensor:
        B, H, N, D = q.shape
        scores = T.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(D))
        if mask is not None:
            scores = scores + Tensor(mask, dtype=scores.dtype)
        out = T.matmul(T.softmax(scores, axis=-1), v)
        return self.proj(out.transpose(0, 2, 1, 3).reshape(B, N, H * D))

    def __call__(self, x: Tensor, mask: np.ndarray | None = None, rot=None) -> Tensor:
        q, k, v = self.project(x, rot)
        return self.attend(q, k, v, mask)


NEG_INF = -1e9


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """(B, N) boolean validity -> additive mask broadcastable to (B, H, N, N)."""
    return np.where(valid, 0.0, NEG_INF).astype(np.float32)[:, None, None, :]
