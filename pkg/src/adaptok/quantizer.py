"""Finite scalar quantization with mixed-radix code indices and nested dropout.

Channel ``m`` with ``l`` levels is bounded to ``(l - 1)/2 * tanh(z)``, shifted
onto ``[0, l - 1]`` and rounded half away from zero to a level index ``j``.
The quantized value is ``(j - h) / h`` with ``h = (l - 1)/2``, so every
channel lives on a symmetric grid in ``[-1, 1]``. For an even level count
there is no centre point and ``z = 0`` lands on index ``l / 2`` (the upper of
the two central codes) by the tie rule.

Codes pack level indices in mixed radix with the first channel least
significant: ``code = j0 + l0 * (j1 + l1 * (j2 + ...))``.

A token sequence is truncated, never masked, by nested dropout: keeping the
first ``k`` tokens is the one representation used everywhere. Padded
batches carry a separate validity mask that only reflects batching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Tensor, round_ste, tanh

DEFAULT_LEVELS = (8, 5, 5, 5)
ABLATION_LEVELS = (7, 5, 5, 5, 5)


@dataclass(frozen=True)
class FsqConfig:
    levels: tuple[int, ...] = DEFAULT_LEVELS
    k_max: int = 64

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        if not self.levels or min(self.levels) < 2:
            raise ValueError(f"every channel needs at least 2 levels, got {self.levels}")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    @property
    def channels(self) -> int:
        return len(self.levels)

    @property
    def codebook_size(self) -> int:
        return int(np.prod(self.levels))

    @property
    def half(self) -> np.ndarray:
        return (np.asarray(self.levels, dtype=np.float64) - 1.0) / 2.0

    @property
    def strides(self) -> np.ndarray:
        return np.concatenate([[1], np.cumprod(self.levels[:-1])]).astype(np.int64)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(z: Tensor, cfg: FsqConfig) -> tuple[Tensor, np.ndarray]:
    """Quantize ``z`` of shape (..., M).

    Returns the quantized values (a Tensor carrying straight-through
    gradients through the rounding, tanh gradients intact) and the integer
    level indices of shape (..., M).
    """
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.shape[-1] != cfg.channels:
        raise ValueError(f"expected last axis {cfg.channels} (levels {cfg.levels}), got shape {z.shape}")
    if not np.all(np.isfinite(z.data)):
        raise FloatingPointError("non-finite latent passed to quantize")
    half = cfg.half.astype(z.dtype)
    shifted = tanh(z) * Tensor(half) + Tensor(half)
    idx = round_ste(shifted)
    values = (idx - Tensor(half)) / Tensor(half)
    return values, idx.data.astype(np.int64)


def snap(values, cfg: FsqConfig) -> np.ndarray:
    """Level indices of the nearest grid points to values in [-1, 1]."""
    v = np.asarray(values, dtype=np.float64)
    j = round_half_away(v * cfg.half + cfg.half)
    return np.clip(j, 0, np.asarray(cfg.levels) - 1).astype(np.int64)


def indices_to_values(idx, cfg: FsqConfig) -> np.ndarray:
    idx = np.asarray(idx)
    _check_indices(idx, cfg)
    return ((idx - cfg.half) / cfg.half).astype(np.float32)


def values_to_latent(values, cfg: FsqConfig, eps: float = 1e-6) -> np.ndarray:
    """A pre-quantization latent that quantizes back onto ``values``."""
    return np.arctanh(np.clip(np.asarray(values, dtype=np.float64), -1 + eps, 1 - eps))


def _check_indices(idx: np.ndarray, cfg: FsqConfig) -> None:
    if idx.shape[-1:] != (cfg.channels,):
        raise ValueError(f"expected level tuples of length {cfg.channels}, got shape {idx.shape}")
    if (idx < 0).any() or (idx >= np.asarray(cfg.levels)).any():
        raise ValueError(f"level index out of range for levels {cfg.levels}")


def code_index(idx, cfg: FsqConfig) -> np.ndarray | int:
    idx = np.asarray(idx, dtype=np.int64)
    _check_indices(idx, cfg)
    code = idx @ cfg.strides
    return int(code) if code.ndim == 0 else code


def code_to_indices(code, cfg: FsqConfig) -> np.ndarray:
    code = np.asarray(code, dtype=np.int64)
    if (code < 0).any() or (code >= cfg.codebook_size).any():
        raise ValueError(f"code out of range [0, {cfg.codebook_size})")
    return (code[..., None] // cfg.strides) % np.asarray(cfg.levels)


@dataclass
class TokenSequence:
    """Mixed-radix codes for one chain, first token first."""

    codes: np.ndarray
    cfg: FsqConfig = field(default_factory=FsqConfig)

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)
        code_to_indices(self.codes, self.cfg)  # range check

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def indices(self) -> np.ndarray:
        return code_to_indices(self.codes, self.cfg)

    @property
    def values(self) -> np.ndarray:
        return indices_to_values(self.indices, self.cfg)

    def prefix(self, k: int) -> "TokenSequence":
        return nested_dropout(self, k)

    @classmethod
    def from_indices(cls, idx, cfg: FsqConfig) -> "TokenSequence":
        return cls(np.atleast_1d(code_index(np.asarray(idx).reshape(-1, cfg.channels), cfg)), cfg)


def nested_dropout(tokens: TokenSequence, k: int) -> TokenSequence:
    """Keep the first ``k`` tokens; ``k`` beyond the length keeps everything."""
    if k < 1:
        raise ValueError(f"dropout cutoff must be >= 1, got {k}")
    return TokenSequence(tokens.codes[:k].copy(), tokens.cfg)


def sample_cutoffs(lengths, k_max: int, rng: np.random.Generator) -> np.ndarray:
    """Independent cutoff k ~ U{1..min(L, k_max)} for each example."""
    hi = np.minimum(np.asarray(lengths), k_max)
    return np.array([int(rng.integers(1, h + 1)) for h in hi], dtype=np.int64)


def write_tokens(path, tokens: TokenSequence) -> None:
    cfg = tokens.cfg
    head = f"# levels={','.join(map(str, cfg.levels))} k_max={cfg.k_max}"
    Path(path).write_text("\n".join([head, *map(str, tokens.codes.tolist())]) + "\n")


def read_tokens(path) -> TokenSequence:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}:1: missing header '# levels=... k_max=...'")
    try:
        fields = dict(kv.split("=", 1) for kv in lines[0][1:].split())
        cfg = FsqConfig(tuple(int(v) for v in fields["levels"].split(",")), int(fields["k_max"]))
    except (KeyError, ValueError) as e:
        raise ValueError(f"{path}:1: bad header {lines[0]!r}") from e
    codes = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            c = int(line)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected an integer code, got {line!r}") from None
        if not 0 <= c < cfg.codebook_size:
            raise ValueError(f"{path}:{lineno}: code {c} outside [0, {cfg.codebook_size})")
        codes.append(c)
    if not codes:
        raise ValueError(f"{path}: no tokens")
    return TokenSequence(np.array(codes), cfg)
