"""Token-conditioned structure decoding with a trained tokenizer."""

from __future__ import annotations

import math

import numpy as np

from ..geometry.coords import MAX_LENGTH, center
from ..quantizer import TokenSequence
from ..rng import stream
from .integrate import SamplerConfig, anneal_weight, integrate_ode, integrate_sde


class _StackedNoise:
    """Per-sample generators presented as one, so a sample's noise ignores its batch-mates."""

    def __init__(self, rngs):
        self.rngs = rngs

    def normal(self, size):
        return np.stack([r.normal(size=size[1:]) for r in self.rngs])


def resolve_size(model, tokens: TokenSequence, size) -> int:
    if size is None or size == "predicted":
        return model.predict_size(tokens)[1]
    size = int(size)
    if not 1 <= size <= MAX_LENGTH:
        raise ValueError(f"forced size must be in [1, {MAX_LENGTH}], got {size}")
    return size


def decode_many(model, tokens: list[TokenSequence], sizes=None, cfg: SamplerConfig | None = None,
                sample_ids=None) -> list[np.ndarray]:
    """Decode a batch of token prefixes; sample ``i`` uses noise stream (seed, id_i).

    Chains of different lengths share one padded batch. With classifier
    annealing on, conditional and unconditional fields are evaluated in the
    same forward pass.
    """
    cfg = cfg or SamplerConfig()
    n = len(tokens)
    if n == 0:
        return []
    for t in tokens:
        if t is None or len(t) < 1:
            raise ValueError("decoding needs at least one token (use the unconditional path explicitly)")
    sizes = [None] * n if sizes is None else list(sizes)
    lengths = [resolve_size(model, t, s) for t, s in zip(tokens, sizes)]
    ids = list(range(n)) if sample_ids is None else list(sample_ids)
    rngs = [stream(cfg.seed, "decode", i) for i in ids]
    Lmax = max(lengths)
    valid = np.arange(Lmax)[None, :] < np.array(lengths)[:, None]
    x0 = np.zeros((n, Lmax, 3))
    for i, (r, L) in enumerate(zip(rngs, lengths)):
        x0[i, :L] = r.normal(size=(L, 3))
    use_uncond = not math.isinf(cfg.alpha)
    cond_tokens = list(tokens)

    def v_fn(x, t):
        w = anneal_weight(t, cfg.alpha) if use_uncond else 1.0
        if w == 1.0:
            v = model.velocity(x, t, cond_tokens, valid)
        elif w == 0.0:
            v = model.velocity(x, t, [None] * n, valid)
        else:
            both = model.velocity(np.concatenate([x, x]), t, cond_tokens + [None] * n, np.concatenate([valid, valid]))
            v = (1.0 - w) * both[n:] + w * both[:n]
        return np.where(valid[..., None], v, 0.0)

    if cfg.mode == "ode":
        x = integrate_ode(v_fn, x0, cfg.steps)
    else:
        noise = _StackedNoise([stream(cfg.seed, "sde", i) for i in ids])
        x = integrate_sde(v_fn, x0, cfg.steps, cfg.eta, cfg.gamma, noise, cfg.g_schedule, cfg.delta)
    return [center(x[i, :L]) for i, L in enumerate(lengths)]


def decode_structure(model, tokens: TokenSequence, size="predicted", cfg: SamplerConfig | None = None,
                     sample_id: int = 0) -> np.ndarray:
    """Decode one token prefix to a chain of the predicted or forced length."""
    return decode_many(model, [tokens], [size], cfg, [sample_id])[0]


def decode_unconditional(model, length: int, cfg: SamplerConfig | None = None, sample_id: int = 0) -> np.ndarray:
    cfg = cfg or SamplerConfig()
    r = stream(cfg.seed, "decode", sample_id)
    x0 = r.normal(size=(1, length, 3))
    valid = np.ones((1, length), bool)
    x = integrate_ode(lambda x, t: model.velocity(x, t, [None], valid), x0, cfg.steps)
    return center(x[0])
