"""Truncated sampling, stopping rules and KV-cached rollouts.

Entropies are in nats and always come from the full, untempered softmax
over the whole vocabulary; truncation and temperature only change which
token is drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..quantizer import TokenSequence
from ..rng import stream
from .model import ArModel, KVCache


def softmax(logits: np.ndarray) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=-1)


@dataclass(frozen=True)
class Sampler:
    kind: str = "minp"
    value: float = 0.1

    def __post_init__(self):
        if self.kind not in ("nucleus", "minp"):
            raise ValueError(f"unknown sampler {self.kind!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.kind} threshold must be in [0, 1], got {self.value}")
        if self.kind == "nucleus" and self.value == 0.0:
            raise ValueError("nucleus p must be > 0")

    @classmethod
    def parse(cls, text: str) -> "Sampler":
        kind, _, val = text.partition(":")
        return cls(kind, float(val) if val else (0.9 if kind == "nucleus" else 0.1))

    def __str__(self) -> str:
        return f"{self.kind}:{self.value:g}"


def truncate(q: np.ndarray, sampler: Sampler) -> np.ndarray:
    """Zero out excluded tokens of a 1-D distribution and renormalise."""
    q = np.asarray(q, dtype=np.float64)
    if sampler.kind == "minp":
        keep = q >= sampler.value * q.max()
    else:
        order = np.argsort(-q, kind="stable")
        before = np.cumsum(q[order]) - q[order]
        keep = np.zeros(q.shape, bool)
        keep[order[before < sampler.value]] = True
        keep[order[0]] = True
    out = np.where(keep, q, 0.0)
    return out / out.sum()


def sample_step(logits: np.ndarray, sampler: Sampler, temperature: float, rng, banned=()) -> tuple[int, np.ndarray]:
    """Draw one token; return it with the full pre-truncation probabilities."""
    logits = np.asarray(logits, dtype=np.float64)
    full = softmax(logits)
    masked = logits.copy()
    if len(banned):
        masked[list(banned)] = -np.inf
    if temperature <= 0:
        return int(np.argmax(masked)), full
    q = truncate(softmax(masked / temperature), sampler)
    tok = int(np.searchsorted(np.cumsum(q), rng.random() * q.sum(), side="right"))
    return min(tok, len(q) - 1), full


# ------------------------------------------------------------------ stopping


@dataclass(frozen=True)
class StopResult:
    K: int
    flagged: bool = False


@dataclass(frozen=True)
class StopRule:
    kind: str = "fixed"
    value: float = 16
    rescale: float = 1.0  # spline only: multiply the chosen K, then round and clip
    increasing: str = "first"  # spline boundary rule for a trace with no interior minimum that rises from the start

    def __post_init__(self):
        if self.kind not in ("fixed", "finite", "spline"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.kind == "fixed" and (self.value != int(self.value) or self.value < 1):
            raise ValueError("fixed stop needs a positive integer count")

    @classmethod
    def parse(cls, text: str) -> "StopRule":
        kind, _, val = text.partition(":")
        if kind == "fixed":
            return cls("fixed", int(val or 16))
        if kind == "finite":
            return cls("finite", float(val or 2.0))
        if kind == "spline":
            return cls("spline", 0.0, float(val or 1.0))
        raise ValueError(f"unknown stop rule {text!r}")

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{int(self.value)}"
        if self.kind == "finite":
            return f"finite:{self.value:g}"
        return "spline" if self.rescale == 1.0 else f"spline:{self.rescale:g}"


def stop_finite(trace, cutoff: float, k_max: int | None = None) -> StopResult:
    """First (1-based) step whose entropy is below ``cutoff``; k_max with a flag if none."""
    h = np.asarray(trace, dtype=np.float64)
    if h.size == 0:
        raise ValueError("entropy trace is empty")
    below = np.flatnonzero(h < cutoff)
    if below.size:
        return StopResult(int(below[0]) + 1)
    return StopResult(k_max or len(h), True)


def smooth3(h: np.ndarray) -> np.ndarray:
    """Three-tap moving average, ends padded by quadratic extrapolation.

    The padding makes the smoother map any quadratic to itself plus a
    constant, so a quadratic's minimum is not moved.
    """
    h = np.asarray(h, dtype=np.float64)
    if len(h) < 3:
        return h.copy()
    lo = 3 * h[0] - 3 * h[1] + h[2]
    hi = 3 * h[-1] - 3 * h[-2] + h[-3]
    p = np.concatenate([[lo], h, [hi]])
    return (p[:-2] + p[1:-1] + p[2:]) / 3.0


def stop_spline(trace, k_max: int | None = None, rescale: float = 1.0, increasing: str = "first",
                tol: float = 1e-6) -> StopResult:
    """K = ceil(t*) for the first interior local minimum t* of a cubic spline through the smoothed trace.

    With no interior minimum, a trace whose smoothed minimum sits at the
    first step gives K = 1 (``increasing="first"``) or k_max
    (``increasing="kmax"``); any other trace falls back to k_max with a flag.
    """
    h = np.asarray(trace, dtype=np.float64)
    k_max = k_max or len(h)
    if len(h) < 4:
        return StopResult(k_max, True)
    t = np.arange(1, len(h) + 1, dtype=np.float64)
    s = smooth3(h)
    cs = CubicSpline(t, s)
    d1, d2 = cs.derivative(1), cs.derivative(2)
    roots = [r for r in np.sort(d1.roots(extrapolate=False)) if t[0] < r < t[-1] and d2(r) > 0]
    if roots:
        K = math.ceil(roots[0] - tol)
    elif np.argmin(s) == 0 and increasing == "first":
        K = 1
    else:
        return StopResult(k_max, True)
    return StopResult(int(min(max(round(K * rescale), 1), k_max)))


def size_stats(counts) -> tuple[float, float]:
    """Sample mean and standard deviation (ddof=1) of token counts."""
    c = np.asarray(list(counts), dtype=np.float64)
    if c.size < 2:
        raise ValueError("size statistics need at least two runs")
    return float(c.mean()), float(c.std(ddof=1))


# ---------------------------------------------------------------- generation


@dataclass
class Generation:
    tokens: TokenSequence
    entropies: np.ndarray
    K: int
    flagged: bool = False
    eos: bool = False
    probs: list = field(default_factory=list, repr=False)


def kv_generate(model: ArModel, stop: StopRule, sampler: Sampler = Sampler(), temperature: float = 1.0,
                seed: int = 0, n: int = 1, sample_ids=None, keep_probs: bool = False,
                fsq=None) -> list[Generation]:
    """Roll out ``n`` independent samples; sample ``i`` draws from stream (seed, "generate", id_i).

    EOS ends a sample early under the entropy rules (it is never allowed as
    the first token); under ``fixed(n)`` EOS is suppressed so exactly n
    codes are emitted. Spline stopping needs the full rollout, then keeps
    the first K codes.
    """
    cfg = model.cfg
    if stop.kind == "fixed" and stop.value > cfg.k_max:
        raise ValueError(f"fixed({int(stop.value)}) exceeds k_max={cfg.k_max}")
    ids = list(range(n)) if sample_ids is None else list(sample_ids)
    n = len(ids)
    rngs = [stream(seed, "generate", i) for i in ids]
    horizon = int(stop.value) if stop.kind == "fixed" else cfg.k_max
    cache = KVCache(cfg.layers)
    codes = [[] for _ in range(n)]
    ents = [[] for _ in range(n)]
    probs = [[] for _ in range(n)]
    done = np.zeros(n, bool)
    eos = np.zeros(n, bool)
    nxt = np.full(n, cfg.bos)
    for m in range(1, horizon + 1):
        logits = model.step(nxt, m - 1, cache)
        banned = [cfg.bos] + ([cfg.eos] if m == 1 or stop.kind == "fixed" else [])
        for i in range(n):
            if done[i]:
                continue
            tok, p = sample_step(logits[i], sampler, temperature, rngs[i], banned)
            if tok == cfg.eos:
                done[i] = eos[i] = True
                continue
            codes[i].append(tok)
            ents[i].append(float(entropy(p)))
            if keep_probs:
                probs[i].append(p)
            nxt[i] = tok
            if stop.kind == "finite" and ents[i][-1] < stop.value:
                done[i] = True
        if done.all():
            break
    out = []
    for i in range(n):
        h = np.array(ents[i])
        K, flagged = len(codes[i]), False
        if stop.kind == "finite" and not eos[i]:
            flagged = not (len(h) and h[-1] < stop.value)
        elif stop.kind == "spline" and not eos[i]:
            r = stop_spline(h, cfg.k_max, stop.rescale, stop.increasing)
            K, flagged = r.K, r.flagged
        arr = np.array(codes[i][:K], dtype=np.int64)
        seq = TokenSequence(arr) if fsq is None else TokenSequence(arr, fsq)
        out.append(Generation(seq, h, K, flagged, bool(eos[i]), probs[i]))
    return out
