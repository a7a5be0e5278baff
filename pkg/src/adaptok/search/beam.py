"""Beam search over token prefixes with a global reward.

Two prefix scores are available:

* ``"step"``: S(x_1:t) = log p(x_t | x_1:t-1) + lam * R(x_1:t), the
  simplified rule for rewards that act on the whole prefix;
* ``"cumulative"``: S(x_1:t) = log p(x_1:t) + lam * R(x_1:t).

``next_log_probs(prefixes)`` must return an (n, V) array of next-token
log-probabilities for a list of equal-length prefixes, and may also return
the matching entropies as a second value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ar.generate import StopRule, entropy, softmax
from ..numerics import no_grad
from ..rng import stream


@dataclass
class BeamConfig:
    width: int = 4
    fanout: int = 8
    max_len: int = 16
    lam: float = 1.0
    scoring: str = "step"
    full_expansion: bool = False
    stop: StopRule | None = None
    expansion: str = "top"  # "top": E most likely tokens; "sample": E tokens drawn without replacement
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.fanout < 1:
            raise ValueError("beam width and fan-out must be >= 1")
        if self.max_len < 0:
            raise ValueError("max_len must be >= 0")
        if self.expansion not in ("top", "sample"):
            raise ValueError(f"unknown expansion {self.expansion!r}")
        if self.scoring not in ("step", "cumulative"):
            raise ValueError(f"unknown scoring {self.scoring!r}")
        if isinstance(self.stop, str):
            self.stop = StopRule.parse(self.stop)
        if self.stop is not None and self.stop.kind == "spline":
            raise ValueError("spline stopping needs full rollouts and is not supported inside beam search")


@dataclass(frozen=True)
class BeamState:
    prefix: tuple
    logp: float = 0.0
    reward: float = 0.0
    score: float = 0.0
    done: bool = False


@dataclass
class BeamResult:
    best: BeamState
    trace: list = field(default_factory=list)  # beam after each step
    finished: list = field(default_factory=list)
    reward_evals: int = 0


def _split(out):
    if isinstance(out, tuple):
        return np.asarray(out[0], dtype=np.float64), np.asarray(out[1], dtype=np.float64)
    lp = np.asarray(out, dtype=np.float64)
    return lp, None


def _rank(states):
    # deterministic ordering: score, then lexicographic prefix
    return sorted(states, key=lambda s: (-s.score, s.prefix))


def beam_search(next_log_probs, reward_fn, cfg: BeamConfig, prefill=()) -> BeamResult:
    """Return the best completed sequence and the beam after every step.

    ``reward_fn(prefixes)`` maps a list of prefixes to an array of rewards;
    it is not called when ``lam == 0``. ``prefill`` tokens are frozen.
    """
    prefill = tuple(int(x) for x in prefill)
    horizon = cfg.max_len
    if cfg.stop is not None and cfg.stop.kind == "fixed":
        horizon = int(cfg.stop.value)
    if len(prefill) >= horizon:
        s = BeamState(prefill, 0.0, 0.0, 0.0, True)
        return BeamResult(s, [[s]], [s])
    beams = [BeamState(prefill)]
    finished: list[BeamState] = []
    trace = []
    evals = 0
    rng = stream(cfg.seed, "beam") if cfg.expansion == "sample" else None
    for t in range(len(prefill), horizon):
        lp, ent = _split(next_log_probs([b.prefix for b in beams]))
        if ent is None:
            ent = entropy(softmax(lp))
        cands = []
        for b, row, h in zip(beams, lp, ent):
            if cfg.full_expansion or cfg.fanout >= len(row):
                toks = np.arange(len(row))
            elif rng is not None:
                # Gumbel top-k: a draw of E distinct tokens with probabilities proportional to p
                toks = np.argsort(-(row + rng.gumbel(size=len(row))), kind="stable")[: cfg.fanout]
            else:
                toks = np.argsort(-row, kind="stable")[: cfg.fanout]
            stop_here = cfg.stop is not None and cfg.stop.kind == "finite" and h < cfg.stop.value
            for v in toks:
                cands.append((b, int(v), float(row[v]), stop_here or t + 1 == horizon))
        prefixes = [b.prefix + (v,) for b, v, _, _ in cands]
        if cfg.lam != 0:
            rewards = np.asarray(reward_fn(prefixes), dtype=np.float64)
            evals += len(prefixes)
        else:
            rewards = np.zeros(len(prefixes))
        scored = []
        for (b, v, l, done), p, r in zip(cands, prefixes, rewards):
            logp = b.logp + l
            base = l if cfg.scoring == "step" else logp
            scored.append(BeamState(p, logp, float(r), base + cfg.lam * float(r), done))
        kept = _rank(scored)[: cfg.width]
        trace.append(kept)
        finished.extend(s for s in kept if s.done)
        beams = [s for s in kept if not s.done]
        if not beams:
            break
    if not finished:
        finished = list(beams)
    return BeamResult(_rank(finished)[0], trace, finished, evals)


class ArScorer:
    """Adapter: next-code log-probabilities (and entropies) from an AR prior.

    Log-probabilities come from the full softmax over the vocabulary, then
    restricted to codebook entries; entropies use the full distribution,
    as in sampling.
    """

    def __init__(self, model):
        self.model = model

    def __call__(self, prefixes):
        cfg = self.model.cfg
        rows = np.array([[cfg.bos, *p] for p in prefixes], dtype=np.int64)
        with no_grad():
            logits = self.model.full_logits(rows)[:, -1]
        x = logits - logits.max(axis=-1, keepdims=True)
        logp = x - np.log(np.exp(x).sum(axis=-1, keepdims=True))
        return logp[:, : cfg.codebook_size], entropy(softmax(logits))


def enumerate_objective(next_log_probs, reward_fn, vocab: int, length: int, lam: float, scoring: str = "step"):
    """Brute-force scores of every length-``length`` sequence under the beam's final score."""
    import itertools

    out = {}
    for seq in itertools.product(range(vocab), repeat=length):
        logp, last = 0.0, 0.0
        for t in range(length):
            lp, _ = _split(next_log_probs([seq[:t]]))
            last = float(lp[0, seq[t]])
            logp += last
        r = float(np.asarray(reward_fn([seq]))[0]) if lam else 0.0
        out[seq] = (last if scoring == "step" else logp) + lam * r
    return out
