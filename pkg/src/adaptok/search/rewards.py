"""Reward functions over token prefixes, and prefill-based maturation."""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np

from ..geometry import assign_sse, sse_fractions, write_coords
from ..quantizer import TokenSequence
from ..sampler import SamplerConfig, decode_many
from .beam import ArScorer, BeamConfig, beam_search
from .classifier import PrefixClassifier, feature_matrix

log = logging.getLogger(__name__)


def sheet_fraction(coords: np.ndarray) -> float:
    return sse_fractions(assign_sse(coords))["sheet"]


class BetaReward:
    """Sheet fraction of a short decode of each prefix (predicted length).

    Decoding uses ``steps`` ODE steps and a fixed noise seed per call, so a
    prefix always receives the same reward. A failed decode scores 0 and is
    counted in ``failures``.
    """

    def __init__(self, tokenizer, steps: int = 20, seed: int = 0, alpha: float = float("inf")):
        self.tokenizer = tokenizer
        self.cfg = SamplerConfig(steps=steps, seed=seed, alpha=alpha)
        self.failures = 0

    def structures(self, prefixes):
        fsq = self.tokenizer.cfg.fsq
        seqs = [TokenSequence(np.asarray(p, dtype=np.int64), fsq) for p in prefixes]
        return decode_many(self.tokenizer, seqs, cfg=self.cfg, sample_ids=[0] * len(seqs))

    def __call__(self, prefixes) -> np.ndarray:
        out = np.zeros(len(prefixes))
        try:
            chains = self.structures(prefixes)
        except (FloatingPointError, ValueError) as e:
            log.warning("beta reward decode failed: %s", e)
            self.failures += len(prefixes)
            return out
        for i, c in enumerate(chains):
            out[i] = sheet_fraction(c) if np.isfinite(c).all() else 0.0
            self.failures += int(not np.isfinite(c).all())
        return out


def reward_beta(tokenizer, prefix, steps: int = 20, seed: int = 0) -> tuple[float, bool]:
    """Sheet fraction of one prefix; returns (value, failed)."""
    r = BetaReward(tokenizer, steps, seed)
    value = float(r([tuple(prefix)])[0])
    return value, r.failures > 0


class ClassReward:
    """Classifier probability of ``target`` for each zero-padded prefix."""

    def __init__(self, classifier: PrefixClassifier, target, fsq):
        if isinstance(target, str):
            if target not in classifier.labels:
                raise ValueError(f"unknown class {target!r}; choose from {classifier.labels}")
            target = classifier.labels.index(target)
        if not 0 <= int(target) < classifier.cfg.n_classes:
            raise ValueError(f"target class {target} out of range")
        self.clf, self.target, self.fsq = classifier, int(target), fsq

    def probabilities(self, prefixes) -> np.ndarray:
        seqs = [TokenSequence(np.asarray(p, dtype=np.int64), self.fsq) for p in prefixes]
        return self.clf.predict_proba(feature_matrix(seqs, self.fsq))

    def __call__(self, prefixes) -> np.ndarray:
        return self.probabilities(prefixes)[:, self.target]


class ExternalReward:
    """Score each prefix with a user command.

    The prefix is decoded, written in the coordinate text format to a
    temporary file, and ``command`` is run with ``{path}`` replaced by that
    file's path. The command must print one float on standard output.
    Failures score 0 and are counted.
    """

    def __init__(self, tokenizer, command: str, steps: int = 20, seed: int = 0, timeout: float = 60.0):
        if "{path}" not in command:
            command = command + " {path}"
        self.command = command
        self.decoder = BetaReward(tokenizer, steps, seed)
        self.timeout = timeout
        self.failures = 0

    def score_file(self, path: Path) -> float:
        cmd = [a.replace("{path}", str(path)) for a in shlex.split(self.command)]
        res = subprocess.run(cmd, capture_output=True, text=True, timeout=self.timeout, check=True)
        value = float(res.stdout.strip().split()[-1])
        if not np.isfinite(value):
            raise ValueError(f"non-finite reward {value}")
        return value

    def __call__(self, prefixes) -> np.ndarray:
        out = np.zeros(len(prefixes))
        chains = self.decoder.structures(prefixes)
        with tempfile.TemporaryDirectory() as d:
            for i, c in enumerate(chains):
                path = Path(d) / f"candidate_{i}.txt"
                write_coords(path, c)
                try:
                    out[i] = self.score_file(path)
                except (subprocess.SubprocessError, ValueError, IndexError, OSError) as e:
                    log.warning("external reward failed: %s", e)
                    self.failures += 1
        return out


def reward_class(prefix, classifier: PrefixClassifier, target, fsq) -> float:
    return float(ClassReward(classifier, target, fsq)([tuple(prefix)])[0])


def prefill_maturation(tokenizer, ar_model, seed_structure: np.ndarray, keep: int, cfg: BeamConfig,
                       reward_fn) -> tuple[TokenSequence, object]:
    """Encode a structure, freeze its first ``keep`` tokens and beam-search the rest."""
    tokens = tokenizer.tokenize(np.asarray(seed_structure))
    if keep > len(tokens):
        raise ValueError(f"prefill of {keep} tokens exceeds the {len(tokens)} encoded tokens")
    if keep < 0:
        raise ValueError("prefill length must be >= 0")
    if keep == len(tokens):
        return tokens, None
    res = beam_search(ArScorer(ar_model), reward_fn, cfg, prefill=tokens.codes[:keep])
    return TokenSequence(np.array(res.best.prefix, dtype=np.int64), tokenizer.cfg.fsq), res
