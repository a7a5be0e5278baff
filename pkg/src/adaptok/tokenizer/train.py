"""Tokenizer training loop with exact resume.

Every step draws its randomness from ``stream(seed, "tokenizer-step", step)``,
so a run resumed from a checkpoint at step ``s`` replays the same batches,
rotations, cutoffs and noise as an uninterrupted run.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as N
from ..numerics import Adam, cosine_lr
from ..rng import stream
from .model import Tokenizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 16
    lr: float = 1e-3
    min_lr: float = 5e-5
    warmup: int = 100
    clip: float = 1.0
    seed: int = 0
    log_every: int = 50


def make_optimizer(model, tcfg: TrainConfig) -> Adam:
    return Adam(model.parameters(), lr=tcfg.lr, clip=tcfg.clip)


def batch_indices(n: int, batch_size: int, rng) -> np.ndarray:
    if batch_size >= n:
        return rng.permutation(n)
    return rng.choice(n, size=batch_size, replace=False)


def train_step(model: Tokenizer, opt: Adam, coords: list, tcfg: TrainConfig, step: int) -> dict:
    rng = stream(tcfg.seed, "tokenizer-step", step)
    idx = batch_indices(len(coords), tcfg.batch_size, rng)
    loss, info = model.loss([coords[i] for i in idx], rng)
    N.backward(loss)
    lr = cosine_lr(step, tcfg.steps, tcfg.lr, tcfg.min_lr, tcfg.warmup)
    info.update(opt.step(lr=lr))
    info.update(step=step, lr=lr)
    return info


def train_tokenizer(model: Tokenizer, coords: list, tcfg: TrainConfig, opt: Adam | None = None,
                    start_step: int = 0, stop_step: int | None = None, callback=None) -> list[dict]:
    """Run steps ``start_step .. stop_step - 1``; returns per-step records.

    ``callback(step, model)`` may return a dict of extra metrics to merge into
    that step's record (used for periodic held-out evaluation).
    """
    if not coords:
        raise ValueError("training set is empty")
    opt = opt or make_optimizer(model, tcfg)
    stop = tcfg.steps if stop_step is None else stop_step
    history = []
    t0 = time.time()
    for step in range(start_step, stop):
        info = train_step(model, opt, coords, tcfg, step)
        if callback is not None:
            info.update(callback(step, model) or {})
        info["wall"] = time.time() - t0
        history.append(info)
        if tcfg.log_every and (step + 1) % tcfg.log_every == 0:
            recent = history[-tcfg.log_every :]
            log.info("step %d flow %.4f size %.3f (%.2fs/step)", step + 1, np.mean([h["flow"] for h in recent]),
                     np.mean([h["size"] for h in recent]), info["wall"] / len(history))
    return history


def save_training_state(path, model: Tokenizer, opt: Adam, tcfg: TrainConfig, step: int, extra: dict | None = None):
    model.save(path, extra={"train": asdict(tcfg), "step": step, **(extra or {})}, arrays=opt.state_arrays())


def load_training_state(path) -> tuple[Tokenizer, Adam, TrainConfig, int]:
    model, meta, rest = Tokenizer.load(path)
    tcfg = TrainConfig(**meta["train"])
    opt = make_optimizer(model, tcfg)
    opt.load_state_arrays(rest)
    return model, opt, tcfg, int(meta["step"])
