"""Packed next-token training for the AR prior."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as N
from ..numerics import Adam, cosine_lr
from ..rng import stream
from .model import ArConfig, ArModel, causal_doc_mask

log = logging.getLogger(__name__)


@dataclass
class ArTrainConfig:
    steps: int = 3000
    batch_size: int = 32
    row_len: int = 0  # 0 -> k_max + 1, i.e. one longest example per row
    pack: bool = True
    lr: float = 1e-3
    min_lr: float = 5e-5
    warmup: int = 100
    clip: float = 1.0
    seed: int = 0
    log_every: int = 50


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    positions: np.ndarray
    doc: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return causal_doc_mask(self.doc)


def _check(seqs, cfg: ArConfig):
    out = []
    for s in seqs:
        s = np.asarray(s, dtype=np.int64).reshape(-1)
        if len(s) > cfg.k_max:
            raise ValueError(f"sequence of {len(s)} tokens exceeds k_max={cfg.k_max}")
        if len(s) and (s.min() < 0 or s.max() >= cfg.codebook_size):
            raise ValueError("token code out of range")
        out.append(s)
    return out


def _examples(seqs, cfg: ArConfig):
    for s in _check(seqs, cfg):
        yield np.concatenate([[cfg.bos], s]), np.concatenate([s, [cfg.eos]])


def pad_rows(seqs, cfg: ArConfig) -> Batch:
    """One example per row, right-padded."""
    ex = list(_examples(seqs, cfg))
    n = max(len(x) for x, _ in ex)
    b = Batch(np.zeros((len(ex), n), np.int64), np.full((len(ex), n), -1, np.int64),
              np.zeros((len(ex), n), np.int64), np.full((len(ex), n), -1, np.int64))
    for r, (x, y) in enumerate(ex):
        b.inputs[r, : len(x)], b.targets[r, : len(y)] = x, y
        b.positions[r, : len(x)] = np.arange(len(x))
        b.doc[r, : len(x)] = 0
    return b


def pack_rows(seqs, cfg: ArConfig, row_len: int = 0) -> Batch:
    """First-fit packing of examples into rows of ``row_len`` slots.

    Positions restart at 0 for each example, and the mask blocks attention
    across example boundaries.
    """
    row_len = row_len or cfg.max_positions
    ex = list(_examples(seqs, cfg))
    if any(len(x) > row_len for x, _ in ex):
        raise ValueError(f"row length {row_len} shorter than an example")
    rows: list[list] = []
    fill: list[int] = []
    for x, y in sorted(ex, key=lambda e: -len(e[0])):
        for r, f in enumerate(fill):
            if f + len(x) <= row_len:
                rows[r].append((x, y))
                fill[r] += len(x)
                break
        else:
            rows.append([(x, y)])
            fill.append(len(x))
    b = Batch(np.zeros((len(rows), row_len), np.int64), np.full((len(rows), row_len), -1, np.int64),
              np.zeros((len(rows), row_len), np.int64), np.full((len(rows), row_len), -1, np.int64))
    for r, row in enumerate(rows):
        at = 0
        for d, (x, y) in enumerate(row):
            sl = slice(at, at + len(x))
            b.inputs[r, sl], b.targets[r, sl] = x, y
            b.positions[r, sl] = np.arange(len(x))
            b.doc[r, sl] = d
            at += len(x)
    return b


def ar_loss(model: ArModel, batch: Batch):
    logits = model(batch.inputs, batch.positions, batch.mask)
    return N.cross_entropy(logits, batch.targets)


def make_optimizer(model, tcfg: ArTrainConfig) -> Adam:
    return Adam(model.parameters(), lr=tcfg.lr, clip=tcfg.clip)


def ar_train_step(model: ArModel, opt: Adam, seqs: list, tcfg: ArTrainConfig, step: int) -> dict:
    rng = stream(tcfg.seed, "ar-step", step)
    n = len(seqs)
    idx = rng.permutation(n) if tcfg.batch_size >= n else rng.choice(n, size=tcfg.batch_size, replace=False)
    chosen = [seqs[i] for i in idx]
    batch = pack_rows(chosen, model.cfg, tcfg.row_len) if tcfg.pack else pad_rows(chosen, model.cfg)
    logits = model(batch.inputs, batch.positions, batch.mask)
    loss = N.cross_entropy(logits, batch.targets)
    real = batch.targets >= 0
    acc = float((logits.data.argmax(-1) == batch.targets)[real].mean())
    N.backward(loss)
    lr = cosine_lr(step, tcfg.steps, tcfg.lr, tcfg.min_lr, tcfg.warmup)
    info = {"loss": float(loss.item()), "accuracy": acc, "step": step, "lr": lr}
    info.update(opt.step(lr=lr))
    return info


def train_ar(model: ArModel, seqs: list, tcfg: ArTrainConfig, opt: Adam | None = None, start_step: int = 0,
             stop_step: int | None = None) -> list[dict]:
    if not seqs:
        raise ValueError("training set is empty")
    _check(seqs, model.cfg)
    opt = opt or make_optimizer(model, tcfg)
    stop = tcfg.steps if stop_step is None else stop_step
    hist, t0 = [], time.time()
    for step in range(start_step, stop):
        info = ar_train_step(model, opt, seqs, tcfg, step)
        info["wall"] = time.time() - t0
        hist.append(info)
        if tcfg.log_every and (step + 1) % tcfg.log_every == 0:
            log.info("ar step %d loss %.4f", step + 1, np.mean([h["loss"] for h in hist[-tcfg.log_every:]]))
    return hist


def save_ar_state(path, model: ArModel, opt: Adam, tcfg: ArTrainConfig, step: int, extra: dict | None = None):
    model.save(path, extra={"train": asdict(tcfg), "step": step, **(extra or {})}, arrays=opt.state_arrays())


def load_ar_state(path):
    model, meta, rest = ArModel.load(path)
    tcfg = ArTrainConfig(**meta["train"])
    opt = make_optimizer(model, tcfg)
    opt.load_state_arrays(rest)
    return model, opt, tcfg, int(meta["step"])
