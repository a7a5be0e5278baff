from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import TAPE, Tensor

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float | None = 10.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


class Adam:
    """Adam with bias correction and global-norm gradient clipping.

    The global norm is measured before clipping; when it exceeds ``clip``
    every gradient is rescaled by ``clip / norm``. A step whose gradients
    contain NaN/Inf is skipped (moments untouched) and reported.
    """

    def __init__(self, params: list[Tensor], lr=3e-4, betas=(0.9, 0.999), eps=1e-8, clip: float | None = 10.0):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, clip=clip)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> dict:
        st = self.state
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        sq = sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)
        norm = math.sqrt(sq) if math.isfinite(sq) else float("inf")
        info = {"grad_norm": norm, "skipped": False, "clipped": False}
        if not math.isfinite(norm):
            log.warning("non-finite gradient at step %d; update skipped", st.step + 1)
            info["skipped"] = True
            self.zero_grad()
            return info
        scale = 1.0
        if st.clip is not None and norm > st.clip:
            scale = st.clip / norm
            info["clipped"] = True
        st.step += 1
        lr = st.lr if lr is None else lr
        bc1 = 1 - st.beta1**st.step
        bc2 = 1 - st.beta2**st.step
        for p, g, m, v in zip(self.params, grads, st.m, st.v):
            g = g * scale if scale != 1.0 else g
            m *= st.beta1
            m += (1 - st.beta1) * g
            v *= st.beta2
            v += (1 - st.beta2) * g * g
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)
            p.data = (p.data - update).astype(p.data.dtype, copy=False)
        self.zero_grad()
        return info

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
        TAPE.clear()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.step": np.array([self.state.step], dtype=np.float32)}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.state.step = int(arrays["adam.step"][0])
        for i in range(len(self.params)):
            self.state.m[i] = np.array(arrays[f"adam.m.{i}"], dtype=self.params[i].data.dtype)
            self.state.v[i] = np.array(arrays[f"adam.v.{i}"], dtype=self.params[i].data.dtype)


def cosine_lr(step: int, total: int, lr: float, min_lr: float, warmup: int = 0) -> float:
    if warmup and step < warmup:
        return lr * (step + 1) / warmup
    frac = min(1.0, (step - warmup) / max(1, total - warmup))
    return min_lr + 0.5 * (lr - min_lr) * (1 + math.cos(math.pi * frac))
