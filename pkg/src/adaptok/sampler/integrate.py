"""ODE/SDE integration of a learned flow, score conversion and annealing.

Time runs from noise (t = 0, x ~ N(0, I)) to data (t = 1) along the linear
interpolant x_t = (1 - t) eps + t x. A velocity field is any callable
``v_fn(x, t) -> array`` with ``x`` of shape (n, L, 3) (or any shape) and a
scalar ``t``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

DELTA = 1e-3
ALPHA_OFF = math.inf  # classifier annealing disabled: conditional field throughout


@dataclass
class SamplerConfig:
    steps: int = 40
    mode: str = "ode"
    eta: float = 0.3
    gamma: float = 1.0
    alpha: float = 1.0
    g_schedule: str = "linear"
    seed: int = 0
    delta: float = DELTA

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode not in ("ode", "sde"):
            raise ValueError(f"mode must be 'ode' or 'sde', got {self.mode!r}")
        if self.eta < 0 or self.gamma < 0:
            raise ValueError("eta and gamma must be >= 0")
        check_alpha(self.alpha)
        if self.g_schedule not in ("linear", "constant"):
            raise ValueError(f"unknown g schedule {self.g_schedule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.alpha):
            d["alpha"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if d.get("alpha") == "inf":
            d["alpha"] = math.inf
        return cls(**d)


class IntegrationError(FloatingPointError):
    pass


def check_alpha(alpha: float) -> None:
    if not (math.isinf(alpha) and alpha > 0) and not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1] or inf, got {alpha}")


def g_of_t(t: float, schedule: str = "linear") -> float:
    return 1.0 - t if schedule == "linear" else 1.0


def flow_to_score(v, x_t, t: float, delta: float = DELTA):
    """Score of the interpolant marginal from its velocity: (t v - x) / (1 - t)."""
    if t >= 1.0 - delta:
        raise ValueError(f"score undefined near the data end: t={t} >= 1 - {delta}")
    return (t * np.asarray(v) - np.asarray(x_t)) / (1.0 - t)


def anneal_weight(t: float, alpha: float) -> float:
    """Weight on the conditional field; 1 at t = 0 for every alpha, 1 - t for alpha = 1."""
    check_alpha(alpha)
    if math.isinf(alpha) or t <= 0.0:
        return 1.0
    return 1.0 - t**alpha


def annealed_velocity(v_cond, v_uncond, t: float, alpha: float):
    """Blend of conditional and unconditional velocities.

    Written as (1 - w) * u + w * c so both endpoints are reproduced exactly.
    """
    w = anneal_weight(t, alpha)
    if w == 1.0:
        return np.array(v_cond, copy=True)
    if w == 0.0:
        return np.array(v_uncond, copy=True)
    return (1.0 - w) * np.asarray(v_uncond) + w * np.asarray(v_cond)


def _check(x, i, t):
    if not np.all(np.isfinite(x)):
        raise IntegrationError(f"non-finite state at step {i} (t={t:.4f})")


def integrate_ode(v_fn, x0, steps: int, method: str = "heun", t0: float = 0.0, t1: float = 1.0):
    """Integrate dx = v dt on a uniform grid from ``t0`` to ``t1``."""
    x = np.array(x0, dtype=np.float64)
    ts = np.linspace(t0, t1, steps + 1)
    for i in range(steps):
        t, tn = ts[i], ts[i + 1]
        h = tn - t
        v = v_fn(x, t)
        if method == "euler":
            x = x + h * v
        elif method == "heun":
            xe = x + h * v
            x = x + 0.5 * h * (v + v_fn(xe, tn))
        else:
            raise ValueError(f"unknown method {method!r}")
        _check(x, i, tn)
    return x


def integrate_sde(v_fn, x0, steps: int, eta: float, gamma: float, rng: np.random.Generator,
                  g_schedule: str = "linear", delta: float = DELTA):
    """Euler-Maruyama for dx = [v + g eta s] dt + sqrt(2 g gamma) dW.

    Steps starting at t >= 1 - delta drop the score and noise terms and take
    a plain Euler step, so the score singularity at t = 1 is never touched.
    With eta = gamma = 0 this is exactly the Euler ODE trajectory.
    """
    x = np.array(x0, dtype=np.float64)
    ts = np.linspace(0.0, 1.0, steps + 1)
    for i in range(steps):
        t, h = ts[i], ts[i + 1] - ts[i]
        v = v_fn(x, t)
        noise = rng.normal(size=x.shape)  # drawn every step so the stream is grid-aligned
        if t < 1.0 - delta and (eta or gamma):
            g = g_of_t(t, g_schedule)
            drift = v + g * eta * flow_to_score(v, x, t, delta) if eta else v
            x = x + h * drift + math.sqrt(2.0 * g * gamma * h) * noise
        else:
            x = x + h * v
        _check(x, i, ts[i + 1])
    return x


def integrate(v_fn, x0, cfg: SamplerConfig, rng: np.random.Generator | None = None):
    if cfg.mode == "ode":
        return integrate_ode(v_fn, x0, cfg.steps)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    return integrate_sde(v_fn, x0, cfg.steps, cfg.eta, cfg.gamma, rng, cfg.g_schedule, cfg.delta)
