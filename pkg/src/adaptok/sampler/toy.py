"""Analytic flows for Gaussian-mixture data in one dimension.

For data p(x) = sum_j w_j N(mu_j, s_j^2) the interpolant marginal at time
t is a mixture of N(t mu_j, (1 - t)^2 + t^2 s_j^2), and the optimal
velocity is the responsibility-weighted conditional expectation of x - eps.
A point mass is the special case s = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass
class MixtureFlow:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0) -> "MixtureFlow":
        return cls(np.array([1.0]), np.array([mean], float), np.array([std], float))

    @classmethod
    def point_mass(cls, at: float = 0.0) -> "MixtureFlow":
        return cls.gaussian(at, 0.0)

    def _parts(self, x, t):
        x = np.asarray(x, dtype=np.float64)[..., None]
        m = t * self.means
        var = (1 - t) ** 2 + t**2 * self.stds**2
        logp = np.log(self.weights) - 0.5 * np.log(2 * np.pi * var) - 0.5 * (x - m) ** 2 / var
        return x, m, var, logp

    def log_density(self, x, t: float = 1.0):
        return logsumexp(self._parts(x, t)[3], axis=-1)

    def velocity(self, x, t: float):
        x, m, var, logp = self._parts(x, t)
        r = np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))
        # E[x - eps | x_t] per component, with Cov(x, x_t) = t s^2 and Cov(eps, x_t) = 1 - t
        slope = (t * self.stds**2 - (1 - t)) / var
        return np.sum(r * (self.means + slope * (x - m)), axis=-1)

    def score(self, x, t: float):
        x, m, var, logp = self._parts(x, t)
        r = np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))
        return np.sum(r * (-(x - m) / var), axis=-1)
