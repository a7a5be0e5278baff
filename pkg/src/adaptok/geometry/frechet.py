"""Frechet distance between two feature sets under a Gaussian fit."""

from __future__ import annotations

import numpy as np


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def gaussian_stats(feats) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(feats, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or len(x) < 2:
        raise ValueError(f"need an (n >= 2, d) feature array, got shape {x.shape}")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def frechet_from_stats(mu1, s1, mu2, s2) -> float:
    if mu1.shape != mu2.shape:
        raise ValueError(f"feature dimension mismatch: {mu1.shape[0]} vs {mu2.shape[0]}")
    # Tr((S1 S2)^1/2) = Tr((R S2 R)^1/2) with R = S1^1/2, which is symmetric PSD
    r = _psd_sqrt(s1)
    tr_cross = np.trace(_psd_sqrt(r @ s2 @ r))
    d = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2.0 * tr_cross)
    return max(d, 0.0)


def frechet_distance(feats_a, feats_b) -> float:
    return frechet_from_stats(*gaussian_stats(feats_a), *gaussian_stats(feats_b))
