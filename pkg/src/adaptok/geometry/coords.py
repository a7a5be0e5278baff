"""Coordinate conventions, rotations and superposition metrics.

Coordinates are nanometres throughout; reported RMSD values are converted
to Angstrom only at the presentation layer (``NM_TO_ANGSTROM``).
"""

from __future__ import annotations

import numpy as np

from ..rng import as_generator

MAX_LENGTH = 256
NM_TO_ANGSTROM = 10.0


def as_coords(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != 3:
        raise ValueError(f"expected an (L, 3) coordinate array, got shape {c.shape}")
    if len(c) < 1:
        raise ValueError("coordinate set is empty")
    return c


def center(c) -> np.ndarray:
    c = as_coords(c)
    return c - c.mean(axis=0, keepdims=True)


def random_rotation(seed=None) -> np.ndarray:
    """Uniform draw from SO(3).

    Uses the unit-quaternion method: a normalised 4-D standard normal vector
    is uniform on S^3, and the double cover S^3 -> SO(3) pushes it forward
    to the Haar measure.
    """
    rng = as_generator(seed)
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_coords(a), as_coords(b)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return a, b


def kabsch_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation R minimising sum |R a_i - b_i|^2 for centred a, b."""
    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def superpose(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Return (a rotated onto b, b), both centred."""
    a, b = _check_pair(a, b)
    a, b = center(a), center(b)
    r = kabsch_rotation(a, b)
    return a @ r.T, b


def kabsch_rmsd(a, b) -> float:
    """Minimum RMSD over rigid motions, in the input units (nm)."""
    pa, pb = superpose(a, b)
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))


def tm_d0(length: int) -> float:
    """TM-score distance scale in Angstrom, floored at 0.5."""
    return max(0.5, 1.24 * np.cbrt(length - 15.0) - 1.8)


def tm_score(a, b) -> float:
    """TM-score with identity correspondence after Kabsch superposition.

    Inputs are in nm; distances are converted to Angstrom for d0.
    """
    pa, pb = superpose(a, b)
    d = np.linalg.norm(pa - pb, axis=1) * NM_TO_ANGSTROM
    d0 = tm_d0(len(pa))
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2)))
