"""Synthetic C-alpha corpus: helices, hairpin meanders, mixed folds and coils.

Chains are grown residue by residue with the NeRF construction from a
virtual bond angle and dihedral per residue. Ideal values for the alpha
helix and the extended strand come from the standard parametric C-alpha
helix (radius 0.228 nm, rise 0.15 nm, 100 degrees per residue) and a
pleated strand with d(i, i+2) = 0.66 nm. The hairpin turn is a fixed
two-residue insert fitted to give antiparallel strands about 0.5 nm apart;
successive turns alternate handedness so a meander does not fold onto
itself. Any candidate with a non-bonded contact closer than ``CLASH_NM`` is
redrawn.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..rng import stream
from .coords import MAX_LENGTH, center

BOND_NM = 0.38
CLASH_NM = 0.40
CLASSES = ("all-helix", "all-sheet", "mixed", "coil")

_deg = np.radians
HELIX_ANGLES = (_deg(90.53), _deg(50.39))
STRAND_ANGLES = (_deg(120.55), _deg(195.0))
TURN_ANGLES = [(_deg(a), _deg(t)) for a, t in ((107.6, 168.5), (83.3, 254.6), (109.3, 30.3), (128.0, 54.9))]


def nerf(a, b, c, theta: float, tau: float, bond: float = BOND_NM) -> np.ndarray:
    """Place d given a, b, c, the angle b-c-d and the dihedral a-b-c-d."""
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    return c + bond * (-np.cos(theta) * bc + np.sin(theta) * np.cos(tau) * m + np.sin(theta) * np.sin(tau) * n)


def build_chain(angles: Sequence[tuple[float, float]], bond: float = BOND_NM) -> np.ndarray:
    """Chain from per-residue (theta, tau); entry i places residue i.

    Entries 0 and 1 are ignored and entry 2 contributes only its angle,
    since the first three residues fix the frame.
    """
    n = len(angles)
    pts = np.zeros((n, 3))
    if n > 1:
        pts[1] = (bond, 0.0, 0.0)
    if n > 2:
        th = angles[2][0]
        pts[2] = pts[1] + bond * np.array([-np.cos(th), np.sin(th), 0.0])
    for i in range(3, n):
        pts[i] = nerf(pts[i - 3], pts[i - 2], pts[i - 1], *angles[i], bond=bond)
    return pts


def min_nonbonded(c: np.ndarray, sep: int = 2) -> float:
    if len(c) <= sep:
        return np.inf
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    iu = np.triu_indices(len(c), sep)
    return float(d[iu].min())


def ideal_helix(length: int) -> np.ndarray:
    return center(build_chain([HELIX_ANGLES] * length))


def ideal_strand(length: int) -> np.ndarray:
    return center(build_chain([STRAND_ANGLES] * length))


def _jitter(ang, rng, sd_theta=1.5, sd_tau=4.0):
    th, tau = ang
    return (th + _deg(sd_theta) * rng.normal(), tau + _deg(sd_tau) * rng.normal())


def _linker(rng, n):
    return [(_deg(rng.uniform(85, 130)), _deg(rng.uniform(-180, 180))) for _ in range(n)]


def _helix(rng, n):
    return [_jitter(HELIX_ANGLES, rng) for _ in range(n)]


def _meander(rng, n_strands, lo=5, hi=9, mirror_first=None):
    out = []
    flip = bool(rng.integers(2)) if mirror_first is None else mirror_first
    for s in range(n_strands):
        if s:
            turn = TURN_ANGLES if not flip else [(a, -t) for a, t in TURN_ANGLES]
            out += [_jitter(a, rng, 1.0, 2.0) for a in turn]
            flip = not flip
            n = int(rng.integers(lo, hi + 1)) - 2  # the turn insert already places two strand residues
        else:
            n = int(rng.integers(lo, hi + 1))
        out += [_jitter(STRAND_ANGLES, rng) for _ in range(n)]
    return out


def _plan(kind: str, length: int, rng) -> list:
    plan: list = []
    if kind == "all-helix":
        while len(plan) < length:
            if plan:
                plan += _linker(rng, 2)
            plan += _helix(rng, int(rng.integers(18, 40)))
    elif kind == "all-sheet":
        plan = _meander(rng, 12)
    elif kind == "mixed":
        use_helix = bool(rng.integers(2))
        while len(plan) < length:
            if plan:
                plan += _linker(rng, int(rng.integers(3, 5)))
            plan += _helix(rng, int(rng.integers(10, 17))) if use_helix else _meander(rng, 2, 5, 7)
            use_helix = not use_helix
    else:
        raise ValueError(f"unknown class {kind!r}")
    return plan[:length]


def _coil(length: int, rng, tries: int = 50) -> np.ndarray:
    """Self-avoiding random walk over virtual bond angle and dihedral."""
    pts = build_chain([(_deg(rng.uniform(85, 145)), 0.0)] * min(length, 3))
    out = list(pts)
    while len(out) < length:
        for _ in range(tries):
            p = nerf(out[-3], out[-2], out[-1], _deg(rng.uniform(85, 145)), _deg(rng.uniform(-180, 180)))
            if len(out) < 2 or np.linalg.norm(np.asarray(out[:-1]) - p, axis=1).min() >= CLASH_NM:
                break
        else:
            return _coil(length, rng, tries)  # dead end, restart
        out.append(p)
    return np.asarray(out)


def synth_chain(kind: str, length: int, rng, max_tries: int = 500) -> np.ndarray:
    if not 1 <= length <= MAX_LENGTH:
        raise ValueError(f"length must be in [1, {MAX_LENGTH}], got {length}")
    if kind == "coil":
        return center(_coil(length, rng))
    for _ in range(max_tries):
        c = build_chain(_plan(kind, length, rng))
        if min_nonbonded(c) >= CLASH_NM:
            return center(c)
    raise RuntimeError(f"could not draw a clash-free {kind} chain of length {length}")


def _class_probs(class_mix) -> tuple[list[str], np.ndarray]:
    if class_mix is None:
        names, w = list(CLASSES), np.ones(len(CLASSES))
    elif isinstance(class_mix, Mapping):
        names, w = list(class_mix), np.asarray(list(class_mix.values()), float)
    else:
        names, w = list(class_mix), np.ones(len(class_mix))
    bad = [k for k in names if k not in CLASSES]
    if bad:
        raise ValueError(f"unknown classes {bad}; choose from {CLASSES}")
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("class weights must be non-negative with positive sum")
    return names, w / w.sum()


def synth_corpus(n: int, class_mix=None, seed: int = 0, min_len: int = 40, max_len: int = 64) -> list[tuple[np.ndarray, str]]:
    """``n`` centred chains with their class labels.

    ``class_mix`` is None (uniform over ``CLASSES``), a list of class names
    or a mapping name -> weight. Chain ``i`` depends only on ``(seed, i)``.
    """
    if not 1 <= min_len <= max_len <= MAX_LENGTH:
        raise ValueError(f"need 1 <= min_len <= max_len <= {MAX_LENGTH}")
    names, p = _class_probs(class_mix)
    out = []
    for i in range(n):
        rng = stream(seed, "synth", i)
        kind = names[int(rng.choice(len(names), p=p))]
        length = int(rng.integers(min_len, max_len + 1))
        out.append((synth_chain(kind, length, rng), kind))
    return out
