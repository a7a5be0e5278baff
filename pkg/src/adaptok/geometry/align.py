"""Sequence-independent structural alignment for chains of different lengths.

A small TM-align-style heuristic: start from gapless threadings, then
alternate Kabsch superposition on the aligned pairs with a Needleman-Wunsch
pass over the TM similarity matrix. Good enough to score a shrunk chain
against its original; not a replacement for the reference program.
"""

from __future__ import annotations

import numpy as np

from .coords import NM_TO_ANGSTROM, as_coords, kabsch_rotation, tm_d0


def _superpose_pairs(a, b, pairs):
    ia, ib = pairs[:, 0], pairs[:, 1]
    ca, cb = a[ia].mean(0), b[ib].mean(0)
    r = kabsch_rotation(a[ia] - ca, b[ib] - cb)
    return (a - ca) @ r.T + cb


def _tm_of(a, b, pairs, d0, norm_len):
    if len(pairs) < 3:
        return 0.0, a
    best, best_pa = -1.0, a
    use = pairs
    # a few rounds of re-superposing on the close pairs, as TM-score does
    for _ in range(4):
        if len(use) < 3:
            break
        pa = _superpose_pairs(a, b, use)
        d = np.linalg.norm(pa[pairs[:, 0]] - b[pairs[:, 1]], axis=1) * NM_TO_ANGSTROM
        score = float(np.sum(1.0 / (1.0 + (d / d0) ** 2)) / norm_len)
        if score > best:
            best, best_pa = score, pa
        close = pairs[d < max(d0, 4.5)]
        if len(close) == len(use) and np.array_equal(close, use):
            break
        use = close
    return best, best_pa


def _nw(sim, gap):
    n, m = sim.shape
    f = np.zeros((n + 1, m + 1))  # end gaps are free
    tb = np.zeros((n + 1, m + 1), np.int8)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = f[i - 1, j - 1] + sim[i - 1, j - 1]
            up = f[i - 1, j] + (gap if j < m else 0.0)
            left = f[i, j - 1] + (gap if i < n else 0.0)
            if diag >= up and diag >= left:
                f[i, j], tb[i, j] = diag, 0
            elif up >= left:
                f[i, j], tb[i, j] = up, 1
            else:
                f[i, j], tb[i, j] = left, 2
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if tb[i, j] == 0:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif tb[i, j] == 1:
            i -= 1
        else:
            j -= 1
    return np.array(pairs[::-1], dtype=np.int64).reshape(-1, 2)


def tm_align(mobile, ref, norm: str = "mobile", iters: int = 4, gap: float = -0.6, starts_kept: int = 10) -> tuple[float, np.ndarray]:
    """Best TM-score over alignments of ``mobile`` onto ``ref``; returns (tm, pairs).

    ``norm`` picks the length used for d0 and normalisation: "mobile",
    "ref" or "min".
    """
    a, b = as_coords(mobile), as_coords(ref)
    n, m = len(a), len(b)
    L = {"mobile": n, "ref": m, "min": min(n, m)}[norm]
    d0 = tm_d0(L)
    starts = []
    for off in range(-(n - 3), m - 2):
        i0, j0 = max(0, -off), max(0, off)
        k = min(n - i0, m - j0)
        if k >= 3:
            starts.append(np.stack([np.arange(i0, i0 + k), np.arange(j0, j0 + k)], 1))
    scored = sorted(((_tm_of(a, b, p, d0, L)[0], i) for i, p in enumerate(starts)), reverse=True)
    best_tm, best_pairs = -1.0, np.zeros((0, 2), np.int64)
    for _, i in scored[:starts_kept]:
        pairs = starts[i]
        tm, pa = _tm_of(a, b, pairs, d0, L)
        if tm > best_tm:
            best_tm, best_pairs = tm, pairs
        for _ in range(iters):
            d = np.linalg.norm(pa[:, None] - b[None], axis=-1) * NM_TO_ANGSTROM
            new = _nw(1.0 / (1.0 + (d / d0) ** 2), gap)
            tm_new, pa_new = _tm_of(a, b, new, d0, L)
            if tm_new <= tm + 1e-9:
                break
            tm, pa, pairs = tm_new, pa_new, new
            if tm > best_tm:
                best_tm, best_pairs = tm, pairs
    return float(max(best_tm, 0.0)), best_pairs
