"""Secondary-structure assignment from C-alpha positions alone.

A P-SEA-style distance heuristic. A five-residue window starting at ``i``
is helical when its d(j, j+2), d(j, j+3) and d(i, i+4) distances sit near
the ideal alpha-helix values (0.54, 0.50 and 0.62 nm); it is a strand when
the same distances match an extended chain (0.66, 1.0 nm) and d(i, i+4)
shows a near-straight run. Only runs of at least ``min_windows``
consecutive qualifying windows count, which keeps single hairpin turns and
chance matches in random coil from being labelled. All residues covered by
a run receive the label; helix wins over strand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coords import as_coords

COIL, HELIX, SHEET = "C", "H", "E"


@dataclass(frozen=True)
class SseThresholds:
    helix_d2: float = 0.54
    helix_d3: float = 0.50
    helix_d4: float = 0.62
    helix_tol: float = 0.06
    strand_d2: float = 0.66
    strand_d3: float = 1.00
    strand_tol: float = 0.07
    strand_min_d4: float = 1.20
    min_windows: int = 2


def _dist(c: np.ndarray, k: int) -> np.ndarray:
    return np.linalg.norm(c[k:] - c[:-k], axis=1)


def _cover(win: np.ndarray, n: int, min_windows: int) -> np.ndarray:
    """Residues covered by runs of >= min_windows consecutive true windows."""
    out = np.zeros(n, bool)
    run = 0
    for i, ok in enumerate(np.append(win, False)):
        if ok:
            run += 1
            continue
        if run >= min_windows:
            out[i - run : i - 1 + 5] = True
        run = 0
    return out


def assign_sse(c, thresholds: SseThresholds = SseThresholds()) -> np.ndarray:
    """Per-residue labels 'H', 'E' or 'C' (array of str, length L)."""
    c = as_coords(c)
    n = len(c)
    labels = np.full(n, COIL)
    if n < 5:
        return labels
    th = thresholds
    d2, d3, d4 = _dist(c, 2), _dist(c, 3), _dist(c, 4)
    w = n - 4

    def near(d, ref, tol, k):
        ok = np.abs(d - ref) < tol
        return np.logical_and.reduce([ok[j : j + w] for j in range(k)])

    helix = near(d2, th.helix_d2, th.helix_tol, 3) & near(d3, th.helix_d3, th.helix_tol, 2) & near(d4, th.helix_d4, th.helix_tol, 1)
    strand = near(d2, th.strand_d2, th.strand_tol, 3) & near(d3, th.strand_d3, th.strand_tol, 2) & (d4[:w] > th.strand_min_d4)
    is_h = _cover(helix, n, th.min_windows)
    is_e = _cover(strand, n, th.min_windows)
    labels[is_e] = SHEET
    labels[is_h] = HELIX
    return labels


def sse_fractions(labels) -> dict[str, float]:
    labels = np.asarray(labels)
    n = max(len(labels), 1)
    return {k: float(np.sum(labels == v)) / n for k, v in (("helix", HELIX), ("sheet", SHEET), ("coil", COIL))}
