"""Coordinate file formats.

Text format: one residue per line, ``index x y z`` in nanometres; blank
lines and lines starting with ``#`` are skipped. PDB input reads the CA
atoms of ATOM records (fixed columns, Angstrom) and converts to nm.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .coords import MAX_LENGTH, NM_TO_ANGSTROM


def read_coords(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'index x y z', got {line!r}")
        rows.append([float(v) for v in parts[1:]])
    return _finish(rows, path)


def write_coords(path, c) -> None:
    c = np.asarray(c, dtype=np.float64)
    lines = [f"{i} {x:.6f} {y:.6f} {z:.6f}" for i, (x, y, z) in enumerate(c)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pdb_ca(path, chain: str | None = None) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.startswith("ATOM") or line[12:16].strip() != "CA":
            continue
        if line[16] not in (" ", "A"):  # first altloc only
            continue
        if chain is not None and line[21] != chain:
            continue
        rows.append([float(line[30:38]), float(line[38:46]), float(line[46:54])])
    return _finish(rows, path) / NM_TO_ANGSTROM


def read_any(path) -> np.ndarray:
    p = Path(path)
    return read_pdb_ca(p) if p.suffix.lower() in (".pdb", ".ent") else read_coords(p)


def _finish(rows, path) -> np.ndarray:
    if not rows:
        raise ValueError(f"{path}: no coordinates found")
    if len(rows) > MAX_LENGTH:
        raise ValueError(f"{path}: {len(rows)} residues exceeds the {MAX_LENGTH} limit")
    return np.asarray(rows, dtype=np.float64)
