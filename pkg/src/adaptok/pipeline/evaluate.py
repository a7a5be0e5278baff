"""Reconstruction, self-consistency and distribution metrics shared by commands."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import NM_TO_ANGSTROM, assign_sse, frechet_distance, kabsch_rmsd, sse_fractions, tm_score
from ..quantizer import TokenSequence
from ..sampler import SamplerConfig, decode_many

# reconstruction is scored with the conditional field only (annealing off)
RECON_ALPHA = math.inf


def recon_sampler(cfg: SamplerConfig) -> SamplerConfig:
    d = cfg.to_dict()
    d["alpha"] = "inf"
    return SamplerConfig.from_dict(d)


def reconstruct(model, coords: list, k, cfg: SamplerConfig, sample_ids=None, batch: int = 32) -> list[np.ndarray]:
    """Decode the first ``k`` tokens of each chain (``k=None``: all) at its true length."""
    toks = model.tokenize(list(coords))
    if k is not None:
        toks = [t.prefix(k) for t in toks]
    ids = list(range(len(coords))) if sample_ids is None else list(sample_ids)
    out = []
    for s in range(0, len(coords), batch):
        sl = slice(s, s + batch)
        out += decode_many(model, toks[sl], [len(c) for c in coords[sl]], cfg, ids[sl])
    return out


def recon_scores(model, coords: list, ks, cfg: SamplerConfig, sample_ids=None) -> list[dict]:
    """One row per (chain, k) with RMSD in Angstrom and TM-score."""
    cfg = recon_sampler(cfg)
    rows = []
    ids = list(range(len(coords))) if sample_ids is None else list(sample_ids)
    for k in ks:
        kk = None if k in (None, "full") else int(k)
        rec = reconstruct(model, coords, kk, cfg, ids)
        for i, (a, b) in zip(ids, zip(rec, coords)):
            rows.append({"sample_id": i, "k": "full" if kk is None else kk,
                         "rmsd_A": kabsch_rmsd(a, b) * NM_TO_ANGSTROM, "tm": tm_score(a, b)})
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    out = []
    for k in dict.fromkeys(r["k"] for r in rows):
        r = [x for x in rows if x["k"] == k]
        rm = np.array([x["rmsd_A"] for x in r])
        tm = np.array([x["tm"] for x in r])
        sd = (lambda a: float(a.std(ddof=1)) if len(a) > 1 else math.nan)
        out.append({"k": k, "n": len(r), "rmsd_A_mean": float(rm.mean()), "rmsd_A_sd": sd(rm),
                    "tm_mean": float(tm.mean()), "tm_sd": sd(tm)})
    return out


def self_consistency(model, structures: list, cfg: SamplerConfig, sample_ids=None) -> list[dict]:
    """Encode -> decode -> re-encode each structure.

    Returns round-trip RMSD/TM between the structure and its reconstruction,
    and the fraction of positions whose token survives re-encoding.
    """
    cfg = recon_sampler(cfg)
    toks = model.tokenize(list(structures))
    rec = reconstruct(model, structures, None, cfg, sample_ids)
    again = model.tokenize(rec)
    out = []
    for s, r, a, b in zip(structures, rec, toks, again):
        n = min(len(a), len(b))
        out.append({"rmsd_A": kabsch_rmsd(r, s) * NM_TO_ANGSTROM, "tm": tm_score(r, s),
                    "token_agreement": float(np.mean(a.codes[:n] == b.codes[:n])) if n else math.nan})
    return out


def structure_features(c: np.ndarray) -> np.ndarray:
    """Small length-normalised descriptor used for Frechet comparisons."""
    c = np.asarray(c, dtype=np.float64)
    L = len(c)
    f = sse_fractions(assign_sse(c))
    rg = math.sqrt(((c - c.mean(0)) ** 2).sum(1).mean())
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    iu = np.triu_indices(L, 3)
    contacts = float((d[iu] < 0.8).sum()) / L
    return np.array([f["helix"], f["sheet"], f["coil"], rg / L ** (1 / 3), np.linalg.norm(c[-1] - c[0]) / L,
                     contacts])


def frechet_structures(a: list, b: list) -> float:
    return frechet_distance(np.stack([structure_features(x) for x in a]),
                            np.stack([structure_features(x) for x in b]))


def sse_row(c) -> dict:
    f = sse_fractions(assign_sse(c))
    return {"helix": f["helix"], "sheet": f["sheet"], "coil": f["coil"]}


def as_tokens(codes, fsq) -> TokenSequence:
    return TokenSequence(np.asarray(codes, dtype=np.int64), fsq)
