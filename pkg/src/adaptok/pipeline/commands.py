"""Command implementations behind the ``adaptok`` CLI.

Each function takes an :class:`ExperimentConfig` plus explicit arguments,
writes its outputs under ``cfg.out`` and returns a small summary dict.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from ..ar import ArModel, Sampler, StopRule, kv_generate, size_stats
from ..ar.train import load_ar_state, make_optimizer as ar_optimizer, save_ar_state, train_ar
from ..geometry import CLASSES, NM_TO_ANGSTROM, kabsch_rmsd, read_any, tm_align, tm_score, write_coords
from ..quantizer import read_tokens, write_tokens
from ..sampler import decode_many
from ..search import (
    ArScorer,
    BeamConfig,
    BetaReward,
    ClassifierConfig,
    ClassReward,
    ExternalReward,
    PrefixClassifier,
    beam_search,
    feature_matrix,
    mean_pool_features,
    train_classifier,
)
from ..tokenizer import Tokenizer, load_training_state, save_training_state, train_tokenizer
from ..tokenizer.train import make_optimizer as tok_optimizer
from .config import ExperimentConfig, class_index, load_dataset
from .evaluate import (
    frechet_structures,
    recon_sampler,
    as_tokens,
    recon_scores,
    self_consistency,
    sse_row,
    summarize_sweep,
)
from .plots import bar_plot, line_plot
from .tables import MetricsRow, read_table, write_table

log = logging.getLogger(__name__)

SWEEP_KS = (4, 8, 16, 32, 64, 128)


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _nan(x):
    return math.nan if x is None else x


# ------------------------------------------------------------------ training


def cmd_train_tokenizer(cfg: ExperimentConfig, resume: bool = False, until: int | None = None) -> dict:
    """Train (or resume) the tokenizer; ``until`` stops early at that step, leaving a resumable checkpoint."""
    out = _out(cfg)
    cfg.save(out / "config.json")
    data = load_dataset(cfg.data)
    ckpt = out / "tokenizer.ckpt"
    history = []
    if resume and ckpt.exists():
        model, opt, tcfg, start = load_training_state(ckpt)
        csv = out / "tokenizer_loss.csv"
        if csv.exists():
            history = [r for r in read_table(csv, "tokenizer_train") if r["step"] <= start]
        log.info("resuming tokenizer training at step %d", start)
    else:
        model, tcfg, start = Tokenizer(cfg.tokenizer), cfg.tokenizer_train, 0
        opt = tok_optimizer(model, tcfg)
    held = data.holdout[: cfg.eval_chains]

    def evaluate(step, m):
        if not held or not cfg.eval_every or ((step + 1) % cfg.eval_every and step + 1 != tcfg.steps):
            return {}
        rows = recon_scores(m, held, ["full"], cfg.sampler)
        res = {"heldout_rmsd_A": float(np.mean([r["rmsd_A"] for r in rows])),
               "heldout_tm": float(np.mean([r["tm"] for r in rows]))}
        log.info("step %d held-out RMSD %.2f A, TM %.3f", step + 1, res["heldout_rmsd_A"], res["heldout_tm"])
        return res

    stop = tcfg.steps if until is None else min(until, tcfg.steps)
    step = start
    while step < stop:
        nxt = min(stop, (step // cfg.eval_every + 1) * cfg.eval_every) if cfg.eval_every else stop
        for h in train_tokenizer(model, data.train, tcfg, opt, step, nxt, evaluate):
            history.append({"step": h["step"] + 1, "flow": h["flow"], "size": h["size"], "total": h["total"],
                            "lr": h["lr"], "grad_norm": h["grad_norm"],
                            "heldout_rmsd_A": h.get("heldout_rmsd_A", math.nan),
                            "heldout_tm": h.get("heldout_tm", math.nan)})
        step = nxt
        save_training_state(ckpt, model, opt, tcfg, step, extra={"experiment": cfg.to_dict()})
        write_table(out / "tokenizer_loss.csv", "tokenizer_train", history)
    replot(out / "tokenizer_loss.csv", out / "tokenizer_loss.svg")
    final = [h for h in history if not math.isnan(h["heldout_rmsd_A"])]
    return {"checkpoint": str(ckpt), "steps": step,
            "heldout_rmsd_A": final[-1]["heldout_rmsd_A"] if final else math.nan}


def _file_hash(path) -> str:
    h = hashlib.sha1()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def tokenize_corpus(model: Tokenizer, tokenizer_path, cfg: ExperimentConfig) -> tuple[list, bool]:
    """Token codes of the training split, cached by (tokenizer file, dataset spec)."""
    cache = _out(cfg) / "cache" / f"tokens_{_file_hash(tokenizer_path)}_{cfg.data.key()}.npz"
    if cache.exists():
        z = np.load(cache)
        codes, offsets = z["codes"], z["offsets"]
        return [codes[offsets[i] : offsets[i + 1]] for i in range(len(offsets) - 1)], True
    data = load_dataset(cfg.data)
    seqs = []
    for s in range(0, len(data.train), 64):
        seqs += [t.codes for t in model.tokenize(data.train[s : s + 64])]
    cache.parent.mkdir(parents=True, exist_ok=True)
    offsets = np.concatenate([[0], np.cumsum([len(s) for s in seqs])])
    np.savez(cache, codes=np.concatenate(seqs), offsets=offsets)
    return seqs, False


def check_vocab(tok: Tokenizer, ar: ArModel) -> None:
    fsq = tok.cfg.fsq
    if ar.cfg.codebook_size != fsq.codebook_size or ar.cfg.k_max != fsq.k_max:
        raise ValueError(f"AR vocabulary (codebook {ar.cfg.codebook_size}, k_max {ar.cfg.k_max}) does not match "
                         f"the tokenizer (codebook {fsq.codebook_size}, k_max {fsq.k_max})")


def cmd_train_ar(cfg: ExperimentConfig, tokenizer_path, resume: bool = False, until: int | None = None) -> dict:
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    ckpt = out / "ar.ckpt"
    history = []
    if resume and ckpt.exists():
        model, opt, tcfg, start = load_ar_state(ckpt)
        csv = out / "ar_loss.csv"
        if csv.exists():
            history = [r for r in read_table(csv, "ar_train") if r["step"] <= start]
    else:
        model, tcfg, start = ArModel(cfg.ar), cfg.ar_train, 0
        opt = ar_optimizer(model, tcfg)
    check_vocab(tok, model)
    seqs, hit = tokenize_corpus(tok, tokenizer_path, cfg)
    log.info("token cache %s (%d sequences)", "hit" if hit else "miss", len(seqs))
    stop = tcfg.steps if until is None else min(until, tcfg.steps)
    for h in train_ar(model, seqs, tcfg, opt, start, stop):
        history.append({"step": h["step"] + 1, "loss": h["loss"], "accuracy": h["accuracy"], "lr": h["lr"],
                        "grad_norm": h["grad_norm"]})
    save_ar_state(ckpt, model, opt, tcfg, max(stop, start), extra={"tokenizer": str(tokenizer_path)})
    write_table(out / "ar_loss.csv", "ar_train", history)
    replot(out / "ar_loss.csv", out / "ar_loss.svg")
    return {"checkpoint": str(ckpt), "cache_hit": hit, "final_loss": history[-1]["loss"] if history else math.nan}


# --------------------------------------------------------------- encode/decode


def cmd_encode(cfg: ExperimentConfig, tokenizer_path, files) -> list[Path]:
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    written = []
    for f in files:
        seq = tok.tokenize(read_any(f))
        p = out / (Path(f).stem + ".tok")
        write_tokens(p, seq)
        written.append(p)
    return written


def cmd_decode(cfg: ExperimentConfig, tokenizer_path, files, k: int | None = None, force_size=None) -> list[Path]:
    """Token files -> coordinates; like all reconstruction paths this decodes with annealing off."""
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    seqs = [read_tokens(f) for f in files]
    for f, s in zip(files, seqs):
        if s.cfg != tok.cfg.fsq:
            raise ValueError(f"{f}: token file quantizer {s.cfg.levels} does not match the tokenizer")
    if k is not None:
        if k < 1:
            raise ValueError("k must be >= 1")
        seqs = [s.prefix(k) for s in seqs]
    sizes = [force_size] * len(seqs) if force_size else None
    chains = decode_many(tok, seqs, sizes, recon_sampler(cfg.sampler), list(range(len(seqs))))
    written = []
    for f, c in zip(files, chains):
        p = out / (Path(f).stem + ".txt")
        write_coords(p, c)
        written.append(p)
    return written


def cmd_sweep(cfg: ExperimentConfig, tokenizer_path, files=None, ks=SWEEP_KS) -> dict:
    """Reconstruction RMSD/TM across prefix lengths; uses the held-out split if no files are given."""
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    coords = [read_any(f) for f in files] if files else load_dataset(cfg.data).holdout
    if not coords:
        raise ValueError("nothing to sweep")
    rows = recon_scores(tok, coords, list(ks), cfg.sampler)
    summary = summarize_sweep(rows)
    write_table(out / "sweep.csv", "sweep", rows)
    write_table(out / "sweep_summary.csv", "sweep_summary", summary)
    replot(out / "sweep_summary.csv", out / "sweep.svg")
    return {"summary": summary}


# ------------------------------------------------------------------ generate


def cmd_generate(cfg: ExperimentConfig, tokenizer_path, ar_path, n: int) -> dict:
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    ar, _, _ = ArModel.load(ar_path)
    check_vocab(tok, ar)
    stop, sampler = StopRule.parse(cfg.stop), Sampler.parse(cfg.sampling)
    t0 = time.time()
    gens = kv_generate(ar, stop, sampler, cfg.temperature, cfg.seed, n, fsq=tok.cfg.fsq)
    chains = decode_many(tok, [g.tokens for g in gens], None, cfg.sampler, list(range(n)))
    sc = self_consistency(tok, chains, cfg.sampler, list(range(n)))
    wall = (time.time() - t0) / max(n, 1)
    rows, traces = [], {}
    for i, (g, c, s) in enumerate(zip(gens, chains, sc)):
        name = f"gen_{i:04d}"
        write_tokens(out / f"{name}.tok", g.tokens)
        write_coords(out / f"{name}.txt", c)
        write_table(out / f"{name}_entropy.csv", "entropy",
                    [{"step": j + 1, "entropy": h, "token": int(g.tokens.codes[j]) if j < len(g.tokens) else -1}
                     for j, h in enumerate(g.entropies)])
        traces[name] = (list(range(1, len(g.entropies) + 1)), list(g.entropies))
        rows.append(MetricsRow(name, s["rmsd_A"], s["tm"], g.K,
                               float(np.mean(g.entropies)) if len(g.entropies) else math.nan,
                               float(np.min(g.entropies)) if len(g.entropies) else math.nan,
                               **sse_row(c), length=len(c), token_agreement=s["token_agreement"], wall_s=wall))
    write_table(out / "metrics.csv", "metrics", rows)
    line_plot(dict(list(traces.items())[:8]), out / "entropy.svg", "Next-token entropy", "step", "entropy (nats)")
    counts = [g.K for g in gens]
    stats = size_stats(counts) if n >= 2 else (float(counts[0]), math.nan)
    summary = {"n": n, "stop": str(stop), "sampler": str(sampler), "tokens_mean": stats[0], "tokens_sd": stats[1],
               "flagged": int(sum(g.flagged for g in gens))}
    (out / "generate_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# -------------------------------------------------------------------- shrink


def cmd_shrink(cfg: ExperimentConfig, tokenizer_path, files=None, fractions=(1.0, 0.9, 0.8), structures=None) -> dict:
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    if structures is None:
        structures = [(Path(f).stem, read_any(f)) for f in files]
    rcfg = recon_sampler(cfg.sampler)
    rows = []
    for sid, (name, x) in enumerate(structures):
        seq = tok.tokenize(x)
        for frac in fractions:
            target = max(1, int(round(frac * len(x))))
            c = decode_many(tok, [seq], [target], rcfg, [sid])[0]
            if len(c) != target:
                raise RuntimeError(f"decoder returned {len(c)} residues for a forced size of {target}")
            write_coords(out / f"{name}_shrink_{int(round(frac * 100))}.txt", c)
            rows.append({"sample_id": name, "fraction": frac, "length": len(c), "target_length": target,
                         "tm_to_original": tm_align(c, x, norm="mobile")[0], **sse_row(c)})
    write_table(out / "shrink.csv", "shrink", rows)
    replot(out / "shrink.csv", out / "shrink.svg")
    return {"rows": rows}


# --------------------------------------------------------------------- probe


def cmd_probe(cfg: ExperimentConfig, tokenizer_path, epochs: int = 300) -> dict:
    """MLP and linear probes on prefix-flattened tokens vs mean-pooled encoder latents."""
    out = _out(cfg)
    if cfg.data.kind != "synthetic":
        raise ValueError("probing needs class labels (synthetic dataset)")
    tok, _, _ = Tokenizer.load(tokenizer_path)
    data = load_dataset(cfg.data)
    fsq = tok.cfg.fsq
    ytr, yte = class_index(data.train_labels), class_index(data.holdout_labels)
    toks_tr = [t for s in range(0, len(data.train), 64) for t in tok.tokenize(data.train[s : s + 64])]
    toks_te = tok.tokenize(data.holdout)
    feats = {
        "prefix": (feature_matrix(toks_tr, fsq), feature_matrix(toks_te, fsq)),
        "meanpool": (mean_pool_features(tok, data.train), mean_pool_features(tok, data.holdout)),
    }
    rows, acc = [], {}
    chance = float(np.bincount(yte, minlength=len(CLASSES)).max() / len(yte))
    for fname, (xtr, xte) in feats.items():
        for mname, hidden in (("mlp", 128), ("linear", 0)):
            c = train_classifier(xtr, ytr, ClassifierConfig(hidden=hidden, epochs=epochs, prefix_masking=False,
                                                            seed=cfg.seed, n_classes=len(CLASSES)), CLASSES)
            a = c.accuracy(xte, yte)
            acc[f"{fname}/{mname}"] = a
            rows.append({"features": fname, "model": mname, "dim": xtr.shape[1], "train_n": len(xtr),
                         "test_n": len(xte), "accuracy": a, "chance": chance})
    # the search reward: prefix-masked MLP so that any prefix is a valid input
    clf = train_classifier(feats["prefix"][0], ytr, ClassifierConfig(hidden=128, epochs=epochs, seed=cfg.seed,
                                                                     n_classes=len(CLASSES)), CLASSES, fsq.channels)
    clf.save(out / "classifier.ckpt", extra={"tokenizer": str(tokenizer_path)})
    for m in (8, 16, 32, None):
        rows.append({"features": f"prefix@{m or 'full'}", "model": "mlp-masked", "dim": feats["prefix"][0].shape[1], "train_n": len(ytr), "test_n": len(yte),
                     "accuracy": clf.accuracy(feature_matrix(toks_te, fsq, m), yte), "chance": chance})
    write_table(out / "probe.csv", "probe", rows)
    replot(out / "probe.csv", out / "probe.svg")
    return {"accuracy": acc, "chance": chance, "classifier": str(out / "classifier.ckpt")}


# -------------------------------------------------------------------- search


def make_reward(spec: str, tok: Tokenizer, classifier_path=None, steps: int = 20, seed: int = 0):
    kind, _, arg = spec.partition(":")
    if kind == "beta":
        return BetaReward(tok, steps=steps, seed=seed)
    if kind == "class":
        if not classifier_path:
            raise ValueError("class rewards need --classifier")
        clf, _ = PrefixClassifier.load(classifier_path)
        return ClassReward(clf, arg or "all-sheet", tok.cfg.fsq)
    if kind == "external":
        if not arg:
            raise ValueError("external rewards need a command: external:<cmd>")
        return ExternalReward(tok, arg, steps=steps, seed=seed)
    raise ValueError(f"unknown reward {spec!r}")


def cmd_search(cfg: ExperimentConfig, tokenizer_path, ar_path, reward: str, beam: BeamConfig,
               classifier_path=None, prefill: str | None = None, n: int = 1) -> dict:
    """Beam search ``n`` times (seeds cfg.seed + i); ``prefill`` is "<structure file>:<n tokens>"."""
    out = _out(cfg)
    tok, _, _ = Tokenizer.load(tokenizer_path)
    ar, _, _ = ArModel.load(ar_path)
    check_vocab(tok, ar)
    fn = make_reward(reward, tok, classifier_path, seed=cfg.seed)
    pre = ()
    if prefill:
        path, _, keep = prefill.rpartition(":")
        seq = tok.tokenize(read_any(path))
        keep = int(keep)
        if not 0 <= keep <= len(seq):
            raise ValueError(f"prefill of {keep} tokens outside 0..{len(seq)}")
        pre = tuple(int(c) for c in seq.codes[:keep])
    scorer = ArScorer(ar)
    results, trace_rows = [], []
    for i in range(n):
        b = BeamConfig(**{**beam.__dict__, "seed": cfg.seed + i})
        res = beam_search(scorer, fn, b, prefill=pre)
        results.append(res)
        for step, states in enumerate(res.trace):
            for rank, s in enumerate(states):
                trace_rows.append({"step": step + 1, "rank": rank, "length": len(s.prefix), "logp": s.logp,
                                   "reward": s.reward, "score": s.score, "done": s.done})
    seqs = [np.array(r.best.prefix, dtype=np.int64) for r in results]
    toks = [as_tokens(s, tok.cfg.fsq) for s in seqs]
    chains = decode_many(tok, toks, None, cfg.sampler, list(range(n)))
    rows = []
    for i, (t, c, r) in enumerate(zip(toks, chains, results)):
        write_tokens(out / f"search_{i:04d}.tok", t)
        write_coords(out / f"search_{i:04d}.txt", c)
        rows.append(MetricsRow(f"search_{i:04d}", K=len(t), **sse_row(c), length=len(c)))
    write_table(out / "search_trace.csv", "search", trace_rows)
    write_table(out / "search_metrics.csv", "metrics", rows)
    return {"sequences": [s.tolist() for s in seqs], "rewards": [r.best.reward for r in results],
            "sheet": [row.sheet for row in rows], "prefill": list(pre)}


# ------------------------------------------------------------------- metrics


def cmd_metrics(cfg: ExperimentConfig, pred_files, ref_files=None) -> dict:
    """Per-structure SSE and, with references, RMSD/TM (paired by order); Frechet distance of descriptors."""
    out = _out(cfg)
    preds = [read_any(f) for f in pred_files]
    refs = [read_any(f) for f in ref_files] if ref_files else []
    rows = []
    for i, (f, p) in enumerate(zip(pred_files, preds)):
        row = MetricsRow(Path(f).stem, **sse_row(p), length=len(p))
        if refs and i < len(refs) and len(refs[i]) == len(p):
            row.rmsd_A = kabsch_rmsd(p, refs[i]) * NM_TO_ANGSTROM
            row.tm = tm_score(p, refs[i])
        elif refs and i < len(refs):
            row.tm = tm_align(p, refs[i])[0]
        rows.append(row)
    write_table(out / "scores.csv", "metrics", rows)
    summary = {"n": len(rows)}
    if len(preds) >= 2 and len(refs) >= 2:
        summary["frechet"] = frechet_structures(preds, refs)
    (out / "metrics_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# --------------------------------------------------------------------- plots


def replot(csv_path, svg_path=None) -> Path:
    """Regenerate the summary plot of a CSV from the CSV alone."""
    csv_path = Path(csv_path)
    svg_path = Path(svg_path) if svg_path else csv_path.with_suffix(".svg")
    with open(csv_path) as f:
        schema = f.readline().strip().partition("=")[2].partition("/")[0]
    rows = read_table(csv_path, schema)
    if schema == "tokenizer_train":
        ev = [r for r in rows if not math.isnan(_nan(r["heldout_rmsd_A"]))]
        line_plot({"flow loss": ([r["step"] for r in rows], [r["flow"] for r in rows]),
                   "held-out RMSD (A)": ([r["step"] for r in ev], [r["heldout_rmsd_A"] for r in ev])},
                  svg_path, "Tokenizer training", "step", "value")
    elif schema == "ar_train":
        line_plot({"loss": ([r["step"] for r in rows], [r["loss"] for r in rows]),
                   "accuracy": ([r["step"] for r in rows], [r["accuracy"] for r in rows])},
                  svg_path, "AR training", "step", "value")
    elif schema == "sweep_summary":
        num = [r for r in rows if r["k"] != "full"]
        line_plot({"RMSD (A)": ([r["k"] for r in num], [r["rmsd_A_mean"] for r in num]),
                   "TM": ([r["k"] for r in num], [r["tm_mean"] for r in num])},
                  svg_path, "Reconstruction vs tokens", "tokens k", "value", logx=True)
    elif schema == "probe":
        bar_plot({f"{r['features']}/{r['model']}": r["accuracy"] for r in rows}, svg_path, "Probe accuracy",
                 "accuracy", ymax=1.0)
    elif schema == "shrink":
        fr = sorted({r["fraction"] for r in rows}, reverse=True)
        bar_plot({f"{f:g}": float(np.mean([r["tm_to_original"] for r in rows if r["fraction"] == f])) for f in fr},
                 svg_path, "Shrinking: TM to original", "TM", ymax=1.0)
    elif schema == "entropy":
        line_plot({"entropy": ([r["step"] for r in rows], [r["entropy"] for r in rows])}, svg_path,
                  "Next-token entropy", "step", "nats")
    elif schema == "metrics":
        bar_plot({k: float(np.nanmean([r[k] for r in rows])) for k in ("helix", "sheet", "coil")}, svg_path,
                 "Secondary structure", "fraction", ymax=1.0)
    elif schema == "search":
        steps = sorted({r["step"] for r in rows})
        line_plot({"best score": (steps, [max(r["score"] for r in rows if r["step"] == s) for s in steps]),
                   "best reward": (steps, [max(r["reward"] for r in rows if r["step"] == s) for s in steps])},
                  svg_path, "Beam search", "step", "value")
    else:
        raise ValueError(f"no plot for schema {schema!r}")
    return svg_path
