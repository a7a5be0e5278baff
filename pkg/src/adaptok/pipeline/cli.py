"""``adaptok`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..ar import StopRule
from ..search import BeamConfig
from . import commands as C
from .config import ExperimentConfig


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment JSON (defaults: desk-scale configuration)")
    common.add_argument("--seed", type=int, help="global seed, propagated to every component")
    common.add_argument("--out", help="output directory")
    common.add_argument("--steps", type=int, help="override the training steps of the command being run")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="adaptok", description="Adaptive-length protein backbone tokenizer toolkit",
                                parents=[common])
    sub = p.add_subparsers(dest="cmd", required=True)

    def command(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    s = command("train-tokenizer", "train the diffusion autoencoder")
    s.add_argument("--resume", action="store_true")
    s.add_argument("--until", type=int, help="stop at this step (resumable)")

    s = command("train-ar", "train the autoregressive prior on cached tokens")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--until", type=int, help="stop at this step (resumable)")

    s = command("encode", "structure files -> .tok files")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("files", nargs="+")

    s = command("decode", ".tok files -> coordinates, or a reconstruction sweep")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--k", type=int, help="keep only the first k tokens")
    s.add_argument("--force-size", type=int, help="decode at this many residues")
    s.add_argument("--sweep", action="store_true", help="reconstruction RMSD/TM for k in 4..128 (structure files "
                                                        "or the held-out split)")
    s.add_argument("files", nargs="*")

    s = command("generate", "sample token sequences from the prior and decode them")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--ar", required=True)
    s.add_argument("-n", type=int, default=8)
    s.add_argument("--stop", help="fixed:<n> | finite:<cutoff> | spline[:<rescale>]")
    s.add_argument("--sampler", help="minp:<p> | nucleus:<p>")
    s.add_argument("--temperature", type=float)

    s = command("shrink", "decode each structure at 100/90/80%% of its length")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--fractions", default="1.0,0.9,0.8")
    s.add_argument("files", nargs="+")

    s = command("probe", "fold-class probes on token prefixes vs mean-pooled latents")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--epochs", type=int, default=300)

    s = command("search", "reward-guided beam search")
    s.add_argument("--tokenizer", required=True)
    s.add_argument("--ar", required=True)
    s.add_argument("--reward", required=True, help="beta | class:<label> | external:<command with {path}>")
    s.add_argument("--classifier")
    s.add_argument("--beam", type=int, default=4)
    s.add_argument("--fanout", type=int, default=8)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--max-len", type=int, default=16)
    s.add_argument("--scoring", choices=("step", "cumulative"), default="step")
    s.add_argument("--expansion", choices=("top", "sample"), default="top")
    s.add_argument("--full-expansion", action="store_true")
    s.add_argument("--stop", help="fixed:<n> | finite:<cutoff>")
    s.add_argument("--prefill", help="<structure file>:<tokens to keep>")
    s.add_argument("-n", type=int, default=1)

    s = command("metrics", "score structures (optionally against references)")
    s.add_argument("--ref", nargs="*", default=[])
    s.add_argument("files", nargs="+")

    s = command("plot", "regenerate a figure from one of the CSV outputs")
    s.add_argument("csv")
    s.add_argument("--svg")
    return p


def _config(a) -> ExperimentConfig:
    for k in ("config", "seed", "out", "steps"):
        setattr(a, k, getattr(a, k, None))
    cfg = ExperimentConfig.load(a.config) if a.config else ExperimentConfig()
    if a.seed is not None:
        cfg = cfg.with_seed(a.seed)
    if a.out:
        cfg.out = a.out
    if a.steps is not None:
        cfg.tokenizer_train.steps = a.steps
        cfg.ar_train.steps = a.steps
    return cfg


def run(argv=None) -> dict:
    a = _parser().parse_args(argv)
    level = logging.INFO if getattr(a, "verbose", False) else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    cfg = _config(a)
    if a.cmd == "train-tokenizer":
        return C.cmd_train_tokenizer(cfg, resume=a.resume, until=a.until)
    if a.cmd == "train-ar":
        return C.cmd_train_ar(cfg, a.tokenizer, resume=a.resume, until=a.until)
    if a.cmd == "encode":
        return {"written": [str(p) for p in C.cmd_encode(cfg, a.tokenizer, a.files)]}
    if a.cmd == "decode":
        if a.sweep:
            return C.cmd_sweep(cfg, a.tokenizer, a.files or None)
        if not a.files:
            raise ValueError("decode needs .tok files (or --sweep)")
        return {"written": [str(p) for p in C.cmd_decode(cfg, a.tokenizer, a.files, a.k, a.force_size)]}
    if a.cmd == "generate":
        if a.stop:
            cfg.stop = str(StopRule.parse(a.stop))
        if a.sampler:
            cfg.sampling = a.sampler
        if a.temperature is not None:
            cfg.temperature = a.temperature
        return C.cmd_generate(cfg, a.tokenizer, a.ar, a.n)
    if a.cmd == "shrink":
        return C.cmd_shrink(cfg, a.tokenizer, a.files, tuple(float(f) for f in a.fractions.split(",")))
    if a.cmd == "probe":
        return C.cmd_probe(cfg, a.tokenizer, a.epochs)
    if a.cmd == "search":
        beam = BeamConfig(width=a.beam, fanout=a.fanout, max_len=a.max_len, lam=a.lam, scoring=a.scoring,
                          full_expansion=a.full_expansion, stop=a.stop, expansion=a.expansion, seed=cfg.seed)
        return C.cmd_search(cfg, a.tokenizer, a.ar, a.reward, beam, a.classifier, a.prefill, a.n)
    if a.cmd == "metrics":
        return C.cmd_metrics(cfg, a.files, a.ref)
    if a.cmd == "plot":
        return {"svg": str(C.replot(a.csv, a.svg))}
    raise AssertionError(a.cmd)


def main(argv=None) -> int:
    try:
        res = run(argv)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"adaptok: error: {e}", file=sys.stderr)
        return 2
    print(json.dumps(res, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
