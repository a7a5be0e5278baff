"""Behaviour of trained desk-scale models (slow on first run; fixtures are cached)."""

import numpy as np
import pytest
from scipy.stats import wilcoxon
from trained import trained

import adaptok.numerics as N
from adaptok.ar import Sampler, StopRule, kv_generate
from adaptok.geometry import CLASSES, read_coords, tm_score, write_coords
from adaptok.pipeline import class_index, load_dataset, read_table
from adaptok.pipeline.commands import cmd_decode, cmd_encode, cmd_generate
from adaptok.pipeline.evaluate import as_tokens, recon_scores
from adaptok.quantizer import read_tokens
from adaptok.sampler import decode_many
from adaptok.search import (
    ArScorer,
    BeamConfig,
    ClassifierConfig,
    ClassReward,
    beam_search,
    feature_matrix,
    reward_beta,
    sheet_fraction,
    train_classifier,
)

pytestmark = pytest.mark.slow


@pytest.fixture(autouse=True)
def _clean_tape():
    N.TAPE.clear()
    yield
    N.TAPE.clear()


@pytest.fixture(scope="module")
def desk():
    model, cfg, _ = trained("desk")
    return model, cfg, load_dataset(cfg.data)


@pytest.fixture(scope="module")
def prior():
    return trained("ar")


@pytest.fixture(scope="module")
def masked_classifier(desk):
    model, _, data = desk
    tr = [t for s in range(0, len(data.train), 64) for t in model.tokenize(data.train[s : s + 64])]
    clf = train_classifier(feature_matrix(tr, model.cfg.fsq), class_index(data.train_labels),
                           ClassifierConfig(hidden=128, epochs=300, seed=0), CLASSES, model.cfg.fsq.channels)
    return clf, model.tokenize(data.holdout), class_index(data.holdout_labels)


def test_cli_roundtrip_of_training_chain(tmp_path):
    model, cfg, out = trained("overfit")
    chain = load_dataset(cfg.data).train[3]
    write_coords(tmp_path / "chain.txt", chain)
    cfg.out = str(tmp_path / "out")
    tok_path = out / "tokenizer.ckpt"
    (tok_file,) = cmd_encode(cfg, tok_path, [tmp_path / "chain.txt"])
    assert len(read_tokens(tok_file)) == len(chain)
    (rec_file,) = cmd_decode(cfg, tok_path, [tok_file])
    assert tm_score(read_coords(rec_file), chain) > 0.9
    (one,) = cmd_decode(cfg, tok_path, [tok_file], k=1)
    assert read_coords(one).shape[1] == 3


def test_tokenizer_training_logs_heldout_rmsd():
    out = trained("desk")[2]
    rows = read_table(out / "tokenizer_loss.csv", "tokenizer_train")
    ev = [r for r in rows if r["heldout_rmsd_A"] == r["heldout_rmsd_A"]]
    assert [r["step"] for r in ev] == list(range(1000, 6001, 1000))
    assert ev[-1]["heldout_rmsd_A"] < ev[0]["heldout_rmsd_A"]


def test_fewer_tokens_never_reconstruct_better(desk):
    model, cfg, data = desk
    rows = recon_scores(model, data.holdout[:32], [16, "full"], cfg.sampler)
    r16 = np.mean([r["rmsd_A"] for r in rows if r["k"] == 16])
    rfull = np.mean([r["rmsd_A"] for r in rows if r["k"] == "full"])
    assert r16 >= rfull


def test_beta_reward_tracks_generator_labels(desk):
    model, _, data = desk
    first = {lab: c for c, lab in reversed(list(zip(data.holdout, data.holdout_labels)))}
    sheet, failed = reward_beta(model, model.tokenize(first["all-sheet"]).codes, steps=20, seed=0)
    assert not failed and sheet > 0.5
    helix, _ = reward_beta(model, model.tokenize(first["all-helix"]).codes, steps=20, seed=0)
    assert helix < 0.2


def test_prefix_classifier_accuracy(masked_classifier):
    clf, toks, y = masked_classifier
    fsq = toks[0].cfg
    full = clf.accuracy(feature_matrix(toks, fsq), y)
    at16 = clf.accuracy(feature_matrix(toks, fsq, 16), y)
    assert full > 0.70
    assert at16 <= full + 0.05


def test_generate_many(prior, tmp_path):
    ar, cfg, out = prior
    cfg.out = str(tmp_path)
    cfg.stop = "spline"
    s = cmd_generate(cfg, trained("desk")[2] / "tokenizer.ckpt", out / "ar.ckpt", 64)
    rows = read_table(tmp_path / "metrics.csv", "metrics")
    assert len(rows) == 64 and s["n"] == 64
    assert len(list(tmp_path.glob("gen_*_entropy.csv"))) == 64
    assert all(1 <= r["K"] <= 64 for r in rows)


def test_class_reward_beam_raises_sheet_fraction(desk, prior, masked_classifier):
    model, cfg, _ = desk
    ar = prior[0]
    reward = ClassReward(masked_classifier[0], "all-sheet", model.cfg.fsq)
    scorer = ArScorer(ar)
    n = 50
    searched = [beam_search(scorer, reward, BeamConfig(width=4, fanout=8, max_len=16, lam=1.0, expansion="sample",
                                                       seed=i)).best.prefix for i in range(n)]
    fsq = model.cfg.fsq
    plain = [g.tokens for g in kv_generate(ar, StopRule("fixed", 16), Sampler("minp", 0.1), 1.0, seed=0, n=n, fsq=fsq)]
    a = decode_many(model, [as_tokens(s, fsq) for s in searched], None, cfg.sampler, list(range(n)))
    b = decode_many(model, plain, None, cfg.sampler, list(range(n)))
    sa, sb = np.array([sheet_fraction(c) for c in a]), np.array([sheet_fraction(c) for c in b])
    print(f"sheet fraction: beam {sa.mean():.3f} vs unconditional {sb.mean():.3f}")
    assert sa.mean() > sb.mean()
    assert wilcoxon(sa, sb, alternative="greater").pvalue < 0.05
