import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

import adaptok.numerics as N
from adaptok.ar import ArConfig, ArModel, ArTrainConfig
from adaptok.geometry import read_coords, synth_chain, write_coords
from adaptok.pipeline import DataSpec, ExperimentConfig, read_table, write_table
from adaptok.pipeline.cli import main
from adaptok.pipeline.commands import SWEEP_KS, check_vocab, replot
from adaptok.quantizer import read_tokens
from adaptok.sampler import SamplerConfig
from adaptok.tokenizer import DecoderConfig, EncoderConfig, Tokenizer, TokenizerConfig, TrainConfig


@pytest.fixture(autouse=True)
def _clean_tape():
    N.TAPE.clear()
    yield
    N.TAPE.clear()


def tiny_config(out) -> ExperimentConfig:
    return ExperimentConfig(
        tokenizer=TokenizerConfig(encoder=EncoderConfig(1, 16, 2), decoder=DecoderConfig(layers=1, channels=16, heads=2),
                                  rotate=False),
        tokenizer_train=TrainConfig(steps=10, batch_size=4, warmup=2, log_every=0),
        ar=ArConfig(layers=1, channels=16, heads=2),
        ar_train=ArTrainConfig(steps=10, batch_size=8, warmup=2, log_every=0),
        sampler=SamplerConfig(steps=4),
        data=DataSpec(n=24, holdout=6, min_len=20, max_len=30),
        out=str(out), eval_every=5, eval_chains=2)


def digest(paths) -> dict:
    return {str(p): hashlib.sha1(Path(p).read_bytes()).hexdigest() for p in paths}


def run_all(root: Path, seed: int = 0) -> Path:
    """Every subcommand once, on a tiny configuration."""
    root.mkdir(parents=True, exist_ok=True)
    conf = root / "tiny.json"
    tiny_config(root / "run").save(conf)
    inputs = []
    for i, kind in enumerate(["all-helix", "all-sheet"]):
        p = root / f"x{i}.txt"
        write_coords(p, synth_chain(kind, 24, np.random.default_rng(i)))
        inputs.append(p)
    before = digest(inputs)
    g = ["--config", str(conf), "--seed", str(seed)]
    run, tok, ar = root / "run", str(root / "run" / "tokenizer.ckpt"), str(root / "run" / "ar.ckpt")
    x0, x1 = map(str, inputs)
    for argv in (
        ["train-tokenizer"],
        ["train-ar", "--tokenizer", tok],
        ["encode", "--tokenizer", tok, x0, x1],
        ["decode", "--tokenizer", tok, "--k", "4", str(run / "x0.tok")],
        ["decode", "--tokenizer", tok, "--sweep"],
        ["generate", "--tokenizer", tok, "--ar", ar, "-n", "3", "--stop", "spline"],
        ["shrink", "--tokenizer", tok, x0],
        ["probe", "--tokenizer", tok, "--epochs", "5"],
        ["search", "--tokenizer", tok, "--ar", ar, "--reward", "class:all-sheet", "--classifier",
         str(run / "classifier.ckpt"), "--max-len", "4", "--prefill", f"{x0}:2", "-n", "2"],
        ["metrics", str(run / "gen_0000.txt"), str(run / "gen_0001.txt"), "--ref", x0, x1],
    ):
        assert main(g + argv) == 0, argv
    assert digest(inputs) == before
    return run


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    return run_all(root / "a"), run_all(root / "b")


def test_all_commands_write_outputs(runs):
    run = runs[0]
    for name in ["tokenizer.ckpt", "ar.ckpt", "tokenizer_loss.csv", "ar_loss.csv", "x0.tok", "x0.txt", "sweep.csv",
                 "sweep_summary.csv", "metrics.csv", "gen_0000_entropy.csv", "entropy.svg", "shrink.csv",
                 "probe.csv", "probe.svg", "classifier.ckpt", "search_trace.csv", "search_0001.txt",
                 "generate_summary.json", "metrics_summary.json", "scores.csv"]:
        assert (run / name).exists(), name
    summary = read_table(run / "sweep_summary.csv", "sweep_summary")
    assert [r["k"] for r in summary] == list(SWEEP_KS)
    assert all(r["n"] == 6 for r in summary)
    ar = read_table(run / "ar_loss.csv", "ar_train")
    assert len(ar) == 10 and all(0 <= r["accuracy"] <= 1 for r in ar)
    tl = read_table(run / "tokenizer_loss.csv", "tokenizer_train")
    assert [r["step"] for r in tl if not np.isnan(r["heldout_rmsd_A"])] == [5, 10]


def test_generate_outputs_consistent(runs):
    run = runs[0]
    rows = read_table(run / "metrics.csv", "metrics")
    assert len(rows) == 3
    for i, r in enumerate(rows):
        toks = read_tokens(run / f"gen_{i:04d}.tok")
        assert r["K"] == len(toks)
        assert r["length"] == len(read_coords(run / f"gen_{i:04d}.txt"))
        assert 0 <= r["token_agreement"] <= 1
        ent = read_table(run / f"gen_{i:04d}_entropy.csv", "entropy")
        assert all(e["entropy"] >= 0 for e in ent)
    s = json.loads((run / "generate_summary.json").read_text())
    assert s["n"] == 3 and s["stop"] == "spline"


def test_shrink_hits_target_lengths(runs):
    rows = read_table(runs[0] / "shrink.csv", "shrink")
    assert [r["length"] for r in rows] == [24, 22, 19]
    assert all(r["length"] == r["target_length"] for r in rows)


def test_search_keeps_prefill(runs):
    seed_tokens = read_tokens(runs[0] / "x0.tok").codes[:2]
    for i in range(2):
        assert list(read_tokens(runs[0] / f"search_{i:04d}.tok").codes[:2]) == list(seed_tokens)


def test_same_seed_reproduces_csvs(runs):
    a, b = runs
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs == sorted(p.name for p in b.glob("*.csv"))
    for name in csvs:
        with open(a / name) as f:
            schema = f.readline().split("=")[1].split("/")[0]
        ra, rb = read_table(a / name, schema), read_table(b / name, schema)
        for x, y in zip(ra, rb, strict=True):
            x.pop("wall_s", None)
            y.pop("wall_s", None)
            assert x.keys() == y.keys()
            for k in x:
                assert x[k] == y[k] or (x[k] != x[k] and y[k] != y[k]), (name, k)
    for name in ["x0.tok", "gen_0000.tok", "gen_0002.txt", "search_0000.tok"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_token_cache_hit(runs, capsys):
    run = runs[0]
    conf = run.parent / "tiny.json"
    assert main(["--config", str(conf), "--out", str(run.parent / "again"), "--steps", "2", "train-ar",
                 "--tokenizer", str(run / "tokenizer.ckpt")]) == 0
    assert json.loads(capsys.readouterr().out)["cache_hit"] is False
    assert main(["--config", str(conf), "--out", str(run.parent / "again"), "--steps", "2", "train-ar",
                 "--tokenizer", str(run / "tokenizer.ckpt")]) == 0
    assert json.loads(capsys.readouterr().out)["cache_hit"] is True


def test_resume_matches_uninterrupted(tmp_path):
    from adaptok.pipeline.commands import cmd_train_tokenizer

    full = tiny_config(tmp_path / "full")
    cmd_train_tokenizer(full)
    part = tiny_config(tmp_path / "part")
    cmd_train_tokenizer(part, until=5)
    cmd_train_tokenizer(part, resume=True)
    ma, _, _ = Tokenizer.load(tmp_path / "full" / "tokenizer.ckpt")
    mb, _, _ = Tokenizer.load(tmp_path / "part" / "tokenizer.ckpt")
    for p, q in zip(ma.parameters(), mb.parameters()):
        np.testing.assert_allclose(p.data, q.data, atol=1e-6)
    ra = read_table(tmp_path / "full" / "tokenizer_loss.csv")
    rb = read_table(tmp_path / "part" / "tokenizer_loss.csv")
    assert [r["step"] for r in rb] == list(range(1, 11))
    np.testing.assert_allclose([r["flow"] for r in ra], [r["flow"] for r in rb], rtol=1e-5)


def test_vocab_mismatch_is_an_error():
    tok = Tokenizer(tiny_config("x").tokenizer)
    ar = ArModel(ArConfig(layers=1, channels=16, heads=2, k_max=32))
    with pytest.raises(ValueError, match="does not match"):
        check_vocab(tok, ar)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ValueError, match=r"bad.json:3"):
        ExperimentConfig.load(bad)
    bad.write_text('{"sede": 1}')
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.load(bad)


def test_config_roundtrip_and_seed(tmp_path):
    c = tiny_config(tmp_path).with_seed(7)
    c.save(tmp_path / "c.json")
    d = ExperimentConfig.load(tmp_path / "c.json")
    assert d.to_dict() == c.to_dict()
    assert d.tokenizer.seed == d.ar.seed == d.sampler.seed == d.tokenizer_train.seed == 7


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["decode", "--tokenizer", str(tmp_path / "missing.ckpt"), "x.tok"]) == 2
    assert "error" in capsys.readouterr().err


def test_tables_schema_and_replot(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, "ar_train", [{"step": 1, "loss": 2.0, "accuracy": 0.1, "lr": 1e-3, "grad_norm": 1.0}])
    assert p.read_text().startswith("# schema=ar_train/")
    with pytest.raises(ValueError, match="expected schema"):
        read_table(p, "metrics")
    with pytest.raises(KeyError, match="missing columns"):
        write_table(p, "ar_train", [{"step": 1}])
    svg = replot(p)
    assert svg.read_text().startswith("<svg")
