#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Module that checks the configuration layer and the ``reslstm`` subcommands end to end."""

from dataclasses import asdict
from pathlib import Path

import pytest

import reslstm.trainer as trainer
from reslstm.cli import RunConfig, main, parse_config_text, resolve_config
from reslstm.exceptions import ReslstmException
from reslstm.model import load_checkpoint

from .helper import SMALL_TRAIN_FLAGS


@pytest.mark.cli
def test_parse_config_text() -> None:
    """Checks comments, dashed keys, booleans, ``none`` and type errors."""
    values = parse_config_text("# model\nhidden = 64\nresidual-interval=0  # plain\n\nreverse_source=yes\nmax_steps=none\n")
    assert values == {"hidden": 64, "residual_interval": 0, "reverse_source": True, "max_steps": None}
    assert parse_config_text("init_scale=0.1\ninit_scale=0.2") == {"init_scale": 0.2}
    with pytest.raises(ReslstmException.ConfigurationError, match="unknown configuration key"):
        parse_config_text("learning_rate=1")
    with pytest.raises(ReslstmException.ConfigurationError, match="expected key=value"):
        parse_config_text("hidden 64")
    with pytest.raises(ReslstmException.ConfigurationError, match="expected int"):
        parse_config_text("hidden=large")
    with pytest.raises(ReslstmException.ConfigurationError, match="boolean"):
        parse_config_text("allow_unk=maybe")


@pytest.mark.cli
def test_config_text_round_trip() -> None:
    """Checks that the written configuration reads back unchanged."""
    config = RunConfig(hidden=32, max_grad_norm=5.0, length_normalize=True, dim_fix="clip")
    assert parse_config_text(config.to_text()) == asdict(config)
    assert parse_config_text(RunConfig().to_text()) == asdict(RunConfig())


@pytest.mark.cli
def test_resolve_config_precedence(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Checks defaults < configuration file < command-line flags."""
    path = tmp_path / "run.cfg"
    path.write_text("hidden=64\nepochs=3\n", encoding="utf-8")
    config = resolve_config(str(path), {"epochs": 7, "seed": None})
    assert (config.hidden, config.epochs, config.seed, config.num_layers) == (64, 7, 1, 4)

    monkeypatch.setenv("RESLSTM_CONFIG", str(path))
    assert resolve_config().hidden == 64

    with pytest.raises(ReslstmException.ConfigurationError):
        resolve_config(overrides={"dropout_keep": 1.5})
    with pytest.raises(ReslstmException.ConfigurationError):
        resolve_config(overrides={"num_layers": 2, "residual_interval": 3})
    with pytest.raises(ReslstmException.ArgumentError):
        resolve_config(overrides={"beam_size": 0})


@pytest.mark.cli
@pytest.mark.parametrize(
    "argv",
    [[], ["--bogus"], ["train"], ["train", "a.tsv", "out", "--hidden", "many"], ["make-toy", "out", "--kind", "reverse"]],
)
def test_usage_errors(argv: list) -> None:
    """Checks that malformed command lines exit with status 1."""
    assert main(argv) == 1


@pytest.mark.cli
def test_help() -> None:
    """Checks that ``--help`` exits successfully."""
    assert main(["--help"]) == 0


@pytest.mark.cli
def test_make_toy(toy_dir: Path) -> None:
    """Checks the files written for a toy corpus."""
    train_lines = (toy_dir / "train.tsv").read_text(encoding="utf-8").splitlines()
    valid_lines = (toy_dir / "valid.tsv").read_text(encoding="utf-8").splitlines()
    sources = (toy_dir / "sources.txt").read_text(encoding="utf-8").splitlines()
    assert len(train_lines) == 54 and len(valid_lines) == 6
    assert sources == [line.split("\t")[0] for line in valid_lines]
    assert all(line.split("\t")[0] == line.split("\t")[1] for line in train_lines)


@pytest.mark.cli
def test_train_writes_run_directory(trained_run: Path) -> None:
    """Checks the model, vocabulary, configuration, curves and epoch checkpoints of a run."""
    for name in ("model.ckpt", "vocab.txt", "config.txt", "curves.csv"):
        assert (trained_run / name).is_file()
    assert (trained_run / "checkpoints" / "last.ckpt").is_file()
    assert "hidden=8\n" in (trained_run / "config.txt").read_text(encoding="utf-8")
    assert (trained_run / "curves.csv").read_text(encoding="utf-8").startswith("epoch,split,perplexity,lr,seconds")

    vocab_lines = (trained_run / "vocab.txt").read_text(encoding="utf-8").splitlines()
    params = load_checkpoint(str(trained_run / "model.ckpt"))
    assert params.vocab_size == len(vocab_lines) + 3
    assert (params.config.num_layers, params.config.hidden) == (2, 8)


@pytest.mark.cli
def test_training_is_deterministic(toy_dir: Path, trained_run: Path, tmp_path: Path) -> None:
    """Checks that the same command line writes the same model bytes."""
    again = tmp_path / "again"
    assert main(["train", str(toy_dir / "train.tsv"), str(toy_dir / "valid.tsv"), str(again)] + SMALL_TRAIN_FLAGS) == 0
    assert (again / "model.ckpt").read_bytes() == (trained_run / "model.ckpt").read_bytes()


@pytest.mark.cli
def test_train_with_config_file(toy_dir: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Checks that a configuration file is applied and an unknown key rejected."""
    config = tmp_path / "small.cfg"
    config.write_text(
        "num_layers=1\nresidual_interval=0\nhidden=6\nepochs=1\nbatch_size=16\ndropout_keep=1.0\nprecision=float64\n",
        encoding="utf-8",
    )
    run = tmp_path / "cfg-run"
    assert main(["train", str(toy_dir / "train.tsv"), str(run), "--config", str(config)]) == 0
    params = load_checkpoint(str(run / "model.ckpt"))
    assert (params.config.num_layers, params.config.residual_interval, params.config.hidden) == (1, 0, 6)

    config.write_text("hidden=6\nmomentum=0.9\n", encoding="utf-8")
    monkeypatch.setenv("RESLSTM_CONFIG", str(config))
    assert main(["train", str(toy_dir / "train.tsv"), str(tmp_path / "never")]) == 1
    assert not (tmp_path / "never").exists()


@pytest.mark.cli
def test_train_data_errors(tmp_path: Path) -> None:
    """Checks the data error status for missing and empty training files."""
    assert main(["train", str(tmp_path / "missing.tsv"), str(tmp_path / "out")]) == 2
    empty = tmp_path / "empty.tsv"
    empty.write_text("only one field\n", encoding="utf-8")
    assert main(["train", str(empty), str(tmp_path / "out")] + SMALL_TRAIN_FLAGS) == 2


@pytest.mark.cli
def test_generate(trained_run: Path, toy_dir: Path, tmp_path: Path) -> None:
    """Checks the ranked paraphrase rows, ``--top-k`` and empty input."""
    out = tmp_path / "paraphrases.tsv"
    argv = ["generate", "--checkpoint", str(trained_run / "model.ckpt"), "--beam", "3"]
    assert main(argv + ["--input", str(toy_dir / "sources.txt"), "--output", str(out), "--top-k", "2"]) == 0
    rows = [line.split("\t") for line in out.read_text(encoding="utf-8").splitlines()]
    sources = (toy_dir / "sources.txt").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 2 * len(sources)
    assert [row[0] for row in rows[::2]] == sources
    assert [row[1] for row in rows] == ["1", "2"] * len(sources)
    assert all(len(row) == 4 and float(row[2]) <= 0.0 for row in rows)

    empty = tmp_path / "empty.txt"
    empty.write_text("", encoding="utf-8")
    assert main(argv + ["--input", str(empty), "--output", str(out)]) == 0
    assert out.read_text(encoding="utf-8") == ""


@pytest.mark.cli
def test_generate_with_foreign_vocabulary(trained_run: Path, toy_dir: Path, tmp_path: Path) -> None:
    """Checks that a vocabulary of the right size but other content is refused."""
    size = len((trained_run / "vocab.txt").read_text(encoding="utf-8").splitlines())
    foreign = tmp_path / "foreign.txt"
    foreign.write_text("".join(f"other{i}\n" for i in range(size)), encoding="utf-8")
    argv = ["generate", "--checkpoint", str(trained_run / "model.ckpt"), "--input", str(toy_dir / "sources.txt")]
    assert main(argv + ["--vocab", str(foreign)]) == 2
    assert main(["generate", "--checkpoint", str(tmp_path / "missing.ckpt")]) == 2


@pytest.mark.cli
def test_evaluate(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Checks the evaluation report on identical files, a comparison and misaligned input."""
    candidates = tmp_path / "cand.txt"
    references = tmp_path / "ref.txt"
    other = tmp_path / "other.txt"
    candidates.write_text("a b c d\ne f g h\n", encoding="utf-8")
    references.write_text("a b c d\ne f g h\n", encoding="utf-8")
    other.write_text("a b x d\ne y g h\n", encoding="utf-8")

    argv = ["evaluate", str(candidates), "--references", str(references), "--resamples", "10"]
    assert main(argv + ["--key-values"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "bleu=100.0" in lines and "ter=0.0" in lines and "instances=2" in lines

    assert main(argv + ["--compare", str(other), "--key-values"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert any(line.startswith("p_value.bleu=") for line in lines)
    assert any(line.startswith("significant.ter=") for line in lines)

    assert main(argv) == 0
    assert "BLEU" in capsys.readouterr().out

    references.write_text("a b c d\n", encoding="utf-8")
    assert main(argv) == 2
    references.write_text("a b c d\ne f g h\n", encoding="utf-8")
    assert main(argv + ["--embeddings", str(tmp_path / "missing.vec")]) == 2
    assert main(argv + ["--checkpoint", str(tmp_path / "model.ckpt")]) == 1


@pytest.mark.cli
def test_evaluate_perplexity(trained_run: Path, toy_dir: Path, capsys: pytest.CaptureFixture) -> None:
    """Checks the perplexity line of a trained model on its validation pairs."""
    valid = toy_dir / "valid.tsv"
    sides = [line.split("\t") for line in valid.read_text(encoding="utf-8").splitlines()]
    sources = toy_dir / "eval-sources.txt"
    references = toy_dir / "eval-refs.txt"
    sources.write_text("".join(source + "\n" for source, _ in sides), encoding="utf-8")
    references.write_text("".join(reference + "\n" for _, reference in sides), encoding="utf-8")

    argv = [
        "evaluate", str(references),
        "--references", str(references),
        "--sources", str(sources),
        "--checkpoint", str(trained_run / "model.ckpt"),
        "--resamples", "0",
        "--key-values",
    ]  # fmt: skip
    assert main(argv) == 0
    perplexity = [line for line in capsys.readouterr().out.splitlines() if line.startswith("perplexity=")]
    assert len(perplexity) == 1
    assert 1.0 <= float(perplexity[0].split("=")[1]) <= 12.0


@pytest.mark.cli
def test_gradcheck(capsys: pytest.CaptureFixture) -> None:
    """
    Checks that intact gradients pass, that the single layer is reported
    before the model and that a corrupted backward pass is caught.
    """
    assert main(["gradcheck", "--seeds", "1"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names[:3] == ["lstm.W_x", "lstm.W_h", "lstm.b"]
    assert len(names) > 3
    assert main(["gradcheck", "--seeds", "1", "--corrupt-backward", "2.0"]) == 3


@pytest.mark.cli
def test_train_divergence_exit_status(
    toy_dir: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture
) -> None:
    """Checks the numerical exit status and the named checkpoint when training diverges in epoch two."""
    run = tmp_path / "diverging"
    first = run / "checkpoints" / "epoch-000.ckpt"
    sharded_sums = trainer._sharded_sums

    def nan_once_checkpointed(*args, **kwargs):
        nll, count, grads = sharded_sums(*args, **kwargs)
        return (float("nan") if first.exists() else nll), count, grads

    monkeypatch.setattr(trainer, "_sharded_sums", nan_once_checkpointed)
    argv = ["train", str(toy_dir / "train.tsv"), str(toy_dir / "valid.tsv"), str(run)]
    assert main(argv + SMALL_TRAIN_FLAGS + ["--epochs", "3"]) == 3
    assert str(first) in capsys.readouterr().err
    assert load_checkpoint(str(first)).config.hidden == 8
    assert not (run / "model.ckpt").exists()
    assert not (run / "checkpoints" / "epoch-001.ckpt").exists()
