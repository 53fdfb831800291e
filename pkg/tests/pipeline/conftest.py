#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from pathlib import Path

import pytest

from reslstm.cli import main

from .helper import SMALL_TRAIN_FLAGS


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("RESLSTM_CONFIG", raising=False)


@pytest.fixture
def toy_dir(tmp_path: Path) -> Path:
    """Copy task with 5 content tokens, 54 training and 6 validation pairs."""
    out = tmp_path / "toy"
    status = main(
        ["make-toy", str(out), "--kind", "copy", "--vocab-size", "8", "--max-len", "3", "--count", "60", "--seed", "2"]
    )
    assert status == 0
    return out


@pytest.fixture
def trained_run(toy_dir: Path, tmp_path: Path) -> Path:
    run = tmp_path / "run"
    status = main(["train", str(toy_dir / "train.tsv"), str(toy_dir / "valid.tsv"), str(run)] + SMALL_TRAIN_FLAGS)
    assert status == 0
    return run
