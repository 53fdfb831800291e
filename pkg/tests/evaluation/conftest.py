#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

import math
from typing import Iterator, List

import numpy as np
import pytest

from reslstm.data import Vocabulary, encode_pairs, make_toy_corpus, toy_vocabulary
from reslstm.metrics import EmbeddingTable, EvalInstance
from reslstm.model import ModelParams, StackConfig, init_model
from reslstm.tensor import precision
from reslstm.trainer import TrainConfig, train


@pytest.fixture(autouse=True)
def double_precision() -> Iterator[None]:
    with precision("float64"):
        yield


@pytest.fixture
def corpus() -> List[EvalInstance]:
    """Three instances whose candidates equal their first reference."""
    rows = [
        ("how do i cook rice", "how do i cook rice", "what is the way to cook rice"),
        ("where is the station", "where is the station", "how do i get to the station"),
        ("a man rides a horse", "a man rides a horse", "a person on a horse"),
    ]
    return [
        EvalInstance(source=source.split(), candidate=candidate.split(), references=[candidate.split(), other.split()])
        for source, candidate, other in rows
    ]


@pytest.fixture
def plane() -> EmbeddingTable:
    """Two-dimensional unit vectors with hand-computable cosines."""
    return EmbeddingTable(
        {
            "u": np.array([1.0, 0.0]),
            "v": np.array([0.8, 0.6]),
            "w": np.array([0.2, math.sqrt(0.96)]),
            "y": np.array([0.0, 3.0]),
        }
    )


@pytest.fixture
def toy_vocab() -> Vocabulary:
    return toy_vocabulary(6)


@pytest.fixture
def decoder_model(toy_vocab: Vocabulary) -> ModelParams:
    """Peaked random model over three content tokens."""
    return init_model(
        StackConfig(num_layers=2, residual_interval=2, hidden=6),
        vocab_size=6,
        seed=3,
        init_scale=1.0,
        vocab_hash=toy_vocab.content_hash,
    )


@pytest.fixture
def copy_model(toy_vocab: Vocabulary) -> ModelParams:
    """Model trained for a few epochs on every copy sequence of up to three tokens."""
    pairs, _ = make_toy_corpus("copy", vocab_size=6, max_len=3, count=39, valid_fraction=0.0)
    params = init_model(
        StackConfig(num_layers=2, residual_interval=2, hidden=8),
        vocab_size=6,
        seed=2,
        vocab_hash=toy_vocab.content_hash,
    )
    config = TrainConfig(
        epochs=15, batch_size=8, dropout_keep=1.0, halve_every=10, max_grad_norm=5.0, precision="float64", seed=2
    )
    params, _ = train(params, encode_pairs(pairs, toy_vocab), [], config)
    return params
