#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from typing import Iterator, List, Tuple

import pytest

from reslstm.data import encode_pairs, make_toy_corpus, toy_vocabulary
from reslstm.model import ModelParams, StackConfig, init_model
from reslstm.tensor import precision

Pairs = List[Tuple[List[int], List[int]]]


@pytest.fixture(autouse=True)
def double_precision() -> Iterator[None]:
    with precision("float64"):
        yield


@pytest.fixture
def copy_pairs() -> Tuple[Pairs, Pairs]:
    """Encoded copy task: vocabulary of 12, sources up to 4 tokens."""
    train, valid = make_toy_corpus("copy", vocab_size=12, max_len=4, count=60, seed=3, valid_fraction=0.2)
    vocab = toy_vocabulary(12)
    return encode_pairs(train, vocab), encode_pairs(valid, vocab)


@pytest.fixture
def small_model() -> ModelParams:
    return init_model(
        StackConfig(num_layers=2, residual_interval=2, hidden=8), vocab_size=12, seed=1, init_scale=0.3
    )


@pytest.fixture
def grad_model() -> ModelParams:
    """Model small enough for finite differences over every parameter."""
    return init_model(
        StackConfig(num_layers=2, residual_interval=1, hidden=4), vocab_size=8, seed=2, init_scale=0.5
    )
