#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from typing import Iterator

import pytest

from reslstm.lstm import LstmParams, init_lstm_params
from reslstm.model import ModelParams, StackConfig, init_model
from reslstm.tensor import Rng, precision


@pytest.fixture(autouse=True)
def double_precision() -> Iterator[None]:
    with precision("float64"):
        yield


@pytest.fixture
def rng() -> Rng:
    return Rng(seed=7)


@pytest.fixture
def small_layer() -> LstmParams:
    return init_lstm_params(input_dim=3, hidden=4, rng=Rng(seed=3), init_scale=0.5)


@pytest.fixture
def tiny_model() -> ModelParams:
    return init_model(
        StackConfig(num_layers=2, residual_interval=2, hidden=8), vocab_size=12, seed=1, init_scale=0.5
    )
