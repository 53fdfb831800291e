#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from typing import List, Optional, Sequence

import numpy as np

from reslstm.lstm import LstmParams, LstmState, lstm_forward
from reslstm.model import RESERVED, StackConfig, stack_forward
from reslstm.tensor import Rng


def random_tokens(rng: Rng, vocab_size: int, length: int) -> List[int]:
    """Returns ``length`` random content token indices."""
    return [len(RESERVED) + int(t) for t in rng.integers(vocab_size - len(RESERVED), length)]


def lstm_loss(
    params: LstmParams,
    xs: np.ndarray,
    init: LstmState,
    weights: np.ndarray,
    cell_weights: np.ndarray,
    step_mask: Optional[np.ndarray] = None,
) -> float:
    """Linear functional of the hidden trajectory and the final cell state."""
    states, _ = lstm_forward(params, xs, init, step_mask)
    h = np.stack([state.h for state in states])
    return float(np.sum(weights * h) + np.sum(cell_weights * states[-1].c))


def stack_loss(
    layers: Sequence[LstmParams],
    config: StackConfig,
    xs: np.ndarray,
    init: Sequence[LstmState],
    weights: np.ndarray,
    masks: Optional[Sequence[Optional[np.ndarray]]] = None,
    step_mask: Optional[np.ndarray] = None,
) -> float:
    """Linear functional of the top output sequence and every final hidden state."""
    top, tape = stack_forward(layers, config, xs, init, masks, step_mask)
    return float(np.sum(weights * top) + sum(np.sum(state.h) for state in tape.final_states))
