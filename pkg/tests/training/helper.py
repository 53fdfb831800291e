#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from typing import List, Sequence, Tuple

import numpy as np

from reslstm.model import ModelParams
from reslstm.trainer import target_length


def mask_steps(batch: Sequence[Tuple[Sequence[int], Sequence[int]]]) -> Tuple[int, int]:
    """Encoder and decoder step counts of a batch, as the training loop computes them."""
    return (
        max(len(source) for source, _ in batch) + 1,
        max(target_length(target) for _, target in batch) + 1,
    )


def arrays(params: ModelParams) -> List[np.ndarray]:
    return [array for _, array in params.named_tensors()]


def assert_models_equal(a: ModelParams, b: ModelParams) -> None:
    for x, y in zip(arrays(a), arrays(b)):
        np.testing.assert_array_equal(x, y)
