#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

from typing import List

#: Flags of a model small enough to train within a second.
SMALL_TRAIN_FLAGS: List[str] = [
    "--layers", "2",
    "--residual-every", "2",
    "--hidden", "8",
    "--epochs", "1",
    "--batch-size", "8",
    "--dropout-keep", "1.0",
    "--precision", "float64",
    "--lr", "0.5",
    "--seed", "4",
]  # fmt: skip
