#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Module that checks the residual stack and the encoder-decoder assembly."""

import math
from typing import List, Optional, Tuple

import numpy as np
import pytest

from reslstm.exceptions import ReslstmException
from reslstm.lstm import LstmParams, LstmState, init_lstm_params, lstm_forward
from reslstm.model import (
    EOS,
    ModelParams,
    StackConfig,
    assemble,
    decode_step,
    encode,
    encode_batch,
    init_model,
    layer_widths,
    project,
    stack_backward,
    stack_forward,
)
from reslstm.oracles import fd_gradient, relative_error, scalar_decode_step, scalar_encode, scalar_sequence_nll
from reslstm.tensor import Rng

from .helper import random_tokens, stack_loss


def _layers(config: StackConfig, input_dim: int, seed: int = 5, scale: float = 0.5) -> List[LstmParams]:
    rng = Rng(seed)
    return [
        init_lstm_params(width, config.hidden, rng, init_scale=scale)
        for width, _ in layer_widths(config, input_dim)
    ]


def _zero(layer: LstmParams) -> None:
    for _, array in layer.named_tensors():
        array[:] = 0.0


@pytest.mark.nn
@pytest.mark.model
def test_stack_config() -> None:
    """Checks the residual placement, the aliases and the validation."""
    assert StackConfig(num_layers=4, residual_interval=2).residual_layers == (2, 4)
    assert StackConfig(num_layers=4, residual_interval=3).residual_layers == (3,)
    assert StackConfig(num_layers=4, residual_interval=0).residual_layers == ()
    assert StackConfig(num_layers=4, residual_interval=2).residual_source(3) == 2
    assert StackConfig(num_layers=4, residual_interval=2).residual_source(2) is None
    assert StackConfig(dim_fix="pad_input_with_zeros").dim_fix == "pad"
    assert StackConfig(dim_fix="clip_hidden_to_input").dim_fix == "clip"

    for kwargs in ({"num_layers": 0}, {"num_layers": 2, "residual_interval": 3}, {"dim_fix": "crop"}):
        with pytest.raises(ReslstmException.ConfigurationError):
            StackConfig(**kwargs)


@pytest.mark.nn
@pytest.mark.model
def test_residual_identity() -> None:
    """
    Checks that zeroing layers 2 and 4 of a 4-layer stack with residuals
    every 2 layers turns the stack into the identity on its input.
    """
    config = StackConfig(num_layers=4, residual_interval=2, hidden=4)
    layers = _layers(config, input_dim=4)
    _zero(layers[1])
    _zero(layers[3])
    xs = Rng(9).uniform(-1, 1, (6, 4))
    top, _ = stack_forward(layers, config, xs, [LstmState.zeros(4)] * 4)
    np.testing.assert_array_equal(top, xs)


@pytest.mark.nn
@pytest.mark.model
@pytest.mark.parametrize(
    "dim_fix,expected_width",
    [("pad", 5), ("clip", 3)],
)
def test_residual_dimension_fix(dim_fix: str, expected_width: int) -> None:
    """
    Checks both fixes for an input narrower than the hidden state: padding
    appends zeros to the input, clipping truncates the hidden output.
    """
    config = StackConfig(num_layers=2, residual_interval=2, hidden=5, dim_fix=dim_fix)
    layers = _layers(config, input_dim=3)
    _zero(layers[1])
    xs = Rng(9).uniform(-1, 1, (4, 3))
    top, _ = stack_forward(layers, config, xs, [LstmState.zeros(5)] * 2)
    assert top.shape == (4, expected_width)
    np.testing.assert_array_equal(top[:, :3], xs)
    assert not top[:, 3:].any()


@pytest.mark.nn
@pytest.mark.model
def test_plain_stack() -> None:
    """Checks that a stack without residuals equals chained layers."""
    config = StackConfig(num_layers=3, residual_interval=0, hidden=4)
    layers = _layers(config, input_dim=2)
    xs = Rng(1).uniform(-1, 1, (5, 2))
    top, tape = stack_forward(layers, config, xs, [LstmState.zeros(4)] * 3)
    current = xs
    for layer in layers:
        states, _ = lstm_forward(layer, current, LstmState.zeros(4))
        current = np.stack([state.h for state in states])
    np.testing.assert_array_equal(top, current)
    assert len(tape.final_states) == 3


@pytest.mark.nn
@pytest.mark.model
def test_stack_shape_errors() -> None:
    """Checks the layer, state and dropout mask counts."""
    config = StackConfig(num_layers=2, residual_interval=0, hidden=4)
    layers = _layers(config, input_dim=2)
    xs = np.zeros((3, 2))
    with pytest.raises(ReslstmException.ShapeError):
        stack_forward(layers[:1], config, xs, [LstmState.zeros(4)] * 2)
    with pytest.raises(ReslstmException.ShapeError):
        stack_forward(layers, config, xs, [LstmState.zeros(4)] * 2, [None])
    with pytest.raises(ReslstmException.ShapeError):
        stack_forward(layers, config, xs, [LstmState.zeros(4)] * 2, [None, np.ones((3, 5))])


@pytest.mark.nn
@pytest.mark.model
def test_residual_adds_no_parameters() -> None:
    """
    Checks that residual connections with padding keep the parameter count
    of the plain stack and that clipping refuses inputs wider than the
    hidden state.
    """
    residual = init_model(StackConfig(num_layers=4, residual_interval=2, hidden=8), vocab_size=20, seed=1)
    plain = init_model(StackConfig(num_layers=4, residual_interval=0, hidden=8), vocab_size=20, seed=1)
    assert residual.parameter_count() == plain.parameter_count()

    with pytest.raises(ReslstmException.ConfigurationError):
        init_model(StackConfig(num_layers=2, residual_interval=2, hidden=8, dim_fix="clip"), 12, seed=1)
    with pytest.raises(ReslstmException.ConfigurationError):
        init_model(StackConfig(num_layers=2, hidden=8), vocab_size=2, seed=1)


@pytest.mark.nn
@pytest.mark.model
@pytest.mark.parametrize(
    "config,input_dim,tokens",
    [
        (StackConfig(num_layers=3, residual_interval=1, hidden=4), 2, False),
        (StackConfig(num_layers=4, residual_interval=2, hidden=4, dim_fix="clip"), 3, False),
        (StackConfig(num_layers=2, residual_interval=1, hidden=4), 6, True),
    ],
)
def test_stack_backward_matches_finite_differences(config: StackConfig, input_dim: int, tokens: bool) -> None:
    """
    Checks the stack gradients against central differences, with dropout
    masks on every layer, both dimension fixes, token input and a step mask.
    """
    rng = Rng(12)
    layers = _layers(config, input_dim)
    T, B = 4, 2
    step_mask: Optional[np.ndarray] = None
    if tokens:
        xs = rng.integers(input_dim, (T, B))
        step_mask = np.array([[True, True], [True, True], [True, False], [False, False]])
    else:
        xs = rng.uniform(-1, 1, (T, B, input_dim))
    widths = layer_widths(config, input_dim)
    masks = [rng.bernoulli(0.7, (T, B, out)) / 0.7 for _, out in widths]
    init = [LstmState(h=rng.uniform(-0.3, 0.3, (B, config.hidden)), c=np.zeros((B, config.hidden)))] * config.num_layers
    weights = rng.uniform(-1, 1, (T, B, widths[-1][1]))

    _, tape = stack_forward(layers, config, xs, init, masks, step_mask)
    ones = LstmState(h=np.ones((B, config.hidden)), c=np.zeros((B, config.hidden)))
    layer_grads, grad_input, _ = stack_backward(layers, config, tape, weights, [ones] * config.num_layers)

    def loss() -> float:
        return stack_loss(layers, config, xs, init, weights, masks, step_mask)

    tensors = [array for layer in layers for _, array in layer.named_tensors()]
    analytic = [array for grads in layer_grads for _, array in grads.named_tensors()]
    if not tokens:
        tensors.append(xs)
        analytic.append(grad_input)
    else:
        assert grad_input is None
    for a, n in zip(analytic, fd_gradient(loss, tensors)):
        assert relative_error(a, n) < 1e-4


def _with_config(params: ModelParams, config: StackConfig) -> ModelParams:
    return assemble(config, params.vocab_size, [array.copy() for _, array in params.named_tensors()])


@pytest.mark.nn
@pytest.mark.model
def test_encode(tiny_model: ModelParams) -> None:
    """
    Checks the encoder against the scalar evaluation, the empty source and
    the zero model, and that reversing the source equals encoding the
    reversed tokens.
    """
    source = [3, 7, 4, 11]
    states = encode(tiny_model, source)
    assert len(states) == 2
    for state, (h, c) in zip(states, scalar_encode(tiny_model, source)):
        np.testing.assert_allclose(state.h, h, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(state.c, c, rtol=1e-10, atol=1e-12)

    empty = encode(tiny_model, [])
    assert all(state.h.shape == (8,) for state in empty)

    for state in encode(tiny_model.zeros_like(), source):
        assert not state.h.any() and not state.c.any()

    reversed_model = _with_config(
        tiny_model, StackConfig(num_layers=2, residual_interval=2, hidden=8, reverse_source=True)
    )
    for a, b in zip(encode(reversed_model, source), encode(tiny_model, source[::-1])):
        np.testing.assert_array_equal(a.h, b.h)

    with pytest.raises(ReslstmException.DataError):
        encode(tiny_model, [12])


@pytest.mark.nn
@pytest.mark.model
def test_encode_batch_ignores_padding(tiny_model: ModelParams) -> None:
    """Checks that batching with longer sources does not change a source's encoding."""
    sources = [[3], [4, 5, 6, 7, 8], [9, 10]]
    batched, _ = encode_batch(tiny_model, sources)
    for row, source in enumerate(sources):
        for layer, state in enumerate(encode(tiny_model, source)):
            np.testing.assert_allclose(batched[layer].h[row], state.h, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(batched[layer].c[row], state.c, rtol=1e-10, atol=1e-12)


@pytest.mark.nn
@pytest.mark.model
def test_decode_step(tiny_model: ModelParams) -> None:
    """
    Checks that the decoder distribution is normalised, uniform for the
    zero model, and that two steps equal a two-token stack pass.
    """
    logp, _ = decode_step(tiny_model.zeros_like(), EOS, tiny_model.zeros_like().zero_states())
    np.testing.assert_allclose(logp, np.full(12, -math.log(12)))

    states = encode(tiny_model, [5, 6])
    logp_1, after_1 = decode_step(tiny_model, EOS, states)
    logp_2, _ = decode_step(tiny_model, 9, after_1)
    assert math.isclose(float(np.exp(logp_1).sum()), 1.0, rel_tol=1e-12)

    top, _ = stack_forward(tiny_model.decoder_layers, tiny_model.config, np.array([EOS, 9]), states)
    np.testing.assert_allclose(project(tiny_model, top[0]), logp_1, rtol=1e-12)
    np.testing.assert_allclose(project(tiny_model, top[1]), logp_2, rtol=1e-12)

    scalar_logp, _ = scalar_decode_step(tiny_model, EOS, [(s.h.tolist(), s.c.tolist()) for s in states])
    np.testing.assert_allclose(logp_1, scalar_logp, rtol=1e-10)

    with pytest.raises(ReslstmException.DataError):
        decode_step(tiny_model, 12, states)


@pytest.mark.nn
@pytest.mark.model
def test_decode_step_batch(tiny_model: ModelParams) -> None:
    """Checks that a batch of hypotheses advances like the single ones."""
    sources = [[3, 4], [8]]
    batched, _ = encode_batch(tiny_model, sources)
    logp, _ = decode_step(tiny_model, np.array([5, 6]), batched)
    for row, (source, token) in enumerate(zip(sources, (5, 6))):
        single, _ = decode_step(tiny_model, token, encode(tiny_model, source))
        np.testing.assert_allclose(logp[row], single, rtol=1e-10, atol=1e-12)


@pytest.mark.nn
@pytest.mark.model
def test_sequence_likelihood_matches_scalar(tiny_model: ModelParams) -> None:
    """Checks a teacher-forced NLL built from decode steps against the scalar model."""
    rng = Rng(2)
    for _ in range(3):
        source = random_tokens(rng, 12, 4)
        target = random_tokens(rng, 12, 3)
        states = encode(tiny_model, source)
        previous, nll = EOS, 0.0
        for token in target + [EOS]:
            logp, states = decode_step(tiny_model, previous, states)
            nll -= float(logp[token])
            previous = token
        expected, count = scalar_sequence_nll(tiny_model, source, target)
        assert count == 4
        assert math.isclose(nll, expected, rel_tol=1e-10)


@pytest.mark.nn
@pytest.mark.model
def test_model_tensors(tiny_model: ModelParams) -> None:
    """Checks the tensor naming, copies and the reassembly errors."""
    names: List[str] = [name for name, _ in tiny_model.named_tensors()]
    assert names[:3] == ["encoder.0.W_x", "encoder.0.W_h", "encoder.0.b"]
    assert names[-2:] == ["output.W", "output.b"]
    assert len(names) == 6 * 2 + 2

    clone = tiny_model.copy()
    clone.W_out[:] = 0.0
    assert tiny_model.W_out.any()

    arrays: List[np.ndarray] = [array for _, array in tiny_model.named_tensors()]
    with pytest.raises(ReslstmException.ShapeError):
        assemble(tiny_model.config, 12, arrays[:-1])
    with pytest.raises(ReslstmException.ShapeError):
        assemble(tiny_model.config, 13, arrays)

    shapes: List[Tuple[int, ...]] = [array.shape for array in arrays]
    assert shapes[-2] == (12, 8)
