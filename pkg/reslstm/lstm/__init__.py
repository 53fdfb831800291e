#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements a single LSTM layer: forward step, full-sequence
forward and the hand-derived backward pass through time.

The cell equations are::

    i_t    = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i)
    f_t    = sigmoid(W_xf x_t + W_hf h_{t-1} + b_f)
    o_t    = sigmoid(W_xo x_t + W_ho h_{t-1} + b_o)
    c_in_t = tanh(W_xc x_t + W_hc h_{t-1} + b_c_in)
    c_t    = f_t * c_{t-1} + i_t * c_in_t
    h_t    = o_t * tanh(c_t)

The four gate matrices are stored stacked in the order i, f, o, c_in.
Inputs are either dense arrays ``(..., input_dim)`` or integer token arrays,
in which case ``x_t`` is the one-hot vector of the token and the input
transform reduces to selecting a column of ``W_x``.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ReslstmException
from ..tensor import Rng, get_dtype, matmul, sigmoid, zeros

GATES: Tuple[str, ...] = ("i", "f", "o", "c_in")


@dataclass
class LstmParams:
    """
    Parameters of one LSTM layer.

    :param W_x: Stacked input weights, shape ``(4 * hidden, input_dim)``
    :param W_h: Stacked recurrent weights, shape ``(4 * hidden, hidden)``
    :param b: Stacked biases, shape ``(4 * hidden,)``
    """

    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray

    def __post_init__(self: "LstmParams") -> None:
        rows: int = self.W_h.shape[0]
        if (
            rows % 4 != 0
            or self.W_h.shape != (rows, rows // 4)
            or self.W_x.ndim != 2
            or self.W_x.shape[0] != rows
            or self.b.shape != (rows,)
        ):
            raise ReslstmException.ShapeError(
                f"inconsistent LSTM parameters W_x={self.W_x.shape} "
                f"W_h={self.W_h.shape} b={self.b.shape}"
            )

    @property
    def hidden(self: "LstmParams") -> int:
        """Returns the number of LSTM units"""
        return int(self.W_h.shape[1])

    @property
    def input_dim(self: "LstmParams") -> int:
        """Returns the (logical) input dimension"""
        return int(self.W_x.shape[1])

    def _gate(self: "LstmParams", tensor: np.ndarray, gate: str) -> np.ndarray:
        k: int = GATES.index(gate)
        return tensor[k * self.hidden : (k + 1) * self.hidden]

    W_xi = property(lambda self: self._gate(self.W_x, "i"))
    W_xf = property(lambda self: self._gate(self.W_x, "f"))
    W_xo = property(lambda self: self._gate(self.W_x, "o"))
    W_xc = property(lambda self: self._gate(self.W_x, "c_in"))
    W_hi = property(lambda self: self._gate(self.W_h, "i"))
    W_hf = property(lambda self: self._gate(self.W_h, "f"))
    W_ho = property(lambda self: self._gate(self.W_h, "o"))
    W_hc = property(lambda self: self._gate(self.W_h, "c_in"))
    b_i = property(lambda self: self._gate(self.b, "i"))
    b_f = property(lambda self: self._gate(self.b, "f"))
    b_o = property(lambda self: self._gate(self.b, "o"))
    b_c_in = property(lambda self: self._gate(self.b, "c_in"))

    def named_tensors(self: "LstmParams") -> List[Tuple[str, np.ndarray]]:
        """Returns the tensors in their fixed serialization order"""
        return [("W_x", self.W_x), ("W_h", self.W_h), ("b", self.b)]

    def zeros_like(self: "LstmParams") -> "LstmParams":
        """Returns parameters of the same shapes filled with zeros"""
        return LstmParams(
            W_x=np.zeros_like(self.W_x), W_h=np.zeros_like(self.W_h), b=np.zeros_like(self.b)
        )

    def copy(self: "LstmParams") -> "LstmParams":
        """Returns a deep copy"""
        return LstmParams(W_x=self.W_x.copy(), W_h=self.W_h.copy(), b=self.b.copy())


@dataclass
class LstmState:
    """Hidden and cell state of one layer, shape ``(..., hidden)`` each."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: Optional[int] = None) -> "LstmState":
        """Returns the all-zero state, optionally with a batch axis"""
        shape: Tuple[int, ...] = (hidden,) if batch is None else (batch, hidden)
        return cls(h=zeros(shape), c=zeros(shape))


@dataclass
class LstmTape:
    """
    Activations cached by :func:`lstm_forward` for :func:`lstm_backward`.
    Every list holds one entry per timestep.
    """

    xs: List[np.ndarray] = field(default_factory=list)
    h_prev: List[np.ndarray] = field(default_factory=list)
    c_prev: List[np.ndarray] = field(default_factory=list)
    i: List[np.ndarray] = field(default_factory=list)
    f: List[np.ndarray] = field(default_factory=list)
    o: List[np.ndarray] = field(default_factory=list)
    c_in: List[np.ndarray] = field(default_factory=list)
    c: List[np.ndarray] = field(default_factory=list)
    tanh_c: List[np.ndarray] = field(default_factory=list)
    h: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)

    def __len__(self: "LstmTape") -> int:
        return len(self.xs)


def init_lstm_params(
    input_dim: int,
    hidden: int,
    rng: Rng,
    init_scale: float = 0.08,
    forget_bias: float = 0.0,
) -> LstmParams:
    """
    Creates a layer with weights drawn from ``uniform(-init_scale, init_scale)``
    and zero biases, except the forget gate bias which is set to
    ``forget_bias``.

    :param input_dim: Input dimension (the vocabulary size for one-hot input)
    :type input_dim: int
    :param hidden: Number of units
    :type hidden: int
    :param rng: Seeded generator, consumed for ``W_x`` then ``W_h``
    :type rng: reslstm.tensor.Rng
    :rtype: LstmParams
    """
    if input_dim < 1 or hidden < 1:
        raise ReslstmException.ConfigurationError(
            f"input_dim and hidden must be positive, got {input_dim} and {hidden}"
        )
    dtype = get_dtype()
    W_x: np.ndarray = rng.uniform(-init_scale, init_scale, (4 * hidden, input_dim)).astype(dtype)
    W_h: np.ndarray = rng.uniform(-init_scale, init_scale, (4 * hidden, hidden)).astype(dtype)
    b: np.ndarray = zeros(4 * hidden)
    b[hidden : 2 * hidden] = forget_bias
    return LstmParams(W_x=W_x, W_h=W_h, b=b)


def _is_tokens(x: np.ndarray) -> bool:
    return np.issubdtype(np.asarray(x).dtype, np.integer)


def input_transform(params: LstmParams, x: np.ndarray) -> np.ndarray:
    """
    Returns ``W_x x`` for dense ``x`` or the selected columns of ``W_x`` for
    integer tokens, shape ``(..., 4 * hidden)``.
    """
    if _is_tokens(x):
        tokens: np.ndarray = np.asarray(x)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= params.input_dim):
            raise ReslstmException.DataError(
                f"token index out of range [0, {params.input_dim})"
            )
        return np.moveaxis(np.take(params.W_x, tokens, axis=1), 0, -1)
    if np.shape(x)[-1:] != (params.input_dim,):
        raise ReslstmException.ShapeError(
            f"input of shape {tuple(np.shape(x))} for layer with input dim {params.input_dim}"
        )
    return matmul(x, params.W_x.T)


def _step(
    params: LstmParams,
    x_t: np.ndarray,
    prev: LstmState,
    mask: Optional[np.ndarray],
    tape: Optional[LstmTape],
) -> LstmState:
    hidden: int = params.hidden
    if prev.h.shape[-1] != hidden or prev.c.shape != prev.h.shape:
        raise ReslstmException.ShapeError(
            f"state shapes h={prev.h.shape} c={prev.c.shape} for hidden={hidden}"
        )
    z: np.ndarray = input_transform(params, x_t) + matmul(prev.h, params.W_h.T) + params.b
    i: np.ndarray = sigmoid(z[..., :hidden])
    f: np.ndarray = sigmoid(z[..., hidden : 2 * hidden])
    o: np.ndarray = sigmoid(z[..., 2 * hidden : 3 * hidden])
    c_in: np.ndarray = np.tanh(z[..., 3 * hidden :])
    c: np.ndarray = f * prev.c + i * c_in
    tanh_c: np.ndarray = np.tanh(c)
    h: np.ndarray = o * tanh_c
    if mask is not None:
        m: np.ndarray = mask[..., None]
        h = np.where(m, h, prev.h)
        c_out: np.ndarray = np.where(m, c, prev.c)
    else:
        c_out = c
    if tape is not None:
        tape.xs.append(x_t)
        tape.h_prev.append(prev.h)
        tape.c_prev.append(prev.c)
        tape.i.append(i)
        tape.f.append(f)
        tape.o.append(o)
        tape.c_in.append(c_in)
        tape.c.append(c)
        tape.tanh_c.append(tanh_c)
        tape.h.append(h)
        tape.masks.append(mask)
    return LstmState(h=h, c=c_out)


def lstm_step(params: LstmParams, x_t: np.ndarray, prev: LstmState) -> LstmState:
    """
    Advances the layer by one timestep.

    :param params: Layer parameters
    :type params: LstmParams
    :param x_t: Input ``(..., input_dim)`` or integer token(s)
    :type x_t: numpy.ndarray
    :param prev: State at ``t - 1``
    :type prev: LstmState
    :raises ReslstmException.ShapeError: On dimension mismatch
    :return: State at ``t``
    :rtype: LstmState
    """
    return _step(params, x_t, prev, None, None)


def lstm_forward(
    params: LstmParams,
    xs: Sequence[np.ndarray],
    init: LstmState,
    step_mask: Optional[np.ndarray] = None,
) -> Tuple[List[LstmState], LstmTape]:
    """
    Runs the layer over a sequence, threading the state.

    :param xs: Inputs, one entry per timestep (an array ``(T, ...)`` works)
    :param init: Initial state
    :param step_mask: Optional boolean ``(T, batch)`` array; where ``False``
        the state is carried over unchanged (padding inside a batch)
    :return: The state after every step and the tape for the backward pass
    :rtype: Tuple[List[LstmState], LstmTape]
    """
    tape: LstmTape = LstmTape()
    states: List[LstmState] = []
    state: LstmState = init
    if len(xs) and not _is_tokens(xs[0]):
        dims = {np.shape(x)[-1] for x in xs}
        if len(dims) != 1:
            raise ReslstmException.ShapeError(f"inputs of mixed dimensions {sorted(dims)}")
    for t in range(len(xs)):
        state = _step(params, xs[t], state, None if step_mask is None else step_mask[t], tape)
        states.append(state)
    return states, tape


def _rows(array: np.ndarray, width: int) -> np.ndarray:
    return np.reshape(array, (-1, width))


def lstm_backward(
    params: LstmParams,
    tape: LstmTape,
    grad_h_seq: Sequence[Optional[np.ndarray]],
    grad_final: Optional[LstmState] = None,
) -> Tuple[LstmParams, List[Optional[np.ndarray]], LstmState]:
    """
    Backpropagation through time for one layer.

    :param params: Parameters used in the forward call
    :type params: LstmParams
    :param tape: Tape of the forward call
    :type tape: LstmTape
    :param grad_h_seq: Gradient of the loss w.r.t. each returned ``h_t``
        (``None`` entries count as zero)
    :param grad_final: Gradient w.r.t. the final ``(h, c)`` state
    :type grad_final: LstmState, optional
    :raises ReslstmException.ArgumentError: If the gradient sequence does not
        match the tape length
    :return: Parameter gradients, gradient w.r.t. every input (``None`` for
        token input) and gradient w.r.t. the initial state
    :rtype: Tuple[LstmParams, List[Optional[numpy.ndarray]], LstmState]
    """
    T: int = len(tape)
    if len(grad_h_seq) != T:
        raise ReslstmException.ArgumentError(
            f"tape holds {T} steps but {len(grad_h_seq)} gradients were given"
        )
    grads: LstmParams = params.zeros_like()
    if T == 0:
        if grad_final is None:
            raise ReslstmException.ArgumentError("empty tape needs a final state gradient")
        return grads, [], LstmState(h=grad_final.h.copy(), c=grad_final.c.copy())

    hidden: int = params.hidden
    shape = tape.h[-1].shape
    dh_next: np.ndarray = np.zeros(shape, dtype=tape.h[-1].dtype)
    dc_next: np.ndarray = np.zeros(shape, dtype=tape.h[-1].dtype)
    if grad_final is not None:
        dh_next = dh_next + grad_final.h
        dc_next = dc_next + grad_final.c
    grad_xs: List[Optional[np.ndarray]] = [None] * T
    W_xT_grad: np.ndarray = grads.W_x.T

    for t in range(T - 1, -1, -1):
        dh: np.ndarray = dh_next if grad_h_seq[t] is None else dh_next + grad_h_seq[t]
        dc: np.ndarray = dc_next
        mask: Optional[np.ndarray] = tape.masks[t]
        if mask is not None:
            m: np.ndarray = mask[..., None]
            dh_carry: np.ndarray = np.where(m, 0.0, dh)
            dc_carry: np.ndarray = np.where(m, 0.0, dc)
            dh = np.where(m, dh, 0.0)
            dc = np.where(m, dc, 0.0)
        i, f, o, c_in = tape.i[t], tape.f[t], tape.o[t], tape.c_in[t]
        tanh_c: np.ndarray = tape.tanh_c[t]
        do: np.ndarray = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di: np.ndarray = dc * c_in
        df: np.ndarray = dc * tape.c_prev[t]
        dc_in: np.ndarray = dc * i
        dz: np.ndarray = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dc_in * (1.0 - c_in * c_in),
            ],
            axis=-1,
        )
        dz_rows: np.ndarray = _rows(dz, 4 * hidden)
        x_t: np.ndarray = tape.xs[t]
        if _is_tokens(x_t):
            np.add.at(W_xT_grad, np.reshape(x_t, -1), dz_rows)
        else:
            grads.W_x += dz_rows.T @ _rows(x_t, params.input_dim)
            grad_xs[t] = matmul(dz, params.W_x)
        grads.W_h += dz_rows.T @ _rows(tape.h_prev[t], hidden)
        grads.b += dz_rows.sum(axis=0)
        dh_next = matmul(dz, params.W_h)
        dc_next = dc * f
        if mask is not None:
            dh_next = dh_next + dh_carry
            dc_next = dc_next + dc_carry
    return grads, grad_xs, LstmState(h=dh_next, c=dc_next)
