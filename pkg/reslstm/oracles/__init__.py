#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements brute-force reference procedures used to verify the
production code: a scalar-loop LSTM and model evaluator, central finite
differences, an exhaustive output-sequence enumerator, a dynamic
programming edit distance, the exhaustive randomization test and a
hand-count n-gram scorer.

Everything here runs in double precision with plain Python loops and
shares no computation with the vectorised modules it checks.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ReslstmException
from ..lstm import LstmParams
from ..model import EOS, PAD, UNK, ModelParams

Vector = List[float]


@dataclass
class OracleBudget:
    """
    Limits of the exhaustive procedures.

    :param max_vocab: Largest vocabulary the enumerator accepts
    :param max_length: Longest sequence the enumerator accepts
    :param max_parameters: Most scalars :func:`fd_gradient` perturbs
    :param max_states: Largest search space of the enumerator
    """

    max_vocab: int = 64
    max_length: int = 8
    max_parameters: int = 50000
    max_states: int = 10**6


DEFAULT_BUDGET: OracleBudget = OracleBudget()


# ---- scalar LSTM and model --------------------------------------------------


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e: float = math.exp(z)
    return e / (1.0 + e)


def scalar_lstm_step(
    params: LstmParams, x: Union[int, Sequence[float]], h: Sequence[float], c: Sequence[float]
) -> Tuple[Vector, Vector]:
    """
    One LSTM step evaluated coordinate by coordinate. ``x`` is a dense
    vector or a token index (one-hot input).

    :return: New ``(h, c)`` as lists
    """
    H: int = params.hidden
    W_x: List[List[float]] = params.W_x.astype(np.float64).tolist()
    W_h: List[List[float]] = params.W_h.astype(np.float64).tolist()
    b: List[float] = params.b.astype(np.float64).tolist()
    z: Vector = []
    for row in range(4 * H):
        total: float = b[row]
        if isinstance(x, (int, np.integer)):
            total += W_x[row][int(x)]
        else:
            for k, value in enumerate(x):
                total += W_x[row][k] * float(value)
        for k in range(H):
            total += W_h[row][k] * float(h[k])
        z.append(total)
    h_new: Vector = []
    c_new: Vector = []
    for j in range(H):
        i_gate: float = _sigmoid(z[j])
        f_gate: float = _sigmoid(z[H + j])
        o_gate: float = _sigmoid(z[2 * H + j])
        c_in: float = math.tanh(z[3 * H + j])
        cell: float = f_gate * float(c[j]) + i_gate * c_in
        c_new.append(cell)
        h_new.append(o_gate * math.tanh(cell))
    return h_new, c_new


def _fix_scalar(source: Union[int, Vector], width: int) -> Vector:
    if isinstance(source, int):
        return [1.0 if k == source else 0.0 for k in range(width)]
    return [source[k] if k < len(source) else 0.0 for k in range(width)]


def _width(source: Union[int, Vector], vocab: int) -> int:
    return vocab if isinstance(source, int) else len(source)


def _stack_step(
    layers: Sequence[LstmParams],
    params: ModelParams,
    token: int,
    states: List[Tuple[Vector, Vector]],
) -> Tuple[Vector, List[Tuple[Vector, Vector]]]:
    config = params.config
    n: int = config.residual_interval
    inputs: List[Union[int, Vector]] = [token]
    new_states: List[Tuple[Vector, Vector]] = []
    for k, layer in enumerate(layers):
        h, c = scalar_lstm_step(layer, inputs[k], states[k][0], states[k][1])
        new_states.append((h, c))
        out: Vector = list(h)
        if n > 0 and (k + 1) % n == 0:
            source: Union[int, Vector] = inputs[k + 1 - n]
            if config.dim_fix == "clip":
                width: int = _width(source, params.vocab_size)
                out = [a + s for a, s in zip(h[:width], _fix_scalar(source, width))]
            else:
                out = [a + s for a, s in zip(h, _fix_scalar(source, len(h)))]
        inputs.append(out)
    return inputs[-1], new_states  # type: ignore[return-value]


def _log_probs(params: ModelParams, top: Vector) -> Vector:
    W: List[List[float]] = params.W_out.astype(np.float64).tolist()
    b: List[float] = params.b_out.astype(np.float64).tolist()
    logits: Vector = [b[v] + sum(w * t for w, t in zip(W[v], top)) for v in range(params.vocab_size)]
    peak: float = max(logits)
    log_norm: float = peak + math.log(sum(math.exp(value - peak) for value in logits))
    return [value - log_norm for value in logits]


def scalar_encode(params: ModelParams, source: Sequence[int]) -> List[Tuple[Vector, Vector]]:
    """Final per-layer ``(h, c)`` of the encoder, evaluated with scalar loops"""
    H: int = params.config.hidden
    states: List[Tuple[Vector, Vector]] = [([0.0] * H, [0.0] * H) for _ in params.encoder_layers]
    tokens: List[int] = [int(t) for t in source]
    if params.config.reverse_source:
        tokens = tokens[::-1]
    for token in tokens + [EOS]:
        _, states = _stack_step(params.encoder_layers, params, token, states)
    return states


def scalar_decode_step(
    params: ModelParams, token: int, states: List[Tuple[Vector, Vector]]
) -> Tuple[Vector, List[Tuple[Vector, Vector]]]:
    """Log-probabilities of the next token and the new decoder states"""
    top, new_states = _stack_step(params.decoder_layers, params, int(token), states)
    return _log_probs(params, top), new_states


def scalar_sequence_nll(params: ModelParams, source: Sequence[int], target: Sequence[int]) -> Tuple[float, int]:
    """
    Teacher-forced negative log-likelihood of ``target`` followed by EOS.

    :return: Summed NLL and the number of predicted tokens
    """
    states = scalar_encode(params, source)
    previous: int = EOS
    nll: float = 0.0
    for token in list(target) + [EOS]:
        logp, states = scalar_decode_step(params, previous, states)
        nll -= logp[int(token)]
        previous = int(token)
    return nll, len(target) + 1


# ---- finite differences -----------------------------------------------------

Tensors = Union[np.ndarray, Sequence[np.ndarray], ModelParams]


def _tensor_list(params: Tensors) -> List[np.ndarray]:
    if isinstance(params, ModelParams):
        return [array for _, array in params.named_tensors()]
    if isinstance(params, np.ndarray):
        return [params]
    return list(params)


def fd_gradient(
    loss_fn: Callable[[], float],
    params: Tensors,
    eps: float = 1e-5,
    budget: OracleBudget = DEFAULT_BUDGET,
) -> List[np.ndarray]:
    """
    Central finite differences ``(L(p + eps) - L(p - eps)) / (2 eps)`` for
    every scalar of ``params``. The tensors are perturbed in place (and
    restored), ``loss_fn`` must read them.

    :param loss_fn: Evaluates the loss at the current parameter values
    :param params: Array, list of arrays or a model
    :param eps: Step (default: ``1e-5``)
    :raises ReslstmException.OracleError: If a tensor is not float64 or the
        parameter count exceeds the budget
    :return: One gradient array per tensor
    :rtype: List[numpy.ndarray]
    """
    tensors: List[np.ndarray] = _tensor_list(params)
    for tensor in tensors:
        if tensor.dtype != np.float64:
            raise ReslstmException.OracleError(f"finite differences need float64, got {tensor.dtype}")
    total: int = sum(tensor.size for tensor in tensors)
    if total > budget.max_parameters:
        raise ReslstmException.OracleError(
            f"{total} parameters exceed the finite difference budget of {budget.max_parameters}"
        )
    gradients: List[np.ndarray] = []
    for tensor in tensors:
        gradient: np.ndarray = np.zeros_like(tensor)
        flat: np.ndarray = tensor.reshape(-1)
        out: np.ndarray = gradient.reshape(-1)
        for index in range(flat.size):
            saved: float = float(flat[index])
            flat[index] = saved + eps
            plus: float = loss_fn()
            flat[index] = saved - eps
            minus: float = loss_fn()
            flat[index] = saved
            out[index] = (plus - minus) / (2.0 * eps)
        gradients.append(gradient)
    return gradients


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Max over entries of ``|a - n| / max(|a| + |n|, floor)``"""
    if analytic.size == 0:
        return 0.0
    scale: np.ndarray = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def scalar_layer_loss(
    params: LstmParams, xs: Sequence[Sequence[float]], weights: Sequence[Sequence[float]]
) -> float:
    """
    Runs one layer from the zero state over dense inputs with
    :func:`scalar_lstm_step` and returns ``sum_t weights[t] . h_t``.
    """
    h: Vector = [0.0] * params.hidden
    c: Vector = [0.0] * params.hidden
    total: float = 0.0
    for x, weight in zip(xs, weights):
        h, c = scalar_lstm_step(params, [float(value) for value in x], h, c)
        total += sum(float(w) * value for w, value in zip(weight, h))
    return total


def check_layer_gradients(
    params: LstmParams,
    xs: np.ndarray,
    weights: np.ndarray,
    analytic: LstmParams,
    eps: float = 1e-5,
    budget: OracleBudget = DEFAULT_BUDGET,
) -> Dict[str, float]:
    """
    Compares the parameter gradients of a single layer under the loss of
    :func:`scalar_layer_loss` against central differences of that loss.

    :param params: Layer in float64, perturbed in place and restored
    :param xs: Dense inputs, shape ``(T, input_dim)``
    :param weights: Loss weights of every ``h_t``, shape ``(T, hidden)``
    :param analytic: Gradients to check
    :return: Maximum relative error per named tensor
    :rtype: Dict[str, float]
    """
    numeric: List[np.ndarray] = fd_gradient(
        lambda: scalar_layer_loss(params, xs, weights),
        [array for _, array in params.named_tensors()],
        eps,
        budget,
    )
    return {
        name: relative_error(grad, approx)
        for (name, grad), approx in zip(analytic.named_tensors(), numeric)
    }


def check_model_gradients(
    params: ModelParams,
    loss_fn: Callable[[], float],
    analytic: ModelParams,
    eps: float = 1e-5,
    budget: OracleBudget = DEFAULT_BUDGET,
) -> Dict[str, float]:
    """
    Compares analytic gradients of a model against central differences.

    :param params: Model in float64; ``loss_fn`` must evaluate it
    :param loss_fn: Loss at the current parameter values
    :param analytic: Gradients to check (same structure as ``params``)
    :return: Maximum relative error per named tensor
    :rtype: Dict[str, float]
    """
    numeric: List[np.ndarray] = fd_gradient(loss_fn, params, eps, budget)
    return {
        name: relative_error(grad, approx)
        for (name, grad), approx in zip(analytic.named_tensors(), numeric)
    }


# ---- sequence enumeration ---------------------------------------------------


@dataclass
class Enumeration:
    """Result of :func:`enumerate_best_sequence`."""

    tokens: List[int]
    log_prob: float
    expansions: int
    terminations: int


def enumerate_best_sequence(
    params: ModelParams,
    source: Sequence[int],
    max_len: int,
    allow_unk: bool = True,
    budget: OracleBudget = DEFAULT_BUDGET,
) -> Enumeration:
    """
    Scores every output sequence: EOS-terminated ones of length
    ``<= max_len`` and the unterminated ones of length ``max_len``. The best
    is chosen by log-probability, then shorter length, then token order.
    ``expansions`` counts the non-EOS extensions, ``terminations`` the EOS
    ones. PAD is never a candidate, UNK only while ``allow_unk`` is set.

    :raises ReslstmException.OracleError: If the search space exceeds the budget
    """
    banned = {PAD} if allow_unk else {PAD, UNK}
    content: List[int] = [v for v in range(params.vocab_size) if v not in banned and v != EOS]
    C: int = len(content)
    space: int = sum(C**length for length in range(1, max_len + 1)) + sum(C**length for length in range(max_len))
    if params.vocab_size > budget.max_vocab or max_len > budget.max_length or space > budget.max_states:
        raise ReslstmException.OracleError(
            f"search space of {space} sequences (vocab {params.vocab_size}, length {max_len}) exceeds the budget"
        )
    best: Optional[Tuple[float, int, List[int]]] = None
    expansions: int = 0
    terminations: int = 0

    def consider(log_prob: float, tokens: List[int]) -> None:
        nonlocal best
        key = (-log_prob, len(tokens), tokens)
        if best is None or key < best:
            best = key

    frontier: List[Tuple[List[int], float, List[Tuple[Vector, Vector]]]] = [
        ([], 0.0, scalar_encode(params, source))
    ]
    for step in range(max_len):
        next_frontier: List[Tuple[List[int], float, List[Tuple[Vector, Vector]]]] = []
        for tokens, log_prob, states in frontier:
            logp, new_states = scalar_decode_step(params, tokens[-1] if tokens else EOS, states)
            terminations += 1
            consider(log_prob + logp[EOS], tokens + [EOS])
            for token in content:
                expansions += 1
                extended: List[int] = tokens + [token]
                if step == max_len - 1:
                    consider(log_prob + logp[token], extended)
                else:
                    next_frontier.append((extended, log_prob + logp[token], new_states))
        frontier = next_frontier
    assert best is not None
    return Enumeration(tokens=best[2], log_prob=-best[0], expansions=expansions, terminations=terminations)


# ---- evaluation oracles -----------------------------------------------------


def edit_distance_words(a: Sequence[str], b: Sequence[str]) -> Tuple[int, int, int]:
    """
    Minimum edit script turning ``a`` into ``b`` as ``(substitutions,
    insertions, deletions)``. Among scripts of minimal length the one with
    the fewest insertions plus deletions is chosen, which makes the counts
    unique.
    """
    rows: int = len(a) + 1
    cols: int = len(b) + 1
    # cost[i][j] = (edits, indels, subs, ins, dels) for a[:i] -> b[:j]
    cost: List[List[Tuple[int, int, int, int, int]]] = [[(0, 0, 0, 0, 0)] * cols for _ in range(rows)]
    for i in range(1, rows):
        cost[i][0] = (i, i, 0, 0, i)
    for j in range(1, cols):
        cost[0][j] = (j, j, 0, j, 0)
    for i in range(1, rows):
        for j in range(1, cols):
            e, d, s, ins, dels = cost[i - 1][j - 1]
            same: bool = a[i - 1] == b[j - 1]
            options = [(e + (0 if same else 1), d, s + (0 if same else 1), ins, dels)]
            e, d, s, ins, dels = cost[i][j - 1]
            options.append((e + 1, d + 1, s, ins + 1, dels))
            e, d, s, ins, dels = cost[i - 1][j]
            options.append((e + 1, d + 1, s, ins, dels + 1))
            cost[i][j] = min(options)
    _, _, subs, ins, dels = cost[-1][-1]
    return subs, ins, dels


def count_clipped_ngrams(candidate: Sequence[str], references: Sequence[Sequence[str]], n: int) -> Tuple[int, int]:
    """Clipped n-gram matches and candidate n-gram count, counted by hand"""
    grams: List[Tuple[str, ...]] = [tuple(candidate[i : i + n]) for i in range(len(candidate) - n + 1)]
    clipped: int = 0
    for gram in set(grams):
        in_candidate: int = grams.count(gram)
        in_reference: int = 0
        for reference in references:
            occurrences: int = sum(
                1 for i in range(len(reference) - n + 1) if tuple(reference[i : i + n]) == gram
            )
            in_reference = max(in_reference, occurrences)
        clipped += min(in_candidate, in_reference)
    return clipped, len(grams)


def exhaustive_ar_pvalue(
    system_a: Sequence, system_b: Sequence, metric: Callable[[Sequence], float]
) -> float:
    """
    Exact randomization p-value: the share of all ``2 ** n`` swap
    assignments whose metric difference is at least the observed one.
    """
    observed: float = abs(metric(list(system_a)) - metric(list(system_b)))
    hits: int = 0
    total: int = 0
    for assignment in itertools.product((False, True), repeat=len(system_a)):
        a = [y if swap else x for x, y, swap in zip(system_a, system_b, assignment)]
        b = [x if swap else y for x, y, swap in zip(system_a, system_b, assignment)]
        total += 1
        if abs(metric(a) - metric(b)) >= observed:
            hits += 1
    return hits / total
