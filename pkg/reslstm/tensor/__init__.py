#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements the numeric core: precision handling, the seeded
counter-based random number generator and the dense array primitives every
other module is built on.
"""

from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, MutableSequence, Optional, Tuple, Union

import numpy as np

from ..exceptions import ReslstmException

Shape = Union[int, Tuple[int, ...]]

PRECISIONS: Dict[str, Any] = {"float32": np.float32, "float64": np.float64}

_PRECISION: List[str] = ["float32"]


def set_precision(name: str) -> None:
    """
    Selects the floating point precision used for parameters and activations
    created from now on.

    :param name: One of ``float32`` (training default) or ``float64``
        (gradient checks)
    :type name: str
    :raises ReslstmException.ConfigurationError: If the name is unknown
    """
    if name not in PRECISIONS:
        raise ReslstmException.ConfigurationError(
            f"precision must be one of {sorted(PRECISIONS)}, got {name!r}"
        )
    _PRECISION[0] = name


def get_precision() -> str:
    """Returns the name of the active precision"""
    return _PRECISION[0]


def get_dtype() -> Any:
    """Returns the numpy dtype of the active precision"""
    return PRECISIONS[_PRECISION[0]]


@contextmanager
def precision(name: str) -> Iterator[None]:
    """
    Context manager that switches the precision temporarily.

    .. code-block:: python
        :linenos:
        :caption: Running a gradient check in double precision

        >>> from reslstm.tensor import precision
        >>> with precision("float64"):
        ...     params = init_model(config, vocab_size=12, seed=1)
    """
    previous: str = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


# ---- random numbers ---------------------------------------------------------

_MASK64: int = (1 << 64) - 1
_GOLDEN: np.uint64 = np.uint64(0x9E3779B97F4A7C15)
_MIX1: np.uint64 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2: np.uint64 = np.uint64(0x94D049BB133111EB)


def _splitmix64(values: np.ndarray) -> np.ndarray:
    """Finalizer of splitmix64 applied elementwise to an uint64 array."""
    z: np.ndarray = values + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """
    Counter-based random number generator. The n-th output of a stream is
    ``splitmix64(key + n * golden)``, which only depends on the seed and the
    position, so streams reproduce exactly across runs and platforms.

    Instances are single-owner; use :func:`Rng.derive` to obtain
    independent streams for independent consumers.

    :param seed: 64-bit seed
    :type seed: int

    .. code-block:: python
        :linenos:
        :caption: Drawing reproducible numbers

        >>> from reslstm.tensor import Rng
        >>> rng = Rng(seed=42)
        >>> rng.uniform(shape=3)
        array([...])
        >>> Rng(seed=42).uniform(shape=3)  # identical
        array([...])
    """

    def __init__(self: "Rng", seed: int) -> None:
        self.seed: int = int(seed) & _MASK64
        self.__key: np.uint64 = _splitmix64(np.array([self.seed], dtype=np.uint64))[0]
        self.__counter: int = 0

    @property
    def counter(self: "Rng") -> int:
        """Returns the number of 64-bit words drawn so far"""
        return self.__counter

    def _words(self: "Rng", count: int) -> np.ndarray:
        positions: np.ndarray = np.arange(
            self.__counter, self.__counter + count, dtype=np.uint64
        )
        self.__counter += count
        with np.errstate(over="ignore"):
            return _splitmix64(positions * _GOLDEN + self.__key)

    def derive(self: "Rng", tag: int) -> "Rng":
        """
        Returns a new generator whose stream is independent of this one.

        :param tag: Distinguishes sibling streams derived from the same seed
        :type tag: int
        :rtype: Rng
        """
        with np.errstate(over="ignore"):
            mixed: np.ndarray = _splitmix64(
                np.array([self.seed ^ ((int(tag) * 0x2545F4914F6CDD1D) & _MASK64)], dtype=np.uint64)
            )
        return Rng(int(mixed[0]))

    def next_u64(self: "Rng") -> int:
        """Returns the next 64-bit unsigned integer of the stream"""
        return int(self._words(1)[0])

    def uniform(
        self: "Rng", low: float = 0.0, high: float = 1.0, shape: Shape = ()
    ) -> np.ndarray:
        """
        Draws float64 values uniformly from ``[low, high)`` using the top
        53 bits of each word.
        """
        size: int = int(np.prod(shape)) if shape != () else 1
        words: np.ndarray = self._words(size)
        unit: np.ndarray = (words >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        values: np.ndarray = low + (high - low) * unit
        return values.reshape(shape) if shape != () else values.reshape(())

    def integers(self: "Rng", high: int, shape: Shape = ()) -> np.ndarray:
        """Draws integers uniformly from ``[0, high)``"""
        if high <= 0:
            raise ReslstmException.ArgumentError(f"high must be positive, got {high}")
        draws: np.ndarray = np.floor(self.uniform(shape=shape) * high).astype(np.int64)
        return np.minimum(draws, high - 1)

    def randint(self: "Rng", high: int) -> int:
        """Returns a single integer from ``[0, high)``"""
        return int(self.integers(high))

    def bernoulli(self: "Rng", p: float, shape: Shape) -> np.ndarray:
        """Returns a boolean array whose entries are ``True`` with probability ``p``"""
        return self.uniform(shape=shape) < p

    def shuffle(self: "Rng", items: MutableSequence[Any]) -> None:
        """Shuffles a mutable sequence in place (Fisher-Yates)"""
        for i in range(len(items) - 1, 0, -1):
            j: int = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self: "Rng", n: int) -> List[int]:
        """Returns a random permutation of ``range(n)``"""
        order: List[int] = list(range(n))
        self.shuffle(order)
        return order


# ---- array primitives -------------------------------------------------------


def zeros(shape: Shape, dtype: Optional[Any] = None) -> np.ndarray:
    """Returns a zero array in the active precision"""
    return np.zeros(shape, dtype=get_dtype() if dtype is None else dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Standard matrix product ``a @ b``. Leading batch axes of ``a`` are
    allowed, ``b`` must be two-dimensional.

    :raises ReslstmException.ShapeError: If ``a.shape[-1] != b.shape[0]``
    """
    if a.ndim == 0 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ReslstmException.ShapeError(
            f"cannot multiply {tuple(a.shape)} by {tuple(b.shape)}"
        )
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, evaluated through tanh so it never overflows"""
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def tanh(x: np.ndarray) -> np.ndarray:
    """Hyperbolic tangent"""
    return np.tanh(x)


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Numerically stable log-softmax ``v - max(v) - log(sum(exp(v - max(v))))``.

    :param v: Scores, any finite magnitude
    :type v: numpy.ndarray
    :param axis: Axis to normalize over (default: ``-1``)
    :type axis: int
    :raises ReslstmException.ArgumentError: If the normalized axis is empty
    :return: Log-probabilities
    :rtype: numpy.ndarray
    """
    v = np.asarray(v)
    if v.ndim == 0 or v.shape[axis] == 0:
        raise ReslstmException.ArgumentError("log_softmax of an empty vector")
    shifted: np.ndarray = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


_UNARY: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": sigmoid,
    "tanh": tanh,
}
_BINARY: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "add": np.add,
    "mul": np.multiply,
}


def elementwise(op: str, a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Applies ``op`` pointwise: ``add`` and ``mul`` take two operands of equal
    shape, ``sigmoid`` and ``tanh`` take one.

    :raises ReslstmException.ShapeError: If binary operand shapes differ
    :raises ReslstmException.ArgumentError: If the operation is unknown
    """
    if op in _UNARY:
        return _UNARY[op](np.asarray(a))
    if op in _BINARY:
        if b is None:
            raise ReslstmException.ArgumentError(f"{op} needs two operands")
        if np.shape(a) != np.shape(b):
            raise ReslstmException.ShapeError(
                f"{op}: {tuple(np.shape(a))} vs {tuple(np.shape(b))}"
            )
        return _BINARY[op](a, b)
    raise ReslstmException.ArgumentError(f"unknown elementwise operation {op!r}")


def ensure_finite(name: str, array: np.ndarray) -> None:
    """
    :raises ReslstmException.TrainingError: If ``array`` holds NaN or inf,
        naming the offending tensor
    """
    if not np.all(np.isfinite(array)):
        raise ReslstmException.TrainingError(f"non-finite values in {name}")


def one_hot(tokens: np.ndarray, width: int, dtype: Optional[Any] = None) -> np.ndarray:
    """
    Dense one-hot rows for integer ``tokens``. Tokens ``>= width`` produce an
    all-zero row (the one-hot vector truncated to ``width`` coordinates).
    """
    tokens = np.asarray(tokens)
    out: np.ndarray = zeros(tokens.shape + (width,), dtype=dtype)
    flat: np.ndarray = out.reshape(-1, width)
    rows: np.ndarray = np.arange(flat.shape[0])
    cols: np.ndarray = tokens.reshape(-1)
    keep: np.ndarray = cols < width
    flat[rows[keep], cols[keep]] = 1.0
    return out
