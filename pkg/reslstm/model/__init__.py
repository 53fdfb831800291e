#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements the stacked residual LSTM encoder-decoder: vertical
stacking, residual connections every ``n`` layers, the output projection,
the EOS protocol and the binary checkpoint format.

Layers are numbered from 1 in :class:`StackConfig` (residual layers are
``n, 2n, 3n, ...``) and indexed from 0 everywhere else.
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ReslstmException
from ..lstm import LstmParams, LstmState, LstmTape, init_lstm_params, lstm_backward, lstm_forward
from ..tensor import PRECISIONS, Rng, get_precision, log_softmax, matmul, one_hot, zeros

EOS: int = 0
UNK: int = 1
PAD: int = 2
RESERVED: Tuple[str, ...] = ("<eos>", "<unk>", "<pad>")

CHECKPOINT_MAGIC: bytes = b"RESLSTM\x00"
CHECKPOINT_VERSION: int = 1

_DIM_FIX_ALIASES: Dict[str, str] = {
    "pad": "pad",
    "pad_input_with_zeros": "pad",
    "clip": "clip",
    "clip_hidden_to_input": "clip",
}


@dataclass
class StackConfig:
    """
    Shape of one LSTM stack (encoder and decoder share it).

    :param num_layers: Number of stacked layers (default: ``4``)
    :type num_layers: int
    :param residual_interval: Residual connection every ``n`` layers, ``0``
        disables residuals (default: ``2``)
    :type residual_interval: int
    :param hidden: Units per layer (default: ``512``)
    :type hidden: int
    :param dim_fix: ``pad`` zero-pads the residual input to the hidden width,
        ``clip`` truncates the hidden output to the input width
        (default: ``pad``)
    :type dim_fix: str
    :param reverse_source: Feed the source right to left (default: ``False``)
    :type reverse_source: bool
    """

    num_layers: int = 4
    residual_interval: int = 2
    hidden: int = 512
    dim_fix: str = "pad"
    reverse_source: bool = False

    def __post_init__(self: "StackConfig") -> None:
        if self.num_layers < 1:
            raise ReslstmException.ConfigurationError(
                f"num_layers must be >= 1, got {self.num_layers}"
            )
        if self.residual_interval < 0 or self.residual_interval > self.num_layers:
            raise ReslstmException.ConfigurationError(
                f"residual_interval must be in [0, {self.num_layers}], got {self.residual_interval}"
            )
        if self.hidden < 1:
            raise ReslstmException.ConfigurationError(f"hidden must be >= 1, got {self.hidden}")
        if self.dim_fix not in _DIM_FIX_ALIASES:
            raise ReslstmException.ConfigurationError(
                f"dim_fix must be one of {sorted(_DIM_FIX_ALIASES)}, got {self.dim_fix!r}"
            )
        self.dim_fix = _DIM_FIX_ALIASES[self.dim_fix]

    @property
    def residual_layers(self: "StackConfig") -> Tuple[int, ...]:
        """Returns the 1-based numbers of the layers that receive a residual input"""
        n: int = self.residual_interval
        if n == 0:
            return ()
        return tuple(range(n, self.num_layers + 1, n))

    def residual_source(self: "StackConfig", layer: int) -> Optional[int]:
        """
        Returns the 0-based index of the layer whose *input* is added to the
        output of 0-based ``layer``, or ``None`` if ``layer`` has no residual.
        """
        if layer + 1 not in self.residual_layers:
            return None
        return layer + 1 - self.residual_interval


def layer_widths(config: StackConfig, input_dim: int) -> List[Tuple[int, int]]:
    """
    Returns ``(input_dim, output_width)`` for every layer of a stack whose
    first layer consumes ``input_dim`` features (the vocabulary size for
    token input).

    :raises ReslstmException.ConfigurationError: In clip mode, if a residual
        input is wider than the hidden state
    """
    widths: List[Tuple[int, int]] = []
    inputs: List[int] = [input_dim]
    for layer in range(config.num_layers):
        out: int = config.hidden
        source: Optional[int] = config.residual_source(layer)
        if source is not None and config.dim_fix == "clip":
            if inputs[source] > config.hidden:
                raise ReslstmException.ConfigurationError(
                    f"clip mode: residual input of layer {layer + 1} has width "
                    f"{inputs[source]} > hidden {config.hidden}"
                )
            out = inputs[source]
        widths.append((inputs[layer], out))
        inputs.append(out)
    return widths


@dataclass
class StackActivationTape:
    """
    Everything :func:`stack_backward` needs from :func:`stack_forward`.

    ``inputs[k]`` is the sequence fed to layer ``k`` (``inputs[0]`` is the
    stack input), ``residual_sources`` maps a residual layer to the index of
    the layer whose input was added to it.
    """

    layer_tapes: List[LstmTape] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    residual_sources: Dict[int, int] = field(default_factory=dict)
    dropout_masks: List[Optional[np.ndarray]] = field(default_factory=list)
    final_states: List[LstmState] = field(default_factory=list)
    widths: List[Tuple[int, int]] = field(default_factory=list)
    step_mask: Optional[np.ndarray] = None


def _is_tokens(x: np.ndarray) -> bool:
    return np.issubdtype(x.dtype, np.integer)


def _fix(source: np.ndarray, width: int, dtype: Any) -> np.ndarray:
    """Zero-pads or truncates ``source`` (dense or token ids) to ``width`` features."""
    if _is_tokens(source):
        return one_hot(source, width, dtype=dtype)
    have: int = source.shape[-1]
    if have >= width:
        return source[..., :width]
    pad: List[Tuple[int, int]] = [(0, 0)] * (source.ndim - 1) + [(0, width - have)]
    return np.pad(source, pad)


def stack_forward(
    layers: Sequence[LstmParams],
    config: StackConfig,
    input_seq: Union[np.ndarray, Sequence[int]],
    init_states: Sequence[LstmState],
    dropout_masks: Optional[Sequence[Optional[np.ndarray]]] = None,
    step_mask: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, StackActivationTape]:
    """
    Runs a stack of LSTM layers over a sequence. Layer ``k`` consumes the
    output sequence of layer ``k - 1``; each residual layer adds the
    (dimension-fixed) input of layer ``k - n + 1`` to its hidden output; the
    dropout mask of a layer, if given, multiplies its final output.

    :param layers: One :class:`~reslstm.lstm.LstmParams` per layer
    :param config: Stack configuration
    :type config: StackConfig
    :param input_seq: Dense ``(T, ..., d)`` inputs or integer tokens ``(T, ...)``
    :param init_states: One initial state per layer
    :param dropout_masks: Optional per-layer multiplicative masks
        ``(T, ..., width)``, ``None`` entries skip a layer
    :param step_mask: Optional boolean ``(T, ...)`` mask of valid steps
    :raises ReslstmException.ShapeError: If the number of layers or states
        does not match the configuration
    :return: Output sequence of the top layer and the activation tape
    :rtype: Tuple[numpy.ndarray, StackActivationTape]
    """
    if len(layers) != config.num_layers or len(init_states) != config.num_layers:
        raise ReslstmException.ShapeError(
            f"stack of {config.num_layers} layers got {len(layers)} parameter sets "
            f"and {len(init_states)} initial states"
        )
    if dropout_masks is not None and len(dropout_masks) != config.num_layers:
        raise ReslstmException.ShapeError(
            f"{len(dropout_masks)} dropout masks for {config.num_layers} layers"
        )
    xs: np.ndarray = np.asarray(input_seq)
    widths: List[Tuple[int, int]] = layer_widths(config, layers[0].input_dim)
    tape: StackActivationTape = StackActivationTape(widths=widths, step_mask=step_mask)
    current: np.ndarray = xs
    for k, lstm in enumerate(layers):
        tape.inputs.append(current)
        states, layer_tape = lstm_forward(lstm, current, init_states[k], step_mask)
        tape.layer_tapes.append(layer_tape)
        tape.final_states.append(states[-1] if states else init_states[k])
        if states:
            out: np.ndarray = np.stack([state.h for state in states])
        else:
            out = zeros((0,) + init_states[k].h.shape)
        source: Optional[int] = config.residual_source(k)
        if source is not None:
            tape.residual_sources[k] = source
            out_width: int = widths[k][1]
            if config.dim_fix == "clip":
                out = out[..., :out_width]
            out = out + _fix(tape.inputs[source], out_width, out.dtype)
        mask: Optional[np.ndarray] = None if dropout_masks is None else dropout_masks[k]
        if mask is not None:
            if mask.shape != out.shape:
                raise ReslstmException.ShapeError(
                    f"dropout mask {mask.shape} for layer {k + 1} output {out.shape}"
                )
            out = out * mask
        tape.dropout_masks.append(mask)
        tape.outputs.append(out)
        current = out
    return current, tape


def stack_backward(
    layers: Sequence[LstmParams],
    config: StackConfig,
    tape: StackActivationTape,
    grad_top_seq: np.ndarray,
    grad_final_states: Optional[Sequence[Optional[LstmState]]] = None,
) -> Tuple[List[LstmParams], Optional[np.ndarray], List[LstmState]]:
    """
    Exact gradients of :func:`stack_forward`, including the residual and
    dropout paths.

    :param grad_top_seq: Gradient w.r.t. the top output sequence
    :param grad_final_states: Optional gradients w.r.t. every layer's final state
    :return: Per-layer parameter gradients, gradient w.r.t. the dense stack
        input (``None`` for token input) and per-layer initial state gradients
    :rtype: Tuple[List[LstmParams], Optional[numpy.ndarray], List[LstmState]]
    """
    L: int = config.num_layers
    if grad_top_seq.shape != tape.outputs[-1].shape:
        raise ReslstmException.ArgumentError(
            f"top gradient {grad_top_seq.shape} for output {tape.outputs[-1].shape}"
        )
    # accumulated gradient w.r.t. every layer input; index 0 is the stack input
    G: List[Optional[np.ndarray]] = [None] * (L + 1)
    G[L] = grad_top_seq
    layer_grads: List[Optional[LstmParams]] = [None] * L
    init_grads: List[Optional[LstmState]] = [None] * L

    def accumulate(index: int, grad: np.ndarray) -> None:
        G[index] = grad if G[index] is None else G[index] + grad

    for k in range(L - 1, -1, -1):
        g: Optional[np.ndarray] = G[k + 1]
        if g is None:
            g = np.zeros_like(tape.outputs[k])
        if tape.dropout_masks[k] is not None:
            g = g * tape.dropout_masks[k]
        grad_h: np.ndarray = g
        source: Optional[int] = tape.residual_sources.get(k)
        if source is not None:
            src: np.ndarray = tape.inputs[source]
            if not _is_tokens(src):
                accumulate(source, _fix(g, int(src.shape[-1]), g.dtype))
            if config.dim_fix == "clip":
                grad_h = _fix(g, layers[k].hidden, g.dtype)
        final: Optional[LstmState] = None if grad_final_states is None else grad_final_states[k]
        grads, grad_xs, grad_init = lstm_backward(layers[k], tape.layer_tapes[k], list(grad_h), final)
        layer_grads[k] = grads
        init_grads[k] = grad_init
        if grad_xs and grad_xs[0] is not None:
            accumulate(k, np.stack(grad_xs))
    stack_input: np.ndarray = tape.inputs[0]
    grad_input: Optional[np.ndarray] = None
    if not _is_tokens(stack_input):
        grad_input = G[0] if G[0] is not None else np.zeros_like(stack_input)
    return list(layer_grads), grad_input, list(init_grads)  # type: ignore[arg-type]


# ---- encoder-decoder --------------------------------------------------------


@dataclass
class ModelParams:
    """
    Full encoder-decoder: two stacks of identical shape, the output
    projection and the stack configuration.

    :param config: Stack configuration
    :param vocab_size: Size of the (shared) vocabulary
    :param encoder_layers: Encoder LSTM layers
    :param decoder_layers: Decoder LSTM layers
    :param W_out: Output projection ``(vocab_size, top_width)``
    :param b_out: Output bias ``(vocab_size,)``
    :param vocab_hash: Content hash of the vocabulary the model was trained on
    """

    config: StackConfig
    vocab_size: int
    encoder_layers: List[LstmParams]
    decoder_layers: List[LstmParams]
    W_out: np.ndarray
    b_out: np.ndarray
    vocab_hash: str = ""

    def __post_init__(self: "ModelParams") -> None:
        expected: List[Tuple[int, int]] = layer_widths(self.config, self.vocab_size)
        for name, stack in (("encoder", self.encoder_layers), ("decoder", self.decoder_layers)):
            if len(stack) != self.config.num_layers:
                raise ReslstmException.ShapeError(
                    f"{name} has {len(stack)} layers, config says {self.config.num_layers}"
                )
            for k, (lstm, (input_dim, _)) in enumerate(zip(stack, expected)):
                if lstm.input_dim != input_dim or lstm.hidden != self.config.hidden:
                    raise ReslstmException.ShapeError(
                        f"{name}.{k} has shape ({lstm.input_dim}, {lstm.hidden}), "
                        f"expected ({input_dim}, {self.config.hidden})"
                    )
        top: int = expected[-1][1]
        if self.W_out.shape != (self.vocab_size, top) or self.b_out.shape != (self.vocab_size,):
            raise ReslstmException.ShapeError(
                f"output projection {self.W_out.shape}/{self.b_out.shape} for "
                f"vocab {self.vocab_size} and top width {top}"
            )

    def named_tensors(self: "ModelParams") -> List[Tuple[str, np.ndarray]]:
        """Returns ``(name, array)`` for every learnable tensor in a fixed order"""
        named: List[Tuple[str, np.ndarray]] = []
        for name, stack in (("encoder", self.encoder_layers), ("decoder", self.decoder_layers)):
            for k, lstm in enumerate(stack):
                named.extend((f"{name}.{k}.{key}", array) for key, array in lstm.named_tensors())
        named.append(("output.W", self.W_out))
        named.append(("output.b", self.b_out))
        return named

    def parameter_count(self: "ModelParams") -> int:
        """Returns the number of learnable scalars"""
        return int(sum(array.size for _, array in self.named_tensors()))

    def with_tensors(self: "ModelParams", arrays: Sequence[np.ndarray]) -> "ModelParams":
        """Returns a model of the same structure holding ``arrays`` (in :meth:`named_tensors` order)"""
        return assemble(self.config, self.vocab_size, arrays, self.vocab_hash)

    def zeros_like(self: "ModelParams") -> "ModelParams":
        """Returns a model of the same shapes with every tensor zero (uniform predictor)"""
        return self.with_tensors([np.zeros_like(array) for _, array in self.named_tensors()])

    def copy(self: "ModelParams") -> "ModelParams":
        """Returns a deep copy"""
        return self.with_tensors([array.copy() for _, array in self.named_tensors()])

    @property
    def dtype(self: "ModelParams") -> Any:
        """Returns the floating point type of the parameters"""
        return self.W_out.dtype

    def zero_states(self: "ModelParams", batch: Optional[int] = None) -> List[LstmState]:
        """Returns all-zero initial states for the encoder"""
        shape: Tuple[int, ...] = (
            (self.config.hidden,) if batch is None else (batch, self.config.hidden)
        )
        return [
            LstmState(h=np.zeros(shape, self.dtype), c=np.zeros(shape, self.dtype))
            for _ in range(self.config.num_layers)
        ]


def assemble(
    config: StackConfig, vocab_size: int, arrays: Sequence[np.ndarray], vocab_hash: str = ""
) -> ModelParams:
    """
    Builds a model from tensors listed in :meth:`ModelParams.named_tensors`
    order.

    :raises ReslstmException.ShapeError: If the count or a shape does not fit
        the configuration
    """
    expected: int = 6 * config.num_layers + 2
    if len(arrays) != expected:
        raise ReslstmException.ShapeError(f"expected {expected} tensors, got {len(arrays)}")
    it = iter(arrays)
    stacks: List[List[LstmParams]] = [
        [LstmParams(W_x=next(it), W_h=next(it), b=next(it)) for _ in range(config.num_layers)]
        for _ in range(2)
    ]
    return ModelParams(
        config=config,
        vocab_size=vocab_size,
        encoder_layers=stacks[0],
        decoder_layers=stacks[1],
        W_out=next(it),
        b_out=next(it),
        vocab_hash=vocab_hash,
    )


def init_model(
    config: StackConfig,
    vocab_size: int,
    seed: int,
    init_scale: float = 0.08,
    forget_bias: float = 0.0,
    vocab_hash: str = "",
) -> ModelParams:
    """
    Creates a randomly initialised model in the active precision.

    :param config: Stack configuration
    :type config: StackConfig
    :param vocab_size: Vocabulary size including the reserved tokens
    :type vocab_size: int
    :param seed: Seed of the initialisation
    :type seed: int
    :param init_scale: Weights are drawn from ``uniform(-init_scale, init_scale)``
    :type init_scale: float
    :param forget_bias: Initial forget gate bias (default: ``0.0``)
    :type forget_bias: float
    :raises ReslstmException.ConfigurationError: If the vocabulary cannot hold
        the reserved tokens or the stack shape is invalid
    :rtype: ModelParams

    .. code-block:: python
        :linenos:
        :caption: Building the 4-layer residual model

        >>> from reslstm.model import StackConfig, init_model
        >>> config = StackConfig(num_layers=4, residual_interval=2, hidden=512)
        >>> params = init_model(config, vocab_size=50000, seed=1)
        >>> params.parameter_count()
        ...
    """
    if vocab_size < len(RESERVED):
        raise ReslstmException.ConfigurationError(
            f"vocab_size must be >= {len(RESERVED)}, got {vocab_size}"
        )
    widths: List[Tuple[int, int]] = layer_widths(config, vocab_size)
    rng: Rng = Rng(seed)
    stacks: List[List[LstmParams]] = []
    for tag in (1, 2):
        stream: Rng = rng.derive(tag)
        stacks.append(
            [
                init_lstm_params(input_dim, config.hidden, stream, init_scale, forget_bias)
                for input_dim, _ in widths
            ]
        )
    W_out: np.ndarray = (
        rng.derive(3)
        .uniform(-init_scale, init_scale, (vocab_size, widths[-1][1]))
        .astype(stacks[0][0].W_x.dtype)
    )
    params: ModelParams = ModelParams(
        config=config,
        vocab_size=vocab_size,
        encoder_layers=stacks[0],
        decoder_layers=stacks[1],
        W_out=W_out,
        b_out=zeros(vocab_size),
        vocab_hash=vocab_hash,
    )
    logging.debug(
        f"initialised model: {config.num_layers} layers, n={config.residual_interval}, "
        f"hidden {config.hidden}, vocab {vocab_size}, {params.parameter_count()} parameters"
    )
    return params


def source_sequence(source_tokens: Sequence[int], reverse: bool = False) -> List[int]:
    """Returns the encoder input for a source: the tokens (optionally reversed) followed by EOS"""
    tokens: List[int] = [int(t) for t in source_tokens]
    if reverse:
        tokens.reverse()
    return tokens + [EOS]


def batch_sources(
    sources: Sequence[Sequence[int]], reverse: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Builds the time-major encoder input of a batch.

    :return: Tokens ``(T, B)`` padded with PAD and the boolean step mask
    :rtype: Tuple[numpy.ndarray, numpy.ndarray]
    """
    seqs: List[List[int]] = [source_sequence(source, reverse) for source in sources]
    T: int = max(len(seq) for seq in seqs)
    tokens: np.ndarray = np.full((T, len(seqs)), PAD, dtype=np.int64)
    mask: np.ndarray = np.zeros((T, len(seqs)), dtype=bool)
    for b, seq in enumerate(seqs):
        tokens[: len(seq), b] = seq
        mask[: len(seq), b] = True
    return tokens, mask


def encode(params: ModelParams, source_tokens: Sequence[int]) -> List[LstmState]:
    """
    Encodes one source sequence: EOS is appended, the encoder stack runs
    over the tokens and every layer's final ``(h, c)`` is returned as the
    decoder initialisation.

    :param params: Model
    :type params: ModelParams
    :param source_tokens: Token indices (may be empty)
    :type source_tokens: Sequence[int]
    :raises ReslstmException.DataError: If an index is out of range
    :rtype: List[reslstm.lstm.LstmState]
    """
    tokens: np.ndarray = np.asarray(
        source_sequence(source_tokens, params.config.reverse_source), dtype=np.int64
    )
    _, tape = stack_forward(params.encoder_layers, params.config, tokens, params.zero_states())
    return tape.final_states


def encode_batch(
    params: ModelParams,
    sources: Sequence[Sequence[int]],
    dropout_masks: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> Tuple[List[LstmState], StackActivationTape]:
    """Encodes a batch of sources; returns batched final states and the tape"""
    tokens, mask = batch_sources(sources, params.config.reverse_source)
    _, tape = stack_forward(
        params.encoder_layers,
        params.config,
        tokens,
        params.zero_states(len(sources)),
        dropout_masks,
        mask,
    )
    return tape.final_states, tape


def project(params: ModelParams, top: np.ndarray) -> np.ndarray:
    """Returns log-probabilities over the vocabulary for top-layer outputs ``(..., width)``"""
    return log_softmax(matmul(top, params.W_out.T) + params.b_out)


def decode_step(
    params: ModelParams,
    prev_token: Union[int, np.ndarray],
    states: Sequence[LstmState],
) -> Tuple[np.ndarray, List[LstmState]]:
    """
    Advances the decoder by one token.

    :param params: Model
    :type params: ModelParams
    :param prev_token: Previously generated token (EOS at the first step),
        or an array of tokens for a batch of hypotheses
    :param states: Per-layer decoder states
    :raises ReslstmException.DataError: If the token is out of range
    :return: Log-probabilities over the vocabulary and the new states
    :rtype: Tuple[numpy.ndarray, List[reslstm.lstm.LstmState]]
    """
    tokens: np.ndarray = np.asarray(prev_token, dtype=np.int64)[None]
    top, tape = stack_forward(params.decoder_layers, params.config, tokens, states)
    return project(params, top[0]), tape.final_states


# ---- checkpoints ------------------------------------------------------------


def _manifest(params: ModelParams) -> Dict[str, Any]:
    dtype_name: str = np.dtype(params.dtype).name
    return {
        "format": CHECKPOINT_VERSION,
        "num_layers": params.config.num_layers,
        "residual_interval": params.config.residual_interval,
        "hidden": params.config.hidden,
        "dim_fix": params.config.dim_fix,
        "reverse_source": params.config.reverse_source,
        "vocab_size": params.vocab_size,
        "precision": dtype_name,
        "vocab_hash": params.vocab_hash,
        "tensors": [{"name": name, "shape": list(array.shape)} for name, array in params.named_tensors()],
    }


def save_checkpoint(params: ModelParams, path: str) -> None:
    """
    Writes the model atomically. Layout: magic bytes, format version, a
    length-prefixed JSON manifest (configuration, precision, vocabulary
    hash, tensor shapes), every tensor as a shape header followed by
    row-major little-endian floats, and a SHA-256 trailer over everything
    before it.

    :param params: Model to store
    :type params: ModelParams
    :param path: Destination file
    :type path: str
    """
    manifest: bytes = json.dumps(_manifest(params), sort_keys=True).encode("utf-8")
    little: str = "<f4" if np.dtype(params.dtype) == np.float32 else "<f8"
    chunks: List[bytes] = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(manifest)),
        manifest,
    ]
    for _, array in params.named_tensors():
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=little).tobytes())
    body: bytes = b"".join(chunks)
    tmp: str = f"{path}.tmp"
    with open(tmp, "wb") as handle:
        handle.write(body)
        handle.write(hashlib.sha256(body).digest())
    os.replace(tmp, path)
    logging.debug(f"wrote checkpoint {path} ({len(body) + 32} bytes)")


class _Reader:
    """Bounds-checked cursor over checkpoint bytes."""

    def __init__(self: "_Reader", data: bytes, path: str) -> None:
        self.data: bytes = data
        self.path: str = path
        self.pos: int = 0

    def take(self: "_Reader", count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise ReslstmException.CheckpointError(f"{self.path}: truncated while reading {what}")
        chunk: bytes = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u32(self: "_Reader", what: str) -> int:
        return int(struct.unpack("<I", self.take(4, what))[0])


def load_checkpoint(path: str, vocab_hash: Optional[str] = None) -> ModelParams:
    """
    Reads a checkpoint written by :func:`save_checkpoint`.

    :param path: Checkpoint file
    :type path: str
    :param vocab_hash: If given, the vocabulary hash the model must have been
        trained with
    :type vocab_hash: str, optional
    :raises ReslstmException.CheckpointError: On bad magic, unknown version,
        truncation, corrupted content or inconsistent shapes
    :raises ReslstmException.VocabularyMismatchError: If ``vocab_hash`` differs
    :rtype: ModelParams
    """
    try:
        with open(path, "rb") as handle:
            data: bytes = handle.read()
    except OSError as exc:
        raise ReslstmException.CheckpointError(f"{path}: {exc}") from exc
    if len(data) < len(CHECKPOINT_MAGIC) + 8 + 32:
        raise ReslstmException.CheckpointError(f"{path}: truncated header")
    body, digest = data[:-32], data[-32:]
    reader: _Reader = _Reader(body, path)
    if reader.take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise ReslstmException.CheckpointError(f"{path}: bad magic, not a checkpoint")
    version: int = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise ReslstmException.CheckpointError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    if hashlib.sha256(body).digest() != digest:
        raise ReslstmException.CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    try:
        manifest: Dict[str, Any] = json.loads(reader.take(reader.u32("manifest length"), "manifest"))
    except ValueError as exc:
        raise ReslstmException.CheckpointError(f"{path}: unreadable manifest") from exc
    precision_name: str = manifest.get("precision", "")
    if precision_name not in PRECISIONS:
        raise ReslstmException.CheckpointError(f"{path}: unknown precision {precision_name!r}")
    little: str = "<f4" if precision_name == "float32" else "<f8"
    try:
        config: StackConfig = StackConfig(
            num_layers=int(manifest["num_layers"]),
            residual_interval=int(manifest["residual_interval"]),
            hidden=int(manifest["hidden"]),
            dim_fix=str(manifest["dim_fix"]),
            reverse_source=bool(manifest["reverse_source"]),
        )
        vocab_size: int = int(manifest["vocab_size"])
        entries: List[Dict[str, Any]] = list(manifest["tensors"])
    except (KeyError, TypeError, ValueError, ReslstmException.ConfigurationError) as exc:
        raise ReslstmException.CheckpointError(f"{path}: invalid manifest field {exc}") from exc

    arrays: List[np.ndarray] = []
    for entry in entries:
        name: str = entry["name"]
        ndim: int = reader.u32(f"{name} rank")
        shape: Tuple[int, ...] = struct.unpack(f"<{ndim}I", reader.take(4 * ndim, f"{name} shape"))
        if list(shape) != list(entry["shape"]):
            raise ReslstmException.CheckpointError(
                f"{path}: tensor {name} has shape {shape}, manifest says {tuple(entry['shape'])}"
            )
        size: int = int(np.prod(shape)) * np.dtype(little).itemsize
        raw: np.ndarray = np.frombuffer(reader.take(size, name), dtype=little).reshape(shape)
        arrays.append(raw.astype(PRECISIONS[precision_name]))
    if reader.pos != len(body):
        raise ReslstmException.CheckpointError(f"{path}: {len(body) - reader.pos} trailing bytes")

    stored_hash: str = str(manifest.get("vocab_hash", ""))
    if vocab_hash is not None and stored_hash != vocab_hash:
        raise ReslstmException.VocabularyMismatchError(
            f"{path} was trained with vocabulary {stored_hash[:12]}..., got {vocab_hash[:12]}..."
        )
    try:
        params: ModelParams = assemble(config, vocab_size, arrays, stored_hash)
    except ReslstmException.ShapeError as exc:
        raise ReslstmException.CheckpointError(f"{path}: {exc}") from exc
    if get_precision() != precision_name:
        logging.info(f"{path} stores {precision_name} parameters, active precision is {get_precision()}")
    return params

