#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements teacher-forced training: the masked cross-entropy
loss with its exact gradients, plain SGD with optional global-norm
clipping, the step-halving learning rate schedule, inverted dropout after
every LSTM layer, per-epoch perplexity reporting and checkpointing.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ReslstmException
from ..model import (
    EOS,
    PAD,
    ModelParams,
    encode_batch,
    layer_widths,
    save_checkpoint,
    stack_backward,
    stack_forward,
)
from ..tensor import PRECISIONS, Rng, ensure_finite, log_softmax, precision

TokenPair = Tuple[Sequence[int], Sequence[int]]
DropoutMasks = Tuple[List[Optional[np.ndarray]], List[Optional[np.ndarray]]]


@dataclass
class TrainConfig:
    """
    Training recipe. The defaults are SGD starting at 1.0, halved after
    every third epoch, ten epochs and 50% dropout.

    :param initial_lr: Learning rate of the first epoch (default: ``1.0``)
    :type initial_lr: float
    :param halve_every: Halve the learning rate every this many epochs (default: ``3``)
    :type halve_every: int
    :param epochs: Number of epochs (default: ``10``)
    :type epochs: int
    :param dropout_keep: Keep probability of the dropout masks, ``1.0``
        disables dropout (default: ``0.5``)
    :type dropout_keep: float
    :param batch_size: Pairs per update (default: ``64``)
    :type batch_size: int
    :param seed: Seed of shuffling and dropout (default: ``1``)
    :type seed: int
    :param max_grad_norm: Clip the global gradient norm to this value
        (default: ``None``, no clipping). The recipe does not clip; at the
        initial rate of 1.0 longer toy sequences can overshoot late in
        training, which a clip of 5 prevents.
    :type max_grad_norm: float, optional
    :param precision: ``float32`` or ``float64`` (default: ``float32``)
    :type precision: str
    :param max_steps: Stop after this many updates (default: ``None``)
    :type max_steps: int, optional
    :param threads: Number of shards a batch is split into (default: ``1``)
    :type threads: int
    :param valid_batch_size: Pairs per forward pass during validation (default: ``256``)
    :type valid_batch_size: int
    """

    initial_lr: float = 1.0
    halve_every: int = 3
    epochs: int = 10
    dropout_keep: float = 0.5
    batch_size: int = 64
    seed: int = 1
    max_grad_norm: Optional[float] = None
    precision: str = "float32"
    max_steps: Optional[int] = None
    threads: int = 1
    valid_batch_size: int = 256

    def __post_init__(self: "TrainConfig") -> None:
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ReslstmException.ConfigurationError(
                f"dropout_keep must be in (0, 1], got {self.dropout_keep}"
            )
        if self.initial_lr <= 0:
            raise ReslstmException.ConfigurationError(
                f"initial_lr must be positive, got {self.initial_lr}"
            )
        for name in ("halve_every", "batch_size", "threads", "valid_batch_size"):
            if getattr(self, name) < 1:
                raise ReslstmException.ConfigurationError(
                    f"{name} must be >= 1, got {getattr(self, name)}"
                )
        if self.epochs < 0:
            raise ReslstmException.ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ReslstmException.ConfigurationError(
                f"max_grad_norm must be positive, got {self.max_grad_norm}"
            )
        if self.max_steps is not None and self.max_steps < 1:
            raise ReslstmException.ConfigurationError(
                f"max_steps must be >= 1, got {self.max_steps}"
            )
        if self.precision not in PRECISIONS:
            raise ReslstmException.ConfigurationError(
                f"precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}"
            )


@dataclass
class EpochRecord:
    """One row of the training curves."""

    epoch: int
    lr: float
    steps: int
    train_loss: float
    train_perplexity: float
    valid_loss: Optional[float]
    valid_perplexity: Optional[float]
    seconds: float


@dataclass
class TrainReport:
    """Per-epoch perplexities, learning rates and timings of a run."""

    records: List[EpochRecord] = field(default_factory=list)
    steps: int = 0
    last_checkpoint: Optional[str] = None

    @property
    def train_perplexity(self: "TrainReport") -> List[float]:
        """Returns the training perplexity of every epoch"""
        return [record.train_perplexity for record in self.records]

    @property
    def valid_perplexity(self: "TrainReport") -> List[Optional[float]]:
        """Returns the validation perplexity of every epoch"""
        return [record.valid_perplexity for record in self.records]

    @property
    def lr_trace(self: "TrainReport") -> List[float]:
        """Returns the learning rate of every epoch"""
        return [record.lr for record in self.records]

    @property
    def seconds(self: "TrainReport") -> List[float]:
        """Returns the wall-clock duration of every epoch"""
        return [record.seconds for record in self.records]

    def to_csv(self: "TrainReport") -> str:
        """
        Returns the curves as CSV with the columns
        ``epoch,split,perplexity,lr,seconds``, one ``train`` and (if
        validated) one ``valid`` row per epoch.
        """
        lines: List[str] = ["epoch,split,perplexity,lr,seconds"]
        for record in self.records:
            lines.append(
                f"{record.epoch},train,{record.train_perplexity!r},{record.lr!r},{record.seconds:.3f}"
            )
            if record.valid_perplexity is not None:
                lines.append(
                    f"{record.epoch},valid,{record.valid_perplexity!r},{record.lr!r},{record.seconds:.3f}"
                )
        return "\n".join(lines) + "\n"

    def write_csv(self: "TrainReport", path: str) -> None:
        """Writes :meth:`to_csv` to ``path``"""
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_csv())


def lr_at(epoch_index: int, config: TrainConfig) -> float:
    """
    Learning rate of a (0-based) epoch:
    ``initial_lr * 0.5 ** (epoch_index // halve_every)``.

    :raises ReslstmException.ArgumentError: If ``epoch_index`` is negative
    """
    if epoch_index < 0:
        raise ReslstmException.ArgumentError(f"epoch index must be >= 0, got {epoch_index}")
    return config.initial_lr * 0.5 ** (epoch_index // config.halve_every)


def target_length(target: Sequence[int]) -> int:
    """Returns the number of tokens before the first PAD"""
    for index, token in enumerate(target):
        if int(token) == PAD:
            return index
    return len(target)


def batch_targets(targets: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Builds the time-major teacher-forcing arrays of a batch: decoder inputs
    ``[EOS, y_1, ..., y_L]``, expected outputs ``[y_1, ..., y_L, EOS]`` and
    the mask of positions that count towards the loss.

    :raises ReslstmException.ArgumentError: If a target is empty (or only PAD)
    """
    lengths: List[int] = [target_length(target) for target in targets]
    if not lengths or min(lengths) == 0:
        raise ReslstmException.ArgumentError("batch contains an empty or all-padding target")
    T: int = max(lengths) + 1
    inputs: np.ndarray = np.full((T, len(targets)), PAD, dtype=np.int64)
    outputs: np.ndarray = np.full((T, len(targets)), PAD, dtype=np.int64)
    mask: np.ndarray = np.zeros((T, len(targets)), dtype=bool)
    for b, (target, length) in enumerate(zip(targets, lengths)):
        tokens: List[int] = [int(token) for token in target[:length]]
        inputs[: length + 1, b] = [EOS] + tokens
        outputs[: length + 1, b] = tokens + [EOS]
        mask[: length + 1, b] = True
    return inputs, outputs, mask


def make_dropout_masks(
    rng: Rng,
    keep: float,
    params: ModelParams,
    source_steps: int,
    target_steps: int,
    batch: int,
) -> Optional[DropoutMasks]:
    """
    Draws fresh inverted-dropout masks (``bernoulli(keep) / keep``) for every
    encoder and decoder layer output. Returns ``None`` when ``keep == 1``,
    without consuming random numbers.
    """
    if keep >= 1.0:
        return None
    widths: List[Tuple[int, int]] = layer_widths(params.config, params.vocab_size)
    masks: List[List[Optional[np.ndarray]]] = []
    for steps in (source_steps, target_steps):
        masks.append(
            [
                (rng.bernoulli(keep, (steps, batch, width)) / keep).astype(params.dtype)
                for _, width in widths
            ]
        )
    return masks[0], masks[1]


def _slice_masks(masks: Optional[DropoutMasks], start: int, stop: int, S: int, T: int) -> Optional[DropoutMasks]:
    if masks is None:
        return None
    return (
        [None if m is None else m[:S, start:stop] for m in masks[0]],
        [None if m is None else m[:T, start:stop] for m in masks[1]],
    )


def _batch_sums(
    params: ModelParams,
    batch: Sequence[TokenPair],
    masks: Optional[DropoutMasks] = None,
    with_grads: bool = True,
) -> Tuple[float, int, Optional[ModelParams]]:
    """Summed NLL, token count and the (unscaled) gradient of the summed NLL."""
    sources: List[Sequence[int]] = [pair[0] for pair in batch]
    targets: List[Sequence[int]] = [pair[1] for pair in batch]
    dec_in, dec_out, loss_mask = batch_targets(targets)
    enc_masks, dec_masks = (None, None) if masks is None else masks

    states, enc_tape = encode_batch(params, sources, enc_masks)
    top, dec_tape = stack_forward(params.decoder_layers, params.config, dec_in, states, dec_masks)
    logp: np.ndarray = log_softmax(top @ params.W_out.T + params.b_out)
    picked: np.ndarray = np.take_along_axis(logp, dec_out[..., None], axis=-1)[..., 0]
    nll_sum: float = -float(np.sum(np.where(loss_mask, picked, 0.0), dtype=np.float64))
    n_tokens: int = int(loss_mask.sum())
    if not with_grads:
        return nll_sum, n_tokens, None

    # d(-log softmax)/d logits = softmax - onehot, masked positions contribute nothing
    d_logits: np.ndarray = np.exp(logp)
    np.put_along_axis(
        d_logits,
        dec_out[..., None],
        np.take_along_axis(d_logits, dec_out[..., None], axis=-1) - 1.0,
        axis=-1,
    )
    d_logits = d_logits * loss_mask[..., None]
    V: int = params.vocab_size
    width: int = top.shape[-1]
    d_rows: np.ndarray = d_logits.reshape(-1, V)
    dW_out: np.ndarray = d_rows.T @ top.reshape(-1, width)
    db_out: np.ndarray = d_rows.sum(axis=0)
    d_top: np.ndarray = d_logits @ params.W_out

    dec_grads, _, d_states = stack_backward(params.decoder_layers, params.config, dec_tape, d_top)
    enc_grads, _, _ = stack_backward(
        params.encoder_layers,
        params.config,
        enc_tape,
        np.zeros_like(enc_tape.outputs[-1]),
        d_states,
    )
    arrays: List[np.ndarray] = []
    for stack in (enc_grads, dec_grads):
        for grads in stack:
            arrays.extend(array for _, array in grads.named_tensors())
    arrays.extend([dW_out, db_out])
    return nll_sum, n_tokens, params.with_tensors(arrays)


def _shards(size: int, threads: int) -> List[Tuple[int, int]]:
    count: int = min(threads, size)
    bounds: List[int] = [round(i * size / count) for i in range(count + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(count)]


def _sharded_sums(
    params: ModelParams,
    batch: Sequence[TokenPair],
    masks: Optional[DropoutMasks],
    threads: int,
) -> Tuple[float, int, ModelParams]:
    """
    Splits the batch into contiguous shards processed concurrently and
    reduces their results in shard order.
    """
    if threads <= 1 or len(batch) < 2:
        nll, count, grads = _batch_sums(params, batch, masks)
        return nll, count, grads  # type: ignore[return-value]

    def run(bounds: Tuple[int, int]) -> Tuple[float, int, Optional[ModelParams]]:
        start, stop = bounds
        part: Sequence[TokenPair] = batch[start:stop]
        S: int = max(len(pair[0]) for pair in part) + 1
        T: int = max(target_length(pair[1]) for pair in part) + 1
        return _batch_sums(params, part, _slice_masks(masks, start, stop, S, T))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, _shards(len(batch), threads)))
    nll_sum: float = 0.0
    n_tokens: int = 0
    total: Optional[List[np.ndarray]] = None
    for nll, count, grads in results:
        nll_sum += nll
        n_tokens += count
        arrays: List[np.ndarray] = [array for _, array in grads.named_tensors()]  # type: ignore[union-attr]
        total = arrays if total is None else [a + b for a, b in zip(total, arrays)]
    return nll_sum, n_tokens, params.with_tensors(total)  # type: ignore[arg-type]


def _scale(grads: ModelParams, factor: float) -> ModelParams:
    return grads.with_tensors([array * factor for _, array in grads.named_tensors()])


def batch_loss(
    params: ModelParams,
    batch: Sequence[TokenPair],
    dropout_masks: Optional[DropoutMasks] = None,
    threads: int = 1,
) -> Tuple[float, ModelParams]:
    """
    Mean token cross-entropy of a batch under teacher forcing and its exact
    gradient. Every target is read up to its first PAD; the decoder predicts
    each target token and the closing EOS.

    :param params: Model
    :type params: reslstm.model.ModelParams
    :param batch: ``(source indices, target indices)`` pairs
    :param dropout_masks: Encoder and decoder masks from
        :func:`make_dropout_masks`, ``None`` disables dropout
    :param threads: Number of concurrently processed shards (default: ``1``)
    :raises ReslstmException.ArgumentError: If the batch is empty or a target
        holds only padding
    :return: The loss and its gradient (same structure as ``params``)
    :rtype: Tuple[float, reslstm.model.ModelParams]

    .. code-block:: python
        :linenos:
        :caption: Loss of an untrained model is close to log(vocabulary size)

        >>> from reslstm.trainer import batch_loss
        >>> loss, grads = batch_loss(params, [([5, 6, 7], [5, 6, 7])])
    """
    if len(batch) == 0:
        raise ReslstmException.ArgumentError("empty batch")
    nll_sum, n_tokens, grads = _sharded_sums(params, batch, dropout_masks, threads)
    return nll_sum / n_tokens, _scale(grads, 1.0 / n_tokens)


def evaluate_nll(
    params: ModelParams, pairs: Sequence[TokenPair], batch_size: int = 256
) -> Tuple[float, int]:
    """
    Teacher-forced negative log-likelihood without dropout.

    :return: Summed NLL and the number of predicted tokens
    :rtype: Tuple[float, int]
    """
    nll_sum: float = 0.0
    n_tokens: int = 0
    for start in range(0, len(pairs), batch_size):
        nll, count, _ = _batch_sums(params, pairs[start : start + batch_size], None, with_grads=False)
        nll_sum += nll
        n_tokens += count
    return nll_sum, n_tokens


def sgd_step(
    params: ModelParams,
    gradients: ModelParams,
    lr: float,
    max_grad_norm: Optional[float] = None,
) -> ModelParams:
    """
    Plain SGD update ``p - lr * g``. With ``max_grad_norm`` set, ``g`` is
    first rescaled so that its global L2 norm does not exceed it.

    :param params: Current parameters
    :type params: reslstm.model.ModelParams
    :param gradients: Gradients with the same structure
    :type gradients: reslstm.model.ModelParams
    :param lr: Learning rate
    :type lr: float
    :param max_grad_norm: Optional clipping threshold
    :type max_grad_norm: float, optional
    :raises ReslstmException.ShapeError: If a gradient shape differs
    :raises ReslstmException.TrainingError: If a gradient holds NaN or inf
    :return: The updated parameters
    :rtype: reslstm.model.ModelParams
    """
    named_params = params.named_tensors()
    named_grads = gradients.named_tensors()
    if len(named_params) != len(named_grads):
        raise ReslstmException.ShapeError(
            f"{len(named_grads)} gradient tensors for {len(named_params)} parameters"
        )
    for (name, value), (_, grad) in zip(named_params, named_grads):
        if value.shape != grad.shape:
            raise ReslstmException.ShapeError(f"gradient of {name}: {grad.shape} vs {value.shape}")
        ensure_finite(f"gradient of {name}", grad)
    factor: float = lr
    if max_grad_norm is not None:
        norm: float = math.sqrt(
            sum(float(np.sum(np.square(grad, dtype=np.float64))) for _, grad in named_grads)
        )
        if norm > max_grad_norm:
            logging.debug(f"clipping gradient norm {norm:.4f} to {max_grad_norm}")
            factor = lr * (max_grad_norm / norm)
    return params.with_tensors(
        [value - factor * grad for (_, value), (_, grad) in zip(named_params, named_grads)]
    )


def _batches(order: Sequence[int], size: int) -> Iterable[List[int]]:
    for start in range(0, len(order), size):
        yield list(order[start : start + size])


def _checkpoint(params: ModelParams, directory: str, epoch: int) -> str:
    os.makedirs(directory, exist_ok=True)
    path: str = os.path.join(directory, f"epoch-{epoch:03d}.ckpt")
    save_checkpoint(params, path)
    save_checkpoint(params, os.path.join(directory, "last.ckpt"))
    return path


def train(
    params: ModelParams,
    corpus: Sequence[TokenPair],
    valid_set: Sequence[TokenPair],
    config: TrainConfig,
    checkpoint_dir: Optional[str] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> Tuple[ModelParams, TrainReport]:
    """
    Trains a model. Every epoch shuffles the corpus with the seeded
    generator, draws fresh dropout masks per batch, reports training and
    validation perplexity and writes ``epoch-XXX.ckpt`` and ``last.ckpt``
    into ``checkpoint_dir``.

    :param params: Initial parameters (not modified)
    :type params: reslstm.model.ModelParams
    :param corpus: Training ``(source, target)`` index pairs
    :param valid_set: Validation pairs, may be empty
    :param config: Recipe
    :type config: TrainConfig
    :param checkpoint_dir: Directory for checkpoints (default: none written)
    :type checkpoint_dir: str, optional
    :param on_epoch: Called with every finished :class:`EpochRecord`
    :raises ReslstmException.ArgumentError: If the corpus is empty
    :raises ReslstmException.DivergenceError: If the loss or a gradient
        becomes non-finite; names the last good checkpoint
    :rtype: Tuple[reslstm.model.ModelParams, TrainReport]

    .. code-block:: python
        :linenos:
        :caption: Training on a toy corpus

        >>> from reslstm.model import StackConfig, init_model
        >>> from reslstm.trainer import TrainConfig, train
        >>> params = init_model(StackConfig(num_layers=2, hidden=32), vocab_size=23, seed=1)
        >>> params, report = train(params, pairs, valid, TrainConfig(dropout_keep=1.0))
        >>> report.train_perplexity[-1]
        1.04...
    """
    if len(corpus) == 0:
        raise ReslstmException.ArgumentError("training corpus is empty")
    report: TrainReport = TrainReport()
    with precision(config.precision):
        dtype = PRECISIONS[config.precision]
        params = params.with_tensors([array.astype(dtype) for _, array in params.named_tensors()])
        rng: Rng = Rng(config.seed)
        shuffle_rng: Rng = rng.derive(1)
        dropout_rng: Rng = rng.derive(2)
        logging.info(
            f"training {params.parameter_count()} parameters on {len(corpus)} pairs "
            f"({len(valid_set)} validation), {config.epochs} epochs, batch {config.batch_size}"
        )
        for epoch in range(config.epochs):
            started: float = time.perf_counter()
            lr: float = lr_at(epoch, config)
            epoch_nll: float = 0.0
            epoch_tokens: int = 0
            epoch_steps: int = 0
            for indices in _batches(shuffle_rng.permutation(len(corpus)), config.batch_size):
                batch: List[TokenPair] = [corpus[i] for i in indices]
                masks: Optional[DropoutMasks] = make_dropout_masks(
                    dropout_rng,
                    config.dropout_keep,
                    params,
                    max(len(pair[0]) for pair in batch) + 1,
                    max(target_length(pair[1]) for pair in batch) + 1,
                    len(batch),
                )
                nll_sum, n_tokens, grads = _sharded_sums(params, batch, masks, config.threads)
                if not math.isfinite(nll_sum):
                    raise ReslstmException.DivergenceError(
                        f"non-finite loss in epoch {epoch} step {report.steps}",
                        last_checkpoint=report.last_checkpoint,
                    )
                try:
                    params = sgd_step(params, _scale(grads, 1.0 / n_tokens), lr, config.max_grad_norm)
                except ReslstmException.TrainingError as exc:
                    raise ReslstmException.DivergenceError(
                        f"epoch {epoch} step {report.steps}: {exc}",
                        last_checkpoint=report.last_checkpoint,
                    ) from exc
                epoch_nll += nll_sum
                epoch_tokens += n_tokens
                epoch_steps += 1
                report.steps += 1
                if config.max_steps is not None and report.steps >= config.max_steps:
                    break

            train_loss: float = epoch_nll / epoch_tokens
            valid_loss: Optional[float] = None
            if len(valid_set):
                valid_nll, valid_tokens = evaluate_nll(params, valid_set, config.valid_batch_size)
                valid_loss = valid_nll / valid_tokens
            record: EpochRecord = EpochRecord(
                epoch=epoch,
                lr=lr,
                steps=epoch_steps,
                train_loss=train_loss,
                train_perplexity=math.exp(train_loss),
                valid_loss=valid_loss,
                valid_perplexity=None if valid_loss is None else math.exp(valid_loss),
                seconds=time.perf_counter() - started,
            )
            report.records.append(record)
            if checkpoint_dir is not None:
                report.last_checkpoint = _checkpoint(params, checkpoint_dir, epoch)
            logging.info(
                f"epoch {epoch}: lr {lr} train ppl {record.train_perplexity:.4f}"
                + ("" if record.valid_perplexity is None else f" valid ppl {record.valid_perplexity:.4f}")
                + f" ({record.seconds:.1f}s, {epoch_steps} steps)"
            )
            if on_epoch is not None:
                on_epoch(record)
            if config.max_steps is not None and report.steps >= config.max_steps:
                logging.info(f"stopping after {report.steps} steps")
                break
    return params, report


def plot_report(report: TrainReport, path: str) -> None:
    """
    Draws training and validation perplexity per epoch and saves the figure.
    Needs the optional ``plot`` extra (matplotlib).

    :raises ReslstmException.ConfigurationError: If matplotlib is missing
    """
    try:
        import matplotlib  # pylint: disable=import-outside-toplevel

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt  # pylint: disable=import-outside-toplevel
    except ImportError as exc:
        raise ReslstmException.ConfigurationError(
            "plotting needs matplotlib: pip install python-reslstm-paraphrase[plot]"
        ) from exc
    epochs: List[int] = [record.epoch + 1 for record in report.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, report.train_perplexity, marker="o", label="train")
    valid: List[Optional[float]] = report.valid_perplexity
    if any(value is not None for value in valid):
        ax.plot(epochs, [np.nan if v is None else v for v in valid], marker="s", label="valid")
    ax.set_xlabel("epoch")
    ax.set_ylabel("perplexity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
