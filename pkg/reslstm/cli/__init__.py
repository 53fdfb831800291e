#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements the ``reslstm`` command-line interface with the
subcommands ``train``, ``generate``, ``evaluate``, ``gradcheck`` and
``make-toy``.

Settings are resolved from the defaults, then a flat ``key=value`` file
(``--config`` or the ``RESLSTM_CONFIG`` environment variable), then the
command-line flags; the last source wins. Logs go to standard error, data
products to files or standard output.

.. code-block:: bash
    :linenos:
    :caption: Training the residual model on a toy corpus

    reslstm make-toy --kind copy --vocab-size 20 --max-len 8 --count 5000 toy/
    reslstm train --layers 4 --residual-every 2 --hidden 64 toy/train.tsv toy/valid.tsv run/
    reslstm generate --checkpoint run/model.ckpt --input toy/sources.txt --beam 5
"""

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, get_type_hints

import numpy as np

from ..data import (
    TOY_KINDS,
    Vocabulary,
    build_vocab,
    encode_pairs,
    load_pairs_tsv,
    make_toy_corpus,
    sentences,
    write_pairs_tsv,
)
from ..decoder import DecodeConfig, generate_batch
from ..exceptions import EXIT_SUCCESS, EXIT_USAGE, ReslstmException
from ..lstm import LstmParams, LstmState, init_lstm_params, lstm_backward, lstm_forward
from ..metrics import (
    EmbeddingTable,
    EvalInstance,
    MetricReport,
    corpus_perplexity,
    evaluate_corpus,
    instance_pairs,
    load_eval_instances,
)
from ..model import (
    RESERVED,
    ModelParams,
    StackConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from ..oracles import check_layer_gradients, check_model_gradients
from ..tensor import Rng, precision
from ..trainer import TrainConfig, batch_loss, evaluate_nll, plot_report, train

CONFIG_ENV: str = "RESLSTM_CONFIG"
GRADCHECK_TOLERANCE: float = 1e-4


@dataclass
class RunConfig:
    """
    Every setting addressable from a configuration file or the command line.
    The fields mirror :class:`reslstm.model.StackConfig`,
    :class:`reslstm.trainer.TrainConfig` and
    :class:`reslstm.decoder.DecodeConfig` plus the model initialisation and
    vocabulary size.
    """

    # model
    num_layers: int = 4
    residual_interval: int = 2
    hidden: int = 512
    dim_fix: str = "pad"
    reverse_source: bool = False
    init_scale: float = 0.08
    forget_bias: float = 0.0
    max_vocab: int = 50000
    # training
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
    # decoding
    beam_size: int = 5
    max_len: Optional[int] = None
    length_normalize: bool = False
    allow_unk: bool = True

    def stack_config(self: "RunConfig") -> StackConfig:
        """Returns the stack shape"""
        return StackConfig(
            num_layers=self.num_layers,
            residual_interval=self.residual_interval,
            hidden=self.hidden,
            dim_fix=self.dim_fix,
            reverse_source=self.reverse_source,
        )

    def train_config(self: "RunConfig") -> TrainConfig:
        """Returns the training recipe"""
        keys = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{key: value for key, value in asdict(self).items() if key in keys})

    def decode_config(self: "RunConfig") -> DecodeConfig:
        """Returns the beam search settings"""
        return DecodeConfig(
            beam_size=self.beam_size,
            max_len=self.max_len,
            length_normalize=self.length_normalize,
            allow_unk=self.allow_unk,
        )

    def to_text(self: "RunConfig") -> str:
        """Returns the configuration as ``key=value`` lines, readable by :func:`parse_config_text`"""
        return "".join(f"{key}={_format_value(value)}\n" for key, value in asdict(self).items())


_HINTS: Dict[str, Any] = get_type_hints(RunConfig)


def _field_type(key: str) -> Tuple[Any, bool]:
    hint: Any = _HINTS[key]
    args: Tuple[Any, ...] = getattr(hint, "__args__", None) or ()
    if type(None) in args:
        return next(arg for arg in args if arg is not type(None)), True
    return hint, False


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _convert(key: str, raw: str, where: str = "") -> Any:
    if key not in _HINTS:
        raise ReslstmException.ConfigurationError(f"{where}unknown configuration key {key!r}")
    kind, optional = _field_type(key)
    text: str = raw.strip()
    if optional and text.lower() in ("", "none"):
        return None
    if kind is bool:
        lowered: str = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ReslstmException.ConfigurationError(f"{where}{key}: expected a boolean, got {raw!r}")
    try:
        return kind(text)
    except ValueError as exc:
        raise ReslstmException.ConfigurationError(
            f"{where}{key}: expected {kind.__name__}, got {raw!r}"
        ) from exc


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, Any]:
    """
    Parses flat ``key = value`` lines. ``#`` starts a comment, blank lines
    are ignored, later lines override earlier ones.

    :raises ReslstmException.ConfigurationError: On unknown keys, malformed
        lines or values of the wrong type
    """
    values: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content: str = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ReslstmException.ConfigurationError(f"{origin}:{number}: expected key=value, got {line!r}")
        key, raw = content.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = _convert(key, raw, f"{origin}:{number}: ")
    return values


def resolve_config(
    config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """
    Merges the defaults, the configuration file and explicit overrides.

    :param config_path: File to read, falls back to ``$RESLSTM_CONFIG``
    :param overrides: Values given on the command line (``None`` entries are ignored)
    :raises ReslstmException.ConfigurationError: If a key is unknown or a
        value is invalid
    :rtype: RunConfig
    """
    path: Optional[str] = config_path or os.environ.get(CONFIG_ENV) or None
    merged: Dict[str, Any] = asdict(RunConfig())
    if path:
        with open(path, "r", encoding="utf-8") as handle:
            merged.update(parse_config_text(handle.read(), path))
        logging.debug(f"read configuration from {path}")
    for key, value in (overrides or {}).items():
        if key not in merged:
            raise ReslstmException.ConfigurationError(f"unknown configuration key {key!r}")
        if value is not None:
            merged[key] = value
    config: RunConfig = RunConfig(**merged)
    # validates every section
    config.stack_config()
    config.train_config()
    config.decode_config()
    return config


def echo_config(config: RunConfig) -> None:
    """Writes the resolved configuration to the log"""
    for line in config.to_text().splitlines():
        logging.info(f"config {line}")


# ---- commands ---------------------------------------------------------------


def cmd_train(
    config: RunConfig,
    train_path: str,
    valid_path: Optional[str],
    out_dir: str,
    plot_path: Optional[str] = None,
) -> int:
    """
    Builds the vocabulary from the training pairs, trains a model and writes
    ``vocab.txt``, ``config.txt``, ``curves.csv``, ``model.ckpt`` and the
    per-epoch checkpoints under ``checkpoints/`` into ``out_dir``.

    :raises ReslstmException.DivergenceError: If training diverges
    :return: Exit status
    """
    train_pairs = load_pairs_tsv(train_path)
    valid_pairs = load_pairs_tsv(valid_path) if valid_path else []
    if not train_pairs:
        raise ReslstmException.DataError(f"{train_path} holds no usable pairs")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as handle:
        handle.write(config.to_text())

    vocab: Vocabulary = build_vocab(sentences(train_pairs), max_size=config.max_vocab)
    vocab.save(os.path.join(out_dir, "vocab.txt"))
    logging.info(f"vocabulary of {len(vocab)} entries from {len(train_pairs)} pairs")

    with precision(config.precision):
        params: ModelParams = init_model(
            config.stack_config(),
            len(vocab),
            config.seed,
            init_scale=config.init_scale,
            forget_bias=config.forget_bias,
            vocab_hash=vocab.content_hash,
        )
    params, report = train(
        params,
        encode_pairs(train_pairs, vocab),
        encode_pairs(valid_pairs, vocab),
        config.train_config(),
        checkpoint_dir=os.path.join(out_dir, "checkpoints"),
    )
    save_checkpoint(params, os.path.join(out_dir, "model.ckpt"))
    report.write_csv(os.path.join(out_dir, "curves.csv"))
    if plot_path:
        plot_report(report, plot_path)
    logging.info(f"finished after {report.steps} steps, model written to {out_dir}")
    return EXIT_SUCCESS


def cmd_generate(
    config: RunConfig,
    checkpoint: str,
    input_path: Optional[str],
    vocab_path: Optional[str] = None,
    top_k: Optional[int] = None,
    output: Optional[TextIO] = None,
) -> int:
    """
    Writes ``source \\t rank \\t score \\t paraphrase`` rows for every line of
    the input (standard input if ``input_path`` is ``None`` or ``-``).

    :raises ReslstmException.VocabularyMismatchError: If the vocabulary does
        not belong to the checkpoint
    :return: Exit status
    """
    vocab: Vocabulary = Vocabulary.load(
        vocab_path or os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "vocab.txt")
    )
    params: ModelParams = load_checkpoint(checkpoint, vocab_hash=vocab.content_hash)
    if input_path in (None, "-"):
        lines: List[str] = sys.stdin.read().splitlines()
    else:
        with open(input_path, "r", encoding="utf-8") as handle:  # type: ignore[arg-type]
            lines = handle.read().splitlines()
    rows = generate_batch(params, vocab, lines, config.decode_config(), top_k=top_k)
    stream: TextIO = output or sys.stdout
    for source, rank, score, text in rows:
        stream.write(f"{source}\t{rank}\t{score:.6f}\t{text}\n")
    logging.info(f"generated {len(rows)} rows for {len(lines)} sources")
    return EXIT_SUCCESS


def cmd_evaluate(
    config: RunConfig,
    candidates: str,
    references: Sequence[str],
    sources: Optional[str] = None,
    embeddings: Optional[str] = None,
    compare: Optional[str] = None,
    checkpoint: Optional[str] = None,
    vocab_path: Optional[str] = None,
    resamples: int = 1000,
    iterations: int = 10000,
    key_values: bool = False,
    output: Optional[TextIO] = None,
) -> int:
    """
    Prints BLEU, TER and optionally EmbGreedy and perplexity of a candidate
    file, with bootstrap variances and, given a second system, AR p-values.

    :raises ReslstmException.DataError: If the files are not aligned
    :return: Exit status
    """
    instances: List[EvalInstance] = load_eval_instances(candidates, references, sources)
    table: Optional[EmbeddingTable] = EmbeddingTable.load(embeddings) if embeddings else None
    other: Optional[List[EvalInstance]] = (
        load_eval_instances(compare, references, sources) if compare else None
    )
    report: MetricReport = evaluate_corpus(
        instances,
        embeddings=table,
        compare=other,
        resamples=resamples,
        iterations=iterations,
        seed=config.seed,
        system=os.path.basename(candidates),
    )
    if checkpoint:
        if not sources:
            raise ReslstmException.ArgumentError("perplexity needs --sources")
        vocab: Vocabulary = Vocabulary.load(
            vocab_path or os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "vocab.txt")
        )
        params: ModelParams = load_checkpoint(checkpoint, vocab_hash=vocab.content_hash)
        report.perplexity = corpus_perplexity(params, instance_pairs(instances, vocab))
    stream: TextIO = output or sys.stdout
    stream.write(report.format_key_values() if key_values else report.format_table() + "\n")
    return EXIT_SUCCESS


def _gradcheck_pairs(rng: Rng, vocab_size: int, length: int, count: int) -> List[Tuple[List[int], List[int]]]:
    content: int = vocab_size - len(RESERVED)
    return [
        (
            [len(RESERVED) + int(t) for t in rng.integers(content, length)],
            [len(RESERVED) + int(t) for t in rng.integers(content, length)],
        )
        for _ in range(count)
    ]


def _scaled(tensors: List[np.ndarray], factor: float) -> List[np.ndarray]:
    return [tensors[0] * factor] + tensors[1:] if factor != 1.0 else tensors


def _layer_errors(seed: int, corrupt_backward: float, length: int) -> Dict[str, float]:
    rng: Rng = Rng(seed).derive(12)
    layer: LstmParams = init_lstm_params(3, 4, rng, init_scale=0.5)
    xs: np.ndarray = rng.uniform(-1.0, 1.0, (length, 3))
    weights: np.ndarray = rng.uniform(-1.0, 1.0, (length, 4))
    _, tape = lstm_forward(layer, xs, LstmState.zeros(4))
    grads, _, _ = lstm_backward(layer, tape, list(weights))
    W_x, W_h, b = _scaled([array for _, array in grads.named_tensors()], corrupt_backward)
    errors: Dict[str, float] = check_layer_gradients(layer, xs, weights, LstmParams(W_x=W_x, W_h=W_h, b=b))
    return {f"lstm.{name}": error for name, error in errors.items()}


def cmd_gradcheck(
    config: RunConfig,
    seeds: int = 5,
    corrupt_backward: float = 1.0,
    vocab_size: int = 12,
    length: int = 5,
    output: Optional[TextIO] = None,
) -> int:
    """
    Compares analytic gradients against central finite differences in
    double precision for ``seeds`` consecutive seeds starting at
    ``config.seed``. Every seed first checks :func:`reslstm.lstm.lstm_backward`
    on a single layer (3 inputs, 4 units) against the scalar evaluation of
    ``sum_t w_t . h_t``, then the whole small model (2 layers, residual
    every 2, hidden 8) on its token loss. Prints the maximum relative error
    of every tensor, the layer's prefixed with ``lstm.``.

    :param corrupt_backward: Factor applied to the first analytic gradient
        tensor of the layer and of the model, ``1.0`` leaves them intact
        (negative control)
    :raises ReslstmException.GradientCheckError: If a tensor reaches the
        tolerance of ``1e-4``
    :return: Exit status
    """
    stack: StackConfig = StackConfig(num_layers=2, residual_interval=2, hidden=8)
    worst: Dict[str, float] = {}
    with precision("float64"):
        for seed in range(config.seed, config.seed + seeds):
            errors: Dict[str, float] = _layer_errors(seed, corrupt_backward, length)
            params: ModelParams = init_model(stack, vocab_size, seed, init_scale=0.5)
            pairs = _gradcheck_pairs(Rng(seed).derive(11), vocab_size, length, count=2)
            _, grads = batch_loss(params, pairs)
            grads = grads.with_tensors(_scaled([array for _, array in grads.named_tensors()], corrupt_backward))

            def loss() -> float:
                nll, tokens = evaluate_nll(params, pairs)
                return nll / tokens

            errors.update(check_model_gradients(params, loss, grads))
            for name, error in errors.items():
                worst[name] = max(worst.get(name, 0.0), error)
            logging.info(f"seed {seed}: max relative error {max(errors.values()):.3e}")
    stream: TextIO = output or sys.stdout
    for name, error in worst.items():
        stream.write(f"{name}\t{error:.3e}\n")
    offenders: List[str] = [name for name, error in worst.items() if error >= GRADCHECK_TOLERANCE]
    if offenders:
        raise ReslstmException.GradientCheckError(
            f"relative error >= {GRADCHECK_TOLERANCE} in " + ", ".join(offenders)
        )
    return EXIT_SUCCESS


def cmd_make_toy(
    kind: str,
    vocab_size: int,
    max_len: int,
    count: int,
    out_dir: str,
    seed: int = 1,
    valid_fraction: float = 0.1,
) -> int:
    """Writes ``train.tsv``, ``valid.tsv`` and ``sources.txt`` (validation sources) of a toy task"""
    train_pairs, valid_pairs = make_toy_corpus(kind, vocab_size, max_len, count, seed, valid_fraction)
    os.makedirs(out_dir, exist_ok=True)
    write_pairs_tsv(train_pairs, os.path.join(out_dir, "train.tsv"))
    write_pairs_tsv(valid_pairs, os.path.join(out_dir, "valid.tsv"))
    with open(os.path.join(out_dir, "sources.txt"), "w", encoding="utf-8") as handle:
        handle.writelines(" ".join(pair.source) + "\n" for pair in valid_pairs)
    logging.info(f"wrote {len(train_pairs)} training and {len(valid_pairs)} validation pairs to {out_dir}")
    return EXIT_SUCCESS


# ---- argument parsing -------------------------------------------------------


class ArgumentParser(argparse.ArgumentParser):
    """Parser that reports usage errors as :class:`ReslstmException.ArgumentError`"""

    def error(self: "ArgumentParser", message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ReslstmException.ArgumentError(f"{self.prog}: {message}")


_MODEL_FLAGS: Tuple[Tuple[str, str, Any, str], ...] = (
    ("--layers", "num_layers", int, "stacked layers per encoder and decoder"),
    ("--residual-every", "residual_interval", int, "residual connection every N layers (0 disables)"),
    ("--hidden", "hidden", int, "units per layer"),
    ("--dim-fix", "dim_fix", str, "residual dimension fix: pad or clip"),
    ("--init-scale", "init_scale", float, "uniform initialisation range"),
    ("--forget-bias", "forget_bias", float, "initial forget gate bias"),
    ("--max-vocab", "max_vocab", int, "vocabulary size including reserved tokens"),
)
_TRAIN_FLAGS: Tuple[Tuple[str, str, Any, str], ...] = (
    ("--epochs", "epochs", int, "training epochs"),
    ("--lr", "initial_lr", float, "initial learning rate"),
    ("--halve-every", "halve_every", int, "halve the learning rate every N epochs"),
    ("--dropout-keep", "dropout_keep", float, "dropout keep probability (1 disables)"),
    ("--batch-size", "batch_size", int, "pairs per update"),
    ("--max-steps", "max_steps", int, "stop after N updates"),
    ("--threads", "threads", int, "shards per batch"),
    ("--max-grad-norm", "max_grad_norm", float, "clip the global gradient norm"),
    ("--precision", "precision", str, "float32 or float64"),
)
_DECODE_FLAGS: Tuple[Tuple[str, str, Any, str], ...] = (
    ("--beam", "beam_size", int, "beam size"),
    ("--max-len", "max_len", int, "maximum output length"),
)
_SEED_FLAG: Tuple[Tuple[str, str, Any, str], ...] = (("--seed", "seed", int, "random seed"),)
_SWITCHES: Dict[str, Tuple[Tuple[str, str, bool, str], ...]] = {
    "model": (("--reverse-source", "reverse_source", True, "feed sources right to left"),),
    "decode": (
        ("--length-normalize", "length_normalize", True, "rank by log-probability per token"),
        ("--ban-unk", "allow_unk", False, "never expand the unknown token"),
    ),
}


def _add_flags(parser: argparse.ArgumentParser, flags: Sequence[Tuple[str, str, Any, str]]) -> None:
    for flag, dest, kind, text in flags:
        parser.add_argument(flag, dest=dest, type=kind, default=None, metavar=dest.upper(), help=text)


def _add_switches(parser: argparse.ArgumentParser, group: str) -> None:
    for flag, dest, value, text in _SWITCHES[group]:
        parser.add_argument(flag, dest=dest, action="store_const", const=value, default=None, help=text)


def build_parser() -> ArgumentParser:
    """Returns the parser of all subcommands"""
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, metavar="PATH", help=f"key=value file (default: ${CONFIG_ENV})")
    common.add_argument("-v", "--verbose", action="store_true", help="log debug messages")

    parser = ArgumentParser(prog="reslstm", description="Residual stacked LSTM paraphrase generation")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    commands.required = True

    p_train = commands.add_parser("train", parents=[common], help="train a model")
    p_train.add_argument("train_path", metavar="TRAIN_TSV")
    p_train.add_argument("valid_path", metavar="VALID_TSV", nargs="?", default=None)
    p_train.add_argument("out_dir", metavar="OUT_DIR")
    p_train.add_argument("--plot", default=None, metavar="PATH", help="save perplexity curves (needs matplotlib)")
    _add_flags(p_train, _MODEL_FLAGS + _TRAIN_FLAGS + _DECODE_FLAGS + _SEED_FLAG)
    _add_switches(p_train, "model")
    _add_switches(p_train, "decode")

    p_generate = commands.add_parser("generate", parents=[common], help="generate paraphrases")
    p_generate.add_argument("--checkpoint", required=True, metavar="PATH")
    p_generate.add_argument("--vocab", default=None, metavar="PATH", help="default: vocab.txt next to the checkpoint")
    p_generate.add_argument("--input", default=None, metavar="PATH", help="one source per line (default: stdin)")
    p_generate.add_argument("--output", default=None, metavar="PATH", help="default: stdout")
    p_generate.add_argument("--top-k", dest="top_k", type=int, default=None, metavar="K")
    _add_flags(p_generate, _DECODE_FLAGS)
    _add_switches(p_generate, "decode")

    p_evaluate = commands.add_parser("evaluate", parents=[common], help="score candidate paraphrases")
    p_evaluate.add_argument("candidates", metavar="CANDIDATES")
    p_evaluate.add_argument("--references", nargs="+", required=True, metavar="PATH")
    p_evaluate.add_argument("--sources", default=None, metavar="PATH")
    p_evaluate.add_argument("--embeddings", "--emb-greedy", dest="embeddings", default=None, metavar="PATH")
    p_evaluate.add_argument("--compare", default=None, metavar="PATH", help="second system for the AR test")
    p_evaluate.add_argument("--checkpoint", default=None, metavar="PATH", help="report perplexity of the references")
    p_evaluate.add_argument("--vocab", default=None, metavar="PATH")
    p_evaluate.add_argument("--resamples", type=int, default=1000, metavar="N")
    p_evaluate.add_argument("--iterations", type=int, default=10000, metavar="N")
    p_evaluate.add_argument("--key-values", action="store_true", help="print key=value lines instead of a table")
    _add_flags(p_evaluate, _SEED_FLAG)

    p_gradcheck = commands.add_parser("gradcheck", parents=[common], help="finite difference gradient check")
    p_gradcheck.add_argument("--seeds", type=int, default=5, metavar="N")
    p_gradcheck.add_argument("--corrupt-backward", dest="corrupt_backward", type=float, default=1.0, metavar="F")
    _add_flags(p_gradcheck, _SEED_FLAG)

    p_toy = commands.add_parser("make-toy", parents=[common], help="write a toy corpus")
    p_toy.add_argument("out_dir", metavar="OUT_DIR")
    p_toy.add_argument("--kind", choices=TOY_KINDS, default="copy")
    p_toy.add_argument("--vocab-size", dest="toy_vocab_size", type=int, default=20, metavar="V")
    p_toy.add_argument("--max-len", dest="toy_max_len", type=int, default=8, metavar="L")
    p_toy.add_argument("--count", type=int, default=5000, metavar="N")
    p_toy.add_argument("--valid-fraction", type=float, default=0.1, metavar="F")
    _add_flags(p_toy, _SEED_FLAG)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    known = {f.name for f in fields(RunConfig)}
    return {key: value for key, value in vars(args).items() if key in known}


def _dispatch(args: argparse.Namespace) -> int:
    config: RunConfig = resolve_config(args.config, _overrides(args))
    echo_config(config)
    if args.command == "train":
        return cmd_train(config, args.train_path, args.valid_path, args.out_dir, args.plot)
    if args.command == "generate":
        if args.output:
            with open(args.output, "w", encoding="utf-8") as handle:
                return cmd_generate(config, args.checkpoint, args.input, args.vocab, args.top_k, handle)
        return cmd_generate(config, args.checkpoint, args.input, args.vocab, args.top_k)
    if args.command == "evaluate":
        return cmd_evaluate(
            config,
            args.candidates,
            args.references,
            sources=args.sources,
            embeddings=args.embeddings,
            compare=args.compare,
            checkpoint=args.checkpoint,
            vocab_path=args.vocab,
            resamples=args.resamples,
            iterations=args.iterations,
            key_values=args.key_values,
        )
    if args.command == "gradcheck":
        return cmd_gradcheck(config, seeds=args.seeds, corrupt_backward=args.corrupt_backward)
    return cmd_make_toy(
        args.kind,
        args.toy_vocab_size,
        args.toy_max_len,
        args.count,
        args.out_dir,
        seed=config.seed,
        valid_fraction=args.valid_fraction,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``reslstm`` command. Returns the exit status: ``0``
    success, ``1`` usage error, ``2`` data error, ``3`` numerical failure.
    """
    arguments: List[str] = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        format="%(asctime)s %(levelname)8s | %(message)s",
        datefmt="%Y/%m/%d %H:%M:%S",
        level=logging.DEBUG if "-v" in arguments or "--verbose" in arguments else logging.INFO,
        stream=sys.stderr,
        force=True,
    )
    try:
        args: argparse.Namespace = build_parser().parse_args(arguments)
        return _dispatch(args)
    except SystemExit as exc:
        # --help
        return EXIT_SUCCESS if exc.code in (0, None) else EXIT_USAGE
    except Exception as exc:  # pylint: disable=broad-except
        status: int = ReslstmException.exit_status(exc)
        logging.error(f"{type(exc).__name__}: {exc}")
        return status
