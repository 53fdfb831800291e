#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Module that implements beam-search generation of paraphrases"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..data import Vocabulary, detokenize, tokenize
from ..exceptions import ReslstmException
from ..lstm import LstmState
from ..model import EOS, PAD, UNK, ModelParams, decode_step, encode

BEAM_SIZES: Tuple[int, ...] = (5, 10)


@dataclass
class DecodeConfig:
    """
    Beam search settings.

    :param beam_size: Number of hypotheses kept per step (default: ``5``)
    :type beam_size: int
    :param max_len: Maximum hypothesis length in tokens, EOS included
        (default: ``None``, meaning ``2 * len(source) + 5``)
    :type max_len: int, optional
    :param length_normalize: Rank by log-probability per token instead of
        the raw sum (default: ``False``)
    :type length_normalize: bool
    :param allow_unk: Expand UNK like any other token; ``False`` bans it
        from the search (default: ``True``). PAD is never expanded.
        :func:`generate` strips reserved tokens from the text either way.
    :type allow_unk: bool
    """

    beam_size: int = 5
    max_len: Optional[int] = None
    length_normalize: bool = False
    allow_unk: bool = True

    def __post_init__(self: "DecodeConfig") -> None:
        if self.beam_size < 1:
            raise ReslstmException.ArgumentError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_len is not None and self.max_len < 1:
            raise ReslstmException.ArgumentError(f"max_len must be >= 1, got {self.max_len}")

    def max_len_for(self: "DecodeConfig", source_length: int) -> int:
        """Returns the effective maximum length for a source"""
        return self.max_len if self.max_len is not None else 2 * source_length + 5


@dataclass
class Hypothesis:
    """
    A (partial) output sequence. ``states`` are the decoder states before
    the last token was consumed. ``finished`` is set only when the last
    token is EOS; hypotheses still live at ``max_len`` are returned by
    :func:`beam_decode` with ``finished=False``, ranked with the others.
    """

    tokens: List[int]
    log_prob: float
    states: List[LstmState] = field(repr=False, default_factory=list)
    finished: bool = False

    def score(self: "Hypothesis", length_normalize: bool = False) -> float:
        """Returns the ranking score"""
        if length_normalize and self.tokens:
            return self.log_prob / len(self.tokens)
        return self.log_prob

    def __len__(self: "Hypothesis") -> int:
        return len(self.tokens)


def banned_tokens(allow_unk: bool = True) -> Tuple[int, ...]:
    """Returns the reserved indices the decoder never emits"""
    return (PAD,) if allow_unk else (PAD, UNK)


def _rank_key(hyp: Hypothesis, length_normalize: bool) -> Tuple[float, int, List[int]]:
    return (-hyp.score(length_normalize), len(hyp.tokens), hyp.tokens)


def _stack_states(hyps: Sequence[Hypothesis]) -> List[LstmState]:
    return [
        LstmState(
            h=np.stack([hyp.states[layer].h for hyp in hyps]),
            c=np.stack([hyp.states[layer].c for hyp in hyps]),
        )
        for layer in range(len(hyps[0].states))
    ]


def _row_states(states: Sequence[LstmState], row: int) -> List[LstmState]:
    return [LstmState(h=state.h[row], c=state.c[row]) for state in states]


def _expand(
    params: ModelParams,
    live: Sequence[Hypothesis],
    config: DecodeConfig,
) -> List[Hypothesis]:
    """Scores every allowed one-token extension and keeps the best ``beam_size``."""
    previous: np.ndarray = np.asarray(
        [hyp.tokens[-1] if hyp.tokens else EOS for hyp in live], dtype=np.int64
    )
    logp, new_states = decode_step(params, previous, _stack_states(live))
    logp = logp.astype(np.float64)
    logp[:, list(banned_tokens(config.allow_unk))] = -np.inf
    totals: np.ndarray = np.asarray([hyp.log_prob for hyp in live])[:, None] + logp
    if config.length_normalize:
        ranking: np.ndarray = totals / np.asarray([len(hyp.tokens) + 1 for hyp in live])[:, None]
    else:
        ranking = totals
    flat: np.ndarray = ranking.reshape(-1)
    allowed: int = int(np.isfinite(flat).sum())
    k: int = min(config.beam_size, allowed)
    if k == 0:
        return []
    # every candidate tied with the k-th best is kept for the exact tie-break below
    threshold: float = float(np.partition(flat, flat.size - k)[flat.size - k])
    picks: np.ndarray = np.flatnonzero(flat >= threshold)
    vocab: int = logp.shape[1]
    candidates: List[Hypothesis] = []
    for flat_index in picks:
        row, token = divmod(int(flat_index), vocab)
        hyp: Hypothesis = live[row]
        candidates.append(
            Hypothesis(
                tokens=hyp.tokens + [token],
                log_prob=hyp.log_prob + float(logp[row, token]),
                states=_row_states(new_states, row),
                finished=token == EOS,
            )
        )
    candidates.sort(key=lambda hyp: (-hyp.score(config.length_normalize), hyp.tokens))
    return candidates[:k]


def beam_decode(
    params: ModelParams, source_tokens: Sequence[int], config: DecodeConfig
) -> List[Hypothesis]:
    """
    Beam search. Each step extends every live hypothesis by every allowed
    token and keeps the best ``beam_size`` extensions; extensions ending in
    EOS move to the finished pool. The search stops once ``beam_size``
    hypotheses are finished and none of the live ones scores higher than
    the worst of them, or at ``max_len``, where the remaining live
    hypotheses are added unfinished.

    :param params: Model
    :type params: reslstm.model.ModelParams
    :param source_tokens: Source indices (without EOS)
    :type source_tokens: Sequence[int]
    :param config: Search settings
    :type config: DecodeConfig
    :return: Hypotheses sorted by score (descending), then length, then tokens
    :rtype: List[Hypothesis]

    .. code-block:: python
        :linenos:
        :caption: Five best paraphrases of a source

        >>> from reslstm.decoder import DecodeConfig, beam_decode
        >>> hyps = beam_decode(params, vocab.encode(["a", "b", "c"]), DecodeConfig(beam_size=5))
        >>> hyps[0].tokens, hyps[0].log_prob
        ([3, 4, 5, 0], -0.12...)
    """
    max_len: int = config.max_len_for(len(source_tokens))
    live: List[Hypothesis] = [Hypothesis(tokens=[], log_prob=0.0, states=encode(params, source_tokens))]
    finished: List[Hypothesis] = []
    for _ in range(max_len):
        kept: List[Hypothesis] = _expand(params, live, config)
        finished.extend(hyp for hyp in kept if hyp.finished)
        live = [hyp for hyp in kept if not hyp.finished]
        if not live:
            break
        if len(finished) >= config.beam_size:
            ranked: List[Hypothesis] = sorted(finished, key=lambda h: _rank_key(h, config.length_normalize))
            bar: float = ranked[config.beam_size - 1].score(config.length_normalize)
            if bar >= max(hyp.score(config.length_normalize) for hyp in live):
                live = []
                break
    finished.extend(live)
    finished.sort(key=lambda hyp: _rank_key(hyp, config.length_normalize))
    return finished


def score_sequence(params: ModelParams, source_tokens: Sequence[int], tokens: Sequence[int]) -> float:
    """Returns the log-probability of ``tokens`` given the source, one decoder step at a time"""
    states: List[LstmState] = encode(params, source_tokens)
    previous: int = EOS
    total: float = 0.0
    for token in tokens:
        logp, states = decode_step(params, previous, states)
        total += float(logp[int(token)])
        previous = int(token)
    return total


def check_vocabulary(params: ModelParams, vocab: Vocabulary) -> None:
    """
    :raises ReslstmException.VocabularyMismatchError: If the vocabulary is
        not the one the model was trained with
    """
    if len(vocab) != params.vocab_size:
        raise ReslstmException.VocabularyMismatchError(
            f"vocabulary has {len(vocab)} entries, model expects {params.vocab_size}"
        )
    if not params.vocab_hash:
        logging.warning("model carries no vocabulary hash, skipping the consistency check")
        return
    if params.vocab_hash != vocab.content_hash:
        raise ReslstmException.VocabularyMismatchError(
            f"model hash {params.vocab_hash[:12]}... differs from vocabulary {vocab.content_hash[:12]}..."
        )


def generate(
    params: ModelParams, vocab: Vocabulary, source_text: str, config: DecodeConfig
) -> List[Tuple[str, float]]:
    """
    Tokenises a source, runs :func:`beam_decode` and returns the paraphrases
    with their scores, best first. Unknown words become UNK; reserved tokens
    never appear in the returned text.

    :raises ReslstmException.VocabularyMismatchError: On vocabulary mismatch
    :rtype: List[Tuple[str, float]]
    """
    check_vocabulary(params, vocab)
    hyps: List[Hypothesis] = beam_decode(params, vocab.encode(tokenize(source_text)), config)
    return [
        (detokenize(vocab.decode(hyp.tokens, strip_reserved=True)), hyp.score(config.length_normalize))
        for hyp in hyps
    ]


def generate_batch(
    params: ModelParams,
    vocab: Vocabulary,
    lines: Sequence[str],
    config: DecodeConfig,
    top_k: Optional[int] = None,
) -> List[Tuple[str, int, float, str]]:
    """
    Generates for every source line and returns ``(source, rank, score,
    paraphrase)`` rows, ranks starting at 1, at most ``top_k`` per source.
    """
    rows: List[Tuple[str, int, float, str]] = []
    for line in lines:
        source: str = line.rstrip("\n")
        results: List[Tuple[str, float]] = generate(params, vocab, source, config)
        if top_k is not None:
            results = results[:top_k]
        rows.extend((source, rank, score, text) for rank, (text, score) in enumerate(results, start=1))
        logging.debug(f"generated {len(results)} paraphrases for {source!r}")
    return rows
