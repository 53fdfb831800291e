#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements the vocabulary, tokenisation, the corpus loaders
with their dataset-specific preprocessing (PPDB, WikiAnswers, MSCOCO) and
the synthetic toy corpora used for desk-scale experiments.
"""

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from ..exceptions import ReslstmException
from ..model import EOS, PAD, RESERVED, UNK
from ..tensor import Rng

MSCOCO_MAX_WORDS: int = 15
WIKIANSWERS_VOCAB_SIZE: int = 50000
PPDB_KINDS: Tuple[str, ...] = ("lexical", "phrasal", "syntactic")

_NONTERMINAL = re.compile(r"\[[^\]\s]+\]")


def tokenize(text: str) -> List[str]:
    """Whitespace tokenisation, no normalisation"""
    return text.split()


def detokenize(tokens: Iterable[str]) -> str:
    """Joins tokens with single spaces"""
    return " ".join(tokens)


class Vocabulary:
    """
    Bijective token/index map. Indices 0, 1 and 2 are EOS, UNK and PAD,
    content tokens follow in the given order.

    :param tokens: Content tokens (reserved tokens are skipped)
    :type tokens: Iterable[str]

    .. code-block:: python
        :linenos:
        :caption: Encoding a sentence

        >>> from reslstm.data import Vocabulary
        >>> vocab = Vocabulary(["the", "cat"])
        >>> vocab.encode(["the", "dog"])
        [3, 1]
        >>> vocab.decode([3, 4])
        ['the', 'cat']
    """

    def __init__(self: "Vocabulary", tokens: Iterable[str]) -> None:
        self.__tokens: List[str] = list(RESERVED)
        self.__index: Dict[str, int] = {token: i for i, token in enumerate(RESERVED)}
        for token in tokens:
            if token in self.__index:
                if token in RESERVED:
                    continue
                raise ReslstmException.ArgumentError(f"duplicate vocabulary token {token!r}")
            self.__index[token] = len(self.__tokens)
            self.__tokens.append(token)

    def __len__(self: "Vocabulary") -> int:
        return len(self.__tokens)

    def __contains__(self: "Vocabulary", token: object) -> bool:
        return token in self.__index

    def __eq__(self: "Vocabulary", other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    @property
    def tokens(self: "Vocabulary") -> List[str]:
        """Returns all tokens in index order, reserved ones included"""
        return list(self.__tokens)

    @property
    def content_hash(self: "Vocabulary") -> str:
        """Returns the SHA-256 of the token list, stable across runs"""
        return hashlib.sha256("\n".join(self.__tokens).encode("utf-8")).hexdigest()

    def index(self: "Vocabulary", token: str) -> int:
        """Returns the index of ``token`` or UNK"""
        return self.__index.get(token, UNK)

    def token(self: "Vocabulary", index: int) -> str:
        """
        :raises ReslstmException.DataError: If the index is out of range
        """
        if not 0 <= index < len(self.__tokens):
            raise ReslstmException.DataError(f"index {index} outside vocabulary of {len(self)}")
        return self.__tokens[index]

    def encode(self: "Vocabulary", tokens: Iterable[str]) -> List[int]:
        """Maps tokens to indices, unknown ones to UNK"""
        return [self.index(token) for token in tokens]

    def decode(self: "Vocabulary", indices: Iterable[int], strip_reserved: bool = False) -> List[str]:
        """
        Maps indices to tokens.

        :param strip_reserved: Drop EOS, UNK and PAD from the result
        :type strip_reserved: bool
        """
        reserved = (EOS, UNK, PAD)
        return [
            self.token(int(index))
            for index in indices
            if not (strip_reserved and int(index) in reserved)
        ]

    def save(self: "Vocabulary", path: str) -> None:
        """Writes the content tokens, one per line"""
        with open(path, "w", encoding="utf-8") as handle:
            for token in self.__tokens[len(RESERVED) :]:
                handle.write(f"{token}\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        """Reads a vocabulary written by :meth:`save`"""
        with open(path, "r", encoding="utf-8") as handle:
            return cls(line.rstrip("\n") for line in handle if line.rstrip("\n"))


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int = WIKIANSWERS_VOCAB_SIZE) -> Vocabulary:
    """
    Builds a vocabulary from tokenised sentences: tokens are ranked by
    frequency (descending, ties lexicographically) and the top
    ``max_size - 3`` are kept after the reserved slots.

    :param corpus: Tokenised sentences
    :type corpus: Iterable[Sequence[str]]
    :param max_size: Maximum vocabulary size including reserved tokens
        (default: ``50000``)
    :type max_size: int
    :raises ReslstmException.ArgumentError: If ``max_size < 4`` or the corpus is empty
    :rtype: Vocabulary
    """
    if max_size < len(RESERVED) + 1:
        raise ReslstmException.ArgumentError(f"max_size must be >= 4, got {max_size}")
    counts: Counter = Counter()
    sentences: int = 0
    for sentence in corpus:
        counts.update(token for token in sentence if token not in RESERVED)
        sentences += 1
    if sentences == 0:
        raise ReslstmException.ArgumentError("cannot build a vocabulary from an empty corpus")
    ranked: List[Tuple[str, int]] = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    kept: List[str] = [token for token, _ in ranked[: max_size - len(RESERVED)]]
    if len(ranked) > len(kept):
        logging.info(f"vocabulary clipped to {max_size}: {len(ranked) - len(kept)} token types map to UNK")
    return Vocabulary(kept)


@dataclass
class ParaphrasePair:
    """A source phrase and one reference paraphrase, both tokenised."""

    source: List[str]
    reference: List[str]

    def encode(self: "ParaphrasePair", vocab: Vocabulary) -> Tuple[List[int], List[int]]:
        """Returns the pair as index sequences"""
        return vocab.encode(self.source), vocab.encode(self.reference)


class CountedList(list):
    """A list that also remembers how many input items were skipped."""

    def __init__(self: "CountedList", items: Iterable = (), skipped: int = 0) -> None:
        super().__init__(items)
        self.skipped: int = skipped


def sentences(pairs: Iterable[ParaphrasePair]) -> Iterable[List[str]]:
    """Yields both sides of every pair (for :func:`build_vocab`)"""
    for pair in pairs:
        yield pair.source
        yield pair.reference


def encode_pairs(pairs: Iterable[ParaphrasePair], vocab: Vocabulary) -> List[Tuple[List[int], List[int]]]:
    """Encodes pairs for the trainer"""
    return [pair.encode(vocab) for pair in pairs]


def load_pairs_tsv(path: str, vocab: Optional[Vocabulary] = None) -> CountedList:
    """
    Reads ``source \\t reference`` lines. Lines without a tab or with an
    empty side are skipped and counted in ``.skipped``.

    :param path: UTF-8 file
    :type path: str
    :param vocab: If given, pairs are returned encoded as index tuples
    :type vocab: Vocabulary, optional
    :raises OSError: If the file cannot be read
    :rtype: CountedList
    """
    pairs: CountedList = CountedList()
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields: List[str] = line.split("\t")
            if len(fields) < 2 or not tokenize(fields[0]) or not tokenize(fields[1]):
                logging.debug(f"{path}:{number}: skipped line without two fields")
                pairs.skipped += 1
                continue
            pair: ParaphrasePair = ParaphrasePair(tokenize(fields[0]), tokenize(fields[1]))
            pairs.append(pair if vocab is None else pair.encode(vocab))
    if pairs.skipped:
        logging.warning(f"{path}: skipped {pairs.skipped} malformed lines")
    return pairs


def write_pairs_tsv(pairs: Iterable[ParaphrasePair], path: str) -> None:
    """Writes pairs as ``source \\t reference`` lines"""
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(f"{detokenize(pair.source)}\t{detokenize(pair.reference)}\n")


# ---- PPDB -------------------------------------------------------------------


@dataclass
class PpdbRecord:
    """One PPDB rule: phrase, paraphrase and its type tag."""

    phrase: str
    paraphrase: str
    kind: str


def _ppdb_kind(phrase: str, paraphrase: str) -> str:
    if _NONTERMINAL.search(phrase) or _NONTERMINAL.search(paraphrase):
        return "syntactic"
    if len(tokenize(phrase)) == 1 and len(tokenize(paraphrase)) == 1:
        return "lexical"
    return "phrasal"


def load_ppdb_records(path: str) -> CountedList:
    """
    Reads PPDB rules, ``|||``-delimited. The type tag is taken from a
    leading ``lexical``/``phrasal``/``syntactic`` field when present,
    otherwise inferred: rules with nonterminals such as ``[NP,1]`` are
    syntactic, single-word rules lexical, all others phrasal. A leading
    ``[LHS]`` label is ignored.

    :rtype: CountedList of PpdbRecord
    """
    records: CountedList = CountedList()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            fields: List[str] = [field.strip() for field in line.split("|||")]
            kind: Optional[str] = None
            if fields[0] in PPDB_KINDS:
                kind = fields.pop(0)
            elif len(fields) >= 3 and fields[0].startswith("["):
                fields.pop(0)
            if len(fields) < 2 or not fields[0] or not fields[1]:
                records.skipped += 1
                continue
            records.append(
                PpdbRecord(fields[0], fields[1], kind or _ppdb_kind(fields[0], fields[1]))
            )
    if records.skipped:
        logging.warning(f"{path}: skipped {records.skipped} malformed PPDB lines")
    return records


def _has_digit(text: str) -> bool:
    return any(char.isdigit() for char in text)


def _pair_without_replacement(members: List[str], rng: Rng) -> List[Tuple[str, str]]:
    order: List[str] = list(members)
    rng.shuffle(order)
    return [(order[i], order[i + 1]) for i in range(0, len(order) - 1, 2)]


def preprocess_ppdb(records: Iterable[PpdbRecord], seed: int = 1) -> CountedList:
    """
    Drops syntactic rules and rules containing a digit and groups the rest
    by shared phrase: every phrase heads a one-to-many set of the
    paraphrases listed for it. The heads are visited in seeded random
    order and each draws one reference from its set, without replacement
    across the whole corpus, so every emitted pair is a listed rule and
    each phrase appears in at most one pair.

    :param records: PPDB rules
    :param seed: Seed of the sampling
    :rtype: CountedList of ParaphrasePair (``.skipped`` counts dropped rules)
    """
    stars: Dict[str, List[str]] = {}
    dropped: int = 0
    for record in records:
        if record.kind == "syntactic" or _has_digit(record.phrase) or _has_digit(record.paraphrase):
            dropped += 1
            continue
        listed: List[str] = stars.setdefault(record.phrase, [])
        if record.paraphrase != record.phrase and record.paraphrase not in listed:
            listed.append(record.paraphrase)
    rng: Rng = Rng(seed)
    heads: List[str] = sorted(stars)
    rng.shuffle(heads)
    used: Set[str] = set()
    pairs: CountedList = CountedList(skipped=dropped)
    for phrase in heads:
        if phrase in used:
            continue
        free: List[str] = sorted(p for p in stars[phrase] if p not in used)
        if not free:
            continue
        reference: str = free[rng.randint(len(free))]
        used.update((phrase, reference))
        pairs.append(ParaphrasePair(tokenize(phrase), tokenize(reference)))
    logging.info(f"PPDB: {len(pairs)} pairs, {dropped} rules dropped")
    return pairs


# ---- WikiAnswers ------------------------------------------------------------


def load_wikianswers_clusters(path: str) -> List[List[str]]:
    """
    Reads question clusters, one per line, as tab-separated fields; only
    fields prefixed with ``q:`` are kept.
    """
    clusters: List[List[str]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            questions: List[str] = [
                field[2:].strip()
                for field in line.rstrip("\n").split("\t")
                if field.startswith("q:") and field[2:].strip()
            ]
            if questions:
                clusters.append(questions)
    return clusters


def preprocess_wikianswers(clusters: Iterable[Sequence[str]], seed: int = 1) -> CountedList:
    """
    Pairs the distinct questions of every cluster without replacement.
    Clusters with fewer than two distinct questions are skipped and counted.
    """
    rng: Rng = Rng(seed)
    pairs: CountedList = CountedList()
    for cluster in clusters:
        members: List[str] = sorted(set(cluster))
        if len(members) < 2:
            pairs.skipped += 1
            continue
        for source, reference in _pair_without_replacement(members, rng):
            pairs.append(ParaphrasePair(tokenize(source), tokenize(reference)))
    return pairs


# ---- MSCOCO -----------------------------------------------------------------


def load_mscoco_captions(path: str) -> Dict[int, List[str]]:
    """
    Reads a caption annotation file (``{"annotations": [{"image_id": ...,
    "caption": ...}, ...]}``) into image id -> captions, ids ascending.

    :raises ReslstmException.DataError: If the structure is not recognised
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except ValueError as exc:
            raise ReslstmException.DataError(f"{path}: not a JSON document") from exc
    try:
        annotations = document["annotations"]
        captions: Dict[int, List[str]] = {}
        for annotation in annotations:
            captions.setdefault(int(annotation["image_id"]), []).append(str(annotation["caption"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ReslstmException.DataError(f"{path}: unexpected annotation structure") from exc
    return dict(sorted(captions.items()))


def preprocess_mscoco(
    caption_sets: Mapping[int, Sequence[str]], seed: int = 1, max_words: int = MSCOCO_MAX_WORDS
) -> CountedList:
    """
    Turns every image's five captions into two source-reference pairs: one
    caption is dropped at random, the remaining four are paired randomly and
    every caption is truncated to its first ``max_words`` words. Images
    without exactly five captions are skipped and counted.

    :param caption_sets: Image id -> captions
    :param seed: Seed of the drop and pairing choices
    :param max_words: Truncation length (default: ``15``)
    :rtype: CountedList of ParaphrasePair
    """
    rng: Rng = Rng(seed)
    pairs: CountedList = CountedList()
    for image_id in sorted(caption_sets):
        captions: Sequence[str] = caption_sets[image_id]
        if len(captions) != 5:
            pairs.skipped += 1
            continue
        drop: int = rng.randint(5)
        remaining: List[List[str]] = [
            tokenize(caption)[:max_words] for k, caption in enumerate(captions) if k != drop
        ]
        order: List[int] = rng.permutation(4)
        for a, b in ((order[0], order[1]), (order[2], order[3])):
            if remaining[a] and remaining[b]:
                pairs.append(ParaphrasePair(remaining[a], remaining[b]))
    if pairs.skipped:
        logging.warning(f"MSCOCO: skipped {pairs.skipped} images without exactly 5 captions")
    return pairs


# ---- corpus utilities -------------------------------------------------------


def split(
    pairs: Sequence[ParaphrasePair],
    train_fraction: float = 0.9,
    test_count: Optional[int] = None,
    seed: int = 1,
) -> Tuple[List[ParaphrasePair], List[ParaphrasePair]]:
    """
    Shuffles and splits pairs into a training part of ``train_fraction`` and
    a held-out part, optionally subsampled to ``test_count`` instances.

    :raises ReslstmException.ArgumentError: If ``train_fraction`` is outside [0, 1]
    """
    if not 0.0 <= train_fraction <= 1.0:
        raise ReslstmException.ArgumentError(f"train_fraction must be in [0, 1], got {train_fraction}")
    order: List[int] = Rng(seed).permutation(len(pairs))
    cut: int = int(round(train_fraction * len(pairs)))
    train: List[ParaphrasePair] = [pairs[i] for i in order[:cut]]
    held: List[ParaphrasePair] = [pairs[i] for i in order[cut:]]
    if test_count is not None:
        held = held[:test_count]
    return train, held


def group_references(pairs: Iterable[ParaphrasePair]) -> List[Tuple[List[str], List[List[str]]]]:
    """Groups references by identical source, in order of first appearance"""
    grouped: Dict[Tuple[str, ...], List[List[str]]] = {}
    for pair in pairs:
        grouped.setdefault(tuple(pair.source), []).append(pair.reference)
    return [(list(source), references) for source, references in grouped.items()]


def length_histogram(pairs: Iterable[ParaphrasePair]) -> Dict[int, int]:
    """Returns phrase length -> number of phrases (both sides counted)"""
    counts: Counter = Counter(len(sentence) for sentence in sentences(pairs))
    return dict(sorted(counts.items()))


# ---- toy corpora ------------------------------------------------------------

TOY_KINDS: Tuple[str, ...] = ("copy", "substitution")


def toy_tokens(vocab_size: int) -> List[str]:
    """Content tokens ``w0, w1, ...`` of a toy vocabulary of ``vocab_size`` entries"""
    return [f"w{i}" for i in range(vocab_size - len(RESERVED))]


def toy_vocabulary(vocab_size: int) -> Vocabulary:
    """Vocabulary holding exactly the toy tokens, ``len() == vocab_size``"""
    return Vocabulary(toy_tokens(vocab_size))


def substitution_map(vocab_size: int, seed: int) -> Dict[str, str]:
    """
    Seeded random pairing of the toy tokens into synonym partners. The map
    is an involution; with an odd token count one token maps to itself.
    """
    tokens: List[str] = toy_tokens(vocab_size)
    Rng(seed).derive(7).shuffle(tokens)
    mapping: Dict[str, str] = {token: token for token in tokens}
    for i in range(0, len(tokens) - 1, 2):
        mapping[tokens[i]] = tokens[i + 1]
        mapping[tokens[i + 1]] = tokens[i]
    return mapping


def _sequence_space(symbols: int, max_len: int) -> int:
    return sum(symbols**length for length in range(1, max_len + 1))


def _all_sequences(symbols: int, max_len: int) -> List[Tuple[int, ...]]:
    result: List[Tuple[int, ...]] = []
    frontier: List[Tuple[int, ...]] = [()]
    for _ in range(max_len):
        frontier = [seq + (s,) for seq in frontier for s in range(symbols)]
        result.extend(frontier)
    return result


def make_toy_corpus(
    kind: str, vocab_size: int, max_len: int, count: int, seed: int = 1, valid_fraction: float = 0.1
) -> Tuple[List[ParaphrasePair], List[ParaphrasePair]]:
    """
    Generates ``count`` distinct random source sequences (lengths uniform in
    ``[1, max_len]``) and their references: identical for ``copy``, every
    token swapped with its synonym partner for ``substitution``. The first
    ``count - round(valid_fraction * count)`` pairs are the training part,
    the rest validation; sources never repeat, so both parts are disjoint.

    :param kind: ``copy`` or ``substitution``
    :param vocab_size: Total vocabulary size including the 3 reserved tokens
    :param max_len: Maximum sequence length
    :param count: Number of pairs over both parts
    :param seed: Generation seed
    :raises ReslstmException.ArgumentError: On invalid arguments or if
        ``count`` exceeds the number of distinct sequences
    :rtype: Tuple[List[ParaphrasePair], List[ParaphrasePair]]

    .. code-block:: python
        :linenos:
        :caption: The copy task used for desk-scale training

        >>> from reslstm.data import make_toy_corpus
        >>> train, valid = make_toy_corpus("copy", vocab_size=20, max_len=8, count=5000, seed=1)
    """
    if kind not in TOY_KINDS:
        raise ReslstmException.ArgumentError(f"kind must be one of {TOY_KINDS}, got {kind!r}")
    if vocab_size < len(RESERVED) + 1 or max_len < 1 or count < 0:
        raise ReslstmException.ArgumentError(
            f"need vocab_size >= 4, max_len >= 1 and count >= 0, got {vocab_size}, {max_len}, {count}"
        )
    tokens: List[str] = toy_tokens(vocab_size)
    symbols: int = len(tokens)
    space: int = _sequence_space(symbols, max_len)
    if count > space:
        raise ReslstmException.ArgumentError(
            f"{count} distinct sequences requested but only {space} exist"
        )
    rng: Rng = Rng(seed)
    chosen: List[Tuple[int, ...]]
    if 2 * count > space:
        chosen = _all_sequences(symbols, max_len)
        rng.shuffle(chosen)
        chosen = chosen[:count]
    else:
        seen = set()
        chosen = []
        while len(chosen) < count:
            length: int = 1 + rng.randint(max_len)
            seq: Tuple[int, ...] = tuple(int(s) for s in rng.integers(symbols, length))
            if seq not in seen:
                seen.add(seq)
                chosen.append(seq)
    mapping: Dict[str, str] = substitution_map(vocab_size, seed)
    pairs: List[ParaphrasePair] = []
    for seq in chosen:
        source: List[str] = [tokens[s] for s in seq]
        reference: List[str] = source if kind == "copy" else [mapping[token] for token in source]
        pairs.append(ParaphrasePair(source, list(reference)))
    n_valid: int = int(round(valid_fraction * count))
    return pairs[: count - n_valid], pairs[count - n_valid :]
