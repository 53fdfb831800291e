#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""
Module that implements the paraphrase evaluation suite: multi-reference
corpus BLEU, TER with greedy block shifts, embedding greedy matching,
corpus perplexity, bootstrap variance of test set selection and the
approximate randomization significance test.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..data import Vocabulary
from ..exceptions import ReslstmException
from ..model import ModelParams
from ..tensor import Rng
from ..trainer import evaluate_nll

Tokens = Sequence[str]
Metric = Callable[[Sequence["EvalInstance"]], float]

MAX_SHIFT_LENGTH: int = 10
SIGNIFICANCE_LEVEL: float = 0.05


@dataclass
class EvalInstance:
    """
    One evaluated sentence.

    :param source: Source tokens
    :param candidate: System output tokens
    :param references: One or more reference token lists
    """

    source: List[str]
    candidate: List[str]
    references: List[List[str]]

    def __post_init__(self: "EvalInstance") -> None:
        if not self.references:
            raise ReslstmException.ArgumentError("an evaluation instance needs at least one reference")


# ---- BLEU -------------------------------------------------------------------


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_ngram_precision(candidate: Tokens, references: Sequence[Tokens], n: int) -> Tuple[int, int]:
    """
    Returns ``(clipped matches, candidate n-grams)``: every candidate n-gram
    count is clipped at its maximum count in any single reference.

    .. code-block:: python
        :linenos:
        :caption: Clipping repeated words

        >>> clipped_ngram_precision("the the the the the the the".split(), ["the cat is on the mat".split()], 1)
        (2, 7)
    """
    counts: Counter = _ngrams(candidate, n)
    max_ref: Dict[Tuple[str, ...], int] = {}
    for reference in references:
        for gram, count in _ngrams(reference, n).items():
            if count > max_ref.get(gram, 0):
                max_ref[gram] = count
    clipped: int = sum(min(count, max_ref.get(gram, 0)) for gram, count in counts.items())
    return clipped, sum(counts.values())


def closest_reference_length(candidate_length: int, references: Sequence[Tokens]) -> int:
    """Reference length closest to the candidate length, the shorter one on ties"""
    return min((len(ref) for ref in references), key=lambda length: (abs(length - candidate_length), length))


def bleu(instances: Sequence[EvalInstance], max_n: int = 4, smooth: bool = False) -> float:
    """
    Corpus-level BLEU on a 0-100 scale: clipped n-gram precisions are summed
    over the corpus, combined as a geometric mean over ``n = 1..max_n`` and
    multiplied by the brevity penalty ``exp(1 - r / c)`` when the total
    candidate length ``c`` is below the summed closest reference length
    ``r``. Orders for which the corpus has no candidate n-gram at all are
    left out of the mean: a corpus whose candidates are all shorter than
    ``max_n`` words is scored on the orders it has, not pushed to zero.
    Unsmoothed, any zero precision among the remaining orders yields ``0.0``.

    :param instances: Corpus
    :param max_n: Highest n-gram order (default: ``4``)
    :param smooth: Add-one smoothing of orders ``n >= 2`` (default: ``False``)
    :rtype: float
    """
    if not instances:
        raise ReslstmException.ArgumentError("BLEU of an empty corpus")
    matches: List[int] = [0] * max_n
    totals: List[int] = [0] * max_n
    c: int = 0
    r: int = 0
    for instance in instances:
        c += len(instance.candidate)
        r += closest_reference_length(len(instance.candidate), instance.references)
        for n in range(1, max_n + 1):
            clipped, total = clipped_ngram_precision(instance.candidate, instance.references, n)
            matches[n - 1] += clipped
            totals[n - 1] += total
    log_sum: float = 0.0
    orders: int = 0
    for n in range(1, max_n + 1):
        num, den = matches[n - 1], totals[n - 1]
        if den == 0:
            continue
        if smooth and n > 1:
            num, den = num + 1, den + 1
        if num == 0:
            return 0.0
        log_sum += math.log(num / den)
        orders += 1
    if orders == 0 or c == 0:
        return 0.0
    brevity: float = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * brevity * math.exp(log_sum / orders)


# ---- TER --------------------------------------------------------------------


def _edit_distance(hyp: Tokens, ref: Tokens) -> int:
    previous: List[int] = list(range(len(ref) + 1))
    for i, word in enumerate(hyp, start=1):
        current: List[int] = [i] + [0] * len(ref)
        for j, ref_word in enumerate(ref, start=1):
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (word != ref_word))
        previous = current
    return previous[-1]


def _shift_candidates(hyp: List[str], ref: Tokens) -> Iterator[Tuple[int, int, int]]:
    """
    Yields ``(start, target, length)`` for hyp blocks that also occur in ref
    at another position. ``target`` is the position of the match in ref and
    is used as the insertion point among the hyp words left after removing
    the block. Only ``start != target`` is pruned, so this is an
    approximation of the standard TER shift search, which also restricts
    shifts to blocks misaligned under the current edit alignment.
    """
    for start in range(len(hyp)):
        for target in range(len(ref)):
            if start == target or hyp[start] != ref[target]:
                continue
            length: int = 0
            while (
                length < MAX_SHIFT_LENGTH
                and start + length < len(hyp)
                and target + length < len(ref)
                and hyp[start + length] == ref[target + length]
            ):
                length += 1
                yield start, target, length


def _apply_shift(hyp: List[str], start: int, target: int, length: int) -> List[str]:
    block: List[str] = hyp[start : start + length]
    rest: List[str] = hyp[:start] + hyp[start + length :]
    return rest[:target] + block + rest[target:]


def ter_edits(candidate: Tokens, reference: Tokens) -> int:
    """
    Number of TER edits turning ``candidate`` into ``reference``: greedy
    block shifts (each one edit, blocks of at most 10 words), taken while a
    shift lowers the edit distance, plus the remaining word-level
    insertions, deletions and substitutions. The shift candidates come from
    :func:`_shift_candidates`, so the count may differ from reference TER
    tools; it never exceeds the plain word edit distance, since a shift is
    only taken when it lowers the distance by at least one.
    """
    hyp: List[str] = list(candidate)
    distance: int = _edit_distance(hyp, reference)
    shifts: int = 0
    while distance > 0:
        best: Optional[Tuple[int, List[str]]] = None
        for start, target, length in _shift_candidates(hyp, reference):
            shifted: List[str] = _apply_shift(hyp, start, target, length)
            new_distance: int = _edit_distance(shifted, reference)
            if new_distance < distance and (best is None or new_distance < best[0]):
                best = (new_distance, shifted)
        if best is None:
            break
        distance, hyp = best
        shifts += 1
    return shifts + distance


def ter_sentence(candidate: Tokens, references: Sequence[Tokens]) -> Optional[Tuple[int, int]]:
    """
    Returns ``(edits, reference length)`` of the reference with the lowest
    edit rate, or ``None`` if every reference is empty.
    """
    best: Optional[Tuple[int, int]] = None
    for reference in references:
        if not reference:
            continue
        edits: int = ter_edits(candidate, reference)
        if best is None or edits * best[1] < best[0] * len(reference):
            best = (edits, len(reference))
    return best


def ter_counts(instances: Sequence[EvalInstance]) -> Tuple[float, int]:
    """Returns the corpus TER and the number of skipped instances"""
    edits: int = 0
    length: int = 0
    skipped: int = 0
    for instance in instances:
        result: Optional[Tuple[int, int]] = ter_sentence(instance.candidate, instance.references)
        if result is None:
            skipped += 1
            continue
        edits += result[0]
        length += result[1]
    if skipped:
        logging.warning(f"TER: skipped {skipped} instances with only empty references")
    if length == 0:
        raise ReslstmException.ArgumentError("TER needs at least one non-empty reference")
    return edits / length, skipped


def ter(instances: Sequence[EvalInstance]) -> float:
    """
    Corpus TER: total edits over total reference length (0 is perfect).

    :raises ReslstmException.ArgumentError: If no instance has a non-empty reference
    """
    return ter_counts(instances)[0]


# ---- embedding greedy matching ----------------------------------------------


class EmbeddingTable:
    """
    Word vectors for :func:`emb_greedy`. Lookups are case-sensitive.

    :param vectors: Word -> vector, all of the same dimension
    :type vectors: Dict[str, numpy.ndarray]
    """

    def __init__(self: "EmbeddingTable", vectors: Dict[str, np.ndarray]) -> None:
        if not vectors:
            raise ReslstmException.ArgumentError("embedding table is empty")
        dims = {np.shape(vector) for vector in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ReslstmException.DataError(f"embedding vectors of mixed shapes {sorted(dims)}")
        self.dim: int = int(next(iter(dims))[0])
        self.__unit: Dict[str, np.ndarray] = {}
        for word, vector in vectors.items():
            vector = np.asarray(vector, dtype=np.float64)
            norm: float = float(np.linalg.norm(vector))
            self.__unit[word] = vector / norm if norm > 0 else vector

    def __len__(self: "EmbeddingTable") -> int:
        return len(self.__unit)

    def __contains__(self: "EmbeddingTable", word: object) -> bool:
        return word in self.__unit

    def unit(self: "EmbeddingTable", word: str) -> Optional[np.ndarray]:
        """Returns the L2-normalised vector of ``word`` or ``None``"""
        return self.__unit.get(word)

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        """
        Reads ``word v1 ... vd`` lines; an optional first line ``count dim``
        is skipped.

        :raises ReslstmException.DataError: On malformed lines
        """
        vectors: Dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                parts: List[str] = line.rstrip("\n").split(" ")
                parts = [part for part in parts if part]
                if not parts:
                    continue
                if number == 1 and len(parts) == 2 and all(part.isdigit() for part in parts):
                    continue
                try:
                    vectors[parts[0]] = np.asarray([float(value) for value in parts[1:]])
                except ValueError as exc:
                    raise ReslstmException.DataError(f"{path}:{number}: malformed vector") from exc
        logging.debug(f"loaded {len(vectors)} embeddings from {path}")
        return cls(vectors)


def _directional(source: Tokens, target: Tokens, table: EmbeddingTable) -> Optional[float]:
    src: List[np.ndarray] = [v for v in (table.unit(w) for w in source) if v is not None]
    tgt: List[np.ndarray] = [v for v in (table.unit(w) for w in target) if v is not None]
    if not src or not tgt:
        return None
    similarities: np.ndarray = np.stack(src) @ np.stack(tgt).T
    return float(np.mean(similarities.max(axis=1)))


def emb_greedy_sentence(candidate: Tokens, references: Sequence[Tokens], table: EmbeddingTable) -> Optional[float]:
    """
    Greedy matching score of one instance: the average of both directional
    scores, maximised over references. ``None`` if no reference can be scored.
    """
    best: Optional[float] = None
    for reference in references:
        forward: Optional[float] = _directional(candidate, reference, table)
        backward: Optional[float] = _directional(reference, candidate, table)
        if forward is None or backward is None:
            continue
        score: float = (forward + backward) / 2.0
        if best is None or score > best:
            best = score
    return best


def emb_greedy_counts(instances: Sequence[EvalInstance], table: EmbeddingTable) -> Tuple[float, int]:
    """Returns the corpus embedding greedy score and the number of skipped instances"""
    scores: List[float] = []
    skipped: int = 0
    for instance in instances:
        score: Optional[float] = emb_greedy_sentence(instance.candidate, instance.references, table)
        if score is None:
            skipped += 1
        else:
            scores.append(score)
    if skipped:
        logging.warning(f"EmbGreedy: skipped {skipped} instances without embedded tokens")
    if not scores:
        raise ReslstmException.ArgumentError("no instance has embedded tokens on both sides")
    return float(np.mean(scores)), skipped


def emb_greedy(instances: Sequence[EvalInstance], table: EmbeddingTable) -> float:
    """
    Corpus embedding greedy similarity in ``[-1, 1]``. Each token finds its
    maximum cosine similarity among the other side's tokens; tokens without
    a vector are skipped.

    :raises ReslstmException.ArgumentError: If no instance can be scored
    """
    return emb_greedy_counts(instances, table)[0]


# ---- perplexity -------------------------------------------------------------


def instance_pairs(instances: Sequence[EvalInstance], vocab: Vocabulary) -> List[Tuple[List[int], List[int]]]:
    """Encodes every non-empty ``(source, reference)`` combination for perplexity"""
    return [
        (vocab.encode(instance.source), vocab.encode(reference))
        for instance in instances
        for reference in instance.references
        if reference
    ]


def corpus_perplexity(params: ModelParams, pairs: Sequence[Tuple[Sequence[int], Sequence[int]]]) -> float:
    """
    ``exp`` of the mean per-token NLL of the references given the sources,
    teacher-forced and without dropout.

    :param params: Model
    :type params: reslstm.model.ModelParams
    :param pairs: ``(source indices, reference indices)``, see :func:`instance_pairs`
    """
    nll, tokens = evaluate_nll(params, pairs)
    return math.exp(nll / tokens)


# ---- significance -----------------------------------------------------------


def bootstrap_variance(
    instances: Sequence[EvalInstance], metric: Metric, resamples: int = 1000, seed: int = 1
) -> float:
    """
    Variance of ``metric`` over ``resamples`` with-replacement resamples of
    the instance list (population variance).

    :raises ReslstmException.ArgumentError: With fewer than two instances
    """
    if len(instances) < 2:
        raise ReslstmException.ArgumentError("bootstrap needs at least two instances")
    if resamples < 1:
        raise ReslstmException.ArgumentError(f"resamples must be >= 1, got {resamples}")
    rng: Rng = Rng(seed)
    n: int = len(instances)
    values: List[float] = []
    for _ in range(resamples):
        indices: np.ndarray = rng.integers(n, n)
        values.append(metric([instances[i] for i in indices]))
    return float(np.var(values))


def _check_aligned(a: Sequence[EvalInstance], b: Sequence[EvalInstance]) -> None:
    if len(a) != len(b):
        raise ReslstmException.ArgumentError(f"systems have {len(a)} and {len(b)} instances")
    for index, (x, y) in enumerate(zip(a, b)):
        if x.source != y.source or x.references != y.references:
            raise ReslstmException.ArgumentError(f"instance {index} differs in source or references")


def ar_test(
    instances_a: Sequence[EvalInstance],
    instances_b: Sequence[EvalInstance],
    metric: Metric,
    iterations: int = 10000,
    seed: int = 1,
) -> float:
    """
    Approximate randomization test of the difference between two systems.
    Every iteration swaps each aligned output pair between the systems with
    probability 1/2 and recomputes ``|metric(A) - metric(B)|``;
    ``p = (count(delta >= observed) + 1) / (iterations + 1)``. When all
    ``2 ** n`` assignments fit into ``iterations`` they are enumerated and
    ``p = count / 2 ** n`` exactly.

    :raises ReslstmException.ArgumentError: If the lists are not aligned
    :return: p-value in ``(0, 1]``
    :rtype: float
    """
    _check_aligned(instances_a, instances_b)
    if iterations < 1:
        raise ReslstmException.ArgumentError(f"iterations must be >= 1, got {iterations}")
    n: int = len(instances_a)
    observed: float = abs(metric(instances_a) - metric(instances_b))

    def delta(swap: Sequence[bool]) -> float:
        a: List[EvalInstance] = [y if s else x for x, y, s in zip(instances_a, instances_b, swap)]
        b: List[EvalInstance] = [x if s else y for x, y, s in zip(instances_a, instances_b, swap)]
        return abs(metric(a) - metric(b))

    if n < 63 and 2**n <= iterations:
        count: int = sum(
            delta([bool(mask >> i & 1) for i in range(n)]) >= observed for mask in range(2**n)
        )
        return count / 2**n
    rng: Rng = Rng(seed)
    count = sum(delta(list(rng.bernoulli(0.5, n))) >= observed for _ in range(iterations))
    return (count + 1) / (iterations + 1)


# ---- reports ----------------------------------------------------------------


@dataclass
class MetricReport:
    """
    Scores of one system on one corpus. ``emb_greedy`` is stored in
    ``[-1, 1]`` and printed multiplied by 100.
    """

    system: str
    instances: int
    bleu: float
    ter: float
    emb_greedy: Optional[float] = None
    perplexity: Optional[float] = None
    variances: Dict[str, float] = field(default_factory=dict)
    p_values: Dict[str, float] = field(default_factory=dict)
    skipped: Dict[str, int] = field(default_factory=dict)

    def significant(self: "MetricReport", metric: str) -> bool:
        """Returns whether the difference in ``metric`` is significant at p < 0.05"""
        return self.p_values.get(metric, 1.0) < SIGNIFICANCE_LEVEL

    def _columns(self: "MetricReport") -> List[Tuple[str, str]]:
        columns: List[Tuple[str, str]] = [("BLEU", f"{self.bleu:.2f}"), ("TER", f"{100 * self.ter:.2f}")]
        if self.emb_greedy is not None:
            columns.append(("EmbGreedy", f"{100 * self.emb_greedy:.2f}"))
        if self.perplexity is not None:
            columns.append(("Perplexity", f"{self.perplexity:.3f}"))
        return columns

    def format_table(self: "MetricReport") -> str:
        """Returns a header and a row in the layout of a results table"""
        columns = self._columns()
        widths = [max(len(name), len(value)) for name, value in columns]
        header: str = " | ".join([f"{'System':<12}"] + [n.rjust(w) for (n, _), w in zip(columns, widths)])
        row: str = " | ".join([f"{self.system:<12}"] + [v.rjust(w) for (_, v), w in zip(columns, widths)])
        lines: List[str] = [header, "-" * len(header), row]
        for name, value in sorted(self.variances.items()):
            lines.append(f"variance({name}) = {value:.6g}")
        for name, value in sorted(self.p_values.items()):
            marker: str = " *" if self.significant(name) else ""
            lines.append(f"p({name}) = {value:.4f}{marker}")
        return "\n".join(lines)

    def format_key_values(self: "MetricReport") -> str:
        """Returns one ``key=value`` line per figure"""
        lines: List[str] = [
            f"system={self.system}",
            f"instances={self.instances}",
            f"bleu={self.bleu!r}",
            f"ter={self.ter!r}",
        ]
        if self.emb_greedy is not None:
            lines.append(f"emb_greedy={self.emb_greedy!r}")
        if self.perplexity is not None:
            lines.append(f"perplexity={self.perplexity!r}")
        lines += [f"variance.{k}={v!r}" for k, v in sorted(self.variances.items())]
        lines += [f"p_value.{k}={v!r}" for k, v in sorted(self.p_values.items())]
        lines += [f"significant.{k}={str(self.significant(k)).lower()}" for k in sorted(self.p_values)]
        lines += [f"skipped.{k}={v}" for k, v in sorted(self.skipped.items())]
        return "\n".join(lines) + "\n"


def evaluate_corpus(
    instances: Sequence[EvalInstance],
    embeddings: Optional[EmbeddingTable] = None,
    compare: Optional[Sequence[EvalInstance]] = None,
    resamples: int = 1000,
    iterations: int = 10000,
    seed: int = 1,
    system: str = "system",
) -> MetricReport:
    """
    Computes BLEU, TER and (with embeddings) EmbGreedy, their bootstrap
    variances and, if a second system is given, the AR p-value of each
    metric difference.

    :param instances: Scored system
    :param embeddings: Optional embedding table
    :param compare: Optional second system aligned with ``instances``
    :param resamples: Bootstrap resamples, ``0`` disables the variances
    :param iterations: AR iterations
    :param seed: Seed of bootstrap and AR test
    :rtype: MetricReport
    """
    metrics: Dict[str, Metric] = {"bleu": bleu, "ter": ter}
    ter_value, ter_skipped = ter_counts(instances)
    report: MetricReport = MetricReport(
        system=system,
        instances=len(instances),
        bleu=bleu(instances),
        ter=ter_value,
        skipped={"ter": ter_skipped},
    )
    if embeddings is not None:
        table: EmbeddingTable = embeddings
        metrics["emb_greedy"] = lambda subset: emb_greedy(subset, table)
        report.emb_greedy, report.skipped["emb_greedy"] = emb_greedy_counts(instances, table)
    if resamples > 0 and len(instances) >= 2:
        for name, metric in metrics.items():
            report.variances[name] = bootstrap_variance(instances, metric, resamples, seed)
    if compare is not None:
        for name, metric in metrics.items():
            report.p_values[name] = ar_test(instances, compare, metric, iterations, seed)
    return report


def load_eval_instances(
    candidate_path: str, reference_paths: Sequence[str], source_path: Optional[str] = None
) -> List[EvalInstance]:
    """
    Reads a candidate file and one or more reference files aligned by line
    (and optionally the sources).

    :raises ReslstmException.DataError: If the line counts differ
    """
    if not reference_paths:
        raise ReslstmException.ArgumentError("at least one reference file is needed")

    def read(path: str) -> List[List[str]]:
        with open(path, "r", encoding="utf-8") as handle:
            return [line.rstrip("\n").split() for line in handle]

    candidates: List[List[str]] = read(candidate_path)
    references: List[List[List[str]]] = [read(path) for path in reference_paths]
    sources: List[List[str]] = read(source_path) if source_path else [[] for _ in candidates]
    counts: Dict[str, int] = {candidate_path: len(candidates)}
    counts.update({path: len(lines) for path, lines in zip(reference_paths, references)})
    if source_path:
        counts[source_path] = len(sources)
    if len(set(counts.values())) != 1:
        raise ReslstmException.DataError(
            "misaligned files: " + ", ".join(f"{path} has {count} lines" for path, count in counts.items())
        )
    return [
        EvalInstance(source=sources[i], candidate=candidates[i], references=[refs[i] for refs in references])
        for i in range(len(candidates))
    ]
