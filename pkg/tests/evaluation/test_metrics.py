#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Module that checks BLEU, TER, EmbGreedy, perplexity and the significance tests."""

import math
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pytest

from reslstm.data import toy_vocabulary
from reslstm.exceptions import ReslstmException
from reslstm.metrics import (
    EmbeddingTable,
    EvalInstance,
    MetricReport,
    ar_test,
    bleu,
    bootstrap_variance,
    clipped_ngram_precision,
    closest_reference_length,
    corpus_perplexity,
    emb_greedy,
    emb_greedy_sentence,
    evaluate_corpus,
    instance_pairs,
    load_eval_instances,
    ter,
    ter_counts,
    ter_edits,
)
from reslstm.model import StackConfig, init_model
from reslstm.oracles import edit_distance_words, exhaustive_ar_pvalue


def _instance(candidate: str, *references: str) -> EvalInstance:
    return EvalInstance(source=[], candidate=candidate.split(), references=[r.split() for r in references])


def _exact_match_rate(instances: Sequence[EvalInstance]) -> float:
    return sum(1.0 for i in instances if i.candidate == i.references[0]) / len(instances)


@pytest.mark.metrics
def test_bleu_identical(corpus: List[EvalInstance]) -> None:
    """Checks that identical candidates and references score exactly 100."""
    assert bleu(corpus) == 100.0
    assert bleu([_instance("a b", "a b")]) == 100.0


@pytest.mark.metrics
def test_bleu_clipping_and_brevity() -> None:
    """Checks the clipped unigram precision, the brevity penalty and the closest length."""
    assert clipped_ngram_precision("the the the the the the the".split(), ["the cat is on the mat".split()], 1) == (2, 7)
    assert math.isclose(bleu([_instance("a b c d", "a b c d e f g h")]), 100.0 * math.exp(-1.0))
    assert bleu([_instance("a b c d e", "a b c d")]) == pytest.approx(100.0 * math.sqrt(math.sqrt(4 / 5 * 3 / 4 * 2 / 3 * 1 / 2)))
    assert closest_reference_length(5, [["x"] * 4, ["x"] * 6]) == 4
    assert closest_reference_length(5, [["x"] * 7, ["x"] * 6]) == 6


@pytest.mark.metrics
def test_bleu_without_matches() -> None:
    """Checks that a missing order gives 0 unless smoothed."""
    instance = _instance("a b c d", "a b x c d")
    assert bleu([instance]) == 0.0
    assert bleu([instance], smooth=True) > 0.0
    assert bleu([_instance("p q r s", "a b c d")]) == 0.0
    with pytest.raises(ReslstmException.ArgumentError):
        bleu([])


@pytest.mark.metrics
def test_bleu_short_candidates() -> None:
    """Checks that orders without any candidate n-gram are left out of the mean."""
    assert bleu([_instance("a b", "a b")]) == 100.0
    assert bleu([_instance("a b", "a b c")]) == pytest.approx(100.0 * math.exp(1.0 - 3 / 2))
    assert bleu([_instance("a b", "a c")]) == 0.0
    assert bleu([_instance("a", "a")], max_n=2) == 100.0


@pytest.mark.metrics
@pytest.mark.parametrize(
    "candidate,reference,expected",
    [
        ("a b c d", "a b c d", 0.0),
        ("a b x d", "a b c d", 0.25),
        ("b a c d", "a b c d", 0.25),
        ("a b c d e", "a b c d", 0.25),
        ("c d a b", "a b c d", 0.25),
    ],
)
def test_ter_examples(candidate: str, reference: str, expected: float) -> None:
    """Checks TER on substitutions, a deletion and block shifts."""
    assert ter([_instance(candidate, reference)]) == expected


@pytest.mark.metrics
def test_ter_never_exceeds_edit_distance() -> None:
    """Checks that shifts only ever lower the word-level edit distance."""
    cases = [("a b c", "c b a"), ("x y z w", "w x y z"), ("a a b", "b a a"), ("", "a b")]
    for candidate, reference in cases:
        a, b = candidate.split(), reference.split()
        assert ter_edits(a, b) <= sum(edit_distance_words(a, b))


@pytest.mark.metrics
def test_ter_references() -> None:
    """Checks the choice among references and the handling of empty ones."""
    assert ter([_instance("a b", "a x y z", "a b")]) == 0.0
    assert ter([_instance("a", "a b", "")]) == 0.5

    value, skipped = ter_counts([_instance("a", ""), _instance("a b", "a c")])
    assert (value, skipped) == (0.5, 1)
    with pytest.raises(ReslstmException.ArgumentError):
        ter([_instance("a", "")])


@pytest.mark.metrics
def test_emb_greedy(plane: EmbeddingTable) -> None:
    """
    Checks identical sentences, orthogonal words and the hand-computed
    two-token case ``(0.8 + (0.8 + 0.2) / 2) / 2 = 0.65``.
    """
    assert emb_greedy([_instance("u v w", "u v w")], plane) == pytest.approx(1.0, abs=1e-12)
    assert emb_greedy([_instance("u", "y")], plane) == pytest.approx(0.0, abs=1e-12)
    assert emb_greedy_sentence(["u"], [["v", "w"]], plane) == pytest.approx(0.65, abs=1e-6)
    # unknown words are ignored, the better reference wins
    assert emb_greedy([_instance("u unknown", "y", "u")], plane) == pytest.approx(1.0)
    assert emb_greedy_sentence(["unknown"], [["u"]], plane) is None
    with pytest.raises(ReslstmException.ArgumentError):
        emb_greedy([_instance("unknown", "u")], plane)


@pytest.mark.metrics
def test_embedding_table_load(tmp_path: Path) -> None:
    """Checks the word2vec text format with and without the header line."""
    path = tmp_path / "vectors.txt"
    path.write_text("2 3\ncat 1 0 0\ndog 0 2 0\n", encoding="utf-8")
    table = EmbeddingTable.load(str(path))
    assert len(table) == 2 and table.dim == 3
    assert table.unit("dog").tolist() == [0.0, 1.0, 0.0]
    assert "bird" not in table

    path.write_text("cat 1 0\ndog 0 1 x\n", encoding="utf-8")
    with pytest.raises(ReslstmException.DataError):
        EmbeddingTable.load(str(path))
    path.write_text("cat 1 0\ndog 0 1 1\n", encoding="utf-8")
    with pytest.raises(ReslstmException.DataError):
        EmbeddingTable.load(str(path))


@pytest.mark.metrics
def test_uniform_model_perplexity(corpus: List[EvalInstance]) -> None:
    """Checks that a model without information has perplexity equal to the vocabulary size."""
    vocab = toy_vocabulary(10)
    model = init_model(StackConfig(num_layers=2, hidden=4), vocab_size=10, seed=1).zeros_like()
    pairs = instance_pairs(corpus, vocab)
    assert len(pairs) == 6
    assert math.isclose(corpus_perplexity(model, pairs), 10.0, rel_tol=1e-12)


@pytest.mark.metrics
def test_bootstrap_variance() -> None:
    """
    Checks the bootstrap on two instances scoring 0 and 1: the resampled
    mean has variance 1/8.
    """
    instances = [_instance("a", "a"), _instance("a", "b")]
    variance = bootstrap_variance(instances, _exact_match_rate, resamples=1000, seed=1)
    assert abs(variance - 0.125) < 0.015
    assert bootstrap_variance([_instance("a", "a")] * 5, _exact_match_rate, resamples=50) == 0.0
    assert bootstrap_variance(instances, _exact_match_rate, 200, seed=4) == bootstrap_variance(
        instances, _exact_match_rate, 200, seed=4
    )
    with pytest.raises(ReslstmException.ArgumentError):
        bootstrap_variance(instances[:1], _exact_match_rate)


@pytest.mark.metrics
def test_ar_test_exact_cases() -> None:
    """Checks the AR test against the exhaustive enumeration on three instances."""
    refs = ["a b c d", "e f g h", "i j k l"]
    system_a = [_instance(c, r) for c, r in zip(["a b c d", "e f x h", "i j k l"], refs)]
    system_b = [_instance(c, r) for c, r in zip(["a x c d", "e f g h", "x y k l"], refs)]
    assert ar_test(system_a, system_a, bleu) == 1.0
    for metric in (ter, _exact_match_rate):
        assert ar_test(system_a, system_b, metric) == exhaustive_ar_pvalue(system_a, system_b, metric)

    with pytest.raises(ReslstmException.ArgumentError):
        ar_test(system_a, system_b[:2], ter)
    with pytest.raises(ReslstmException.ArgumentError):
        ar_test(system_a, [_instance("a", "z")] * 3, ter)


@pytest.mark.metrics
def test_ar_test_sampled() -> None:
    """Checks the sampled p-value on a clearly better system."""
    good = [_instance("a b", "a b")] * 20
    bad = [_instance("x y", "a b")] * 20
    p = ar_test(good, bad, _exact_match_rate, iterations=200, seed=3)
    assert 1 / 201 <= p < 0.05
    assert p == ar_test(good, bad, _exact_match_rate, iterations=200, seed=3)


@pytest.mark.metrics
def test_report_formats(corpus: List[EvalInstance]) -> None:
    """Checks the corpus report, its key=value lines and the table layout."""
    words = sorted({word for instance in corpus for reference in instance.references for word in reference})
    one_hot = EmbeddingTable({word: np.eye(len(words))[i] for i, word in enumerate(words)})
    report = evaluate_corpus(corpus, resamples=20, system="residual")
    assert report.bleu == 100.0 and report.ter == 0.0
    assert set(report.variances) == {"bleu", "ter"}
    lines = report.format_key_values().splitlines()
    assert "bleu=100.0" in lines and "ter=0.0" in lines and "system=residual" in lines
    assert "skipped.ter=0" in lines

    table = MetricReport(system="plain", instances=3, bleu=31.5, ter=0.4, emb_greedy=0.6969, p_values={"bleu": 0.01})
    text = table.format_table()
    assert "EmbGreedy" in text and "69.69" in text and "40.00" in text
    assert "p(bleu) = 0.0100 *" in text
    assert table.significant("bleu") and not table.significant("ter")

    worse = [
        EvalInstance(source=i.source, candidate=i.references[1], references=i.references) for i in corpus
    ]
    compared = evaluate_corpus(corpus, embeddings=one_hot, compare=worse, resamples=0, iterations=64)
    assert compared.emb_greedy == pytest.approx(1.0)
    assert set(compared.p_values) == {"bleu", "ter", "emb_greedy"}
    assert all(0.0 < p <= 1.0 for p in compared.p_values.values())
    assert compared.variances == {}
    assert "emb_greedy=" in compared.format_key_values()


@pytest.mark.metrics
def test_load_eval_instances(tmp_path: Path) -> None:
    """Checks reading aligned files and rejecting misaligned ones."""
    cand = tmp_path / "cand.txt"
    ref_a = tmp_path / "ref_a.txt"
    ref_b = tmp_path / "ref_b.txt"
    cand.write_text("a b c\nd e\n", encoding="utf-8")
    ref_a.write_text("a b c\nd f\n", encoding="utf-8")
    ref_b.write_text("x\ny\n", encoding="utf-8")

    instances = load_eval_instances(str(cand), [str(ref_a), str(ref_b)])
    assert len(instances) == 2
    assert instances[1].references == [["d", "f"], ["y"]]
    assert instances[0].source == []

    ref_b.write_text("x\n", encoding="utf-8")
    with pytest.raises(ReslstmException.DataError, match="has 1 lines"):
        load_eval_instances(str(cand), [str(ref_a), str(ref_b)])
    with pytest.raises(ReslstmException.ArgumentError):
        load_eval_instances(str(cand), [])
