import numpy as np

import oracles
from cmatch.metrics import (
    EditCounts,
    char_error_rate,
    corpus_error_rates,
    levenshtein,
    word_error_rate,
)


def test_equal_sequences():
    assert levenshtein("abc", "abc") == EditCounts(0, 0, 0)


def test_single_substitution():
    assert levenshtein("abc", "axc") == EditCounts(1, 0, 0)


def test_single_deletion_wer_example():
    counts = levenshtein("a b c".split(), "a c".split())
    assert counts == EditCounts(0, 0, 1)
    wer = word_error_rate("a b c", "a c")
    assert abs(wer - 1 / 3) < 1e-12
    assert round(100 * wer, 2) == 33.33


def test_insertion():
    assert levenshtein("ac", "abc").insertions == 1


def test_empty_reference_rate_is_none():
    assert char_error_rate("", "abc") is None
    assert word_error_rate("", "a b") is None
    assert levenshtein("", "ab") == EditCounts(0, 2, 0)


def test_matches_exhaustive_edit_search():
    rng = np.random.default_rng(31)
    alphabet = "abc"
    for _ in range(60):
        n = int(rng.integers(0, 9))
        m = int(rng.integers(0, 9))
        ref = "".join(rng.choice(list(alphabet), size=n))
        hyp = "".join(rng.choice(list(alphabet), size=m))
        got = levenshtein(ref, hyp)
        want = oracles.edit_distance_recursive(ref, hyp)
        assert got.total == want


def test_corpus_aggregate_pools_edits():
    cer, wer = corpus_error_rates([("abc", "abc"), ("ab", "xb")])
    assert abs(cer - 1 / 5) < 1e-12
    assert abs(wer - 1 / 2) < 1e-12


def test_corpus_aggregate_empty():
    cer, wer = corpus_error_rates([])
    assert cer is None and wer is None
