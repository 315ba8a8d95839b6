import itertools
import math

import numpy as np
import pytest

from errors import ModelError
from markov_model import (IMPOSSIBLE, MarkovModel, Smoothing, SmoothingKind, apply_additive, apply_good_turing,
                          enumerate_best_first, expected_start_observations, load_model, model_bytes,
                          parse_model, save_model, simple_good_turing, train, train_sequences, word_logprob)
from sax_core import SaxWord

A, B = 0, 1


def brute_force_order(model):
    """Every non-zero word of the space sorted by (score desc, lexicographic)"""
    words = itertools.product(range(model.alphabet_size), repeat=model.word_length)
    scored = [(model.word_score(w), w) for w in words]
    return [w for s, w in sorted(scored, key=lambda item: (-item[0], item[1])) if s != IMPOSSIBLE]


def test_single_observed_path():
    model = train_sequences([[A, B], [A, B]], alphabet_size=2, n=2)
    assert model.start_probs[A] == 1.0
    assert model.transition_probs[A, B] == 1.0
    assert word_logprob(model, [A, B]).value == 0.0


def test_relative_frequency():
    model = train_sequences([[A, B], [A, A]], alphabet_size=2, n=2)
    assert model.transition_probs[A, B] == 0.5
    assert model.transition_probs[A, A] == 0.5


def test_unseen_word_is_impossible_without_smoothing():
    model = train_sequences([[A, B], [A, B]], alphabet_size=2, n=2)
    result = word_logprob(model, [B, A])
    assert result.impossible
    assert result.value == -math.inf
    assert result.probability == 0.0
    assert model.word_score([B, A]) == IMPOSSIBLE


def test_additive_smoothing():
    assert apply_additive(np.zeros((1, 36)), 0.01) == pytest.approx(np.full((1, 36), 1 / 36))
    assert apply_additive(np.array([[1, 0]]), 0.01)[0, 0] == pytest.approx(1.01 / 1.02)
    with pytest.raises(ModelError):
        apply_additive(np.array([[1, 0]]), 0.0)


def test_good_turing_unseen_mass():
    estimate = simple_good_turing(np.array([1, 1, 1, 2, 5]))
    assert estimate.unseen_mass == pytest.approx(0.3)
    assert list(estimate.r_values) == [1, 2, 5]
    assert np.all(np.diff(estimate.r_star) >= 0)


def test_good_turing_rows_are_distributions():
    counts = np.array([[1, 1, 0, 3, 0], [2, 1, 1, 1, 4], [0, 0, 0, 0, 0]])
    probs, fell_back = apply_good_turing(counts)
    assert not fell_back
    assert probs.sum(axis=1) == pytest.approx(np.ones(3))
    assert (probs[0] > 0).all()
    assert probs[2] == pytest.approx(np.full(5, 0.2))
    assert probs[0, 2] == pytest.approx(probs[0, 4])


def test_good_turing_falls_back_on_degenerate_counts():
    probs, fell_back = apply_good_turing(np.array([[2, 2, 0]]))
    assert fell_back
    assert probs[0] == pytest.approx([0.5, 0.5, 0.0])
    assert simple_good_turing(np.array([2, 3, 4])) is None


def test_good_turing_with_only_singletons_stays_complete():
    probs, fell_back = apply_good_turing(np.array([[1, 1, 0], [0, 0, 1]]))
    assert fell_back
    assert probs[0] == pytest.approx([1 / 8, 1 / 8, 3 / 4])
    assert probs[1] == pytest.approx([3 / 8, 3 / 8, 1 / 4])
    assert simple_good_turing(np.array([1, 1, 1])) is None


def test_good_turing_model_on_sparse_corpus_is_complete():
    rng = np.random.default_rng(3)
    corpus = [rng.integers(0, 36, size=8).tolist() for _ in range(30)]
    model = train_sequences(corpus, alphabet_size=36, n=3, smoothing=Smoothing(SmoothingKind.GOOD_TURING),
                            word_length=8)
    assert model.is_complete
    assert not word_logprob(model, [35] * 8).impossible
    words = rng.integers(0, 36, size=(10 ** 6, 8))
    assert np.isfinite(model.sequence_logprobs(words)).all()


@pytest.mark.parametrize("smoothing", [Smoothing(SmoothingKind.ADDITIVE, 0.01), Smoothing(SmoothingKind.GOOD_TURING)])
def test_smoothed_models_cover_the_whole_space(smoothing):
    rng = np.random.default_rng(21)
    corpus = [rng.integers(0, 4, size=5).tolist() for _ in range(10)] + [[0, 1, 2, 3, 0]] * 3
    model = train_sequences(corpus, alphabet_size=4, n=3, smoothing=smoothing, word_length=5)
    logprobs = [word_logprob(model, w) for w in itertools.product(range(4), repeat=5)]
    assert not any(lp.impossible for lp in logprobs)
    assert math.fsum(lp.probability for lp in logprobs) == pytest.approx(1.0, abs=1e-9)


def test_unsmoothed_model_is_impossible_exactly_on_unseen_steps():
    rng = np.random.default_rng(21)
    corpus = [rng.integers(0, 4, size=5).tolist() for _ in range(10)]
    model = train_sequences(corpus, alphabet_size=4, n=3, word_length=5)
    for word in itertools.product(range(4), repeat=5):
        unseen = model.start_counts[model.context_index(word[:2])] == 0 or any(
            model.transition_counts[model.context_index(word[i:i + 2]), word[i + 2]] == 0 for i in range(3))
        assert word_logprob(model, word).impossible == unseen


def test_good_turing_preserves_observed_order():
    rng = np.random.default_rng(4)
    counts = rng.poisson(1.2, size=(30, 12))
    probs, fell_back = apply_good_turing(counts)
    assert not fell_back
    for row, p in zip(counts, probs):
        for a, b in itertools.permutations(np.flatnonzero(row), 2):
            if row[a] > row[b]:
                assert p[a] >= p[b]


def test_smoothing_parse():
    assert Smoothing.parse("additive:0.05") == Smoothing(SmoothingKind.ADDITIVE, 0.05)
    assert Smoothing.parse("good_turing").kind is SmoothingKind.GOOD_TURING
    assert Smoothing.parse("additive", 0.2).label == "additive:0.2"
    with pytest.raises(ModelError):
        Smoothing.parse("kneser-ney")


def test_expected_start_observations():
    assert expected_start_observations(3245, 6, 2) == pytest.approx(90.14, abs=0.01)
    assert expected_start_observations(5026, 6, 3) == pytest.approx(3.88, abs=0.01)
    assert expected_start_observations(0, 6, 3) == 0.0


def test_train_on_sax_words():
    corpus = [SaxWord(((0, 1), (1, 1), (1, 0)), n_original=10, beta=2)] * 3
    model = train(corpus, n=3, smoothing=Smoothing(SmoothingKind.ADDITIVE, 0.01))
    assert model.alphabet_size == 4
    assert model.beta == 2
    assert model.word_length == 3
    assert model.is_complete
    assert word_logprob(model, corpus[0]).value == pytest.approx(model.word_score(corpus[0]) / 2 ** 32, abs=1e-6)
    with pytest.raises(ModelError):
        train(corpus + [SaxWord(((0, 1), (1, 1)), n_original=10, beta=2)])


def test_dense_table_limit():
    with pytest.raises(ModelError):
        MarkovModel(3, 26 * 26, np.ones(1), np.ones((1, 1)))


def test_deterministic_chain_first_guess():
    model = train_sequences([[2, 0, 1, 3]] * 4, alphabet_size=4, n=3, word_length=4)
    guesses = list(enumerate_best_first(model, 10))
    assert len(guesses) == 1
    assert guesses[0].symbols == (2, 0, 1, 3)
    assert guesses[0].probability == pytest.approx(1.0)


@pytest.mark.parametrize("smoothing", [Smoothing(), Smoothing(SmoothingKind.ADDITIVE, 0.5),
                                       Smoothing(SmoothingKind.GOOD_TURING)])
def test_enumeration_matches_exhaustive_sort(smoothing):
    rng = np.random.default_rng(17)
    corpus = [list(rng.integers(0, 4, size=5)) for _ in range(40)] + [[0, 1, 2, 3, 0]] * 6
    model = train_sequences(corpus, alphabet_size=4, n=3, smoothing=smoothing, word_length=5)
    expected = brute_force_order(model)
    emitted = [g.symbols for g in enumerate_best_first(model, 4 ** 5)]
    assert emitted == expected


def test_uniform_model_enumerates_lexicographically(uniform_model):
    emitted = [g.symbols for g in enumerate_best_first(uniform_model, 64)]
    assert emitted == list(itertools.product(range(4), repeat=3))
    assert all(g.probability == pytest.approx(1 / 64) for g in enumerate_best_first(uniform_model, 5))


def test_enumeration_preconditions():
    model = train_sequences([[0, 1, 2]], alphabet_size=3, n=2)
    with pytest.raises(ModelError):
        next(enumerate_best_first(model, 5))
    fixed = train_sequences([[0, 1, 2]], alphabet_size=3, n=2, word_length=3)
    with pytest.raises(ModelError):
        next(enumerate_best_first(fixed, 0))


def test_model_round_trip(tmp_path, random_model):
    path = save_model(random_model, tmp_path / "model.jsonl", {"tool": "recogpass", "seed": 1})
    loaded = load_model(path)
    assert np.array_equal(loaded.start_counts, random_model.start_counts)
    assert np.array_equal(loaded.transition_counts, random_model.transition_counts)
    assert loaded.word_length == random_model.word_length
    assert loaded.smoothing == random_model.smoothing

    resmoothed = load_model(path, Smoothing(SmoothingKind.GOOD_TURING))
    assert resmoothed.smoothing.kind is SmoothingKind.GOOD_TURING


def test_saved_counts_are_checked():
    model = train_sequences([[0, 1, 2], [1, 1, 2]], alphabet_size=3, n=2, word_length=3)
    data = model_bytes(model).replace(b'"count":2', b'"count":5', 1)
    with pytest.raises(ModelError):
        parse_model(data)
    with pytest.raises(ModelError):
        parse_model(b'{"format": "something-else", "version": 1}\n')
