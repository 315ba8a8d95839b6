import itertools
import math
from collections import Counter

import numpy as np
import pytest

from batch_runner import BatchRunner
from errors import GuessBudgetExhausted, MetricError
from guess_metrics import (ProbHistogram, bounds_report, build_prob_histogram, corpus_bounds, crossval_guessing,
                           effective_key_bits, factor_buckets, guessing_entropy, parameter_security_table,
                           partial_guessing, power_of_two_checkpoints, split_folds)
from markov_model import Smoothing, SmoothingKind, enumerate_best_first, train_sequences
from sax_core import SaxParams, SaxWord


def test_checkpoints():
    assert power_of_two_checkpoints(8) == [1, 2, 4, 8]
    assert power_of_two_checkpoints(10) == [1, 2, 4, 8, 10]
    assert power_of_two_checkpoints(1) == [1]
    with pytest.raises(MetricError):
        power_of_two_checkpoints(0)


def test_targets_equal_to_first_guess(random_model):
    first = next(enumerate_best_first(random_model, 1))
    curve = guessing_entropy(enumerate_best_first(random_model, 16), [first.symbols] * 5, [1, 2, 16])
    assert curve.at(1) == 1.0
    assert curve.fractions == [1.0, 1.0, 1.0]


def test_curve_plateaus_on_unseen_targets():
    model = train_sequences([[0, 1, 2], [0, 1, 1], [1, 1, 2]], alphabet_size=3, n=2, word_length=3)
    targets = [(0, 1, 2), (2, 2, 2)]
    curve = guessing_entropy(enumerate_best_first(model, 27), targets, power_of_two_checkpoints(27))
    assert curve.fractions[-1] == 0.5
    assert max(curve.fractions) == 0.5


def test_curve_matches_brute_force_simulation():
    rng = np.random.default_rng(8)
    corpus = [rng.integers(0, 4, size=3).tolist() for _ in range(30)]
    model = train_sequences(corpus, alphabet_size=4, n=2, smoothing=Smoothing(SmoothingKind.ADDITIVE, 0.1),
                            word_length=3)
    ranked = sorted(itertools.product(range(4), repeat=3), key=lambda w: (-model.word_score(w), w))
    rank_of = {w: k + 1 for k, w in enumerate(ranked)}
    targets = [tuple(rng.integers(0, 4, size=3).tolist()) for _ in range(25)]
    checkpoints = power_of_two_checkpoints(64)
    curve = guessing_entropy(enumerate_best_first(model, 64), targets, checkpoints)
    expected = [sum(rank_of[t] <= c for t in targets) / len(targets) for c in checkpoints]
    assert curve.fractions == pytest.approx(expected)


def test_guessing_entropy_preconditions(uniform_model):
    with pytest.raises(MetricError):
        guessing_entropy(enumerate_best_first(uniform_model, 4), [], [1])
    with pytest.raises(MetricError):
        guessing_entropy(iter([]), [(0, 0, 0)], [1])
    with pytest.raises(MetricError):
        guessing_entropy(enumerate_best_first(uniform_model, 4), [(0, 0, 0)], [1, 2]).at(3)


def test_leave_one_account_out_folds():
    accounts = [f"acct{k:05d}" for k in range(10)]
    folds = split_folds(accounts, 10, seed=4)
    assert len(folds) == 10
    assert all(len(f) == 1 for f in folds)
    assert sorted(a for f in folds for a in f) == accounts
    assert split_folds(accounts, 3, seed=4) == split_folds(accounts, 3, seed=4)
    with pytest.raises(MetricError):
        split_folds(accounts, 1, seed=4)
    with pytest.raises(MetricError):
        split_folds(accounts, 11, seed=4)


def test_crossval_guessing(small_dataset):
    result = crossval_guessing(small_dataset, folds=3, params=SaxParams(omega=4, beta=3), n=2,
                               smoothing=Smoothing(SmoothingKind.ADDITIVE, 0.01), max_guesses=256, seed=6,
                               runner=BatchRunner(max_workers=2))
    assert result.checkpoints == tuple(power_of_two_checkpoints(256))
    assert sum(result.fold_sizes) == 12
    assert np.all(np.diff(result.mean) >= 0)
    assert 0.0 <= result.mean[-1] <= 1.0
    frame = result.frame()
    assert list(frame.columns) == ['guesses', 'mean', 'std', 'fold1', 'fold2', 'fold3']


def test_crossval_rejects_zero_folds(small_dataset):
    with pytest.raises(MetricError):
        crossval_guessing(small_dataset, folds=0, params=SaxParams(omega=4, beta=3), n=2, max_guesses=16, seed=6)


def fibonacci_words(length):
    words = []
    for a, b in itertools.product(range(4), repeat=2):
        word = [a, b]
        while len(word) < length:
            word.append((word[-1] + word[-2]) % 4)
        words.append(word)
    return words


def test_trigram_model_dominates_bigram_on_second_order_rule():
    corpus = fibonacci_words(6)
    targets = [tuple(w) for w in corpus]
    checkpoints = power_of_two_checkpoints(4096)
    gt = Smoothing(SmoothingKind.GOOD_TURING)
    curves = {
        n: guessing_entropy(enumerate_best_first(train_sequences(corpus, 4, n, gt, word_length=6), 4096),
                            targets, checkpoints)
        for n in (2, 3)
    }
    assert all(hi >= lo for hi, lo in zip(curves[3].fractions, curves[2].fractions))
    assert curves[3].at(16) == 1.0
    assert curves[2].at(16) < 1.0
    assert curves[2].at(4096) == 1.0


def test_uniform_model_histogram(uniform_model):
    histogram = build_prob_histogram(uniform_model, bucket_width=0.01)
    assert len(histogram.buckets) == 1
    index, count, mass = histogram.buckets[0]
    assert count == 64
    assert mass == pytest.approx(1.0)
    assert index == 600
    assert histogram.error_bound_bits == pytest.approx(0.03)


def test_histogram_matches_exhaustive_binning():
    rng = np.random.default_rng(21)
    corpus = [rng.integers(0, 4, size=4).tolist() for _ in range(25)]
    model = train_sequences(corpus, alphabet_size=4, n=2, smoothing=Smoothing(SmoothingKind.ADDITIVE, 0.3),
                            word_length=4)
    width = 0.05
    start_b = factor_buckets(model.start_probs, width)
    trans_b = factor_buckets(model.transition_probs, width)
    counts, masses = Counter(), Counter()
    for word in itertools.product(range(4), repeat=4):
        bucket = start_b[word[0]] + sum(trans_b[a, b] for a, b in zip(word, word[1:]))
        counts[int(bucket)] += 1
        masses[int(bucket)] += math.exp(model.sequence_logprobs(np.array([word]))[0])

    histogram = build_prob_histogram(model, width)
    assert [b for b, _, _ in histogram.buckets] == sorted(counts)
    for b, count, mass in histogram.buckets:
        assert count == counts[b]
        assert mass == pytest.approx(masses[b])
    assert histogram.total_count() == 256


def test_histogram_skips_impossible_words(random_model):
    histogram = build_prob_histogram(random_model, 0.01)
    possible = sum(1 for g in enumerate_best_first(random_model, 256))
    assert histogram.total_count() == possible
    assert 0.0 < histogram.total_mass() <= 1.0 + 1e-9


def test_partial_guessing_uniform_hundred():
    report = partial_guessing([0.01] * 100, 0.2)
    assert report.mu_alpha == 20
    assert report.lambda_mu == pytest.approx(0.2)
    assert report.g_alpha == pytest.approx(18.1)
    assert report.bits == pytest.approx(math.log2(100))

    from_histogram = partial_guessing(ProbHistogram.from_probabilities([0.01] * 100, 0.01), 0.2)
    assert from_histogram.mu_alpha == 20
    assert from_histogram.g_alpha == pytest.approx(18.1)
    assert from_histogram.bits == pytest.approx(math.log2(100))


def test_partial_guessing_hand_examples():
    report = partial_guessing([0.25, 0.5, 0.25], 0.6)
    assert report.mu_alpha == 2
    assert report.lambda_mu == pytest.approx(0.75)
    assert report.g_alpha == pytest.approx(1.5)

    single = partial_guessing([1.0], 0.3)
    assert (single.mu_alpha, single.g_alpha, single.bits) == (1, 1.0, 0.0)


def test_stream_and_histogram_agree_on_uniform_model(uniform_model):
    stream = partial_guessing(enumerate_best_first(uniform_model, 64), 0.2)
    histogram = partial_guessing(build_prob_histogram(uniform_model, 0.01), 0.2)
    assert stream.mu_alpha == histogram.mu_alpha == 13
    assert stream.g_alpha == pytest.approx(51 / 64 * 13 + 91 / 64)
    assert histogram.g_alpha == pytest.approx(stream.g_alpha)
    assert stream.bits == pytest.approx(6.0, abs=0.05)


@pytest.mark.parametrize("lam", [0.3, 0.01])
@pytest.mark.parametrize("alpha", [0.2, 0.5])
def test_stream_and_histogram_agree_on_random_model(lam, alpha):
    rng = np.random.default_rng(17)
    corpus = [rng.integers(0, 4, size=4).tolist() for _ in range(12)]
    model = train_sequences(corpus, alphabet_size=4, n=2, smoothing=Smoothing(SmoothingKind.ADDITIVE, lam),
                            word_length=4)
    stream = partial_guessing(enumerate_best_first(model, 256), alpha, 256)
    histogram = partial_guessing(build_prob_histogram(model, 0.001), alpha)
    assert abs(stream.mu_alpha - histogram.mu_alpha) <= 2
    assert histogram.bits == pytest.approx(stream.bits, abs=0.05)


def test_running_out_of_budget_is_not_an_incomplete_model():
    model = train_sequences([[0, 1, 2], [2, 1, 0]], alphabet_size=3, n=2,
                            smoothing=Smoothing(SmoothingKind.ADDITIVE, 1.0), word_length=3)
    with pytest.raises(GuessBudgetExhausted) as err:
        partial_guessing(enumerate_best_first(model, 2), 0.9, 2)
    assert err.value.budget == 2
    assert err.value.reached < 0.9

    assert partial_guessing(enumerate_best_first(model, 27), 0.9, 27).mu_alpha <= 27

    with pytest.raises(MetricError) as err:
        partial_guessing([0.1, 0.1], 0.5, 10)
    assert not isinstance(err.value, GuessBudgetExhausted)


def test_partial_guessing_preconditions():
    with pytest.raises(MetricError):
        partial_guessing([0.5, 0.5], 1.0)
    with pytest.raises(MetricError):
        partial_guessing([0.5, 0.5], 0.0)
    with pytest.raises(MetricError):
        partial_guessing([0.1, 0.1], 0.5)
    with pytest.raises(MetricError):
        partial_guessing([], 0.5)
    with pytest.raises(MetricError):
        effective_key_bits(3.0, 0.0)


def test_bounds_report_is_reproducible(small_dataset):
    params = SaxParams(omega=4, beta=3)
    first = bounds_report(small_dataset, [0.5, 1.0], [0.1, 0.2], params, seed=2, bucket_width=0.05)
    again = bounds_report(small_dataset, [1.0], [0.1, 0.2], params, seed=2, bucket_width=0.05)
    assert len(first) == 2 * 2 * 2
    assert set(first.bound) == {"upper", "lower"}
    assert list(first.accounts.unique()) == [6, 12]
    full = first[first.fraction == 1.0].reset_index(drop=True)
    assert full.equals(again)


def test_bounds_report_preconditions(small_dataset):
    with pytest.raises(MetricError):
        bounds_report(small_dataset, [0.0], [0.1], SaxParams(omega=4, beta=3))
    with pytest.raises(MetricError):
        bounds_report(small_dataset, [1.0], [1.5], SaxParams(omega=4, beta=3))


def test_parameter_security_table(small_dataset):
    table = parameter_security_table(small_dataset, [3, 4], [3], [0.2], n=2,
                                     smoothing=Smoothing(SmoothingKind.ADDITIVE, 0.01), bucket_width=0.05)
    assert list(table[['omega', 'beta']].itertuples(index=False, name=None)) == [(3, 3), (4, 3)]
    assert (table.bits > 0).all()


def test_corpus_bounds_tighten_with_more_words():
    def words(*flat):
        return [SaxWord.from_flat(w, beta=2, n_original=12) for w in flat]

    small = words([0, 0, 0], [1, 1, 1])
    large = words(*([[0, 0, 0]] * 5 + [[1, 1, 1]] * 5 + [[2, 2, 2]]))

    def bits(corpus):
        return {row['bound']: row['bits'] for row in corpus_bounds(corpus, [0.2], bucket_width=0.01)}

    small_bits, large_bits = bits(small), bits(large)
    assert small_bits['upper'] == pytest.approx(4.474, abs=0.01)
    assert small_bits['lower'] == pytest.approx(1.0)
    assert large_bits['upper'] == pytest.approx(1.512, abs=0.01)
    assert large_bits['lower'] == pytest.approx(1.138, abs=0.01)
    for report in (small_bits, large_bits):
        assert report['upper'] >= report['lower']
    assert large_bits['upper'] <= small_bits['upper']
    assert large_bits['lower'] >= small_bits['lower']


def test_corpus_bounds_preconditions():
    corpus = [SaxWord.from_flat([0, 1, 2], beta=2, n_original=6)]
    with pytest.raises(MetricError):
        corpus_bounds(corpus, [1.0])
    with pytest.raises(MetricError):
        corpus_bounds(corpus, [0.2], bucket_width=0.0)
