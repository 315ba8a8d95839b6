"""Shared pytest fixtures"""

import numpy as np
import pytest

from markov_model import MarkovModel, train_sequences
from trace_io import RawTrace, SynthSpec, TraceSet, synth_gestures


def make_trace(account_id, sample_id, xy, dt=16.0):
    return RawTrace(account_id, sample_id, tuple((k * dt, float(x), float(y)) for k, (x, y) in enumerate(xy)))


@pytest.fixture
def trace_factory():
    return make_trace


@pytest.fixture
def two_by_two():
    """Two accounts with two samples each"""
    line = [(0, 0), (1, 1), (2, 2), (3, 3)]
    zag = [(0, 0), (1, 3), (2, 0), (3, 3)]
    return TraceSet((
        make_trace("a", "s0", line),
        make_trace("a", "s1", line),
        make_trace("b", "s0", zag),
        make_trace("b", "s1", zag),
    ))


@pytest.fixture(scope="session")
def small_dataset():
    spec = SynthSpec(accounts=12, samples_per_account=4, points_per_trace=32, jitter=0.03)
    return synth_gestures(spec, seed=11)


@pytest.fixture
def uniform_model():
    """beta^2 = 4, omega = 3; every word has probability 1/64"""
    return MarkovModel.from_counts(2, 4, [2, 2, 2, 2], np.ones((4, 4)), word_length=3, corpus_size=8)


@pytest.fixture
def random_model():
    """Unsmoothed 2-gram model over 4 symbols with some impossible transitions"""
    rng = np.random.default_rng(5)
    corpus = [rng.integers(0, 4, size=4).tolist() for _ in range(12)]
    return train_sequences(corpus, alphabet_size=4, n=2, word_length=4)
