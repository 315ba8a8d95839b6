#!/usr/bin/env python3
"""
Guess Metrics - Guessing-entropy curves and the partial guessing metric
Cross-validated attack simulation, log-probability histograms and security bounds
"""

import math
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from batch_runner import BatchRunner
from config import config
from errors import GuessBudgetExhausted, MetricError, ModelError
from markov_model import Guess, MarkovModel, Smoothing, SmoothingKind, enumerate_best_first, train
from sax_core import SaxParams, SaxWord, encode_dataset
from trace_io import TraceSet

logger = logging.getLogger(__name__)

STREAM = "stream"
HISTOGRAM = "histogram"


@dataclass(frozen=True)
class GuessingCurve:
    """(guess_count, cracked_fraction) at each checkpoint"""
    points: Tuple[Tuple[int, float], ...]

    @property
    def guess_counts(self) -> List[int]:
        return [g for g, _ in self.points]

    @property
    def fractions(self) -> List[float]:
        return [f for _, f in self.points]

    def at(self, guess_count: int) -> float:
        for g, f in self.points:
            if g == guess_count:
                return f
        raise MetricError(f"{guess_count} is not a checkpoint of this curve")


@dataclass(frozen=True)
class CrossValResult:
    checkpoints: Tuple[int, ...]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    fold_curves: Tuple[GuessingCurve, ...]
    fold_sizes: Tuple[int, ...]

    def frame(self) -> pd.DataFrame:
        data = {'guesses': list(self.checkpoints), 'mean': list(self.mean), 'std': list(self.std)}
        for k, curve in enumerate(self.fold_curves):
            data[f'fold{k + 1}'] = curve.fractions
        return pd.DataFrame(data)


@dataclass(frozen=True)
class ProbHistogram:
    """
    Words grouped by log2-probability bucket

    Bucket b holds words whose per-factor buckets sum to b; its lower edge
    b * bucket_width (bits) bounds every member: p <= 2^-(b * width).
    """
    bucket_width: float
    buckets: Tuple[Tuple[int, float, float], ...]   # (index, word_count, total_probability)
    factors: int = 1

    @classmethod
    def from_probabilities(cls, probabilities: Iterable[float], bucket_width: Optional[float] = None) -> 'ProbHistogram':
        width = _checked_width(bucket_width)
        probs = np.asarray(list(probabilities), dtype=float)
        probs = probs[probs > 0]
        indices = factor_buckets(probs, width)
        table: Dict[int, List[float]] = {}
        for b, p in zip(indices.tolist(), probs.tolist()):
            entry = table.setdefault(b, [0.0, 0.0])
            entry[0] += 1.0
            entry[1] += p
        return cls(width, tuple((b, c, m) for b, (c, m) in sorted(table.items())), 1)

    def lower_edge(self, index: int) -> float:
        return index * self.bucket_width

    @property
    def error_bound_bits(self) -> float:
        """Worst-case gap between a word's true -log2 p and its bucket's lower edge"""
        return self.factors * self.bucket_width

    def total_mass(self) -> float:
        return float(sum(m for _, _, m in self.buckets))

    def total_count(self) -> float:
        return float(sum(c for _, c, _ in self.buckets))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(b, self.lower_edge(b), c, m) for b, c, m in self.buckets],
            columns=['bucket', 'lower_edge_bits', 'word_count', 'total_probability'],
        )


@dataclass(frozen=True)
class PartialGuessReport:
    alpha: float
    mu_alpha: float
    lambda_mu: float
    g_alpha: float
    bits: float
    method: str
    error_bound_bits: float = 0.0

    def as_row(self) -> Dict[str, float]:
        return {
            'alpha': self.alpha, 'mu_alpha': self.mu_alpha, 'lambda_mu': self.lambda_mu,
            'g_alpha': self.g_alpha, 'bits': self.bits, 'method': self.method,
            'error_bound_bits': self.error_bound_bits,
        }


# ---------------------------------------------------------------------------
# Guessing entropy

def power_of_two_checkpoints(max_guesses: int) -> List[int]:
    """1, 2, 4, ... up to max_guesses (included even if not a power of two)"""
    if max_guesses < 1:
        raise MetricError(f"max guesses must be >= 1, got {max_guesses}")
    points = [1 << k for k in range(max_guesses.bit_length()) if (1 << k) <= max_guesses]
    if points[-1] != max_guesses:
        points.append(max_guesses)
    return points


def _word_key(word) -> Tuple[int, ...]:
    if isinstance(word, SaxWord):
        return word.flat()
    if isinstance(word, Guess):
        return word.symbols
    return tuple(int(s) for s in word)


def guessing_entropy(guesses: Iterable, targets: Sequence, checkpoints: Sequence[int]) -> GuessingCurve:
    """
    Fraction of targets cracked after each checkpoint number of guesses

    A target is cracked when its exact symbol word has been guessed. If the
    stream runs out, the remaining checkpoints keep the final fraction.
    """
    if not targets:
        raise MetricError("no targets to attack")
    marks = sorted(set(int(c) for c in checkpoints))
    if not marks or marks[0] < 1:
        raise MetricError("checkpoints must be positive guess counts")

    remaining = Counter(_word_key(t) for t in targets)
    total = len(targets)
    cracked = 0
    made = 0
    points = []
    stream = iter(guesses)
    exhausted = False
    for mark in marks:
        while made < mark and not exhausted:
            try:
                guess = next(stream)
            except StopIteration:
                exhausted = True
                break
            made += 1
            cracked += remaining.pop(_word_key(guess), 0)
        if made == 0:
            raise MetricError("guess stream is empty")
        points.append((mark, cracked / total))

    if exhausted:
        logger.info("Guess stream exhausted after %d guesses; curve plateaus at %.4f", made, cracked / total)
    return GuessingCurve(tuple(points))


def split_folds(account_ids: Sequence[str], folds: int, seed: int) -> List[List[str]]:
    if folds < 2:
        raise MetricError(f"cross-validation needs at least 2 folds, got {folds}")
    if folds > len(account_ids):
        raise MetricError(f"{folds} folds need at least {folds} accounts, dataset has {len(account_ids)}")
    order = np.random.default_rng(seed).permutation(len(account_ids))
    return [[account_ids[i] for i in part] for part in np.array_split(order, folds)]


def crossval_guessing(dataset: TraceSet, folds: Optional[int] = None, params: Optional[SaxParams] = None,
                      n: Optional[int] = None, smoothing: Optional[Smoothing] = None,
                      max_guesses: Optional[int] = None, seed: Optional[int] = None,
                      runner: Optional[BatchRunner] = None) -> CrossValResult:
    """
    Split accounts into folds; train on the rest, attack each held-out account

    The attacked word of an account is the SAX word of its first sample.
    """
    folds = config.CV_FOLDS if folds is None else folds
    params = params or SaxParams.from_config()
    n = config.MARKOV_ORDER if n is None else n
    smoothing = smoothing or Smoothing(SmoothingKind.GOOD_TURING)
    max_guesses = config.MAX_GUESSES if max_guesses is None else max_guesses
    seed = config.derive_seed('folds') if seed is None else seed
    runner = runner or BatchRunner()

    words = encode_dataset(dataset, params)
    accounts = list(words.keys())
    parts = split_folds(accounts, folds, seed)
    checkpoints = power_of_two_checkpoints(max_guesses)

    def run_fold(test_accounts: List[str]) -> GuessingCurve:
        held_out = set(test_accounts)
        corpus = [w for account, ws in words.items() if account not in held_out for w in ws]
        targets = [words[account][0] for account in test_accounts]
        model = train(corpus, n, smoothing)
        return guessing_entropy(enumerate_best_first(model, max_guesses), targets, checkpoints)

    curves = runner.map(run_fold, parts, label="crossval-folds")
    matrix = np.array([c.fractions for c in curves])
    logger.info("Cross-validated %d folds over %d accounts", len(parts), len(accounts))
    return CrossValResult(
        checkpoints=tuple(checkpoints),
        mean=tuple(float(v) for v in matrix.mean(axis=0)),
        std=tuple(float(v) for v in matrix.std(axis=0)),
        fold_curves=tuple(curves),
        fold_sizes=tuple(len(p) for p in parts),
    )


# ---------------------------------------------------------------------------
# Probability histograms

def _checked_width(bucket_width: Optional[float]) -> float:
    width = config.BUCKET_WIDTH_BITS if bucket_width is None else float(bucket_width)
    if not width > 0:
        raise MetricError(f"bucket width must be > 0, got {width}")
    return width


def factor_buckets(probs: np.ndarray, bucket_width: float) -> np.ndarray:
    """floor(-log2 p / width) per probability, -1 where p is 0"""
    probs = np.asarray(probs, dtype=float)
    out = np.full(probs.shape, -1, dtype=np.int64)
    positive = probs > 0
    costs = -np.log2(probs[positive]) / bucket_width
    out[positive] = np.floor(np.maximum(costs, 0.0) + 1e-9).astype(np.int64)
    return out


def _merge(parts: List[Tuple[int, np.ndarray, np.ndarray]]) -> Tuple[int, np.ndarray, np.ndarray]:
    low = min(offset for offset, _, _ in parts)
    high = max(offset + counts.size for offset, counts, _ in parts)
    counts = np.zeros(high - low)
    masses = np.zeros(high - low)
    for offset, c, m in parts:
        counts[offset - low:offset - low + c.size] += c
        masses[offset - low:offset - low + m.size] += m
    return low, counts, masses


def build_prob_histogram(model: MarkovModel, bucket_width: Optional[float] = None) -> ProbHistogram:
    """
    Histogram of all length-omega words by probability, without enumerating them

    Dynamic program over word positions; the state for each context is a
    bucket range with word counts and probability mass. Zero-probability
    words never enter a state.
    """
    width = _checked_width(bucket_width)
    if model.word_length is None:
        raise MetricError("histogram needs a model with a fixed word length")

    start_b = factor_buckets(model.start_probs, width)
    trans_b = factor_buckets(model.transition_probs, width)
    next_ctx = model._next_context

    states: Dict[int, Tuple[int, np.ndarray, np.ndarray]] = {}
    for ctx in np.flatnonzero(start_b >= 0).tolist():
        states[ctx] = (int(start_b[ctx]), np.ones(1), np.array([model.start_probs[ctx]]))

    steps = model.word_length - model.context_length
    for _ in range(steps):
        incoming: Dict[int, List[Tuple[int, np.ndarray, np.ndarray]]] = {}
        for ctx, (offset, counts, masses) in states.items():
            for s in np.flatnonzero(trans_b[ctx] >= 0).tolist():
                target = int(next_ctx[ctx, s])
                incoming.setdefault(target, []).append(
                    (offset + int(trans_b[ctx, s]), counts, masses * model.transition_probs[ctx, s]))
        states = {target: _merge(parts) for target, parts in incoming.items()}

    if not states:
        raise MetricError("model assigns zero probability to every word")
    low, counts, masses = _merge(list(states.values()))
    occupied = np.flatnonzero(counts > 0)
    buckets = tuple((int(low + i), float(counts[i]), float(masses[i])) for i in occupied)
    histogram = ProbHistogram(width, buckets, factors=steps + 1)
    logger.info("Histogram: %d buckets, %.6g words, mass %.9f", len(buckets), histogram.total_count(),
                histogram.total_mass())
    if histogram.total_mass() < 1 - 1e-6:
        logger.warning("Model is incomplete: histogram holds probability mass %.9f", histogram.total_mass())
    return histogram


# ---------------------------------------------------------------------------
# Partial guessing metric

def effective_key_bits(g_alpha: float, lambda_mu: float) -> float:
    """Expected guesses G_alpha as the length of a uniformly random key"""
    if not 0 < lambda_mu <= 1 + 1e-12:
        raise MetricError(f"cracked fraction must lie in (0, 1], got {lambda_mu}")
    lam = min(lambda_mu, 1.0)
    return math.log2(2.0 * g_alpha / lam - 1.0) + math.log2(1.0 / (2.0 - lam))


def _check_alpha(alpha: float):
    if not 0 < alpha < 1:
        raise MetricError(f"alpha must lie in (0, 1), got {alpha}")


def _from_stream(probabilities: Iterable[float], alpha: float,
                 budget: Optional[int] = None) -> PartialGuessReport:
    cumulative = 0.0
    weighted = 0.0
    rank = 0
    for p in probabilities:
        rank += 1
        cumulative += p
        weighted += p * rank
        if cumulative >= alpha - 1e-12:
            g = (1.0 - cumulative) * rank + weighted
            return PartialGuessReport(alpha, float(rank), cumulative, g, effective_key_bits(g, cumulative), STREAM)
    if budget is not None and rank >= budget:
        raise GuessBudgetExhausted(budget, cumulative, alpha)
    raise MetricError(f"distribution holds probability {cumulative:.9f} < alpha {alpha}: "
                      f"an incomplete model cannot reach this alpha")


def _from_histogram(histogram: ProbHistogram, alpha: float) -> PartialGuessReport:
    cumulative = 0.0
    weighted = 0.0
    guessed = 0.0
    for _, count, mass in histogram.buckets:
        q = mass / count
        if cumulative + mass >= alpha - 1e-12:
            k = min(count, max(1.0, math.ceil((alpha - cumulative) / q - 1e-9)))
            weighted += q * (k * guessed + k * (k + 1) / 2.0)
            cumulative += k * q
            mu = guessed + k
            g = (1.0 - cumulative) * mu + weighted
            return PartialGuessReport(alpha, mu, cumulative, g, effective_key_bits(g, cumulative), HISTOGRAM,
                                      histogram.error_bound_bits)
        weighted += q * (count * guessed + count * (count + 1) / 2.0)
        cumulative += mass
        guessed += count
    raise MetricError(f"histogram holds probability {cumulative:.9f} < alpha {alpha}: "
                      f"an incomplete model cannot reach this alpha")


def partial_guessing(source: Union[ProbHistogram, Iterable], alpha: float,
                     budget: Optional[int] = None) -> PartialGuessReport:
    """
    alpha-guesswork of a distribution

    Args:
        source: ProbHistogram, a guess stream (Guess items, most likely
            first) or plain probabilities (sorted here, most likely first)
        alpha: fraction of accounts the attacker wants to crack
        budget: limit the guess stream was truncated to; running out at
            the limit raises GuessBudgetExhausted instead of the
            incomplete-model error

    Returns:
        PartialGuessReport with mu_alpha, lambda_mu, G_alpha and bits
    """
    _check_alpha(alpha)
    if isinstance(source, ProbHistogram):
        return _from_histogram(source, alpha)
    items = iter(source)
    first = next(items, None)
    if first is None:
        raise MetricError("empty distribution")
    if isinstance(first, Guess):
        def probabilities():
            yield first.probability
            for guess in items:
                yield guess.probability
        return _from_stream(probabilities(), alpha, budget)
    values = sorted([float(first)] + [float(p) for p in items], reverse=True)
    return _from_stream(values, alpha, budget)


# ---------------------------------------------------------------------------
# Security bounds

def corpus_bounds(corpus: Sequence[SaxWord], alphas: Sequence[float],
                  bucket_width: Optional[float] = None) -> List[dict]:
    """Upper (3-gram Good-Turing) and lower (3-gram unsmoothed) report rows for one word corpus"""
    width = _checked_width(bucket_width)
    for a in alphas:
        _check_alpha(a)
    rows = []
    for bound, smoothing in (('upper', Smoothing(SmoothingKind.GOOD_TURING)), ('lower', Smoothing())):
        histogram = build_prob_histogram(train(corpus, 3, smoothing), width)
        for alpha in alphas:
            rows.append({'bound': bound, 'smoothing': smoothing.label, **partial_guessing(histogram, alpha).as_row()})
    return rows


def bounds_report(dataset: TraceSet, fractions: Sequence[float], alphas: Sequence[float],
                  params: Optional[SaxParams] = None, seed: Optional[int] = None,
                  bucket_width: Optional[float] = None, runner: Optional[BatchRunner] = None) -> pd.DataFrame:
    """
    Upper (3-gram Good-Turing) and lower (3-gram unsmoothed) bits per dataset fraction

    Fractions take nested account subsets of one seeded permutation.
    """
    params = params or SaxParams.from_config()
    width = _checked_width(bucket_width)
    seed = config.derive_seed('subsample') if seed is None else seed
    runner = runner or BatchRunner()
    for f in fractions:
        if not 0 < f <= 1:
            raise MetricError(f"fractions must lie in (0, 1], got {f}")
    for a in alphas:
        _check_alpha(a)

    words = encode_dataset(dataset, params)
    accounts = list(words.keys())
    order = np.random.default_rng(seed).permutation(len(accounts))

    def evaluate(fraction: float) -> List[dict]:
        size = int(math.ceil(fraction * len(accounts) - 1e-9))
        if size < 2:
            raise MetricError(f"fraction {fraction} keeps {size} account(s), need at least 2")
        chosen = [accounts[i] for i in order[:size]]
        corpus = [w for account in chosen for w in words[account]]
        return [{'fraction': fraction, 'accounts': size, **row} for row in corpus_bounds(corpus, alphas, width)]

    rows = [row for part in runner.map(evaluate, list(fractions), label="bounds") for row in part]
    return pd.DataFrame(rows, columns=['fraction', 'accounts', 'bound', 'smoothing', 'alpha', 'mu_alpha',
                                       'lambda_mu', 'g_alpha', 'bits', 'method', 'error_bound_bits'])


def parameter_security_table(dataset: TraceSet, omegas: Sequence[int], betas: Sequence[int],
                             alphas: Sequence[float], n: int = 3, smoothing: Optional[Smoothing] = None,
                             bucket_width: Optional[float] = None,
                             runner: Optional[BatchRunner] = None) -> pd.DataFrame:
    """Bits at each alpha for every (omega, beta), models trained on the whole dataset"""
    smoothing = smoothing or Smoothing(SmoothingKind.GOOD_TURING)
    width = _checked_width(bucket_width)
    runner = runner or BatchRunner()
    for a in alphas:
        _check_alpha(a)
    grid = [SaxParams(omega=int(o), beta=int(b)) for o in omegas for b in betas]
    if not grid:
        raise MetricError("parameter ranges must be non-empty")

    def evaluate(params: SaxParams) -> List[dict]:
        corpus = [w for ws in encode_dataset(dataset, params).values() for w in ws]
        try:
            histogram = build_prob_histogram(train(corpus, n, smoothing), width)
        except ModelError as e:
            raise MetricError(f"omega={params.omega} beta={params.beta}: {e}")
        return [{'omega': params.omega, 'beta': params.beta, **partial_guessing(histogram, a).as_row()}
                for a in alphas]

    rows = [row for part in runner.map(evaluate, grid, label="parameter-security") for row in part]
    return pd.DataFrame(rows, columns=['omega', 'beta', 'alpha', 'mu_alpha', 'lambda_mu', 'g_alpha', 'bits',
                                       'method', 'error_bound_bits'])
