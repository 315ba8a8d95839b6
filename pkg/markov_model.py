#!/usr/bin/env python3
"""
Markov Model - n-gram chains over SAX symbol words
Training, smoothing, word probabilities, persistence and best-first guess enumeration
"""

import math
import heapq
import logging
from enum import Enum
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
from pydantic import BaseModel, ValidationError

from config import config
from errors import ModelError
from sax_core import SaxWord

logger = logging.getLogger(__name__)

MODEL_FORMAT = "recogpass-markov"
MODEL_FORMAT_VERSION = 1

# Quantized log-probabilities: integer multiples of 2^-32 nats
LOG_SCALE = float(2 ** 32)
IMPOSSIBLE = -(2 ** 60)

MAX_DENSE_CELLS = 2 ** 25

Word = Union[SaxWord, Sequence[int]]


class SmoothingKind(Enum):
    NONE = "none"
    ADDITIVE = "additive"
    GOOD_TURING = "good-turing"


@dataclass(frozen=True)
class Smoothing:
    kind: SmoothingKind = SmoothingKind.NONE
    lam: float = 0.01

    def __post_init__(self):
        if self.kind is SmoothingKind.ADDITIVE and not self.lam > 0:
            raise ModelError(f"additive lambda must be > 0, got {self.lam}")

    @classmethod
    def parse(cls, text: str, lam: Optional[float] = None) -> 'Smoothing':
        """'none', 'additive', 'additive:0.05' or 'good-turing'"""
        name, _, value = text.strip().lower().partition(':')
        name = name.replace('_', '-')
        try:
            kind = SmoothingKind(name)
        except ValueError:
            raise ModelError(f"unknown smoothing '{text}', expected one of {[k.value for k in SmoothingKind]}")
        if value:
            try:
                lam = float(value)
            except ValueError:
                raise ModelError(f"bad additive lambda in '{text}'")
        return cls(kind, config.ADDITIVE_LAMBDA if lam is None else lam)

    @property
    def label(self) -> str:
        if self.kind is SmoothingKind.ADDITIVE:
            return f"additive:{self.lam:g}"
        return self.kind.value


@dataclass(frozen=True)
class LogProb:
    """Natural-log probability; impossible words carry value -inf"""
    value: float
    impossible: bool = False

    @property
    def probability(self) -> float:
        return 0.0 if self.impossible else math.exp(self.value)


@dataclass(frozen=True)
class Guess:
    symbols: Tuple[int, ...]
    probability: float
    score: int  # quantized log-probability

    def as_sax_word(self, beta: int, n_original: int) -> SaxWord:
        return SaxWord.from_flat(self.symbols, beta, n_original)


# ---------------------------------------------------------------------------
# Smoothing of count tables (rows are contexts, columns successor cells)

def relative_frequencies(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid='ignore', divide='ignore'):
        probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.0)
    return probs


def apply_additive(counts: np.ndarray, lam: float) -> np.ndarray:
    """P = (count + lam) / (row total + lam * cells)"""
    if not lam > 0:
        raise ModelError(f"additive lambda must be > 0, got {lam}")
    counts = np.asarray(counts, dtype=float)
    cells = counts.shape[-1]
    return (counts + lam) / (counts.sum(axis=-1, keepdims=True) + lam * cells)


@dataclass(frozen=True)
class GoodTuringEstimate:
    """Simple Good-Turing adjusted counts over one table's count-of-counts"""
    r_values: np.ndarray
    r_star: np.ndarray
    unseen_mass: float   # N1 / N
    slope: float

    def adjusted(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts)
        result = np.zeros(counts.shape, dtype=float)
        seen = counts > 0
        result[seen] = self.r_star[np.searchsorted(self.r_values, counts[seen])]
        return result


def simple_good_turing(counts: np.ndarray) -> Optional[GoodTuringEstimate]:
    """
    Fit adjusted counts r* from the table's count-of-counts

    Turing's (r+1) N_{r+1} / N_r is used while it differs significantly from
    the log-log regression of N_r on r; the regression is used from the
    first gap or insignificant difference onward.

    Returns:
        None when there are no singletons (N1 = 0) or only singletons (N1 = N)
    """
    observed = np.asarray(counts)[np.asarray(counts) > 0].astype(np.int64)
    if observed.size == 0:
        raise ModelError("Good-Turing needs at least one observed event")
    r_values, n_r = np.unique(observed, return_counts=True)
    if r_values[0] != 1 or r_values.size == 1:
        return None
    total = float(observed.sum())

    previous = np.concatenate(([0], r_values[:-1]))
    following = np.concatenate((r_values[1:], [2 * r_values[-1] - previous[-1]]))
    z = 2.0 * n_r / (following - previous)
    slope, _ = np.polyfit(np.log(r_values), np.log(z), 1)

    count_of = dict(zip(r_values.tolist(), n_r.tolist()))
    r_star = []
    use_fit = False
    for r in r_values.tolist():
        fitted = (r + 1) * ((r + 1) / r) ** slope
        if not use_fit:
            n_next = count_of.get(r + 1)
            if n_next is None:
                use_fit = True
            else:
                n_here = count_of[r]
                turing = (r + 1) * n_next / n_here
                spread = 1.96 * math.sqrt((r + 1) ** 2 * n_next / n_here ** 2 * (1 + n_next / n_here))
                if abs(turing - fitted) <= spread:
                    use_fit = True
                else:
                    r_star.append(turing)
                    continue
        r_star.append(fitted)

    r_star = np.maximum.accumulate(np.asarray(r_star, dtype=float))
    return GoodTuringEstimate(r_values, r_star, float(count_of[1]) / total, float(slope))


def apply_good_turing(counts: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Good-Turing smoothed rows

    Each row with unseen successors gives them mass N1/N, split uniformly;
    the rest is shared by the seen successors in proportion to r*. Rows
    without any observation are uniform.

    Returns:
        (probabilities, fell_back); fell_back is True when the count-of-counts
        is degenerate. With only singletons (N1 = N) the unseen mass is
        clipped to N1 / (N + 1) and seen events share the rest evenly, so the
        rows stay complete; with no singletons (N1 = 0) the rows are plain
        relative frequencies
    """
    counts = np.atleast_2d(np.asarray(counts))
    if counts.sum() <= 0:
        raise ModelError("Good-Turing needs a non-empty count table")
    estimate = simple_good_turing(counts)
    fell_back = estimate is None
    if fell_back:
        total = int(counts.sum())
        if not (counts[counts > 0] == 1).all():
            logger.warning("Good-Turing: no singletons (N1 = 0), using unsmoothed frequencies")
            return relative_frequencies(counts), True
        logger.warning("Good-Turing: every event is a singleton (N1 = N = %d), clipping unseen mass to %d/%d",
                       total, total, total + 1)
        estimate = GoodTuringEstimate(np.array([1]), np.array([1.0]), total / (total + 1.0), float("nan"))

    cells = counts.shape[-1]
    seen = counts > 0
    adjusted = estimate.adjusted(counts)
    adjusted_totals = adjusted.sum(axis=-1, keepdims=True)
    unseen_per_row = cells - seen.sum(axis=-1, keepdims=True)
    seen_mass = np.where(unseen_per_row > 0, 1.0 - estimate.unseen_mass, 1.0)

    with np.errstate(invalid='ignore', divide='ignore'):
        seen_part = np.where(seen, seen_mass * adjusted / np.where(adjusted_totals > 0, adjusted_totals, 1.0), 0.0)
        unseen_part = np.where(~seen, estimate.unseen_mass / np.maximum(unseen_per_row, 1), 0.0)
    probs = seen_part + unseen_part
    empty_rows = ~seen.any(axis=-1)
    probs[empty_rows] = 1.0 / cells
    return probs, fell_back


def smooth_table(counts: np.ndarray, smoothing: Smoothing) -> Tuple[np.ndarray, bool]:
    if smoothing.kind is SmoothingKind.ADDITIVE:
        return apply_additive(counts, smoothing.lam), False
    if smoothing.kind is SmoothingKind.GOOD_TURING:
        return apply_good_turing(counts)
    return relative_frequencies(counts), False


def quantize(probs: np.ndarray) -> np.ndarray:
    """Integer log-probabilities in units of 2^-32 nats, IMPOSSIBLE for zero"""
    probs = np.asarray(probs, dtype=float)
    with np.errstate(divide='ignore'):
        logs = np.log(probs)
    quantized = np.full(probs.shape, IMPOSSIBLE, dtype=np.int64)
    positive = probs > 0
    quantized[positive] = np.round(logs[positive] * LOG_SCALE).astype(np.int64)
    return quantized


# ---------------------------------------------------------------------------
# Model

@dataclass(frozen=True, eq=False)
class MarkovModel:
    """
    n-gram chain over an alphabet of integer symbols

    Contexts are the n-1 preceding symbols, indexed big-endian in base
    alphabet_size. start_counts counts each word's first n-1 symbols.
    """
    n: int
    alphabet_size: int
    start_counts: np.ndarray
    transition_counts: np.ndarray
    smoothing: Smoothing = field(default_factory=Smoothing)
    word_length: Optional[int] = None
    corpus_size: int = 0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ModelError(f"gram order must be 2 or 3, got {self.n}")
        if self.alphabet_size < 2:
            raise ModelError(f"alphabet must have at least 2 symbols, got {self.alphabet_size}")
        contexts = self.alphabet_size ** (self.n - 1)
        if contexts * self.alphabet_size > MAX_DENSE_CELLS:
            raise ModelError(f"alphabet {self.alphabet_size} with n={self.n} is too large for dense tables")

        start = np.asarray(self.start_counts, dtype=np.int64).reshape(-1)
        trans = np.asarray(self.transition_counts, dtype=np.int64)
        if start.shape != (contexts,) or trans.shape != (contexts, self.alphabet_size):
            raise ModelError(f"count tables have shapes {start.shape} and {trans.shape}, "
                             f"expected ({contexts},) and ({contexts}, {self.alphabet_size})")
        if (start < 0).any() or (trans < 0).any():
            raise ModelError("counts must be non-negative")
        if start.sum() == 0:
            raise ModelError("model has no start observations")
        if self.word_length is not None and self.word_length < self.n - 1:
            raise ModelError(f"word length {self.word_length} is shorter than the context ({self.n - 1})")

        start_probs, start_fallback = smooth_table(start.reshape(1, -1), self.smoothing)
        if trans.sum() == 0 and self.smoothing.kind is SmoothingKind.GOOD_TURING:
            # words no longer than the context: the table is never consulted
            trans_probs, trans_fallback = np.full(trans.shape, 1.0 / self.alphabet_size), False
        else:
            trans_probs, trans_fallback = smooth_table(trans, self.smoothing)

        for name, value in (('start_counts', start), ('transition_counts', trans),
                            ('start_probs', start_probs.reshape(-1)), ('transition_probs', trans_probs)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'fell_back', start_fallback or trans_fallback)
        object.__setattr__(self, '_next_context', (np.arange(contexts)[:, None] * self.alphabet_size
                                                   + np.arange(self.alphabet_size)[None, :]) % contexts)
        object.__setattr__(self, '_start_q', quantize(self.start_probs))
        object.__setattr__(self, '_trans_q', quantize(self.transition_probs))

    @classmethod
    def from_counts(cls, n: int, alphabet_size: int, start_counts, transition_counts,
                    smoothing: Optional[Smoothing] = None, word_length: Optional[int] = None,
                    corpus_size: Optional[int] = None) -> 'MarkovModel':
        start = np.asarray(start_counts, dtype=np.int64)
        return cls(n, alphabet_size, start, np.asarray(transition_counts, dtype=np.int64),
                   smoothing or Smoothing(), word_length,
                   int(start.sum()) if corpus_size is None else corpus_size)

    @property
    def context_length(self) -> int:
        return self.n - 1

    @property
    def contexts(self) -> int:
        return self.alphabet_size ** (self.n - 1)

    @property
    def beta(self) -> Optional[int]:
        """Per-dimension SAX alphabet when alphabet_size is a perfect square"""
        root = math.isqrt(self.alphabet_size)
        return root if root * root == self.alphabet_size else None

    @property
    def is_complete(self) -> bool:
        """Every word of the space has non-zero probability"""
        return bool((self.start_probs > 0).all() and (self.transition_probs > 0).all())

    def with_smoothing(self, smoothing: Smoothing) -> 'MarkovModel':
        return MarkovModel(self.n, self.alphabet_size, self.start_counts, self.transition_counts,
                           smoothing, self.word_length, self.corpus_size)

    def context_index(self, symbols: Sequence[int]) -> int:
        index = 0
        for s in symbols:
            index = index * self.alphabet_size + int(s)
        return index

    def context_symbols(self, index: int) -> Tuple[int, ...]:
        symbols = []
        for _ in range(self.context_length):
            index, s = divmod(index, self.alphabet_size)
            symbols.append(s)
        return tuple(reversed(symbols))

    def _symbols_of(self, word: Word) -> Tuple[int, ...]:
        if isinstance(word, SaxWord):
            if self.beta is None or word.beta != self.beta:
                raise ModelError(f"word alphabet beta={word.beta} does not match model alphabet {self.alphabet_size}")
            symbols = word.flat()
        else:
            symbols = tuple(int(s) for s in word)
        if self.word_length is not None and len(symbols) != self.word_length:
            raise ModelError(f"word has length {len(symbols)}, model expects {self.word_length}")
        if len(symbols) < self.context_length:
            raise ModelError(f"word is shorter than the model context ({self.context_length})")
        if any(not 0 <= s < self.alphabet_size for s in symbols):
            raise ModelError(f"symbol outside alphabet of size {self.alphabet_size}")
        return symbols

    def word_score(self, word: Word) -> int:
        """Quantized log-probability (sum of quantized factors), IMPOSSIBLE if any factor is 0"""
        symbols = self._symbols_of(word)
        k = self.context_length
        ctx = self.context_index(symbols[:k])
        total = int(self._start_q[ctx])
        if total == IMPOSSIBLE:
            return IMPOSSIBLE
        for s in symbols[k:]:
            step = int(self._trans_q[ctx, s])
            if step == IMPOSSIBLE:
                return IMPOSSIBLE
            total += step
            ctx = int(self._next_context[ctx, s])
        return total

    def sequence_logprobs(self, sequences: np.ndarray) -> np.ndarray:
        """Vectorized natural-log probabilities of equal-length symbol rows (-inf when impossible)"""
        seqs = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
        k = self.context_length
        if seqs.shape[1] < k:
            raise ModelError("sequences are shorter than the model context")
        ctx = np.zeros(seqs.shape[0], dtype=np.int64)
        for j in range(k):
            ctx = ctx * self.alphabet_size + seqs[:, j]
        with np.errstate(divide='ignore'):
            log_start = np.log(self.start_probs)
            log_trans = np.log(self.transition_probs)
        total = log_start[ctx]
        for j in range(k, seqs.shape[1]):
            total = total + log_trans[ctx, seqs[:, j]]
            ctx = self._next_context[ctx, seqs[:, j]]
        return total

    def describe(self) -> Dict[str, object]:
        return {
            'n': self.n,
            'alphabet_size': self.alphabet_size,
            'word_length': self.word_length,
            'smoothing': self.smoothing.label,
            'corpus_size': self.corpus_size,
        }


def word_logprob(model: MarkovModel, word: Word) -> LogProb:
    """
    log P(start prefix) + sum of log transition probabilities

    Returns LogProb(-inf, impossible=True) when any factor is zero.
    """
    symbols = model._symbols_of(word)
    k = model.context_length
    ctx = model.context_index(symbols[:k])
    p = model.start_probs[ctx]
    if p <= 0:
        return LogProb(-math.inf, True)
    total = math.log(p)
    for s in symbols[k:]:
        p = model.transition_probs[ctx, s]
        if p <= 0:
            return LogProb(-math.inf, True)
        total += math.log(p)
        ctx = int(model._next_context[ctx, s])
    return LogProb(total)


# ---------------------------------------------------------------------------
# Training

def count_sequences(sequences: Sequence[Sequence[int]], alphabet_size: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Start and transition counts of integer symbol sequences"""
    k = n - 1
    contexts = alphabet_size ** k
    start = np.zeros(contexts, dtype=np.int64)
    trans = np.zeros((contexts, alphabet_size), dtype=np.int64)
    ctx_rows: List[int] = []
    sym_cols: List[int] = []
    for seq in sequences:
        symbols = [int(s) for s in seq]
        if len(symbols) < k:
            raise ModelError(f"sequence {symbols} is shorter than the context length {k}")
        if any(not 0 <= s < alphabet_size for s in symbols):
            raise ModelError(f"sequence {symbols} has a symbol outside [0, {alphabet_size})")
        ctx = 0
        for s in symbols[:k]:
            ctx = ctx * alphabet_size + s
        start[ctx] += 1
        for s in symbols[k:]:
            ctx_rows.append(ctx)
            sym_cols.append(s)
            ctx = (ctx * alphabet_size + s) % contexts
    if ctx_rows:
        np.add.at(trans, (np.asarray(ctx_rows), np.asarray(sym_cols)), 1)
    return start, trans


def train_sequences(sequences: Sequence[Sequence[int]], alphabet_size: int, n: int = 3,
                    smoothing: Optional[Smoothing] = None, word_length: Optional[int] = None) -> MarkovModel:
    if not sequences:
        raise ModelError("cannot train on an empty corpus")
    if n not in (2, 3):
        raise ModelError(f"gram order must be 2 or 3, got {n}")
    if word_length is not None and any(len(s) != word_length for s in sequences):
        raise ModelError(f"all training words must have length {word_length}")
    start, trans = count_sequences(sequences, alphabet_size, n)
    model = MarkovModel(n, alphabet_size, start, trans, smoothing or Smoothing(), word_length, len(sequences))
    logger.info("Trained %d-gram model on %d sequences (%s)", n, len(sequences), model.smoothing.label)
    return model


def train(corpus: Sequence[SaxWord], n: int = 3, smoothing: Optional[Smoothing] = None) -> MarkovModel:
    """Fit an n-gram chain to SAX words sharing one (omega, beta)"""
    if not corpus:
        raise ModelError("cannot train on an empty corpus")
    omegas = {w.omega for w in corpus}
    betas = {w.beta for w in corpus}
    if len(omegas) != 1 or len(betas) != 1:
        raise ModelError(f"corpus mixes SAX parameters: omega {sorted(omegas)}, beta {sorted(betas)}")
    beta = betas.pop()
    return train_sequences([w.flat() for w in corpus], beta * beta, n, smoothing, word_length=omegas.pop())


def expected_start_observations(total: float, beta: int, n: int) -> float:
    """Average observations per starting prefix: T / (beta^2)^(n-1)"""
    if total < 0:
        raise ModelError(f"observation count must be >= 0, got {total}")
    return total / float((beta * beta) ** (n - 1))


# ---------------------------------------------------------------------------
# Best-first enumeration

def completion_bounds(model: MarkovModel, steps: int) -> List[np.ndarray]:
    """bounds[r][ctx] = best quantized score of r more transitions from ctx"""
    bounds = [np.zeros(model.contexts, dtype=np.int64)]
    for _ in range(steps):
        candidates = np.maximum(model._trans_q + bounds[-1][model._next_context], IMPOSSIBLE)
        bounds.append(candidates.max(axis=1))
    return bounds


@dataclass
class _Siblings:
    """Children of one prefix, sorted by (bound desc, symbol)"""
    prefix: Tuple[int, ...]
    score: int
    context: int
    symbols: np.ndarray
    bounds: np.ndarray


def enumerate_best_first(model: MarkovModel, limit: int) -> Iterator[Guess]:
    """
    Yield up to `limit` words, most probable first, ties in lexicographic order

    Best-first search over prefixes; a prefix's key is its score plus the
    exact best completion, so complete words leave the frontier sorted.
    """
    if model.word_length is None:
        raise ModelError("enumeration needs a fixed word length")
    if limit < 1:
        raise ModelError(f"guess limit must be >= 1, got {limit}")

    k = model.context_length
    length = model.word_length
    steps = length - k
    bounds = completion_bounds(model, steps)
    contexts = np.arange(model.contexts)

    frontier: List[tuple] = []

    def push_group(group: _Siblings, position: int):
        if position < group.symbols.size:
            key = -int(group.bounds[position])
            heapq.heappush(frontier, (key, group.prefix + (int(group.symbols[position]),), id(group), position, group))

    roots_bound = np.maximum(model._start_q + bounds[steps], IMPOSSIBLE)
    possible = (model._start_q != IMPOSSIBLE) & (roots_bound != IMPOSSIBLE)
    order = np.lexsort((contexts[possible], -roots_bound[possible]))
    root_contexts = contexts[possible][order]
    root_bounds = roots_bound[possible][order]
    for ctx, bound in zip(root_contexts.tolist(), root_bounds.tolist()):
        heapq.heappush(frontier, (-bound, model.context_symbols(ctx), ctx, -1, None))

    emitted = 0
    while frontier and emitted < limit:
        key, prefix, tag, position, group = heapq.heappop(frontier)
        if group is None:
            ctx = tag
            score = int(model._start_q[ctx])
        else:
            push_group(group, position + 1)
            symbol = prefix[-1]
            score = group.score + int(model._trans_q[group.context, symbol])
            ctx = int(model._next_context[group.context, symbol])

        if len(prefix) == length:
            emitted += 1
            yield Guess(prefix, math.exp(score / LOG_SCALE), score)
            continue

        remaining = length - len(prefix)
        child_bounds = np.maximum(score + model._trans_q[ctx] + bounds[remaining - 1][model._next_context[ctx]],
                                  IMPOSSIBLE)
        allowed = (model._trans_q[ctx] != IMPOSSIBLE) & (child_bounds != IMPOSSIBLE)
        symbols = np.arange(model.alphabet_size)[allowed]
        child_bounds = child_bounds[allowed]
        order = np.lexsort((symbols, -child_bounds))
        push_group(_Siblings(prefix, score, ctx, symbols[order], child_bounds[order]), 0)

    if emitted < limit:
        logger.warning("Guess stream ended after %d of %d guesses: no more non-zero-probability words",
                       emitted, limit)


# ---------------------------------------------------------------------------
# Persistence

class ModelHeader(BaseModel):
    format: str
    version: int
    n: int
    alphabet_size: int
    word_length: Optional[int] = None
    beta: Optional[int] = None
    omega: Optional[int] = None
    smoothing: str
    corpus_size: int


class CountRecord(BaseModel):
    kind: str
    context: List[int]
    symbol: Optional[int] = None
    count: int


def model_bytes(model: MarkovModel, provenance: Optional[Dict[str, object]] = None) -> bytes:
    header = ModelHeader(
        format=MODEL_FORMAT, version=MODEL_FORMAT_VERSION, n=model.n, alphabet_size=model.alphabet_size,
        word_length=model.word_length, beta=model.beta, omega=model.word_length,
        smoothing=model.smoothing.label, corpus_size=model.corpus_size,
    )
    lines = []
    if provenance:
        lines.append(orjson.dumps({'provenance': provenance}, option=orjson.OPT_SORT_KEYS))
    lines.append(orjson.dumps(header.model_dump()))
    for ctx in np.flatnonzero(model.start_counts).tolist():
        lines.append(orjson.dumps({'kind': 'start', 'context': list(model.context_symbols(ctx)),
                                   'count': int(model.start_counts[ctx])}))
    rows, cols = np.nonzero(model.transition_counts)
    for ctx, symbol in zip(rows.tolist(), cols.tolist()):
        lines.append(orjson.dumps({'kind': 'transition', 'context': list(model.context_symbols(ctx)),
                                   'symbol': symbol, 'count': int(model.transition_counts[ctx, symbol])}))
    return b'\n'.join(lines) + b'\n'


def save_model(model: MarkovModel, path: Union[str, Path], provenance: Optional[Dict[str, object]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_bytes(model, provenance))
    logger.info("Saved %d-gram model to %s", model.n, path)
    return path


def parse_model(data: bytes, smoothing: Optional[Smoothing] = None) -> MarkovModel:
    """Rebuild a model from saved counts; smoothing may be overridden"""
    header = None
    start = trans = None
    for line_no, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = orjson.loads(line)
        except orjson.JSONDecodeError as e:
            raise ModelError(f"line {line_no}: invalid model record: {e}")
        if isinstance(payload, dict) and set(payload) == {'provenance'}:
            continue
        try:
            if header is None:
                header = ModelHeader.model_validate(payload)
                if header.format != MODEL_FORMAT or header.version != MODEL_FORMAT_VERSION:
                    raise ModelError(f"unsupported model format {header.format} v{header.version}")
                contexts = header.alphabet_size ** (header.n - 1)
                start = np.zeros(contexts, dtype=np.int64)
                trans = np.zeros((contexts, header.alphabet_size), dtype=np.int64)
                continue
            record = CountRecord.model_validate(payload)
        except ValidationError as e:
            raise ModelError(f"line {line_no}: invalid model record: {e.errors()[0]['msg']}")

        if len(record.context) != header.n - 1 or any(not 0 <= s < header.alphabet_size for s in record.context):
            raise ModelError(f"line {line_no}: bad context {record.context}")
        ctx = 0
        for s in record.context:
            ctx = ctx * header.alphabet_size + s
        if record.kind == 'start':
            start[ctx] += record.count
        elif record.kind == 'transition' and record.symbol is not None and 0 <= record.symbol < header.alphabet_size:
            trans[ctx, record.symbol] += record.count
        else:
            raise ModelError(f"line {line_no}: bad count record")

    if header is None:
        raise ModelError("model file has no header")
    if int(start.sum()) != header.corpus_size:
        raise ModelError(f"start counts sum to {int(start.sum())}, header says corpus size {header.corpus_size}")
    if header.word_length is not None and int(trans.sum()) != header.corpus_size * (header.word_length - header.n + 1):
        raise ModelError("transition counts do not match corpus size and word length")

    return MarkovModel(header.n, header.alphabet_size, start, trans,
                       smoothing or Smoothing.parse(header.smoothing), header.word_length, header.corpus_size)


def load_model(path: Union[str, Path], smoothing: Optional[Smoothing] = None) -> MarkovModel:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"model file not found: {path}")
    return parse_model(path.read_bytes(), smoothing)
