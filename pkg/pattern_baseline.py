#!/usr/bin/env python3
"""
Pattern Baseline - Android 3x3 unlock patterns as a comparison password space
Valid-pattern enumeration, a 3-gram node model and its exact guessing distribution
"""

import math
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from batch_runner import cached_table
from config import config
from errors import PatternError
from guess_metrics import ProbHistogram
from markov_model import LOG_SCALE, Guess, MarkovModel, Smoothing, SmoothingKind, train_sequences

logger = logging.getLogger(__name__)

GRID = 3
NODES = GRID * GRID
END = NODES            # terminal symbol appended to every pattern
ALPHABET = NODES + 1
MIN_LENGTH = 4
MAX_LENGTH = NODES


def _crossed_node(a: int, b: int) -> Optional[int]:
    """Node lying exactly between a and b on the grid, if any"""
    ra, ca = divmod(a, GRID)
    rb, cb = divmod(b, GRID)
    if (ra + rb) % 2 or (ca + cb) % 2:
        return None
    return ((ra + rb) // 2) * GRID + (ca + cb) // 2


def pattern_problem(nodes: Sequence[int]) -> Optional[str]:
    if not MIN_LENGTH <= len(nodes) <= MAX_LENGTH:
        return f"length {len(nodes)} outside [{MIN_LENGTH}, {MAX_LENGTH}]"
    if any(not 0 <= n < NODES for n in nodes):
        return f"nodes must lie in [0, {NODES - 1}]"
    if len(set(nodes)) != len(nodes):
        return "repeated node"
    visited = {nodes[0]}
    for a, b in zip(nodes, nodes[1:]):
        middle = _crossed_node(a, b)
        if middle is not None and middle not in visited:
            return f"move {a}->{b} jumps over unvisited node {middle}"
        visited.add(b)
    return None


def is_valid_pattern(nodes: Sequence[int]) -> bool:
    return pattern_problem(nodes) is None


@dataclass(frozen=True)
class UnlockPattern:
    nodes: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple(int(n) for n in self.nodes))
        problem = pattern_problem(self.nodes)
        if problem is not None:
            raise PatternError(f"invalid pattern {self.to_text()}: {problem}")

    def to_text(self) -> str:
        return ''.join(str(n) for n in self.nodes)

    @classmethod
    def from_text(cls, text: str) -> 'UnlockPattern':
        text = text.strip()
        if not text.isdigit():
            raise PatternError(f"pattern {text!r} must be a digit string")
        return cls(tuple(int(ch) for ch in text))

    def symbols(self) -> Tuple[int, ...]:
        """Model symbols: the nodes followed by the terminal symbol"""
        return self.nodes + (END,)


@cached_table(maxsize=1)
def enumerate_valid_patterns() -> Tuple[Tuple[int, ...], ...]:
    """Every valid node sequence of length 4 to 9, in lexicographic order"""
    found: List[Tuple[int, ...]] = []

    def extend(path: List[int], visited: List[bool]):
        if len(path) >= MIN_LENGTH:
            found.append(tuple(path))
        if len(path) == MAX_LENGTH:
            return
        last = path[-1]
        for nxt in range(NODES):
            if visited[nxt]:
                continue
            middle = _crossed_node(last, nxt)
            if middle is not None and not visited[middle]:
                continue
            visited[nxt] = True
            path.append(nxt)
            extend(path, visited)
            path.pop()
            visited[nxt] = False

    for first in range(NODES):
        visited = [False] * NODES
        visited[first] = True
        extend([first], visited)

    logger.info("Enumerated %d valid unlock patterns", len(found))
    return tuple(found)


@dataclass(frozen=True)
class PatternRejection:
    line: int
    text: str
    reason: str


def parse_pattern_file(text: str) -> Tuple[List[UnlockPattern], List[PatternRejection]]:
    """One digit-string pattern per line; '#' comments and blank lines skipped"""
    patterns = []
    rejected = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        try:
            patterns.append(UnlockPattern.from_text(line))
        except PatternError as e:
            logger.warning("Rejected pattern on line %d: %s", line_no, e)
            rejected.append(PatternRejection(line_no, line, str(e)))
    return patterns, rejected


def format_patterns(patterns: Sequence[UnlockPattern], header: Optional[dict] = None) -> str:
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    lines.extend(p.to_text() for p in patterns)
    return '\n'.join(lines) + '\n'


# Human-like drawing habits for synthetic corpora
_START_WEIGHTS = np.array([6.0, 2.0, 1.5, 2.0, 1.0, 0.8, 1.5, 0.8, 0.6])
_LENGTH_WEIGHTS = np.array([0.30, 0.25, 0.17, 0.12, 0.09, 0.07])


def synth_patterns(count: int, seed: int) -> List[UnlockPattern]:
    """
    Biased synthetic corpus: top-left starts, short lengths, neighbouring
    moves that favour rightward and downward strokes
    """
    if count < 1:
        raise PatternError(f"pattern count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    lengths = np.arange(MIN_LENGTH, MAX_LENGTH + 1)
    patterns = []
    while len(patterns) < count:
        target = int(rng.choice(lengths, p=_LENGTH_WEIGHTS / _LENGTH_WEIGHTS.sum()))
        path = [int(rng.choice(NODES, p=_START_WEIGHTS / _START_WEIGHTS.sum()))]
        while len(path) < target:
            last = path[-1]
            options = [n for n in range(NODES) if n not in path and
                       (_crossed_node(last, n) is None or _crossed_node(last, n) in path)]
            if not options:
                break
            lr, lc = divmod(last, GRID)
            weights = []
            for n in options:
                r, c = divmod(n, GRID)
                distance = math.hypot(r - lr, c - lc)
                forward = 1.5 if (c > lc or r > lr) else 1.0
                weights.append(forward / distance ** 3)
            weights = np.asarray(weights)
            path.append(options[int(rng.choice(len(options), p=weights / weights.sum()))])
        if len(path) >= MIN_LENGTH:
            patterns.append(UnlockPattern(tuple(path)))
    return patterns


class PatternModel:
    """3-gram chain over nodes plus a terminal symbol, renormalized over valid patterns"""

    def __init__(self, corpus: Sequence[UnlockPattern], n: int = 3, smoothing: Optional[Smoothing] = None):
        valid = []
        for pattern in corpus:
            nodes = pattern.nodes if isinstance(pattern, UnlockPattern) else tuple(pattern)
            problem = pattern_problem(nodes)
            if problem is not None:
                logger.warning("Skipping invalid training pattern %s: %s", nodes, problem)
                continue
            valid.append(nodes)
        if not valid:
            raise PatternError("pattern corpus holds no valid patterns")

        self.smoothing = smoothing or Smoothing(SmoothingKind.ADDITIVE, config.ADDITIVE_LAMBDA)
        self.chain: MarkovModel = train_sequences([p + (END,) for p in valid], ALPHABET, n, self.smoothing)
        self.corpus_size = len(valid)
        self.patterns = enumerate_valid_patterns()
        self._lookup = {p: i for i, p in enumerate(self.patterns)}
        self.probabilities = self._space_probabilities()

    def _space_probabilities(self) -> np.ndarray:
        log_probs = np.full(len(self.patterns), -np.inf)
        lengths = np.array([len(p) for p in self.patterns])
        for length in range(MIN_LENGTH, MAX_LENGTH + 1):
            rows = np.flatnonzero(lengths == length)
            block = np.array([self.patterns[i] + (END,) for i in rows], dtype=np.int64)
            log_probs[rows] = self.chain.sequence_logprobs(block)
        if not np.isfinite(log_probs).any():
            raise PatternError("model gives every valid pattern zero probability")
        probs = np.exp(log_probs - logsumexp(log_probs))
        return probs

    def probability(self, pattern: Sequence[int]) -> float:
        nodes = pattern.nodes if isinstance(pattern, UnlockPattern) else tuple(pattern)
        index = self._lookup.get(nodes)
        if index is None:
            raise PatternError(f"{nodes} is not a valid pattern")
        return float(self.probabilities[index])

    def ranked(self) -> np.ndarray:
        """Pattern indices, most likely first, ties in lexicographic order"""
        return np.argsort(-self.probabilities, kind='stable')

    def guess_stream(self, limit: Optional[int] = None) -> Iterator[Guess]:
        order = self.ranked()
        for rank, index in enumerate(order):
            if limit is not None and rank >= limit:
                return
            p = float(self.probabilities[index])
            if p <= 0:
                return
            yield Guess(self.patterns[index], p, int(round(math.log(p) * LOG_SCALE)))

    def histogram(self, bucket_width: Optional[float] = None) -> ProbHistogram:
        return ProbHistogram.from_probabilities(self.probabilities, bucket_width)


def pattern_model(corpus: Sequence[UnlockPattern], n: int = 3, smoothing: Optional[Smoothing] = None) -> PatternModel:
    return PatternModel(corpus, n, smoothing)
