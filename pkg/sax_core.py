#!/usr/bin/env python3
"""
SAX Core - 2-D Symbolic Aggregate approXimation of password traces
PAA segment means, equiprobable normal breakpoints, symbol words and MINDIST
"""

import math
import string
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm

from batch_runner import cached_table
from config import config
from errors import SaxParameterError
from trace_io import NormalizedTrace, RawTrace, TraceSet, znormalize

logger = logging.getLogger(__name__)

BETA_RANGE = (2, 26)
OMEGA_RANGE = (1, 64)

SymbolString = Union[str, Sequence[int]]


@dataclass(frozen=True)
class SaxParams:
    omega: int = 8   # word length (symbols per dimension)
    beta: int = 6    # alphabet size per dimension

    def __post_init__(self):
        if not BETA_RANGE[0] <= self.beta <= BETA_RANGE[1]:
            raise SaxParameterError(f"beta must lie in [{BETA_RANGE[0]}, {BETA_RANGE[1]}], got {self.beta}")
        if not OMEGA_RANGE[0] <= self.omega <= OMEGA_RANGE[1]:
            raise SaxParameterError(f"omega must lie in [{OMEGA_RANGE[0]}, {OMEGA_RANGE[1]}], got {self.omega}")

    @property
    def alphabet_size(self) -> int:
        """Size of the 2-D symbol alphabet (beta squared)"""
        return self.beta * self.beta

    @classmethod
    def from_config(cls) -> 'SaxParams':
        return cls(omega=config.SAX_OMEGA, beta=config.SAX_BETA)


@dataclass(frozen=True)
class Breakpoints:
    values: Tuple[float, ...]

    @property
    def beta(self) -> int:
        return len(self.values) + 1


@dataclass(frozen=True)
class PaaVector:
    means: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class DistTable:
    """beta x beta lookup of symbol distances (zero for adjacent symbols)"""
    matrix: np.ndarray

    @property
    def beta(self) -> int:
        return int(self.matrix.shape[0])

    def dist(self, a: int, b: int) -> float:
        return float(self.matrix[a, b])


@dataclass(frozen=True)
class SaxWord:
    """omega (xsym, ysym) pairs plus the length of the series they summarize"""
    symbols: Tuple[Tuple[int, int], ...]
    n_original: int
    beta: int

    def __post_init__(self):
        symbols = tuple((int(x), int(y)) for x, y in self.symbols)
        object.__setattr__(self, 'symbols', symbols)
        if not symbols:
            raise SaxParameterError("a SAX word needs at least one symbol")
        for x, y in symbols:
            if not (0 <= x < self.beta and 0 <= y < self.beta):
                raise SaxParameterError(f"symbol ({x}, {y}) outside [0, {self.beta})")
        if self.n_original < 1:
            raise SaxParameterError(f"n_original must be >= 1, got {self.n_original}")

    @property
    def omega(self) -> int:
        return len(self.symbols)

    def x_symbols(self) -> Tuple[int, ...]:
        return tuple(x for x, _ in self.symbols)

    def y_symbols(self) -> Tuple[int, ...]:
        return tuple(y for _, y in self.symbols)

    def flat(self) -> Tuple[int, ...]:
        """Symbols as indices into the beta^2 Markov alphabet"""
        return tuple(x * self.beta + y for x, y in self.symbols)

    @classmethod
    def from_flat(cls, indices: Sequence[int], beta: int, n_original: int) -> 'SaxWord':
        return cls(tuple(divmod(int(i), beta) for i in indices), n_original, beta)

    def grid_cells(self) -> List[Tuple[int, int]]:
        """The omega-cell path over the beta x beta grid, as (row=ysym, col=xsym)"""
        return [(y, x) for x, y in self.symbols]

    def to_text(self) -> str:
        return '.'.join(f"x{x}y{y}" for x, y in self.symbols)

    @classmethod
    def from_text(cls, text: str, n_original: int, beta: int) -> 'SaxWord':
        symbols = []
        for cell in text.strip().split('.'):
            if not cell.startswith('x') or 'y' not in cell:
                raise SaxParameterError(f"bad SAX cell {cell!r} in {text!r}")
            x_part, _, y_part = cell[1:].partition('y')
            try:
                symbols.append((int(x_part), int(y_part)))
            except ValueError:
                raise SaxParameterError(f"bad SAX cell {cell!r} in {text!r}")
        return cls(tuple(symbols), n_original, beta)


@cached_table(maxsize=32)
def breakpoints(beta: int) -> Breakpoints:
    """beta - 1 boundaries splitting the standard normal into equiprobable bands"""
    if beta < 2:
        raise SaxParameterError(f"beta must be >= 2, got {beta}")
    values = norm.ppf(np.arange(1, beta) / beta)
    return Breakpoints(tuple(float(v) for v in values))


@cached_table(maxsize=32)
def dist_table(beta: int) -> DistTable:
    cuts = np.asarray(breakpoints(beta).values)
    idx = np.arange(beta)
    hi = np.maximum.outer(idx, idx)
    lo = np.minimum.outer(idx, idx)
    matrix = np.where(hi - lo > 1, cuts[np.clip(hi - 1, 0, None)] - cuts[np.clip(lo, None, beta - 2)], 0.0)
    matrix.setflags(write=False)
    return DistTable(matrix)


def space_size(params: SaxParams) -> int:
    """Number of distinct 2-D SAX words, (beta^2)^omega"""
    return params.alphabet_size ** params.omega


def paa(series: Sequence[float], omega: int) -> PaaVector:
    """
    Piecewise aggregate approximation with fractional boundary weights

    Sample i covers [i, i+1) and segment j covers [j*n/omega, (j+1)*n/omega);
    each segment mean weights samples by their overlap, so no sample is
    dropped when omega does not divide n.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n == 0:
        raise SaxParameterError("cannot compute PAA of an empty series")
    if omega < 1:
        raise SaxParameterError(f"omega must be >= 1, got {omega}")

    prefix = np.concatenate(([0.0], np.cumsum(x)))
    padded = np.append(x, 0.0)
    edges = np.arange(omega + 1, dtype=np.int64) * n
    whole = edges // omega
    frac = (edges % omega) / omega
    integral = prefix[whole] + frac * padded[whole]
    means = np.diff(integral) * omega / n
    return PaaVector(tuple(float(m) for m in means))


def symbolize(means: Sequence[float], beta: int) -> Tuple[int, ...]:
    """Band index per value; bands are half-open (low, high]"""
    cuts = np.asarray(breakpoints(beta).values)
    return tuple(int(s) for s in np.searchsorted(cuts, np.asarray(means, dtype=float), side='left'))


def sax_encode_1d(series: Sequence[float], params: SaxParams) -> Tuple[int, ...]:
    return symbolize(paa(series, params.omega).means, params.beta)


def sax_encode_2d(trace: NormalizedTrace, params: SaxParams) -> SaxWord:
    if trace.x_series.size != trace.y_series.size:
        raise SaxParameterError("x and y series differ in length")
    xs = sax_encode_1d(trace.x_series, params)
    ys = sax_encode_1d(trace.y_series, params)
    return SaxWord(tuple(zip(xs, ys)), n_original=int(trace.x_series.size), beta=params.beta)


def encode_trace(trace: RawTrace, params: SaxParams) -> SaxWord:
    return sax_encode_2d(znormalize(trace), params)


def encode_dataset(trace_set: TraceSet, params: SaxParams) -> Dict[str, List[SaxWord]]:
    """account_id -> SAX words of its samples, in sample order"""
    return {
        account_id: [encode_trace(trace, params) for trace in traces]
        for account_id, traces in trace_set.accounts().items()
    }


def _as_indices(symbols: SymbolString) -> Tuple[int, ...]:
    if isinstance(symbols, str):
        letters = string.ascii_lowercase
        if any(ch not in letters for ch in symbols):
            raise SaxParameterError(f"symbol string {symbols!r} must use letters a-z")
        return tuple(letters.index(ch) for ch in symbols)
    return tuple(int(s) for s in symbols)


def _mindist_from_positions(per_position: np.ndarray, n: int) -> float:
    omega = per_position.size
    return math.sqrt(n / omega) * math.sqrt(float(np.sum(per_position ** 2)))


def mindist_1d(q: SymbolString, c: SymbolString, n: int, beta: int = 6) -> float:
    """
    MINDIST between two 1-D SAX strings

    Args:
        q, c: equal-length symbol strings ('abc' letters or index sequences)
        n: length of the original series
        beta: alphabet size the strings were encoded with
    """
    qi, ci = _as_indices(q), _as_indices(c)
    if len(qi) != len(ci) or not qi:
        raise SaxParameterError(f"SAX strings must have equal non-zero length, got {len(qi)} and {len(ci)}")
    if any(not 0 <= s < beta for s in qi + ci):
        raise SaxParameterError(f"symbol outside alphabet of size {beta}")
    table = dist_table(beta).matrix
    return _mindist_from_positions(table[list(qi), list(ci)], n)


def mindist_nd(q: Sequence[SymbolString], c: Sequence[SymbolString], n: int, beta: int = 6) -> float:
    """MINDIST over D dimensions: per position, dimension distances are summed"""
    if len(q) != len(c) or not q:
        raise SaxParameterError("both words need the same non-zero number of dimensions")
    table = dist_table(beta).matrix
    total = None
    for qd, cd in zip(q, c):
        qi, ci = _as_indices(qd), _as_indices(cd)
        if len(qi) != len(ci) or (total is not None and len(qi) != total.size):
            raise SaxParameterError("dimension strings differ in length")
        if any(not 0 <= s < beta for s in qi + ci):
            raise SaxParameterError(f"symbol outside alphabet of size {beta}")
        part = table[list(qi), list(ci)]
        total = part if total is None else total + part
    return _mindist_from_positions(total, n)


def mindist_2d(q: SaxWord, c: SaxWord) -> float:
    if q.beta != c.beta:
        raise SaxParameterError(f"words use different alphabets ({q.beta} vs {c.beta})")
    if q.omega != c.omega:
        raise SaxParameterError(f"words differ in length ({q.omega} vs {c.omega})")
    n = max(q.n_original, c.n_original)
    return mindist_nd((q.x_symbols(), q.y_symbols()), (c.x_symbols(), c.y_symbols()), n, q.beta)
