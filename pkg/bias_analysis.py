#!/usr/bin/env python3
"""
Bias Analysis - Where people start and end their strokes, and which symbol n-grams dominate
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import MetricError, TraceFormatError
from sax_core import SaxWord
from trace_io import TraceSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Fractions of traces whose first/last point falls in each grid cell; row 0 is the top"""
    start: np.ndarray
    end: np.ndarray
    bounds: Tuple[float, float, float, float]

    def frame(self) -> pd.DataFrame:
        rows, cols = self.start.shape
        records = []
        for which, matrix in (('start', self.start), ('end', self.end)):
            for r in range(rows):
                for c in range(cols):
                    records.append((which, r, c, float(matrix[r, c])))
        return pd.DataFrame(records, columns=['point', 'row', 'col', 'fraction'])


def _cells(values: np.ndarray, low: float, high: float, bins: int) -> np.ndarray:
    extent = high - low
    if extent <= 0:
        return np.zeros(values.shape, dtype=np.int64)
    return np.clip(np.floor((values - low) / extent * bins).astype(np.int64), 0, bins - 1)


def start_end_heatmap(dataset: TraceSet, grid_dims: Tuple[int, int] = (10, 10)) -> Heatmap:
    """
    Bin every trace's first and last point over the dataset-wide bounding box

    Args:
        dataset: traces in raw screen coordinates (y grows downwards)
        grid_dims: (rows, cols), each at least 2
    """
    rows, cols = grid_dims
    if rows < 2 or cols < 2:
        raise MetricError(f"heatmap grid must be at least 2x2, got {rows}x{cols}")
    if len(dataset) == 0:
        raise TraceFormatError("dataset holds no traces")

    all_points = np.concatenate([trace.xy() for trace in dataset.traces])
    xmin, ymin = all_points.min(axis=0)
    xmax, ymax = all_points.max(axis=0)
    firsts = np.array([trace.xy()[0] for trace in dataset.traces])
    lasts = np.array([trace.xy()[-1] for trace in dataset.traces])

    def histogram(points: np.ndarray) -> np.ndarray:
        matrix = np.zeros((rows, cols))
        r = _cells(points[:, 1], ymin, ymax, rows)
        c = _cells(points[:, 0], xmin, xmax, cols)
        np.add.at(matrix, (r, c), 1.0)
        return matrix / len(points)

    return Heatmap(histogram(firsts), histogram(lasts), (float(xmin), float(ymin), float(xmax), float(ymax)))


@dataclass(frozen=True)
class NgramCoverage:
    n: int
    top_k: int
    coverage: float
    total: int
    ranked: Tuple[Tuple[Tuple[int, ...], int], ...]   # (n-gram, count), most frequent first

    def frame(self) -> pd.DataFrame:
        counts = np.array([c for _, c in self.ranked], dtype=float)
        return pd.DataFrame({
            'rank': np.arange(1, len(self.ranked) + 1),
            'ngram': ['.'.join(str(s) for s in gram) for gram, _ in self.ranked],
            'count': counts.astype(np.int64),
            'cumulative_coverage': np.cumsum(counts) / self.total,
        })


Corpus = Union[np.ndarray, Sequence[SaxWord], Sequence[Sequence[int]]]


def _windows(corpus: Corpus, n: int) -> Tuple[np.ndarray, int]:
    """All length-n windows as rows, plus the alphabet size"""
    if isinstance(corpus, np.ndarray):
        block = np.atleast_2d(corpus).astype(np.int64)
        if block.shape[1] < n:
            raise MetricError(f"corpus has no word of length >= {n}")
        windows = np.lib.stride_tricks.sliding_window_view(block, n, axis=1).reshape(-1, n)
        return windows, int(block.max()) + 1

    words = []
    alphabet = 1
    for word in corpus:
        if isinstance(word, SaxWord):
            words.append(np.asarray(word.flat(), dtype=np.int64))
            alphabet = max(alphabet, word.beta * word.beta)
        else:
            words.append(np.asarray(word, dtype=np.int64))
            if len(word):
                alphabet = max(alphabet, int(max(word)) + 1)
    windows = [np.lib.stride_tricks.sliding_window_view(w, n) for w in words if w.size >= n]
    if not windows:
        raise MetricError(f"corpus has no word of length >= {n}")
    return np.concatenate(windows), alphabet


def ngram_coverage(corpus: Corpus, n: int = 3, top_k: int = 200) -> NgramCoverage:
    """Share of all n-gram occurrences covered by the top_k most frequent n-grams"""
    if n not in (2, 3):
        raise MetricError(f"n must be 2 or 3, got {n}")
    if top_k < 1:
        raise MetricError(f"top_k must be >= 1, got {top_k}")
    grams, alphabet = _windows(corpus, n)

    codes = np.zeros(len(grams), dtype=np.int64)
    for j in range(n):
        codes = codes * alphabet + grams[:, j]
    unique, counts = np.unique(codes, return_counts=True)
    order = np.lexsort((unique, -counts))
    unique, counts = unique[order], counts[order]

    ranked: List[Tuple[Tuple[int, ...], int]] = []
    for code, count in zip(unique.tolist(), counts.tolist()):
        gram = []
        for _ in range(n):
            code, s = divmod(code, alphabet)
            gram.append(s)
        ranked.append((tuple(reversed(gram)), count))

    total = int(counts.sum())
    covered = int(counts[:top_k].sum())
    logger.info("%d distinct %d-grams over %d occurrences; top %d cover %.4f",
                len(ranked), n, total, top_k, covered / total)
    return NgramCoverage(n, top_k, covered / total, total, tuple(ranked))
