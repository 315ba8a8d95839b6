#!/usr/bin/env python3
"""
Recognizers - Uniform similarity scoring for password attempts
SAX MINDIST, Dynamic Time Warping and Protractor behind one interface
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
from pydantic import BaseModel
from scipy.spatial.distance import cdist

from config import config
from errors import RecognizerError, SaxParameterError
from sax_core import SaxParams, SaxWord, encode_trace, mindist_2d
from trace_io import NormalizedTrace, RawTrace, znormalize

logger = logging.getLogger(__name__)


class RecognizerType(Enum):
    SAX = "sax"
    DTW = "dtw"
    PROTRACTOR = "protractor"


@dataclass(frozen=True)
class SimilarityScore:
    """Higher means more similar; only comparable within one recognizer"""
    value: float
    recognizer_tag: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise RecognizerError(f"{self.recognizer_tag} produced a non-finite score {self.value}")


class ScoreRecord(BaseModel):
    """Structured output of the `score` command"""
    recognizer: str
    template: str
    attempt: str
    score: float
    parameters: Dict[str, Any]


def score_sax(template: SaxWord, attempt: SaxWord) -> SimilarityScore:
    try:
        distance = mindist_2d(template, attempt)
    except SaxParameterError as e:
        raise RecognizerError(f"SAX words are not comparable: {e}")
    return SimilarityScore(0.0 - distance, RecognizerType.SAX.value)


def dtw_cost(a: np.ndarray, b: np.ndarray) -> float:
    """
    Classic DTW over (n, 2) point arrays with Euclidean local cost

    No locality window: every monotone alignment is allowed.
    """
    if len(a) == 0 or len(b) == 0:
        raise RecognizerError("DTW needs non-empty traces")
    local = cdist(a, b, metric='euclidean').tolist()
    n, m = len(local), len(local[0])

    inf = math.inf
    previous = [inf] * (m + 1)
    previous[0] = 0.0
    for i in range(n):
        row = local[i]
        current = [inf] * (m + 1)
        for j in range(m):
            current[j + 1] = row[j] + min(previous[j], previous[j + 1], current[j])
        previous = current
    return previous[m]


def score_dtw(template: NormalizedTrace, attempt: NormalizedTrace) -> SimilarityScore:
    cost = dtw_cost(template.points(), attempt.points())
    return SimilarityScore(0.0 - cost, RecognizerType.DTW.value)


def resample_by_path(points: np.ndarray, count: int) -> np.ndarray:
    """count points evenly spaced along the stroke's path length"""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise RecognizerError("cannot resample a single-point trace")
    steps = np.sqrt((np.diff(points, axis=0) ** 2).sum(axis=1))
    keep = np.concatenate(([True], steps > 0))
    points, steps = points[keep], steps[steps > 0]
    if steps.size == 0:
        raise RecognizerError("trace has zero path length")

    travelled = np.concatenate(([0.0], np.cumsum(steps)))
    targets = np.linspace(0.0, travelled[-1], count)
    return np.column_stack((
        np.interp(targets, travelled, points[:, 0]),
        np.interp(targets, travelled, points[:, 1]),
    ))


def protractor_vector(points: np.ndarray, count: int = 64) -> np.ndarray:
    """Resampled, centroid-translated, unit-length flattened stroke"""
    resampled = resample_by_path(points, count)
    centered = resampled - resampled.mean(axis=0)
    vector = centered.ravel()
    magnitude = np.linalg.norm(vector)
    if magnitude == 0:
        raise RecognizerError("trace collapses to a single point")
    return vector / magnitude


def optimal_angular_distance(template_vec: np.ndarray, attempt_vec: np.ndarray) -> float:
    """Protractor closed form: smallest angle between the vectors over all 2-D rotations"""
    tx, ty = template_vec[0::2], template_vec[1::2]
    ax, ay = attempt_vec[0::2], attempt_vec[1::2]
    a = float(np.dot(tx, ax) + np.dot(ty, ay))
    b = float(np.dot(tx, ay) - np.dot(ty, ax))
    angle = math.atan2(b, a)
    similarity = a * math.cos(angle) + b * math.sin(angle)
    return math.acos(min(1.0, max(-1.0, similarity)))


def score_protractor(template: Union[NormalizedTrace, np.ndarray], attempt: Union[NormalizedTrace, np.ndarray],
                     points: int = 64) -> SimilarityScore:
    """Negated optimal angular distance; 0 is a perfect match"""
    template_pts = template.points() if isinstance(template, NormalizedTrace) else template
    attempt_pts = attempt.points() if isinstance(attempt, NormalizedTrace) else attempt
    distance = optimal_angular_distance(protractor_vector(template_pts, points),
                                        protractor_vector(attempt_pts, points))
    return SimilarityScore(0.0 - distance, RecognizerType.PROTRACTOR.value)


@dataclass(frozen=True)
class Recognizer:
    """A recognizer plus its parameters; prepare once, score many pairs"""
    kind: RecognizerType
    params: SaxParams = field(default_factory=SaxParams)
    protractor_points: int = 64

    @classmethod
    def from_tag(cls, tag: str, params: SaxParams = None) -> 'Recognizer':
        try:
            kind = RecognizerType(tag)
        except ValueError:
            raise RecognizerError(f"unknown recognizer '{tag}', expected one of "
                                  f"{[r.value for r in RecognizerType]}")
        return cls(kind, params or SaxParams.from_config(), config.PROTRACTOR_POINTS)

    @property
    def tag(self) -> str:
        return self.kind.value

    def prepare(self, trace: RawTrace) -> Any:
        if self.kind is RecognizerType.SAX:
            return encode_trace(trace, self.params)
        if self.kind is RecognizerType.DTW:
            return znormalize(trace)
        # raw geometry: per-axis z-normalization would distort rotations
        return protractor_vector(trace.xy(), self.protractor_points)

    def score(self, template: Any, attempt: Any) -> SimilarityScore:
        if self.kind is RecognizerType.SAX:
            return score_sax(template, attempt)
        if self.kind is RecognizerType.DTW:
            return score_dtw(template, attempt)
        distance = optimal_angular_distance(template, attempt)
        return SimilarityScore(0.0 - distance, self.tag)

    def score_traces(self, template: RawTrace, attempt: RawTrace) -> SimilarityScore:
        return self.score(self.prepare(template), self.prepare(attempt))

    def describe(self) -> Dict[str, Any]:
        if self.kind is RecognizerType.SAX:
            return {'omega': self.params.omega, 'beta': self.params.beta}
        if self.kind is RecognizerType.PROTRACTOR:
            return {'points': self.protractor_points}
        return {'window': 'full'}
