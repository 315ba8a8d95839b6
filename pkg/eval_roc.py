#!/usr/bin/env python3
"""
Eval ROC - Genuine/impostor pair scoring, ROC curves, AUROC and parameter sweeps
Measures how well a recognizer separates an account's own attempts from others'
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn import metrics

from batch_runner import BatchRunner
from config import config
from errors import EvaluationError, SaxParameterError
from recognizers import Recognizer, RecognizerType
from sax_core import SaxParams
from trace_io import TraceSet

logger = logging.getLogger(__name__)


class PairLabel(Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"


@dataclass(frozen=True)
class ScoreSample:
    score: float
    label: PairLabel

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise EvaluationError(f"non-finite score {self.score}")


@dataclass(frozen=True)
class RocCurve:
    """(fpr, tpr, threshold) points from the strictest threshold to the loosest"""
    points: Tuple[Tuple[float, float, float], ...]

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def area(self) -> float:
        """Trapezoidal area under the curve"""
        fpr, tpr = self.fpr, self.tpr
        return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass(frozen=True)
class PairPlan:
    """Indices into TraceSet.traces; shared across recognizers and grid cells"""
    genuine: Tuple[Tuple[int, int], ...]
    impostor: Tuple[Tuple[int, int], ...]
    skipped_accounts: Tuple[str, ...] = ()

    def trace_indices(self) -> List[int]:
        used = set()
        for template, attempt in self.genuine + self.impostor:
            used.add(template)
            used.add(attempt)
        return sorted(used)


@dataclass(frozen=True)
class SweepCell:
    omega: int
    beta: int
    auroc: float
    n_genuine: int
    n_impostor: int


def plan_pairs(dataset: TraceSet, impostor_cap: Optional[int] = None, seed: Optional[int] = None) -> PairPlan:
    """
    Choose template/attempt pairs

    The first sample of each account is its template. Genuine attempts are the
    account's other samples; impostor attempts are the non-template samples of
    every other account, subsampled to impostor_cap per template (0 = no cap).
    """
    cap = config.IMPOSTOR_CAP if impostor_cap is None else impostor_cap
    rng = np.random.default_rng(config.derive_seed('pairs') if seed is None else seed)

    index_of = {id(trace): k for k, trace in enumerate(dataset.traces)}
    templates: List[Tuple[str, int]] = []
    attempts: Dict[str, List[int]] = {}
    skipped = []
    for account_id, traces in dataset.accounts().items():
        if len(traces) < 2:
            logger.warning("Skipping account %s: only one sample, no genuine pair possible", account_id)
            skipped.append(account_id)
            continue
        templates.append((account_id, index_of[id(traces[0])]))
        attempts[account_id] = [index_of[id(t)] for t in traces[1:]]

    genuine = []
    impostor = []
    for account_id, template in templates:
        genuine.extend((template, attempt) for attempt in attempts[account_id])
        others = [a for other, pool in attempts.items() if other != account_id for a in pool]
        if cap and len(others) > cap:
            chosen = np.sort(rng.choice(len(others), size=cap, replace=False))
            others = [others[k] for k in chosen]
        impostor.extend((template, attempt) for attempt in others)

    logger.info("Planned %d genuine and %d impostor pairs over %d accounts",
                len(genuine), len(impostor), len(templates))
    return PairPlan(tuple(genuine), tuple(impostor), tuple(skipped))


def score_plan(dataset: TraceSet, plan: PairPlan, recognizer: Recognizer,
               runner: Optional[BatchRunner] = None) -> List[ScoreSample]:
    """Genuine samples first, then impostors, each in plan order"""
    runner = runner or BatchRunner()
    used = plan.trace_indices()
    prepared = dict(zip(used, runner.map(lambda k: recognizer.prepare(dataset.traces[k]), used,
                                         label=f"prepare-{recognizer.tag}")))

    def score_pair(pair: Tuple[int, int]) -> float:
        return recognizer.score(prepared[pair[0]], prepared[pair[1]]).value

    genuine = runner.map(score_pair, plan.genuine, label=f"genuine-{recognizer.tag}")
    impostor = runner.map(score_pair, plan.impostor, label=f"impostor-{recognizer.tag}")
    return ([ScoreSample(s, PairLabel.GENUINE) for s in genuine] +
            [ScoreSample(s, PairLabel.IMPOSTOR) for s in impostor])


def make_pairs(dataset: TraceSet, recognizer: Recognizer, impostor_cap: Optional[int] = None,
               seed: Optional[int] = None, runner: Optional[BatchRunner] = None) -> List[ScoreSample]:
    return score_plan(dataset, plan_pairs(dataset, impostor_cap, seed), recognizer, runner)


def _split(samples: Sequence[ScoreSample]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.array([s.score for s in samples], dtype=float)
    labels = np.array([s.label is PairLabel.GENUINE for s in samples], dtype=bool)
    n_genuine = int(labels.sum())
    if n_genuine == 0 or n_genuine == labels.size:
        raise EvaluationError(
            f"need both genuine and impostor samples, got {n_genuine} genuine and {labels.size - n_genuine} impostor")
    return scores, labels


def roc_curve(samples: Sequence[ScoreSample]) -> RocCurve:
    """Accept when score >= threshold; one point per distinct score plus (0, 0)"""
    scores, labels = _split(samples)
    fpr, tpr, thresholds = metrics.roc_curve(labels.astype(int), scores, pos_label=1, drop_intermediate=False)
    thresholds = thresholds.astype(float)
    thresholds[0] = math.inf
    return RocCurve(tuple((float(f), float(t), float(h)) for f, t, h in zip(fpr, tpr, thresholds)))


def auroc(samples: Sequence[ScoreSample]) -> float:
    """Mann-Whitney U statistic: P(genuine > impostor) + P(tie) / 2"""
    scores, labels = _split(samples)
    ranks = rankdata(scores, method='average')
    n_genuine = int(labels.sum())
    n_impostor = labels.size - n_genuine
    u = ranks[labels].sum() - n_genuine * (n_genuine + 1) / 2.0
    return float(u / (n_genuine * n_impostor))


def _checked_params(omegas: Sequence[int], betas: Sequence[int]) -> List[SaxParams]:
    if not omegas or not betas:
        raise EvaluationError("parameter ranges must be non-empty")
    try:
        return [SaxParams(omega=int(o), beta=int(b)) for o in omegas for b in betas]
    except SaxParameterError as e:
        raise EvaluationError(f"parameter range out of bounds: {e}")


def param_sweep(dataset: TraceSet, omega_range: Sequence[int], beta_range: Sequence[int],
                plan: Optional[PairPlan] = None, runner: Optional[BatchRunner] = None) -> List[SweepCell]:
    """AUROC of the SAX recognizer for every (omega, beta), all on one pair plan"""
    grid = _checked_params(omega_range, beta_range)
    plan = plan or plan_pairs(dataset)
    runner = runner or BatchRunner()
    serial = BatchRunner(max_workers=1)

    def evaluate(params: SaxParams) -> SweepCell:
        samples = score_plan(dataset, plan, Recognizer(RecognizerType.SAX, params), serial)
        return SweepCell(params.omega, params.beta, auroc(samples), len(plan.genuine), len(plan.impostor))

    cells = runner.map(evaluate, grid, label="param-sweep")
    logger.info("Swept %d parameter cells", len(cells))
    return sorted(cells, key=lambda c: (c.omega, c.beta))


def sweep_frame(cells: Sequence[SweepCell]) -> pd.DataFrame:
    return pd.DataFrame(
        [(c.omega, c.beta, c.auroc, c.n_genuine, c.n_impostor) for c in cells],
        columns=['omega', 'beta', 'auroc', 'n_genuine', 'n_impostor'],
    )


def compare_recognizers(dataset: TraceSet, recognizers: Sequence[Recognizer],
                        plan: Optional[PairPlan] = None,
                        runner: Optional[BatchRunner] = None) -> pd.DataFrame:
    """AUROC per recognizer on a shared pair plan"""
    plan = plan or plan_pairs(dataset)
    rows = []
    for recognizer in recognizers:
        samples = score_plan(dataset, plan, recognizer, runner)
        rows.append((recognizer.tag, auroc(samples), len(plan.genuine), len(plan.impostor)))
        logger.info("%s AUROC %.4f", recognizer.tag, rows[-1][1])
    return pd.DataFrame(rows, columns=['recognizer', 'auroc', 'n_genuine', 'n_impostor'])


def roc_frame(curve: RocCurve) -> pd.DataFrame:
    return pd.DataFrame(list(curve.points), columns=['fpr', 'tpr', 'threshold'])
