import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from batch_runner import BatchRunner
from errors import EvaluationError
from eval_roc import (PairLabel, ScoreSample, auroc, compare_recognizers, make_pairs, param_sweep, plan_pairs,
                      roc_curve, roc_frame, score_plan, sweep_frame)
from recognizers import Recognizer, RecognizerType
from sax_core import SaxParams
from trace_io import SynthSpec, TraceSet, synth_gestures


def samples(genuine, impostor):
    return ([ScoreSample(s, PairLabel.GENUINE) for s in genuine] +
            [ScoreSample(s, PairLabel.IMPOSTOR) for s in impostor])


def test_two_by_two_pair_counts(two_by_two):
    plan = plan_pairs(two_by_two, impostor_cap=0, seed=1)
    assert plan.genuine == ((0, 1), (2, 3))
    assert plan.impostor == ((0, 3), (2, 1))
    assert plan.trace_indices() == [0, 1, 2, 3]


def test_pair_plan_is_seeded(small_dataset):
    first = plan_pairs(small_dataset, impostor_cap=5, seed=123)
    again = plan_pairs(small_dataset, impostor_cap=5, seed=123)
    assert first == again
    assert len(first.impostor) == 5 * len(small_dataset.account_ids())
    assert len(first.genuine) == 3 * len(small_dataset.account_ids())


def test_single_sample_accounts_are_skipped(two_by_two, trace_factory):
    dataset = TraceSet(two_by_two.traces + (trace_factory("c", "s0", [(0, 0), (5, 5)]),))
    plan = plan_pairs(dataset, impostor_cap=0, seed=1)
    assert plan.skipped_accounts == ("c",)
    assert len(plan.genuine) == 2
    assert all(4 not in pair for pair in plan.impostor)


def test_zero_jitter_genuine_scores_are_maximal():
    dataset = synth_gestures(SynthSpec(accounts=4, samples_per_account=3, jitter=0.0), seed=2)
    scored = make_pairs(dataset, Recognizer(RecognizerType.SAX, SaxParams(omega=8, beta=6)), impostor_cap=0,
                        seed=1, runner=BatchRunner(max_workers=2))
    genuine = [s.score for s in scored if s.label is PairLabel.GENUINE]
    assert genuine == [0.0] * 8


def test_roc_perfect_separation():
    data = samples([5.0, 4.0, 3.0], [1.0, 0.0])
    curve = roc_curve(data)
    assert (0.0, 1.0) in [(f, t) for f, t, _ in curve.points]
    assert curve.points[0][:2] == (0.0, 0.0)
    assert curve.points[-1][:2] == (1.0, 1.0)
    assert auroc(data) == 1.0


def test_roc_with_all_scores_tied():
    data = samples([2.0, 2.0], [2.0, 2.0, 2.0])
    assert [(f, t) for f, t, _ in roc_curve(data).points] == [(0.0, 0.0), (1.0, 1.0)]
    assert auroc(data) == 0.5


def test_auroc_of_label_independent_scores():
    rng = np.random.default_rng(0)
    scores = rng.normal(size=10_000)
    labels = rng.random(10_000) < 0.5
    data = [ScoreSample(s, PairLabel.GENUINE if g else PairLabel.IMPOSTOR) for s, g in zip(scores, labels)]
    assert auroc(data) == pytest.approx(0.5, abs=0.02)


def test_auroc_agrees_with_trapezoid_and_sklearn():
    rng = np.random.default_rng(4)
    genuine = np.round(rng.normal(1.0, 1.0, 300), 1)
    impostor = np.round(rng.normal(0.0, 1.0, 500), 1)
    data = samples(genuine, impostor)
    value = auroc(data)
    assert roc_curve(data).area() == pytest.approx(value, abs=1e-9)
    labels = [1] * len(genuine) + [0] * len(impostor)
    assert roc_auc_score(labels, np.concatenate((genuine, impostor))) == pytest.approx(value, abs=1e-9)


def test_single_class_is_an_error():
    with pytest.raises(EvaluationError):
        auroc(samples([1.0, 2.0], []))
    with pytest.raises(EvaluationError):
        ScoreSample(float("inf"), PairLabel.GENUINE)


def test_param_sweep(small_dataset):
    plan = plan_pairs(small_dataset, impostor_cap=10, seed=7)
    cells = param_sweep(small_dataset, [5, 4], [3, 6], plan, BatchRunner(max_workers=2))
    assert [(c.omega, c.beta) for c in cells] == [(4, 3), (4, 6), (5, 3), (5, 6)]
    assert all(0.0 <= c.auroc <= 1.0 for c in cells)
    assert all(c.n_genuine == len(plan.genuine) for c in cells)
    assert list(sweep_frame(cells).columns) == ['omega', 'beta', 'auroc', 'n_genuine', 'n_impostor']

    single = param_sweep(small_dataset, [8], [6], plan)
    assert len(single) == 1
    expected = auroc(score_plan(small_dataset, plan, Recognizer(RecognizerType.SAX, SaxParams(8, 6))))
    assert single[0].auroc == pytest.approx(expected)


def test_param_sweep_rejects_bad_ranges(small_dataset):
    with pytest.raises(EvaluationError):
        param_sweep(small_dataset, [], [6])
    with pytest.raises(EvaluationError):
        param_sweep(small_dataset, [8], [30])


def test_synthetic_accounts_are_separable(small_dataset):
    plan = plan_pairs(small_dataset, impostor_cap=20, seed=3)
    table = compare_recognizers(small_dataset, [Recognizer(r, SaxParams(8, 6), 32) for r in RecognizerType], plan)
    assert list(table.recognizer) == ["sax", "dtw", "protractor"]
    assert (table.auroc > 0.5).all()
    frame = roc_frame(roc_curve(score_plan(small_dataset, plan, Recognizer(RecognizerType.DTW))))
    assert list(frame.columns) == ['fpr', 'tpr', 'threshold']


def test_sax_matches_trace_recognizers_on_distinct_walks():
    dataset = synth_gestures(SynthSpec(accounts=15, samples_per_account=3, points_per_trace=32, jitter=0.01,
                                       shape_mix=(("random-walk", 1.0),)), seed=4)
    plan = plan_pairs(dataset, impostor_cap=20, seed=5)
    table = compare_recognizers(dataset, [Recognizer(r, SaxParams(8, 6), 32) for r in RecognizerType], plan)
    scores = dict(zip(table.recognizer, table.auroc))
    assert abs(scores["sax"] - scores["dtw"]) <= 0.05
    assert abs(scores["sax"] - scores["protractor"]) <= 0.05
