import logging

import numpy as np
import pytest

from helpers import seconds
from modules.errors import BundleError, CoverageError, UntrainableEventError
from modules.learners import knn_spec, svm_spec
from modules.selection_eval import (MetricSummary, REPORT_COLUMNS, cross_validate, eer_sweep, evaluate_model,
                                    rank, rates_at, select_best, time_series_splits, verify, write_report)


def test_eer_of_perfect_separation():
    result = eer_sweep([0.1, 0.2], [0.8, 0.9])
    assert (result.eer, result.dr, result.far) == (0.0, 1.0, 0.0)
    assert 0.2 < result.threshold <= 0.8


def test_eer_of_inverted_scores():
    assert eer_sweep([0.6], [0.4]).eer == 1.0


def test_eer_of_random_scores():
    rng = np.random.default_rng(0)
    result = eer_sweep(rng.uniform(size=10_000), rng.uniform(size=10_000))
    assert result.eer == pytest.approx(0.5, abs=0.05)
    assert abs(result.far - (1.0 - result.dr)) <= 1.0 / 10_000


def test_eer_ignores_monotone_transformations():
    rng = np.random.default_rng(3)
    s0, s1 = rng.normal(0.0, 1.0, 300), rng.normal(1.0, 1.0, 50)
    plain, warped = eer_sweep(s0, s1), eer_sweep(np.exp(s0), np.exp(s1))
    assert warped.eer == pytest.approx(plain.eer)
    assert warped.dr == pytest.approx(plain.dr)
    assert warped.far == pytest.approx(plain.far)
    assert abs(plain.far - (1.0 - plain.dr)) <= 1.0 / 50


def test_eer_needs_both_classes():
    with pytest.raises(ValueError):
        eer_sweep([], [0.5])


def test_rates_at_threshold():
    assert rates_at([0.1, 0.2, 0.7], [0.5, 0.9], 0.6) == (pytest.approx(2 / 3), 0.5)


def test_rolling_splits_grow_and_move_forward():
    splits = time_series_splits(10, 5)
    assert [len(train) for train, _ in splits] == [2, 4, 6, 8]
    assert all(len(validation) == 2 for _, validation in splits)
    for (train, validation), (next_train, _) in zip(splits, splits[1:]):
        assert set(train) < set(next_train)
        assert train.max() < validation.min()
    with pytest.raises(ValueError):
        time_series_splits(10, 1)


def test_cross_validation_of_separable_data(blobs):
    X, y = blobs
    result = cross_validate(knn_spec(1), X, y, K=5)
    assert result.summary.n_splits == 4
    assert result.summary.mean_eer == 0.0
    assert (result.summary.std_eer, result.summary.std_dr, result.summary.std_far) == (0.0, 0.0, 0.0)
    assert result.pooled.eer == 0.0


def test_cross_validation_skips_single_class_splits(caplog):
    y = np.array([0, 0, 0, 0, 1, 0, 1, 0, 1, 0])
    X = (y + np.linspace(0.0, 0.1, 10)).reshape(-1, 1)
    with caplog.at_level(logging.WARNING):
        result = cross_validate(knn_spec(1), X, y, K=5, event_type='door_open')
    assert result.summary.n_skipped == 2
    assert result.summary.n_splits == 2
    assert caplog.text.count('lacks a class') == 2


def test_cross_validation_of_a_too_rare_event():
    y = np.array([0] * 8 + [1, 1])
    with pytest.raises(UntrainableEventError, match='event too rare for CV'):
        cross_validate(knn_spec(1), np.arange(10.0).reshape(-1, 1), y, K=5, event_type='window_open')
    with pytest.raises(UntrainableEventError, match='window_open'):
        select_best('window_open', [knn_spec(1)], np.arange(10.0).reshape(-1, 1), y, K=5)


def test_rank_formula_and_ties():
    a = MetricSummary(0.01, 0.0, 0.99, 0.0, 0.01, 0.0)
    b = MetricSummary(0.2, 0.0, 0.6, 0.0, 0.3, 0.0)
    assert a.rank_score() == pytest.approx(0.97)
    assert b.rank_score() == pytest.approx(0.10)
    ordered = rank({knn_spec(3): b, knn_spec(1): a})
    assert [entry.spec for entry in ordered] == [knn_spec(1), knn_spec(3)]
    assert [e.spec for e in rank({knn_spec(1): a, knn_spec(3): b})] == [e.spec for e in ordered]
    tied = rank({svm_spec(1.0, 20): a, knn_spec(7): a, knn_spec(1): a})
    assert [e.spec.identifier for e in tied] == sorted(e.spec.identifier for e in tied)


def test_std_penalty_enters_rank():
    steady = MetricSummary(0.1, 0.0, 0.9, 0.0, 0.1, 0.0)
    shaky = MetricSummary(0.1, 0.1, 0.9, 0.1, 0.1, 0.1)
    assert steady.rank_score() - shaky.rank_score() == pytest.approx(0.15)
    assert MetricSummary.from_dict(shaky.to_dict()) == shaky


def test_select_best_with_a_single_spec(blobs):
    X, y = blobs
    result = select_best('light_on', [svm_spec(1.0, 20)], X, y, K=4)
    assert result.model.spec == svm_spec(1.0, 20)
    assert len(result.ranking) == 1
    assert np.isfinite(result.threshold)


def test_select_best_orders_by_rank(blobs):
    X, y = blobs
    rng = np.random.default_rng(0)
    noisy = np.hstack([X, rng.normal(size=(len(y), 6)) * 5.0])
    specs = [knn_spec(1), knn_spec(9, 'distance'), svm_spec(1.0, 20)]
    result = select_best('light_on', specs, noisy, y, K=5, n_jobs=2)
    scores = [entry.score for entry in result.ranking]
    assert scores == sorted(scores, reverse=True)
    assert result.summary == result.ranking[0].summary
    assert result.summary.mean_eer <= min(e.summary.mean_eer for e in result.ranking if e.score == scores[0])


def test_verify_claims_against_ground_truth(small_world, light_training):
    dataset, truth = small_world
    bundle, _ = light_training
    start, end = dataset.segment('test')
    events = [int(t) for t in truth.events['light_on'] if start <= t < end - seconds(60)]
    spoofed = [int(t) for t in truth.spoofed['light_on'] if start <= t < end - seconds(60)]
    genuine = [verify(bundle, 'light_on', t, dataset).genuine for t in events]
    rejected = [not verify(bundle, 'light_on', t, dataset).genuine for t in spoofed]
    assert np.mean(genuine) >= 0.9
    assert not spoofed or np.mean(rejected) >= 0.9
    decision = verify(bundle, 'light_on', events[0], dataset)
    assert decision.genuine == (decision.score >= decision.threshold)


def test_verify_outside_the_data(small_world, light_training):
    dataset, _ = small_world
    bundle, _ = light_training
    with pytest.raises(CoverageError, match='insufficient evidence window'):
        verify(bundle, 'light_on', dataset.start - seconds(3600), dataset)
    with pytest.raises(BundleError):
        verify(bundle, 'knock', dataset.train_end + seconds(600), dataset)


def test_evaluate_model_on_test_split(tmp_path, small_world, light_training):
    dataset, _ = small_world
    bundle, _ = light_training
    result = evaluate_model(bundle, dataset, 'test')
    assert result.n_1 > 0 and result.n_0 > 0
    assert result.sweep.eer <= 0.1
    row = result.report_row()
    assert tuple(row) == REPORT_COLUMNS
    assert row['split'] == 'test' and row['pipeline'] == 'dtw'
    write_report([row], tmp_path / 'a.csv')
    write_report([row], tmp_path / 'b.csv')
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()
    assert (tmp_path / 'a.csv').read_text().splitlines()[0] == ','.join(REPORT_COLUMNS)
