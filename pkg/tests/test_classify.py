from dataclasses import replace

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from chosvd.classify import (EvalReport, auc, confusion_and_metrics, cross_validate, lda_fit,
                             lda_predict, lda_score, published_tables, stratified_kfold)
from chosvd.errors import UsageError

PUBLISHED = published_tables()


def test_published_table_has_all_rows():
    assert len(PUBLISHED) == 24
    assert {row['table'] for row in PUBLISHED} == {'day30_unrotated', 'day90_unrotated',
                                                   'day30_rotated', 'day90_rotated'}


@pytest.mark.parametrize('row', PUBLISHED, ids=lambda r: f'{r["table"]}-{r["group"]}')
def test_metrics_reproduce_published_ratios(row):
    labels = np.r_[np.ones(row['TP'] + row['FN']), np.zeros(row['FP'] + row['TN'])].astype(int)
    predictions = np.r_[np.ones(row['TP']), np.zeros(row['FN']),
                        np.ones(row['FP']), np.zeros(row['TN'])].astype(int)
    report = confusion_and_metrics(predictions, labels)
    assert (report.tp, report.fn, report.fp, report.tn) == (row['TP'], row['FN'], row['FP'], row['TN'])
    for name in ('ppv', 'tpr', 'tnr'):
        assert getattr(report, name) == pytest.approx(row[name.upper()], abs=0.005 + 1e-9)


def test_zero_denominators_are_undefined():
    report = confusion_and_metrics(np.zeros(4), np.array([0, 0, 1, 1]))
    assert report.ppv is None
    assert report.tpr == 0.0
    assert report.tnr == 1.0
    assert report.as_record()['PPV'] is None
    assert 'PPV=-' in report.to_text()


def test_auc_matches_sklearn_with_ties():
    rng = np.random.default_rng(0)
    scores = rng.integers(0, 5, 40).astype(float)
    labels = rng.integers(0, 2, 40)
    assert auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores))
    assert auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    assert auc([1, 1, 1, 1], [0, 0, 1, 1]) == 0.5
    with pytest.raises(UsageError):
        auc([1, 2], [1, 1])


def test_lda_separates_shifted_gaussians():
    rng = np.random.default_rng(1)
    x = np.vstack([rng.standard_normal((30, 3)), rng.standard_normal((30, 3)) + [3.0, 0.0, 0.0]])
    y = np.r_[np.zeros(30), np.ones(30)].astype(int)
    model = lda_fit(x, y)
    assert model.weights[0] > 0
    assert np.mean(lda_predict(model, x) == y) > 0.9
    assert isinstance(lda_score(model, x[0]), float)
    assert model.priors == (0.5, 0.5)


def test_lda_ridge_handles_constant_features():
    x = np.array([[0.0, 1.0], [0.1, 1.0], [1.0, 1.0], [1.1, 1.0]])
    model = lda_fit(x, [0, 0, 1, 1])
    assert model.weights[1] == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_array_equal(lda_predict(model, x), [0, 0, 1, 1])
    constant = lda_fit(np.ones((4, 1)), [0, 0, 1, 1])
    assert constant.ridge == 1e-6


def test_lda_prior_shifts_threshold():
    x = np.array([[0.0], [0.2], [0.4], [1.0]])
    balanced = lda_fit(x, [0, 0, 1, 1])
    skewed = lda_fit(x, [0, 0, 0, 1])
    assert balanced.bias != skewed.bias
    with pytest.raises(UsageError):
        lda_fit(x, [0, 0, 0, 0])


def test_stratified_folds():
    labels = np.r_[np.ones(12), np.zeros(18)].astype(int)
    folds = stratified_kfold(labels, k=5, seed=3)
    assert set(folds) == set(range(5))
    for fold in range(5):
        severe = int(labels[folds == fold].sum())
        assert severe in (2, 3)
    np.testing.assert_array_equal(folds, stratified_kfold(labels, k=5, seed=3))
    assert not np.array_equal(folds, stratified_kfold(labels, k=5, seed=4))


def test_stratified_folds_edge_cases(caplog):
    with pytest.raises(UsageError):
        stratified_kfold([1, 0, 0, 0], k=2)
    with pytest.raises(UsageError):
        stratified_kfold([1, 1, 0, 0], k=5)
    folds = stratified_kfold([1, 1, 0, 0, 0, 0], k=3)
    assert folds.size == 6
    assert 'some test folds' in caplog.text


def separable_phases(rng, n=40):
    y = np.r_[np.ones(n // 2), np.zeros(n // 2)].astype(int)
    informative = np.where(y == 1, 1.5, -1.5) + 0.2 * rng.standard_normal(n)
    noise = rng.uniform(-np.pi, np.pi, (n, 5))
    return np.column_stack([noise[:, :2], informative, noise[:, 2:]]), y


def test_cross_validate_recovers_informative_feature():
    rng = np.random.default_rng(2)
    phases, y = separable_phases(rng)
    names = [f'f{j}' for j in range(phases.shape[1])]
    report = cross_validate(phases, y, k=5, seed=0, feature_names=names, group='synthetic',
                            horizon='day30', rotated=True)
    assert isinstance(report, EvalReport)
    assert report.auc >= 0.95
    assert report.tp + report.fn == 20 and report.fp + report.tn == 20
    assert all('f2' in chosen for chosen in report.selected_features)
    assert len(report.selected_features) == 5
    record = report.as_record()
    assert record['group'] == 'synthetic' and record['rotated'] is True
    assert report.scores.shape == (40,)


def test_cross_validate_modes_and_determinism():
    rng = np.random.default_rng(3)
    phases, y = separable_phases(rng)
    first = cross_validate(phases, y, seed=7, selection='global', auc_mode='per-fold')
    second = cross_validate(phases, y, seed=7, selection='global', auc_mode='per-fold')
    assert first.as_record() == second.as_record()
    np.testing.assert_array_equal(first.fold_assignments, second.fold_assignments)
    assert len({tuple(s) for s in first.selected_features}) == 1
    circular = cross_validate(phases, y, seed=7, circular=True)
    assert circular.auc >= 0.9
    with pytest.raises(UsageError):
        cross_validate(phases, y, selection='nested')


def test_folds_when_both_classes_are_smaller_than_k(caplog):
    labels = np.array([1, 1, 0, 0, 0])
    folds = stratified_kfold(labels, k=5, seed=1)
    assert sorted(folds) == [0, 1, 2, 3, 4]
    assert 'some test folds' in caplog.text
    for fold in range(5):
        train = labels[folds != fold]
        assert 0 < train.sum() < train.size
    np.testing.assert_array_equal(folds, stratified_kfold(labels, k=5, seed=1))

    phases = np.column_stack([np.where(labels == 1, 1.0, -1.0), np.linspace(-1.0, 1.0, 5),
                              np.zeros(5), np.arange(5.0)])
    report = cross_validate(phases, labels, k=5, seed=1)
    assert report.tp + report.fn == 2 and report.fp + report.tn == 3


def test_auc_ignores_increasing_transforms():
    rng = np.random.default_rng(4)
    scores = rng.standard_normal(30)
    labels = rng.integers(0, 2, 30)
    labels[:2] = [0, 1]
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == pytest.approx(base)
    assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base)
    assert auc(scores ** 3, labels) == pytest.approx(base)


def test_lda_predictions_ignore_joint_positive_rescaling():
    rng = np.random.default_rng(6)
    x = np.vstack([rng.standard_normal((20, 3)), rng.standard_normal((20, 3)) + 1.0])
    model = lda_fit(x, np.r_[np.zeros(20), np.ones(20)].astype(int))
    for factor in (0.01, 2.5, 1e4):
        scaled = replace(model, weights=model.weights * factor, bias=model.bias * factor)
        np.testing.assert_array_equal(lda_predict(scaled, x), lda_predict(model, x))
