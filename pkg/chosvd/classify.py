"""Two-class LDA on phase features, stratified k-fold cross-validation and
confusion-matrix metrics.

Labels are 1 for "severe" and 0 for "mild"; a positive LDA score predicts
severe.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedKFold

from chosvd.errors import NumericalError, UsageError
from chosvd.features import fisher_scores, select_top_k

logger = logging.getLogger(__name__)

RIDGE = 1e-6
DECIMALS = 2


@dataclass
class LdaModel:
    weights: np.ndarray
    bias: float
    priors: tuple
    means: tuple
    pooled_cov: np.ndarray
    ridge: float


def _binary(labels):
    labels = np.asarray(labels).astype(int).ravel()
    if not np.isin(labels, (0, 1)).all():
        raise UsageError('labels must be 0 (mild) or 1 (severe)')
    return labels


def lda_fit(X, y):
    """Pooled-covariance LDA with a ridge of 1e-6 * trace / d.

    w = (Sigma + ridge I)^-1 (mu1 - mu0); the threshold sits halfway between
    the projected class means, shifted by the log prior ratio.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = _binary(y)
    n, d = X.shape
    if y.size != n:
        raise UsageError(f'{n} samples but {y.size} labels')
    n1 = int(y.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise UsageError('LDA needs both classes in the training set')
    if n <= d:
        logger.warning('LDA fit with %d samples in %d dimensions', n, d)

    mu0 = X[y == 0].mean(axis=0)
    mu1 = X[y == 1].mean(axis=0)
    centered = np.vstack([X[y == 0] - mu0, X[y == 1] - mu1])
    cov = centered.T @ centered / (n - 2 if n > 2 else n)
    trace = float(np.trace(cov))
    ridge = RIDGE * trace / d if trace > 0 else RIDGE
    try:
        w = np.linalg.solve(cov + ridge * np.eye(d), mu1 - mu0)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f'pooled covariance is singular even with ridge {ridge:.3e}') from err
    if not np.all(np.isfinite(w)):
        raise NumericalError('LDA weights are not finite')

    priors = (n0 / n, n1 / n)
    bias = float(w @ (mu0 + mu1) / 2.0 - np.log(priors[1] / priors[0]))
    return LdaModel(weights=w, bias=bias, priors=priors, means=(mu0, mu1),
                    pooled_cov=cov, ridge=ridge)


def lda_score(model, x):
    """w.x - b; a single sample gives a float, a 2-D batch an array."""
    x = np.asarray(x, dtype=float)
    scores = np.atleast_2d(x) @ model.weights - model.bias
    return float(scores[0]) if x.ndim <= 1 else scores


def lda_predict(model, x):
    return (np.asarray(lda_score(model, x)) > 0).astype(int)


def stratified_kfold(labels, k=5, seed=0):
    """Fold id (0..k-1) per subject, stratified by class and fixed by seed."""
    labels = _binary(labels)
    counts = np.bincount(labels, minlength=2)
    if counts.min() == 0:
        raise UsageError('stratified folds need both classes present')
    if counts.min() < 2:
        raise UsageError('a class with a single member cannot appear in every training set')
    if not 2 <= k <= labels.size:
        raise UsageError(f'fold count must be between 2 and {labels.size}, got {k}')
    if counts.min() < k:
        logger.warning('smallest class has %d members for %d folds; some test folds '
                       'will miss it', counts.min(), k)

    folds = np.empty(labels.size, dtype=int)
    if counts.max() < k:
        # StratifiedKFold refuses this; deal each shuffled class round-robin,
        # the second class continuing where the first stopped
        rng = np.random.default_rng(seed)
        start = 0
        for cls in (1, 0):
            members = rng.permutation(np.flatnonzero(labels == cls))
            folds[members] = (start + np.arange(members.size)) % k
            start = (start + members.size) % k
        return folds
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', UserWarning)
        for fold, (_, test) in enumerate(splitter.split(np.zeros(labels.size), labels)):
            folds[test] = fold
    return folds


def _ratio(num, den):
    return num / den if den > 0 else None


@dataclass
class EvalReport:
    tp: int
    fn: int
    fp: int
    tn: int
    ppv: Optional[float]
    tpr: Optional[float]
    tnr: Optional[float]
    auc: Optional[float] = None
    fold_assignments: np.ndarray = None
    selected_features: list = field(default_factory=list)
    group: str = 'all'
    horizon: str = ''
    rotated: bool = False
    selection: str = 'in-fold'
    seed: Optional[int] = None
    scores: np.ndarray = None

    @property
    def n_severe(self):
        return self.tp + self.fn

    @property
    def n_mild(self):
        return self.fp + self.tn

    def as_record(self, decimals=DECIMALS):
        def fmt(x):
            return None if x is None else round(float(x), decimals)
        return {
            'group': self.group,
            'horizon': self.horizon,
            'rotated': self.rotated,
            'selection': self.selection,
            'seed': self.seed,
            'TP': self.tp, 'FN': self.fn, 'FP': self.fp, 'TN': self.tn,
            'PPV': fmt(self.ppv), 'TPR': fmt(self.tpr), 'TNR': fmt(self.tnr), 'AUC': fmt(self.auc),
            'selected': ' | '.join(','.join(names) for names in self.selected_features),
        }

    def to_text(self, decimals=DECIMALS):
        def fmt(x):
            return '-' if x is None else f'{x:.{decimals}f}'
        return (f'{self.group} / {self.horizon} / rotated={self.rotated} / selection={self.selection}\n'
                f'  TP={self.tp}  FN={self.fn}\n'
                f'  FP={self.fp}  TN={self.tn}\n'
                f'  PPV={fmt(self.ppv)}  TPR={fmt(self.tpr)}  TNR={fmt(self.tnr)}  AUC={fmt(self.auc)}\n')


def confusion_and_metrics(predictions, labels, **meta):
    predictions = _binary(predictions)
    labels = _binary(labels)
    if predictions.size != labels.size:
        raise UsageError(f'{predictions.size} predictions but {labels.size} labels')
    tn, fp, fn, tp = (int(c) for c in confusion_matrix(labels, predictions, labels=[0, 1]).ravel())
    return EvalReport(tp=tp, fn=fn, fp=fp, tn=tn,
                      ppv=_ratio(tp, tp + fp), tpr=_ratio(tp, tp + fn), tnr=_ratio(tn, tn + fp),
                      **meta)


def auc(scores, labels):
    """Mann-Whitney AUC: P(severe score > mild score) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = _binary(labels)
    if scores.size != labels.size:
        raise UsageError(f'{scores.size} scores but {labels.size} labels')
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n0 == 0 or n1 == 0:
        raise UsageError('AUC needs both classes present')
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def cross_validate(phases, labels, k=5, seed=0, top_k=3, selection='in-fold', circular=False,
                   auc_mode='pooled', feature_names=None, **meta):
    """Held-out LDA evaluation of phase features.

    selection -- 'in-fold' ranks features on each training fold only,
                 'global' ranks once on the whole group before splitting
    auc_mode  -- 'pooled' AUC over all held-out scores, 'per-fold' mean of
                 the folds' AUCs (folds missing a class are skipped)
    """
    phases = np.asarray(phases, dtype=float)
    labels = _binary(labels)
    if selection not in ('in-fold', 'global'):
        raise UsageError(f'unknown selection mode {selection!r}')
    if auc_mode not in ('pooled', 'per-fold'):
        raise UsageError(f'unknown AUC mode {auc_mode!r}')
    n, n_features = phases.shape
    top_k = min(top_k, n_features)
    if feature_names is None:
        feature_names = [str(j) for j in range(n_features)]

    folds = stratified_kfold(labels, k=k, seed=seed)
    if selection == 'global':
        chosen = select_top_k(fisher_scores(phases, labels, circular=circular), top_k)

    scores = np.zeros(n)
    selected, fold_aucs = [], []
    for fold in range(k):
        test = folds == fold
        train = ~test
        if not test.any():
            continue
        if selection == 'in-fold':
            chosen = select_top_k(fisher_scores(phases[train], labels[train], circular=circular), top_k)
        selected.append([feature_names[j] for j in chosen])
        model = lda_fit(phases[np.ix_(train, chosen)], labels[train])
        scores[test] = lda_score(model, phases[np.ix_(test, chosen)])
        if auc_mode == 'per-fold' and 0 < labels[test].sum() < test.sum():
            fold_aucs.append(auc(scores[test], labels[test]))

    report = confusion_and_metrics((scores > 0).astype(int), labels, fold_assignments=folds,
                                   selected_features=selected, selection=selection, seed=seed,
                                   scores=scores, **meta)
    if auc_mode == 'pooled':
        report.auc = auc(scores, labels)
    else:
        report.auc = float(np.mean(fold_aucs)) if fold_aucs else None
    return report


# Published confusion matrices and the ratios printed next to them.
PUBLISHED = {
    'day30_unrotated': [
        ('thoracic', 9, 4, 6, 18, 0.60, 0.69, 0.75, 0.78),
        ('orthopaedics', 10, 3, 5, 17, 0.67, 0.77, 0.77, 0.80),
        ('urology', 5, 3, 2, 50, 0.71, 0.63, 0.96, 0.87),
        ('colorectal', 6, 8, 1, 50, 0.86, 0.43, 0.98, 0.75),
        ('transplant', 3, 0, 1, 7, 0.75, 1.0, 0.88, 0.92),
        ('pancreas_biliary', 4, 5, 3, 22, 0.57, 0.44, 0.88, 0.80),
    ],
    'day90_unrotated': [
        ('thoracic', 6, 3, 2, 29, 0.75, 0.67, 0.94, 0.87),
        ('orthopaedics', 6, 3, 5, 15, 0.55, 0.67, 0.75, 0.73),
        ('urology', 2, 4, 1, 49, 0.67, 0.33, 0.98, 0.88),
        ('colorectal', 2, 0, 0, 60, 1.0, 1.0, 1.0, 1.0),
        ('transplant', 2, 1, 1, 6, 0.67, 0.67, 0.86, 0.90),
        ('pancreas_biliary', 4, 2, 2, 24, 0.67, 0.67, 0.92, 0.92),
    ],
    'day30_rotated': [
        ('thoracic', 9, 4, 3, 21, 0.75, 0.69, 0.88, 0.81),
        ('orthopaedics', 10, 3, 2, 20, 0.83, 0.77, 0.91, 0.87),
        ('urology', 5, 3, 2, 50, 0.71, 0.63, 0.96, 0.87),
        ('colorectal', 8, 6, 3, 48, 0.73, 0.57, 0.94, 0.86),
        ('transplant', 3, 0, 0, 8, 1.0, 1.0, 1.0, 1.0),
        ('pancreas_biliary', 6, 3, 3, 22, 0.67, 0.67, 0.88, 0.83),
    ],
    'day90_rotated': [
        ('thoracic', 8, 1, 2, 29, 0.80, 0.89, 0.94, 0.89),
        ('orthopaedics', 7, 2, 4, 16, 0.64, 0.78, 0.80, 0.83),
        ('urology', 2, 4, 1, 49, 0.67, 0.33, 0.98, 0.88),
        ('colorectal', 2, 0, 0, 60, 1.0, 1.0, 1.0, 1.0),
        ('transplant', 3, 0, 0, 7, 1.0, 1.0, 1.0, 1.0),
        ('pancreas_biliary', 4, 2, 2, 24, 0.67, 0.67, 0.92, 0.92),
    ],
}


def published_tables():
    """Flat list of dicts, one per published confusion matrix."""
    rows = []
    for table, entries in PUBLISHED.items():
        horizon, setting = table.split('_')
        for service, tp, fn, fp, tn, ppv, tpr, tnr, auc_value in entries:
            rows.append({'table': table, 'horizon': horizon, 'rotated': setting == 'rotated',
                         'group': service, 'TP': tp, 'FN': fn, 'FP': fp, 'TN': tn,
                         'PPV': ppv, 'TPR': tpr, 'TNR': tnr, 'AUC': auc_value})
    return rows
