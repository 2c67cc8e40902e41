"""Phase features: projection of each subject's response onto the rank-one
patterns u1_a o u2_b, optional conjugate rotation by the subject factors,
phase extraction and Fisher ranking."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import circmean, circstd

from chosvd.errors import UsageError

logger = logging.getLogger(__name__)

PHASE_EPS = 1e-12
FISHER_EPS = 1e-12


@dataclass
class PhaseFeatureMatrix:
    coeffs: np.ndarray
    phases: np.ndarray
    feature_index: list
    rotated: bool = False
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(self.coeffs.shape, dtype=bool)
        if len(set(self.feature_index)) != len(self.feature_index):
            raise UsageError('feature_index entries must be unique')

    @property
    def n_subjects(self):
        return self.coeffs.shape[0]

    @property
    def n_features(self):
        return self.coeffs.shape[1]

    def labels(self):
        """1-based a_b labels for exported tables."""
        return [f'a{a + 1}_b{b + 1}' for a, b in self.feature_index]

    def take(self, rows):
        rows = np.asarray(rows, dtype=int)
        return PhaseFeatureMatrix(self.coeffs[rows], self.phases[rows], self.feature_index,
                                  self.rotated, self.degenerate[rows])


def feature_grid(r1, r2):
    """(a, b) pairs in feature order: a varies slowest."""
    return [(a, b) for a in range(r1) for b in range(r2)]


def _check_pair(u1, u2, a, b):
    if not (0 <= a < u1.shape[1] and 0 <= b < u2.shape[1]):
        raise UsageError(f'component pair ({a}, {b}) outside the {u1.shape[1]} x {u2.shape[1]} grid')


def project(slice_, u1, u2, a, b, normalized=False):
    """u1_a^H . slice . conj(u2_b), the inner product of an I1 x I2 response
    with the rank-one pattern u1_a o u2_b."""
    slice_ = np.asarray(slice_, dtype=np.complex128)
    _check_pair(u1, u2, a, b)
    coeff = np.conj(u1[:, a]) @ slice_ @ np.conj(u2[:, b])
    if normalized:
        norm = np.linalg.norm(slice_)
        coeff = coeff / norm if norm > 0 else 0j
    return complex(coeff)


def project_cohort(t, u1, u2, normalized=False):
    """Projection coefficients for every subject and every (a, b) pair,
    shape (subjects, R1*R2) in `feature_grid` order."""
    data = t.data
    coeffs = np.einsum('ia,ijp,jb->pab', u1.conj(), data, u2.conj())
    if normalized:
        norms = np.linalg.norm(data.reshape(-1, data.shape[2], order='F'), axis=0)
        norms[norms == 0] = 1.0
        coeffs = coeffs / norms[:, None, None]
    return coeffs.reshape(data.shape[2], -1)


def core_coordinates(f):
    """sum_c s_{a,b,c} * U3[p, c]: the same coefficients computed from the
    core and subject factors instead of the data."""
    coords = np.einsum('abc,pc->pab', f.core.data, f.U3)
    return coords.reshape(coords.shape[0], -1)


def rotate_projection(coeff, subject_factor_entry, scale='full'):
    """coeff * conj(entry). scale='unit' rotates without rescaling."""
    entry = np.asarray(subject_factor_entry, dtype=np.complex128)
    if scale == 'unit':
        modulus = np.abs(entry)
        entry = np.divide(entry, modulus, out=np.zeros_like(entry), where=modulus > 0)
    elif scale != 'full':
        raise UsageError(f'unknown rotation scale {scale!r}')
    rotated = np.asarray(coeff) * np.conj(entry)
    return complex(rotated) if np.ndim(rotated) == 0 else rotated


def rotation_entries(f, reference='leading'):
    """Subject-factor entry used to rotate every (subject, feature) cell.

    leading  -- column 0 of U3 for every feature
    dominant -- for feature (a, b), the U3 column c maximizing |s_{a,b,c}|
    """
    u3 = f.U3
    r1, r2 = f.core.dims[:2]
    if reference == 'leading':
        return np.repeat(u3[:, :1], r1 * r2, axis=1)
    if reference == 'dominant':
        dominant = np.argmax(np.abs(f.core.data), axis=2).reshape(-1)
        return u3[:, dominant]
    raise UsageError(f'unknown rotation reference {reference!r}')


def phase(coeff, eps=PHASE_EPS):
    """Principal argument in (-pi, pi] and a degenerate flag.

    Works elementwise on arrays; degenerate cells (modulus at most eps)
    get phase 0.
    """
    coeff = np.asarray(coeff, dtype=np.complex128)
    angles = np.angle(coeff)
    angles = np.where(angles <= -np.pi, np.pi, angles)
    degenerate = np.abs(coeff) <= eps
    angles = np.where(degenerate, 0.0, angles)
    if angles.ndim == 0:
        return float(angles), bool(degenerate)
    return angles, degenerate


def phase_features(t, f, rotate=False, projection='bilinear', reference='leading',
                   scale='full', eps=PHASE_EPS):
    """PhaseFeatureMatrix of every subject of t on the (U1, U2) grid of f."""
    if projection not in ('bilinear', 'normalized'):
        raise UsageError(f'unknown projection {projection!r}')
    coeffs = project_cohort(t, f.U1, f.U2, normalized=projection == 'normalized')
    if rotate:
        if f.U3.shape[0] != t.dims[2]:
            raise UsageError('rotation needs the subject factors of this very cohort')
        coeffs = rotate_projection(coeffs, rotation_entries(f, reference), scale=scale)
    phases, degenerate = phase(coeffs, eps=eps)
    if degenerate.any():
        logger.warning('%d of %d projection coefficients have modulus <= %.0e; '
                       'their phases are set to 0', int(degenerate.sum()), degenerate.size, eps)
    grid = feature_grid(f.U1.shape[1], f.U2.shape[1])
    return PhaseFeatureMatrix(coeffs=coeffs, phases=phases, feature_index=grid,
                              rotated=bool(rotate), degenerate=degenerate)


def _check_labels(features, labels):
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels).astype(int).ravel()
    if features.shape[0] != labels.size:
        raise UsageError(f'{features.shape[0]} feature rows but {labels.size} labels')
    if not (labels == 1).any() or not (labels == 0).any():
        raise UsageError('Fisher scores need both classes present')
    return features, labels


def fisher_scores(features, labels, circular=False, eps=FISHER_EPS):
    """(mu1 - mu0)^2 / (s1^2 + s0^2 + eps) per feature column.

    Linear variant: population means and variances. Circular variant: circular
    means, wrapped mean difference and squared circular standard deviations.
    """
    features, labels = _check_labels(features, labels)
    pos, neg = features[labels == 1], features[labels == 0]
    if circular:
        mu1 = circmean(pos, high=np.pi, low=-np.pi, axis=0)
        mu0 = circmean(neg, high=np.pi, low=-np.pi, axis=0)
        diff = np.angle(np.exp(1j * (mu1 - mu0)))
        var1 = circstd(pos, high=np.pi, low=-np.pi, axis=0) ** 2
        var0 = circstd(neg, high=np.pi, low=-np.pi, axis=0) ** 2
    else:
        diff = pos.mean(axis=0) - neg.mean(axis=0)
        var1 = pos.var(axis=0)
        var0 = neg.var(axis=0)
    return diff ** 2 / (var1 + var0 + eps)


def select_top_k(scores, k=3):
    """Indices of the k largest scores; ties go to the lower index."""
    scores = np.asarray(scores, dtype=float).ravel()
    if not 1 <= k <= scores.size:
        raise UsageError(f'k must be between 1 and {scores.size}, got {k}')
    return np.argsort(-scores, kind='stable')[:k]


def feature_table(pfm, subject_ids, selected, labels=None):
    """One row per subject: id, optional label, then the selected phases."""
    selected = list(selected)
    names = [pfm.labels()[j] for j in selected]
    table = pd.DataFrame(pfm.phases[:, selected], columns=names)
    if labels is not None:
        table.insert(0, 'label', np.asarray(labels).astype(int))
    table.insert(0, 'subject', list(subject_ids))
    return table
