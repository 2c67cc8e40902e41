"""Synthetic cohorts with planted factor structure.

Each subject slice is a weighted sum of rank-one components
w_k * z_k[p] * a_k b_k^T. The multivariate factors a_k are columns of the
unitary DFT matrix (the designated component gets the all-in-phase column),
the temporal factors b_k are orthonormalized analytic pulses, and every
component shares the subject phase exp(i*theta_p) except the designated one,
which also carries a class-dependent offset. The real part of the noisy
slices goes through the same preprocessing as ingested data, so an exported
synthetic cohort re-ingests to the same tensor.

Equal channel energies make standardization a no-op on noise-free data, so
the planted spans survive preprocessing unchanged.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from chosvd.errors import UsageError
from chosvd.linalg import phase_fix
from chosvd.signals import complexify
from chosvd.tensor import ComplexTensor3
from data.cohort.dataset import DEFAULT_CHANNELS, Cohort, Service, SubjectRecord

logger = logging.getLogger(__name__)

SEVERE_PAIN = 6.0
MILD_PAIN = 2.0


@dataclass(frozen=True)
class SynthSpec:
    dims: tuple = (8, 75, 60)
    planted_ranks: tuple = (4, 4)
    weights: tuple = None
    designated: int = 1
    class_offsets: tuple = (-np.pi / 2, np.pi / 2)
    jitter: float = 0.1
    subject_phase_spread: float = 0.0
    noise: float = 0.2
    severe_fraction: float = 0.5
    services: tuple = ('other',)
    standardized: bool = True
    seed: int = 0

    @property
    def n_components(self):
        return min(self.planted_ranks)

    def component_weights(self):
        if self.weights is None:
            return 0.75 ** np.arange(self.n_components)
        return np.asarray(self.weights, dtype=float)

    def validate(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise UsageError(f'dims must be three positive sizes, got {self.dims}')
        i1, i2, i3 = self.dims
        k = self.n_components
        if len(self.planted_ranks) != 2 or k < 1:
            raise UsageError(f'planted_ranks must be two positive ranks, got {self.planted_ranks}')
        if k > i1:
            raise UsageError(f'{k} planted components do not fit in {i1} channels')
        if k > (i2 - 1) // 2:
            raise UsageError(f'{k} planted components need at least {2 * k + 1} samples, got {i2}')
        if i3 < 2:
            raise UsageError('a synthetic cohort needs at least two subjects')
        if not 0 <= self.designated < k:
            raise UsageError(f'designated component {self.designated} outside 0..{k - 1}')
        w = self.component_weights()
        if w.shape != (k,) or np.any(w <= 0):
            raise UsageError(f'weights must be {k} positive numbers, got {self.weights}')
        if len(self.class_offsets) != 2:
            raise UsageError('class_offsets needs one offset per class')
        if self.noise < 0 or self.jitter < 0 or self.subject_phase_spread < 0:
            raise UsageError('noise, jitter and subject_phase_spread must be nonnegative')
        if not 0.0 < self.severe_fraction < 1.0:
            raise UsageError(f'severe_fraction must be in (0, 1), got {self.severe_fraction}')
        n_severe = int(round(self.severe_fraction * i3))
        if not 1 <= n_severe <= i3 - 1:
            raise UsageError(f'severe_fraction {self.severe_fraction} leaves a class empty '
                             f'with {i3} subjects')
        unknown = [s for s in self.services if s not in {v.value for v in Service}]
        if not self.services or unknown:
            raise UsageError(f"unknown services {unknown}; choose from {[v.value for v in Service]}")
        return self


@dataclass
class SynthTruth:
    """Planted factors: multivariate (I1 x K), temporal (I2 x K), subject
    loadings (I3 x K), component weights after scaling, and the index of
    the class-carrying component."""
    multivariate: np.ndarray
    temporal: np.ndarray
    subject: np.ndarray
    weights: np.ndarray
    designated: int
    labels: np.ndarray = field(repr=False)


def _multivariate_factors(n_channels, k, designated):
    frequencies = [f for f in range(1, k)]
    frequencies.insert(designated, 0)
    i = np.arange(n_channels)[:, None]
    return np.exp(2j * np.pi * i * np.asarray(frequencies)[None, :] / n_channels) / np.sqrt(n_channels)


def _temporal_factors(n_samples, k):
    bins = np.arange(1, (n_samples - 1) // 2 + 1)
    t = np.arange(n_samples)[:, None]
    peaks = ((np.arange(k) + 0.5) * n_samples / k).astype(int)
    pulses = np.stack([np.exp(2j * np.pi * bins[None, :] * (t - t0) / n_samples).sum(axis=1)
                       for t0 in peaks], axis=1)
    q, _ = np.linalg.qr(pulses)
    return phase_fix(q)


def synth_cohort(spec):
    """Returns (cohort, labels, truth); cohort.tensor is the preprocessed
    complex tensor, deterministic given spec.seed."""
    spec.validate()
    i1, i2, i3 = spec.dims
    k = spec.n_components
    rng = np.random.default_rng(spec.seed)

    n_severe = int(round(spec.severe_fraction * i3))
    labels = rng.permutation(np.r_[np.ones(n_severe, dtype=int), np.zeros(i3 - n_severe, dtype=int)])
    theta = rng.uniform(-spec.subject_phase_spread, spec.subject_phase_spread, size=i3)
    jitter = spec.jitter * rng.standard_normal(i3)

    a = _multivariate_factors(i1, k, spec.designated)
    b = _temporal_factors(i2, k)
    z = np.repeat(np.exp(1j * theta)[:, None], k, axis=1)
    offsets = np.asarray(spec.class_offsets, dtype=float)[labels]
    z[:, spec.designated] *= np.exp(1j * (offsets + jitter))

    # unit variance per channel series before noise
    w = spec.component_weights()
    w = w * np.sqrt(2.0 * i1 * i2 / np.sum(w ** 2))
    planted = np.einsum('ik,jk,pk,k->ijp', a, b, z, w)

    noise = rng.standard_normal(planted.shape) + 1j * rng.standard_normal(planted.shape)
    if spec.noise > 0:
        planted = planted + spec.noise * np.linalg.norm(planted) / np.linalg.norm(noise) * noise

    channels = list(DEFAULT_CHANNELS) if i1 == len(DEFAULT_CHANNELS) else [f'ch{c + 1}' for c in range(i1)]
    series = np.real(planted)
    data = np.empty(planted.shape, dtype=np.complex128)
    for p in range(i3):
        for c, name in enumerate(channels):
            data[c, :, p] = complexify(series[c, :, p], channel=name, standardized=spec.standardized)

    subjects = []
    for p in range(i3):
        pain = SEVERE_PAIN if labels[p] else MILD_PAIN
        sid = f'S{p + 1:03d}'
        subjects.append(SubjectRecord(id=sid, service=spec.services[p % len(spec.services)],
                                      series_path=f'series/{sid}.csv',
                                      pain_day30=pain, pain_day90=pain))

    logger.info('synthesized %d subjects (%d severe), dims %s, noise %.2f, seed %d',
                i3, n_severe, spec.dims, spec.noise, spec.seed)
    truth = SynthTruth(multivariate=a, temporal=b, subject=z, weights=w,
                       designated=spec.designated, labels=labels)
    cohort = Cohort(tensor=ComplexTensor3(data), subjects=subjects, channels=channels)
    return cohort, labels, truth
