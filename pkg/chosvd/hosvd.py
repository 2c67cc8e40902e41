"""Truncated complex higher-order SVD of a third-order tensor.

    X ~= S x1 U1 x2 U2 x3 U3,    S = X x1 U1^H x2 U2^H x3 U3^H

U1 holds the multivariate factors (channels), U2 the temporal factors and
U3 the subject factors. Each U(n) is made of the leading left singular
vectors of the mode-n unfolding, with the phase-fix of chosvd.linalg.
"""
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from chosvd.errors import UsageError
from chosvd.linalg import complete_basis, complex_svd
from chosvd.tensor import MODES, ComplexTensor3, frobenius_norm, multi_mode_product, unfold

logger = logging.getLogger(__name__)

DEFAULT_RANKS = (4, 32, None)
DEFAULT_ENERGY = 0.95


@dataclass(frozen=True)
class HosvdFactors:
    factors: tuple
    core: ComplexTensor3
    mode_singular_values: tuple

    @property
    def U1(self):
        return self.factors[0]

    @property
    def U2(self):
        return self.factors[1]

    @property
    def U3(self):
        return self.factors[2]

    @property
    def ranks(self):
        return self.core.dims

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.factors)


def energy_ranks(spectra, tau=DEFAULT_ENERGY):
    """Smallest rank per mode whose squared singular values reach a
    fraction `tau` of that mode's total."""
    if not 0.0 < tau <= 1.0:
        raise UsageError(f'energy fraction must be in (0, 1], got {tau}')
    ranks = []
    for s in spectra:
        energy = np.cumsum(np.asarray(s, dtype=float) ** 2)
        if energy[-1] == 0.0:
            ranks.append(1)
            continue
        ranks.append(int(np.searchsorted(energy / energy[-1], tau - 1e-12) + 1))
    return tuple(ranks)


def resolve_ranks(dims, ranks):
    """Turns a ranks spec into three integers; None means the full mode size."""
    if ranks is None:
        ranks = (None, None, None)
    ranks = tuple(ranks)
    if len(ranks) != 3:
        raise UsageError(f'expected three ranks, got {ranks}')
    resolved = []
    for mode, (size, rank) in enumerate(zip(dims, ranks), start=1):
        if rank is None or rank == 'full':
            rank = size
        if isinstance(rank, bool) or not isinstance(rank, (int, np.integer)):
            raise UsageError(f'rank for mode {mode} must be an integer or full, got {rank!r}')
        if not 1 <= rank <= size:
            raise UsageError(f'rank {rank} for mode {mode} is outside 1..{size}')
        resolved.append(int(rank))
    return tuple(resolved)


def _mode_svd(t, mode, method):
    svd = complex_svd(unfold(t, mode), method=method)
    return svd.U, svd.S


def _padded(s, size):
    out = np.zeros(max(size, s.size))
    out[:s.size] = s
    return out


def hosvd(t, ranks=DEFAULT_RANKS, energy=None, sequential=False, method='jacobi', n_jobs=1):
    """Truncated HOSVD.

    ranks    -- three entries, each an int or None/'full'
    energy   -- if given, ranks come from `energy_ranks` with this fraction
                and `ranks` is ignored
    sequential -- compute each mode's SVD on the tensor already projected on
                the previous modes (sequentially truncated HOSVD)
    """
    if not isinstance(t, ComplexTensor3):
        t = ComplexTensor3(t)
    dims = t.dims
    if energy is None:
        ranks = resolve_ranks(dims, ranks)

    if sequential:
        if energy is not None:
            raise UsageError('energy-based ranks are not supported with sequential truncation')
        factors, spectra = [], []
        current = t
        for mode in MODES:
            u, s = _mode_svd(current, mode, method)
            u = complete_basis(u, ranks[mode - 1])
            factors.append(u)
            spectra.append(_padded(s, dims[mode - 1]))
            current = multi_mode_product(current, [u if m == mode else None for m in MODES],
                                         conjugate_transpose=True)
        core = current
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_mode_svd)(t, mode, method) for mode in MODES)
        spectra = [_padded(s, size) for (_, s), size in zip(results, dims)]
        if energy is not None:
            ranks = energy_ranks(spectra, energy)
            logger.info('energy %.3f selects ranks %s', energy, ranks)
        factors = [complete_basis(u, rank) for (u, _), rank in zip(results, ranks)]
        core = multi_mode_product(t, factors, conjugate_transpose=True)

    return HosvdFactors(factors=tuple(factors), core=core,
                        mode_singular_values=tuple(spectra))


def reconstruct(f):
    for mode, (u, r) in enumerate(zip(f.factors, f.core.dims), start=1):
        if u.shape[1] != r:
            raise UsageError(f'factor {mode} has {u.shape[1]} columns but the core has {r}')
    return multi_mode_product(f.core, f.factors)


def reconstruction_error(f, t):
    """Relative Frobenius error of the reconstruction."""
    norm = frobenius_norm(t)
    residual = t.data - reconstruct(f).data
    error = float(np.linalg.norm(residual.ravel()))
    return error / norm if norm > 0 else error


def truncation_bound(f):
    """Upper bound on the squared reconstruction error: discarded squared
    singular values summed over the three modes."""
    return float(sum(np.sum(s[r:] ** 2) for s, r in zip(f.mode_singular_values, f.core.dims)))


def factor_portrait(u):
    """Magnitude and phase (in [0, 2*pi)) of every element of every column.

    Returns a list with one (magnitude, phase) pair of arrays per column.
    """
    u = np.asarray(u)
    phases = np.mod(np.angle(u), 2 * np.pi)
    return [(np.abs(u[:, j]), phases[:, j]) for j in range(u.shape[1])]
