"""Complex SVD built on a cyclic Jacobi Hermitian eigensolver.

The default path diagonalizes the smaller Gram matrix (m m^H or m^H m) and
recovers the other factor from m. When the smallest Gram eigenvalue is at
the rounding floor (or below 1/cond^2 with cond = 1e8), or the recovered
factor is not orthonormal, the factorization is redone with one-sided
(Hestenes) Jacobi on m itself, which keeps small singular values accurate.

Outputs are made deterministic: singular values are sorted nonincreasing
with ties kept in original column order, and every left singular vector is
rotated so that its largest-modulus entry is real and positive (the right
vector gets the same rotation).
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from chosvd.errors import ConvergenceError, DataError, UsageError

logger = logging.getLogger(__name__)

TOL = 1e-12
MAX_SWEEPS = 100
COND_LIMIT = 1e8
# Gram eigenvalues below this many n*eps*lambda_max are rounding noise
GRAM_FLOOR = 10.0
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def rank(self, tol=None):
        if self.S.size == 0:
            return 0
        if tol is None:
            tol = max(self.U.shape[0], self.V.shape[0]) * np.finfo(float).eps * self.S[0]
        return int(np.sum(self.S > tol))

    def reconstruct(self):
        return (self.U * self.S) @ self.V.conj().T


def _rotation(app, aqq, apq):
    """2x2 unitary J with J^H [[app, apq], [conj(apq), aqq]] J diagonal."""
    r = abs(apq)
    e = apq / r
    tau = (aqq - app) / (2.0 * r)
    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    return np.array([[c, s], [-s * np.conj(e), c * np.conj(e)]])


def _off_norm(h):
    return np.linalg.norm(h - np.diag(np.diag(h)))


def jacobi_eigh(h, tol=TOL, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues, eigenvectors) with eigenvalues in the original
    diagonal order; callers sort. Converged when the off-diagonal Frobenius
    mass is at most `tol` times the Frobenius norm of h.
    """
    a = np.array(h, dtype=np.complex128)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise UsageError(f'expected a square matrix, got shape {a.shape}')
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(a)
    if scale == 0.0 or n == 1:
        return np.real(np.diag(a)).copy(), v

    threshold = tol * scale
    skip = np.finfo(float).eps * scale / n
    for sweep in range(max_sweeps):
        if _off_norm(a) <= threshold:
            return np.real(np.diag(a)).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                j = _rotation(a[p, p].real, a[q, q].real, apq)
                idx = [p, q]
                a[:, idx] = a[:, idx] @ j
                a[idx, :] = j.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, idx] = v[:, idx] @ j
    off = _off_norm(a)
    if off <= threshold:
        return np.real(np.diag(a)).copy(), v
    raise ConvergenceError(max_sweeps, off / scale, tol)


def _hestenes(g, tol=TOL, max_sweeps=MAX_SWEEPS):
    """One-sided Jacobi on the columns of g: returns (g @ Q, Q) with
    mutually orthogonal columns in g @ Q and Q unitary."""
    g = np.array(g, dtype=np.complex128)
    n = g.shape[1]
    q_acc = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(g)
    if scale == 0.0 or n == 1:
        return g, q_acc
    floor = (g.shape[0] * np.finfo(float).eps * scale) ** 2
    for sweep in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = np.vdot(g[:, p], g[:, p]).real
                beta = np.vdot(g[:, q], g[:, q]).real
                if alpha <= floor or beta <= floor:
                    continue
                gamma = np.vdot(g[:, p], g[:, q])
                cosine = abs(gamma) / np.sqrt(alpha * beta)
                worst = max(worst, cosine)
                if cosine <= tol:
                    continue
                j = _rotation(alpha, beta, gamma)
                idx = [p, q]
                g[:, idx] = g[:, idx] @ j
                q_acc[:, idx] = q_acc[:, idx] @ j
        if worst <= tol:
            return g, q_acc
    raise ConvergenceError(max_sweeps, worst, tol)


def complete_basis(u, size):
    """Extends the orthonormal columns of u to `size` orthonormal columns."""
    n, k = u.shape
    if size <= k:
        return u[:, :size]
    q, _ = np.linalg.qr(np.hstack([u, np.eye(n, dtype=np.complex128)]))
    extra = q[:, k:size]
    # qr may flip the signs of the leading columns; keep u verbatim
    return np.hstack([u, extra])


def phase_fix(u, v=None):
    """Rotates each column of u so its largest-modulus entry is real
    positive; applies the same unit-modulus factor to the columns of v."""
    u = np.array(u, dtype=np.complex128)
    if u.size == 0:
        return (u, v) if v is not None else u
    pivots = np.argmax(np.abs(u), axis=0)
    anchors = u[pivots, np.arange(u.shape[1])]
    factors = np.ones(u.shape[1], dtype=np.complex128)
    nonzero = np.abs(anchors) > 0
    factors[nonzero] = np.abs(anchors[nonzero]) / anchors[nonzero]
    u = u * factors
    if v is None:
        return u
    return u, np.asarray(v, dtype=np.complex128) * factors


def _normalized_columns(g, s, rank_tol):
    """Columns of g scaled to unit norm where s is above rank_tol; the rest
    are replaced by an orthonormal completion."""
    good = s > rank_tol
    u = g[:, good] / s[good]
    return complete_basis(u, s.size) if good.sum() < s.size else u


def _sorted(u, s, v):
    order = np.argsort(-s, kind='stable')
    return u[:, order], s[order], v[:, order]


def _gram_svd(m, tol, max_sweeps):
    rows, cols = m.shape
    wide = rows <= cols
    gram = m @ m.conj().T if wide else m.conj().T @ m
    evals, evecs = jacobi_eigh(gram, tol=tol, max_sweeps=max_sweeps)
    order = np.argsort(-evals, kind='stable')
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    n = evals.size
    floor = max(evals[0] / COND_LIMIT ** 2, GRAM_FLOOR * n * np.finfo(float).eps * evals[0])
    if evals[0] == 0.0 or evals[-1] <= floor:
        return None
    s = np.sqrt(evals)
    if wide:
        u = evecs
        v = recovered = (m.conj().T @ u) / s
    else:
        v = evecs
        u = recovered = (m @ v) / s
    if np.linalg.norm(recovered.conj().T @ recovered - np.eye(n)) > ORTHO_TOL:
        return None
    return u, s, v


def _one_sided_svd(m, tol, max_sweeps):
    rows, cols = m.shape
    wide = rows < cols
    g, q = _hestenes(m.conj().T if wide else m, tol=tol, max_sweeps=max_sweeps)
    s = np.linalg.norm(g, axis=0)
    rank_tol = max(g.shape) * np.finfo(float).eps * (s.max() if s.size else 0.0)
    order = np.argsort(-s, kind='stable')
    g, s, q = g[:, order], s[order], q[:, order]
    left = _normalized_columns(g, s, rank_tol)
    if wide:
        return q, s, left
    return left, s, q


def complex_svd(m, method='jacobi', tol=TOL, max_sweeps=MAX_SWEEPS):
    """Thin SVD m = U diag(S) V^H with k = min(rows, cols) columns.

    method='jacobi' uses the Gram/Jacobi scheme described in the module
    docstring; method='lapack' defers to numpy.linalg.svd. Both apply the
    same ordering and phase-fix.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    if m.ndim != 2 or m.size == 0:
        raise UsageError(f'expected a non-empty matrix, got shape {m.shape}')
    if not np.all(np.isfinite(m)):
        raise DataError('matrix has non-finite entries')

    if method == 'lapack':
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        u, s, v = _sorted(u, s, vh.conj().T)
    elif method == 'jacobi':
        result = _gram_svd(m, tol, max_sweeps)
        if result is None:
            logger.debug('Gram matrix ill-conditioned for shape %s, using one-sided Jacobi', m.shape)
            result = _one_sided_svd(m, tol, max_sweeps)
        u, s, v = _sorted(*result)
    else:
        raise UsageError(f'unknown SVD method {method!r}')

    u, v = phase_fix(u, v)
    return SvdResult(U=u, S=s, V=v)


def low_rank_approx(m, r, method='jacobi'):
    """Sum of the top-r rank-one terms sigma_k u_k v_k^H."""
    m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    k = min(m.shape)
    if not 1 <= int(r) <= k:
        raise UsageError(f'rank must be between 1 and {k}, got {r}')
    svd = complex_svd(m, method=method)
    r = int(r)
    return (svd.U[:, :r] * svd.S[:r]) @ svd.V[:, :r].conj().T


def subspace_distance(a, b):
    """Largest principal angle (radians) between the column spaces of a and b."""
    return float(np.max(subspace_angles(np.asarray(a), np.asarray(b))))
