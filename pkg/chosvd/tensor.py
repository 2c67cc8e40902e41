"""Dense complex third-order tensors.

Storage is a single Fortran-ordered buffer, so the mode-1 index varies
fastest: entry (i1, i2, i3) lives at i1 + I1*i2 + I1*I2*i3 (0-based).

Mode-n unfoldings put the mode-n fibers in columns. The remaining two modes
index the columns in ascending order with the earlier mode varying fastest:

    mode 1: column = i2 + I2*i3
    mode 2: column = i1 + I1*i3
    mode 3: column = i1 + I1*i2

Modes are numbered 1, 2, 3 as in the usual tensor notation.
"""
import numpy as np

from chosvd.errors import DataError, UsageError

ComplexMatrix = np.ndarray

MODES = (1, 2, 3)


class ComplexTensor3:
    """Immutable I1 x I2 x I3 complex array."""

    __slots__ = ('_data',)

    def __init__(self, data, check_finite=True):
        array = np.array(data, dtype=np.complex128, order='F', copy=True)
        if array.ndim != 3 or min(array.shape) < 1:
            raise UsageError(f'expected a non-empty third-order array, got shape {array.shape}')
        if check_finite and not np.all(np.isfinite(array)):
            raise DataError('tensor has non-finite entries')
        array.flags.writeable = False
        self._data = array

    @classmethod
    def from_buffer(cls, buffer, dims):
        """Builds a tensor from its linear buffer (mode-1 index fastest)."""
        dims = _check_dims(dims)
        buffer = np.asarray(buffer, dtype=np.complex128).ravel()
        if buffer.size != int(np.prod(dims)):
            raise UsageError(f'buffer of length {buffer.size} does not match dims {dims}')
        return cls(buffer.reshape(dims, order='F'))

    @classmethod
    def zeros(cls, dims):
        return cls(np.zeros(_check_dims(dims), dtype=np.complex128))

    @property
    def data(self):
        return self._data

    @property
    def dims(self):
        return tuple(int(d) for d in self._data.shape)

    @property
    def buffer(self):
        return self._data.ravel(order='F')

    def subject_slice(self, index):
        """The I1 x I2 matrix of the index-th mode-3 slice."""
        return self._data[:, :, index]

    def take_subjects(self, indices):
        return ComplexTensor3(self._data[:, :, np.asarray(indices, dtype=int)], check_finite=False)

    def __eq__(self, other):
        if not isinstance(other, ComplexTensor3):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self.dims, self._data.tobytes()))

    def __repr__(self):
        return f'ComplexTensor3(dims={self.dims})'


def _check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f'dims must be three positive integers, got {dims}')
    return dims


def _check_mode(mode):
    if mode not in MODES:
        raise UsageError(f'mode must be one of {MODES}, got {mode!r}')
    return mode - 1


def _as_array(t):
    return t.data if isinstance(t, ComplexTensor3) else np.asarray(t, dtype=np.complex128)


def unfold(t, mode):
    """Mode-`mode` unfolding, shape (I_mode, product of the other two dims)."""
    axis = _check_mode(mode)
    data = _as_array(t)
    return np.moveaxis(data, axis, 0).reshape((data.shape[axis], -1), order='F')


def fold(m, mode, dims):
    """Inverse of `unfold` for the same mode and dims."""
    axis = _check_mode(mode)
    dims = _check_dims(dims)
    m = np.asarray(m, dtype=np.complex128)
    others = [d for i, d in enumerate(dims) if i != axis]
    expected = (dims[axis], others[0] * others[1])
    if m.shape != expected:
        raise UsageError(f'matrix of shape {m.shape} cannot be folded along mode {mode} '
                         f'into dims {dims} (expected {expected})')
    moved = m.reshape((dims[axis], *others), order='F')
    return ComplexTensor3(np.moveaxis(moved, 0, axis), check_finite=False)


def mode_product(t, m, mode):
    """t x_mode m: contracts mode `mode` of t with the columns of m."""
    axis = _check_mode(mode)
    m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    dims = t.dims if isinstance(t, ComplexTensor3) else np.shape(t)
    if m.shape[1] != dims[axis]:
        raise UsageError(f'matrix with {m.shape[1]} columns cannot multiply mode {mode} '
                         f'of size {dims[axis]}')
    new_dims = list(dims)
    new_dims[axis] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, new_dims)


def multi_mode_product(t, matrices, conjugate_transpose=False):
    """Applies one matrix per mode in order 1, 2, 3; None skips a mode."""
    result = t
    for mode, m in zip(MODES, matrices):
        if m is None:
            continue
        result = mode_product(result, m.conj().T if conjugate_transpose else m, mode)
    return result


def frobenius_norm(t):
    return float(np.linalg.norm(_as_array(t).ravel()))
