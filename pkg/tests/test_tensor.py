import itertools

import numpy as np
import pytest

from chosvd.errors import DataError, UsageError
from chosvd.tensor import (ComplexTensor3, fold, frobenius_norm, mode_product,
                           multi_mode_product, unfold)


def naive_unfold(x, mode):
    i1, i2, i3 = x.shape
    if mode == 1:
        out = np.zeros((i1, i2 * i3), dtype=complex)
        for a, b, c in itertools.product(range(i1), range(i2), range(i3)):
            out[a, b + i2 * c] = x[a, b, c]
    elif mode == 2:
        out = np.zeros((i2, i1 * i3), dtype=complex)
        for a, b, c in itertools.product(range(i1), range(i2), range(i3)):
            out[b, a + i1 * c] = x[a, b, c]
    else:
        out = np.zeros((i3, i1 * i2), dtype=complex)
        for a, b, c in itertools.product(range(i1), range(i2), range(i3)):
            out[c, a + i1 * b] = x[a, b, c]
    return out


def naive_mode_product(x, m, mode):
    dims = list(x.shape)
    dims[mode - 1] = m.shape[0]
    out = np.zeros(dims, dtype=complex)
    for idx in itertools.product(*(range(d) for d in dims)):
        total = 0j
        for k in range(x.shape[mode - 1]):
            src = list(idx)
            src[mode - 1] = k
            total += m[idx[mode - 1], k] * x[tuple(src)]
        out[idx] = total
    return out


def integer_tensors():
    rng = np.random.default_rng(7)
    for dims in itertools.product(range(1, 5), repeat=3):
        yield rng.integers(-3, 4, size=dims) + 1j * rng.integers(-3, 4, size=dims)


def test_buffer_layout_is_mode_one_fastest():
    t = ComplexTensor3.from_buffer(np.arange(24), (2, 3, 4))
    assert t.data[1, 0, 0] == 1
    assert t.data[0, 1, 0] == 2
    assert t.data[0, 0, 1] == 6
    np.testing.assert_array_equal(t.buffer, np.arange(24))


def test_tensor_is_immutable():
    t = ComplexTensor3(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        t.data[0, 0, 0] = 5


def test_rejects_bad_shapes_and_values():
    with pytest.raises(UsageError):
        ComplexTensor3(np.ones((2, 2)))
    with pytest.raises(UsageError):
        ComplexTensor3.from_buffer(np.ones(7), (2, 2, 2))
    with pytest.raises(DataError):
        ComplexTensor3(np.full((2, 2, 2), np.nan))


def test_unfold_matches_loops_exactly():
    for x in integer_tensors():
        for mode in (1, 2, 3):
            np.testing.assert_array_equal(unfold(ComplexTensor3(x), mode), naive_unfold(x, mode))


def test_fold_inverts_unfold():
    for x in integer_tensors():
        t = ComplexTensor3(x)
        for mode in (1, 2, 3):
            assert fold(unfold(t, mode), mode, t.dims) == t


def test_mode_product_matches_loops_exactly():
    rng = np.random.default_rng(3)
    for x in integer_tensors():
        for mode in (1, 2, 3):
            m = rng.integers(-2, 3, size=(2, x.shape[mode - 1])) + 1j * rng.integers(-2, 3, size=(2, x.shape[mode - 1]))
            got = mode_product(ComplexTensor3(x), m, mode).data
            np.testing.assert_array_equal(got, naive_mode_product(x, m, mode))


def test_mode_product_shape_mismatch():
    t = ComplexTensor3(np.ones((2, 3, 4)))
    with pytest.raises(UsageError):
        mode_product(t, np.ones((2, 5)), 2)
    with pytest.raises(UsageError):
        unfold(t, 4)
    with pytest.raises(UsageError):
        fold(np.ones((3, 3)), 1, (2, 3, 4))


def test_unitary_products_preserve_norm():
    rng = np.random.default_rng(0)
    x = ComplexTensor3(rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5)))
    qs = [np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))[0] for n in x.dims]
    y = multi_mode_product(x, qs)
    assert frobenius_norm(y) == pytest.approx(frobenius_norm(x), rel=1e-12)
    back = multi_mode_product(y, qs, conjugate_transpose=True)
    np.testing.assert_allclose(back.data, x.data, atol=1e-12)


def test_take_subjects_and_equality():
    x = ComplexTensor3(np.arange(12).reshape(2, 2, 3))
    sub = x.take_subjects([2, 0])
    np.testing.assert_array_equal(sub.subject_slice(0), x.subject_slice(2))
    assert sub.dims == (2, 2, 2)
    assert x == ComplexTensor3(np.arange(12).reshape(2, 2, 3))
    assert hash(x) == hash(ComplexTensor3(np.arange(12).reshape(2, 2, 3)))
