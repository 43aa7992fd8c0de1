import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from versebyte import autodiff as ad
from versebyte.autodiff import NonFiniteError, ShapeError, Tensor


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


# ---------------------------------------------------------------- basics

def test_tensor_defaults_to_float32():
    assert Tensor([1, 2, 3]).dtype == np.float32
    assert Tensor(np.zeros(2, dtype=np.float64)).dtype == np.float64
    assert Tensor(np.zeros(2, dtype=np.int64)).dtype == np.float32


def test_backward_requires_scalar():
    x = t64([1.0, 2.0])
    with pytest.raises(ShapeError):
        x.backward()


def test_gradient_accumulates_when_tensor_reused():
    x = t64([3.0])
    y = ad.add(ad.mul(x, x), x)  # x^2 + x, dy/dx = 2x + 1
    ad.tsum(y).backward()
    assert np.allclose(x.grad, [7.0])


def test_no_grad_blocks_tape():
    x = t64([2.0])
    with ad.no_grad():
        y = ad.mul(x, x)
    assert y._backward is None and not y.requires_grad


def test_debug_checks_flag_non_finite():
    ad.set_debug_checks(True)
    try:
        big = Tensor(np.array([1e308], dtype=np.float64), requires_grad=True)
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
            ad.mul(big, 1e10)
    finally:
        ad.set_debug_checks(False)


# ---------------------------------------------------------------- op oracles

def test_softmax_known_values():
    # softmax([ln 2, 0]) = [2, 1] / 3
    y = ad.softmax(t64([math.log(2.0), 0.0]))
    assert np.allclose(y.data, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)


def test_softmax_handles_large_logits():
    y = ad.softmax(t64([1000.0, 1000.0, -1000.0]))
    assert np.allclose(y.data, [0.5, 0.5, 0.0])
    assert np.all(np.isfinite(y.data))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_rows_are_distributions(values):
    y = ad.softmax(Tensor(np.array(values, dtype=np.float64))).data
    assert abs(y.sum() - 1.0) < 1e-9
    assert np.all(y >= 0.0)


def test_rms_norm_known_values():
    x = t64([3.0, 4.0])
    gain = t64([1.0, 1.0])
    out = ad.rms_norm(x, gain, eps=1e-6).data
    rms = math.sqrt((9.0 + 16.0) / 2.0 + 1e-6)
    assert np.allclose(out, [3.0 / rms, 4.0 / rms], atol=1e-9)
    assert np.allclose(out, [0.84852814, 1.13137085], atol=1e-6)


def test_rms_norm_zero_vector_is_finite():
    out = ad.rms_norm(t64([0.0, 0.0, 0.0]), t64([1.0, 1.0, 1.0]), eps=1e-6)
    assert np.allclose(out.data, 0.0)
    assert np.all(np.isfinite(out.data))


def test_rms_norm_no_mean_subtraction():
    # a constant vector keeps its sign pattern: pure scaling, no centering
    out = ad.rms_norm(t64([5.0, 5.0]), t64([1.0, 1.0]), eps=0.0).data
    assert np.allclose(out, [1.0, 1.0])


def test_gelu_known_values():
    x = t64([0.0, 1.0, -1.0])
    out = ad.gelu(x).data

    def ref(v):
        return 0.5 * v * (1.0 + math.tanh(math.sqrt(2.0 / math.pi)
                                          * (v + 0.044715 * v ** 3)))
    assert np.allclose(out, [ref(0.0), ref(1.0), ref(-1.0)], atol=1e-12)
    assert out[0] == 0.0


def test_embedding_scatter_gradient():
    table = t64(np.arange(12.0).reshape(4, 3))
    out = ad.embedding(table, np.array([0, 2, 0]))
    assert np.allclose(out.data, table.data[[0, 2, 0]])
    ad.tsum(out).backward()
    expected = np.zeros((4, 3))
    expected[0] = 2.0
    expected[2] = 1.0
    assert np.allclose(table.grad, expected)


def test_embedding_rejects_out_of_range():
    table = t64(np.zeros((4, 3)))
    with pytest.raises(IndexError):
        ad.embedding(table, np.array([4]))


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(t64([1.0, 2.0]), t64([[1.0], [2.0]]))
    with pytest.raises(ShapeError):
        ad.matmul(t64(np.zeros((2, 3))), t64(np.zeros((4, 2))))


@settings(max_examples=30)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_matmul_matches_numpy(n, k, m, b):
    rng = np.random.default_rng(n * 64 + k * 16 + m * 4 + b)
    a = rng.normal(size=(b, n, k))
    w = rng.normal(size=(k, m))
    out = ad.matmul(Tensor(a), Tensor(w)).data
    assert np.allclose(out, a @ w, atol=1e-12)


# ---------------------------------------------------------------- cross entropy

def test_cross_entropy_uniform_logits():
    logits = t64(np.zeros((1, 259)))
    loss = ad.cross_entropy(logits, np.array([17]))
    assert abs(loss.item() - math.log(259.0)) < 1e-12


def test_cross_entropy_ignores_masked_positions():
    logits = t64(np.zeros((3, 5)))
    targets = np.array([2, -1, 3])
    loss = ad.cross_entropy(logits, targets, ignore_id=-1)
    assert abs(loss.item() - math.log(5.0)) < 1e-12  # mean over the 2 real rows
    loss.backward()
    assert np.allclose(logits.grad[1], 0.0)  # ignored row gets no gradient


def test_cross_entropy_all_ignored_is_zero():
    logits = t64(np.zeros((2, 4)))
    loss = ad.cross_entropy(logits, np.array([-1, -1]), ignore_id=-1)
    assert loss.item() == 0.0
    loss.backward()
    assert logits.grad is None or np.allclose(logits.grad, 0.0)


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    logits = t64(np.zeros((1, 3)))
    loss = ad.cross_entropy(logits, np.array([0]))
    loss.backward()
    assert np.allclose(logits.grad, [[1.0 / 3.0 - 1.0, 1.0 / 3.0, 1.0 / 3.0]], atol=1e-12)


def test_cross_entropy_rejects_out_of_range_target():
    with pytest.raises(IndexError):
        ad.cross_entropy(t64(np.zeros((1, 3))), np.array([3]))


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.cross_entropy(t64(np.zeros((2, 3))), np.array([0]))


# ---------------------------------------------------------------- dropout

def test_dropout_identity_cases():
    x = t64([1.0, 2.0])
    assert ad.dropout(x, 0.0, np.random.default_rng(0)) is x
    assert ad.dropout(x, 0.5, None) is x


def test_dropout_masks_and_rescales():
    rng = np.random.default_rng(7)
    x = t64(np.ones(10000))
    out = ad.dropout(x, 0.25, rng).data
    kept = out != 0.0
    assert np.allclose(out[kept], 1.0 / 0.75)
    assert abs(kept.mean() - 0.75) < 0.03


# ---------------------------------------------------------------- grad checks

def _grad_check_single(fn, x):
    return ad.grad_check(lambda: fn(x), [x], eps=1e-6)


@pytest.mark.parametrize("name,fn", [
    ("add", lambda x: ad.tsum(ad.add(x, 0.5))),
    ("sub", lambda x: ad.tsum(ad.sub(1.5, x))),
    ("mul", lambda x: ad.tsum(ad.mul(x, x))),
    ("gelu", lambda x: ad.tsum(ad.gelu(x))),
    ("reshape", lambda x: ad.tsum(ad.reshape(x, (4,)))),
    ("swap", lambda x: ad.tsum(ad.swapaxes(x, 0, 1))),
    ("mean", lambda x: ad.tmean(ad.mul(x, x))),
])
def test_grad_check_elementwise(name, fn):
    rng = np.random.default_rng(hash(name) % 2 ** 31)
    x = t64(rng.normal(size=(2, 2)))
    assert _grad_check_single(fn, x) < 1e-4


def test_grad_check_softmax_weighted():
    rng = np.random.default_rng(5)
    x = t64(rng.normal(size=(3, 4)))
    w = rng.normal(size=(3, 4))

    def f():
        return ad.tsum(ad.mul(ad.softmax(x), Tensor(w)))
    assert ad.grad_check(f, [x], eps=1e-6) < 1e-4


def test_grad_check_rms_norm_both_inputs():
    rng = np.random.default_rng(6)
    x = t64(rng.normal(size=(2, 5)))
    gain = t64(rng.normal(size=(5,)))
    w = rng.normal(size=(2, 5))

    def f():
        return ad.tsum(ad.mul(ad.rms_norm(x, gain), Tensor(w)))
    assert ad.grad_check(f, [x, gain], eps=1e-6) < 1e-4


def test_grad_check_matmul_broadcast_batch():
    rng = np.random.default_rng(8)
    a = t64(rng.normal(size=(2, 3, 4)))
    b = t64(rng.normal(size=(4, 3)))
    w = rng.normal(size=(2, 3, 3))

    def f():
        return ad.tsum(ad.mul(ad.matmul(a, b), Tensor(w)))
    assert ad.grad_check(f, [a, b], eps=1e-6) < 1e-4


def test_grad_check_broadcast_add_gain():
    rng = np.random.default_rng(9)
    x = t64(rng.normal(size=(3, 4)))
    bias = t64(rng.normal(size=(4,)))
    w = rng.normal(size=(3, 4))

    def f():
        return ad.tsum(ad.mul(ad.add(x, bias), Tensor(w)))
    assert ad.grad_check(f, [x, bias], eps=1e-6) < 1e-4


def test_grad_check_cross_entropy():
    rng = np.random.default_rng(10)
    logits = t64(rng.normal(size=(4, 6)))
    targets = np.array([0, 5, -1, 2])

    def f():
        return ad.cross_entropy(logits, targets, ignore_id=-1)
    assert ad.grad_check(f, [logits], eps=1e-6) < 1e-4


def test_grad_check_composite_chain():
    rng = np.random.default_rng(11)
    x = t64(rng.normal(size=(2, 4)))
    w1 = t64(rng.normal(size=(4, 8)))
    w2 = t64(rng.normal(size=(8, 3)))
    gain = t64(np.ones(3))
    # project with fixed weights so no parameter direction is flat
    w = rng.normal(size=(2, 3))

    def f():
        h = ad.gelu(ad.matmul(x, w1))
        h = ad.rms_norm(ad.matmul(h, w2), gain)
        return ad.tsum(ad.mul(h, Tensor(w)))
    assert ad.grad_check(f, [x, w1, w2, gain], eps=1e-6) < 1e-4
