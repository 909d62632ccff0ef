"""Tensor op semantics and reverse-mode gradients against finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphamix import autodiff as ad
from alphamix.autodiff import ShapeError, Tensor2, UsageError
from alphamix.gradcheck import max_relative_error


def triple_loop_matmul(a, b):
    """Independent oracle: hand-coded triple loop."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor2([[1.0, 2.0], [3.0, 4.0]])
        eye = Tensor2(np.eye(2))
        assert np.array_equal(ad.matmul(a, eye).data, a.data)

    def test_hand_product(self):
        out = ad.matmul(Tensor2([[1.0, 2.0]]), Tensor2([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_against_triple_loop(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = ad.matmul(Tensor2(a), Tensor2(b)).data
        assert np.abs(got - triple_loop_matmul(a, b)).max() < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.matmul(Tensor2(np.ones((2, 3))), Tensor2(np.ones((2, 3))))


class TestSoftmax:
    def test_symmetry(self):
        assert ad.softmax(Tensor2([[0.0, 0.0]])).data.tolist() == [[0.5, 0.5]]

    def test_large_equal_logits(self):
        assert ad.softmax(Tensor2([[1000.0, 1000.0]])).data.tolist() == [[0.5, 0.5]]

    def test_closed_form(self):
        out = ad.softmax(Tensor2([[math.log(3.0), math.log(1.0)]])).data
        assert np.abs(out - [[0.75, 0.25]]).max() < 1e-12

    @given(st.lists(st.floats(min_value=-500, max_value=500), min_size=2, max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_sums_to_one_and_keeps_argmax(self, logits):
        row = np.array([logits])
        out = ad.softmax(Tensor2(row)).data
        assert abs(out.sum() - 1.0) <= 1e-12
        # the input's argmax position attains the output maximum (ties allowed)
        assert out[0, row.argmax()] == out.max()
        assert (out >= 0).all() and (out <= 1).all()

    @given(st.lists(st.floats(min_value=-15, max_value=15), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_open_interval_for_moderate_logits(self, logits):
        out = ad.softmax(Tensor2(np.array([logits]))).data
        assert (out > 0).all() and (out < 1).all()


class TestBackward:
    def test_sum_of_parameters_gives_ones(self):
        p = Tensor2(np.arange(6.0).reshape(2, 3), requires_grad=True)
        loss = ad.tsum(p)
        loss.backward()
        assert np.array_equal(p.grad, np.ones((2, 3)))

    def test_least_squares_closed_form(self):
        # loss = 0.5 * ||W x - y||^2  =>  dW = (W x - y) x^T
        rng = np.random.default_rng(3)
        w = Tensor2(rng.normal(size=(3, 4)), requires_grad=True)
        x = Tensor2(rng.normal(size=(4, 1)))
        y = rng.normal(size=(3, 1))
        resid = ad.matmul(w, x) - Tensor2(y)
        loss = ad.tsum(resid * resid) * 0.5
        loss.backward()
        expected = (w.data @ x.data - y) @ x.data.T
        assert np.abs(w.grad - expected).max() < 1e-12

    def test_backward_needs_recorded_forward(self):
        with pytest.raises(UsageError):
            Tensor2([[1.0]]).backward()

    def test_backward_needs_scalar(self):
        p = Tensor2(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(UsageError):
            (p * 2.0).backward()

    def test_no_grad_disables_recording(self):
        p = Tensor2(np.ones((1, 1)), requires_grad=True)
        with ad.no_grad():
            loss = p * 3.0
        with pytest.raises(UsageError):
            loss.backward()


def _fd_check(build, params):
    err = max_relative_error(build, params)
    assert err < 1e-4, f"finite-difference mismatch: {err}"


class TestPrimitiveGradients:
    """Every primitive op against central finite differences."""

    def setup_method(self):
        self.rng = np.random.default_rng(11)

    def _param(self, shape):
        return Tensor2(self.rng.normal(size=shape), requires_grad=True)

    def test_add_sub_mul_div_broadcast(self):
        a = self._param((3, 4))
        b = self._param((1, 4))
        c = self._param((3, 1))
        d = self._param((1, 1))
        pos = Tensor2(np.abs(self.rng.normal(size=(3, 4))) + 1.0, requires_grad=True)

        _fd_check(lambda: ad.tsum((a + b) * c - d), [a, b, c, d])
        _fd_check(lambda: ad.tsum(a / pos), [a, pos])

    def test_linear_and_transpose(self):
        x = self._param((5, 3))
        w = self._param((2, 3))
        b = self._param((1, 2))
        _fd_check(lambda: ad.tsum(ad.linear(x, w, b)), [x, w, b])
        _fd_check(lambda: ad.tsum(ad.transpose(x) * 2.0), [x])

    def test_reductions(self):
        a = self._param((4, 3))
        _fd_check(lambda: ad.tmean(a * a), [a])
        _fd_check(lambda: ad.tsum(ad.tmean(a, axis=0)), [a])
        _fd_check(lambda: ad.tsum(ad.tmean(a, axis=1) * ad.tmean(a, axis=1)), [a])

    def test_nonlinearities(self):
        a = self._param((4, 3))
        _fd_check(lambda: ad.tsum(ad.sigmoid(a)), [a])
        _fd_check(lambda: ad.tsum(ad.leaky_relu(a)), [a])
        _fd_check(lambda: ad.tsum(ad.softmax(a) * ad.softmax(a)), [a])
        _fd_check(lambda: ad.tsum(ad.logsumexp(a)), [a])
        _fd_check(lambda: ad.tsum(ad.exp(a * 0.1)), [a])
        pos = Tensor2(np.abs(self.rng.normal(size=(3, 3))) + 0.5, requires_grad=True)
        _fd_check(lambda: ad.tsum(ad.log(pos)), [pos])

    def test_minimum_concat_col_clip(self):
        a = self._param((4, 2))
        b = self._param((4, 2))
        _fd_check(lambda: ad.tsum(ad.minimum(a, b)), [a, b])
        _fd_check(lambda: ad.tsum(ad.concat_cols([a, b]) * 3.0), [a, b])
        _fd_check(lambda: ad.tsum(ad.col(a, 1) * ad.col(b, 0)), [a, b])
        wide = Tensor2(self.rng.uniform(-3, 3, size=(4, 3)), requires_grad=True)
        _fd_check(lambda: ad.tsum(ad.clip(wide, -1.0, 1.0) * wide), [wide])

    def test_cross_entropy_and_mse(self):
        logits = self._param((6, 2))
        labels = self.rng.integers(0, 2, size=6)
        _fd_check(lambda: ad.cross_entropy_logits(logits, labels), [logits])
        pred = self._param((6, 1))
        target = Tensor2(self.rng.normal(size=(6, 1)))
        _fd_check(lambda: ad.mse(pred, target), [pred])


class TestDeterminism:
    def test_same_input_bitwise_identical(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(8, 8))
        b = rng.normal(size=(8, 8))
        one = ad.softmax(ad.matmul(Tensor2(a), Tensor2(b))).data
        two = ad.softmax(ad.matmul(Tensor2(a), Tensor2(b))).data
        assert np.array_equal(one, two)

    def test_finiteness_preserved(self):
        rng = np.random.default_rng(9)
        x = Tensor2(rng.normal(size=(4, 4)) * 100)
        out = ad.softmax(ad.leaky_relu(ad.matmul(x, x)))
        assert np.isfinite(out.data).all()
