import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import FD_TOL, max_rel_error, numerical_grad
from freezenet import layers as L
from freezenet.errors import DomainError, ShapeError
from freezenet.optim import SGD, AdamW, AdamWState, adamw_step, sgd_step, softmax_cross_entropy
from freezenet.tensor import Rng

logit_arrays = hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 6)), elements=st.floats(-50, 50))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        res = softmax_cross_entropy(np.zeros((1, 4)), [2])
        assert res.loss == pytest.approx(math.log(4), abs=1e-15)

    def test_confident_prediction(self):
        res = softmax_cross_entropy(np.array([[10.0, -10.0]]), [0])
        expected = math.log1p(math.exp(-20.0))
        assert res.loss == pytest.approx(expected, rel=1e-9)
        p_wrong = math.exp(-20.0) / (1 + math.exp(-20.0))
        assert res.grad_logits[0, 0] == pytest.approx(-p_wrong, rel=1e-9)
        assert res.grad_logits[0, 1] == pytest.approx(p_wrong, rel=1e-9)
        assert abs(res.grad_logits.sum()) < 1e-12

    def test_gradient_signs(self):
        g = softmax_cross_entropy(np.array([[10.0, -10.0]]), [0]).grad_logits[0]
        # grad = softmax - onehot: negative on the target, positive elsewhere
        assert g[0] < 0 < g[1]

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        logits = r.standard_normal((3, 5)) * 3
        targets = r.integers(0, 5, 3)
        res = softmax_cross_entropy(logits, targets)
        fd = numerical_grad(lambda: softmax_cross_entropy(logits, targets).loss, logits)
        assert max_rel_error(res.grad_logits, fd) < FD_TOL

    def test_sum_is_sum_of_rows(self, rng):
        logits = rng.standard_normal((4, 3))
        targets = np.array([0, 1, 2, 1])
        total = softmax_cross_entropy(logits, targets).loss
        rows = sum(softmax_cross_entropy(logits[i : i + 1], targets[i : i + 1]).loss for i in range(4))
        assert total == pytest.approx(rows, rel=1e-14)

    def test_mean_reduction(self, rng):
        logits = rng.standard_normal((4, 3))
        targets = np.array([0, 1, 2, 1])
        s = softmax_cross_entropy(logits, targets, "sum")
        m = softmax_cross_entropy(logits, targets, "mean")
        assert m.loss == pytest.approx(s.loss / 4)
        assert np.allclose(m.grad_logits, s.grad_logits / 4)

    def test_target_out_of_range(self):
        with pytest.raises(DomainError):
            softmax_cross_entropy(np.zeros((1, 3)), [3])
        with pytest.raises(DomainError):
            softmax_cross_entropy(np.zeros((1, 3)), [-1])

    @settings(max_examples=60, deadline=None)
    @given(logit_arrays, st.data())
    def test_row_sums_zero(self, logits, data):
        targets = data.draw(hnp.arrays(np.int64, logits.shape[0], elements=st.integers(0, logits.shape[1] - 1)))
        g = softmax_cross_entropy(logits, targets).grad_logits
        assert np.all(np.abs(g.sum(axis=1)) < 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(logit_arrays, st.floats(-1e3, 1e3), st.data())
    def test_shift_invariance(self, logits, shift, data):
        targets = data.draw(hnp.arrays(np.int64, logits.shape[0], elements=st.integers(0, logits.shape[1] - 1)))
        a = softmax_cross_entropy(logits, targets).loss
        b = softmax_cross_entropy(logits + shift, targets).loss
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_extreme_logits_finite(self):
        res = softmax_cross_entropy(np.array([[1e300, -1e300, 0.0]]), [1])
        assert np.isfinite(res.loss) and np.all(np.isfinite(res.grad_logits))


def make_param(value, grad, frozen=None):
    return L.Param("p", np.array(value, dtype=float), np.array(grad, dtype=float), frozen)


class TestSGD:
    def test_zero_grad(self):
        p = make_param([1.0, 2.0], [0.0, 0.0])
        sgd_step([p], 0.1)
        assert np.array_equal(p.value, [1.0, 2.0])

    def test_arithmetic(self):
        p = make_param([1.0], [2.0])
        sgd_step([p], 0.1)
        assert p.value[0] == pytest.approx(0.8, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_step([make_param([1.0, 2.0], [1.0])], 0.1)

    def test_masked_entries_unchanged(self, rng):
        mask = L.make_mask(6, 6, 0.5, "frozen", 4)
        w0 = rng.standard_normal((6, 6))
        p = L.Param("W", w0.copy(), L.apply_mask_to_grad(rng.standard_normal((6, 6)), mask), ~mask.keep)
        sgd_step([p], 0.3)
        assert np.array_equal(p.value[~mask.keep], w0[~mask.keep])
        assert np.all(p.value[mask.keep] != w0[mask.keep])


def reference_adam(p, grads, lr, b1, b2, eps):
    """Textbook Adam written out per scalar."""
    p = [float(v) for v in p]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    trace = []
    for t, g in enumerate(grads, start=1):
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1**t)
            vh = v[i] / (1 - b2**t)
            p[i] -= lr * mh / (math.sqrt(vh) + eps)
        trace.append(list(p))
    return trace


class TestAdamW:
    def test_zero_grad_no_decay(self):
        p = make_param([1.0, -2.0], [0.0, 0.0])
        state = AdamWState.for_params([p], weight_decay=0.0)
        for _ in range(5):
            adamw_step(state, [p])
        assert np.array_equal(p.value, [1.0, -2.0])

    def test_first_step_magnitude(self):
        p = make_param([0.0], [1.0])
        state = AdamWState.for_params([p], weight_decay=0.0)
        adamw_step(state, [p])
        # m_hat = v_hat = 1 after bias correction: |delta| = lr / (1 + eps)
        assert p.value[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)

    def test_decoupled_decay(self):
        p = make_param([2.0], [0.0])
        state = AdamWState.for_params([p], lr=0.1, weight_decay=0.5)
        adamw_step(state, [p])
        assert p.value[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0, abs=1e-15)

    def test_matches_adam_reference_without_decay(self):
        r = np.random.default_rng(8)
        p0 = r.standard_normal(4)
        grads = r.standard_normal((10, 4))
        p = make_param(p0, np.zeros(4))
        state = AdamWState.for_params([p], lr=0.01, weight_decay=0.0)
        trace = []
        for g in grads:
            p.grad = g.copy()
            adamw_step(state, [p])
            trace.append(p.value.copy())
        expected = reference_adam(p0, grads, 0.01, 0.9, 0.999, 1e-8)
        assert np.allclose(trace, expected, rtol=1e-13, atol=1e-15)

    def test_frozen_entry_survives_100_steps(self, rng):
        mask = L.make_mask(5, 5, 0.5, "frozen", 2)
        w0 = rng.standard_normal((5, 5))
        p = L.Param("W", w0.copy(), None, ~mask.keep)
        opt = AdamW([p])
        for _ in range(100):
            raw = rng.standard_normal((5, 5))  # nonzero pre-mask gradient everywhere
            p.grad = L.apply_mask_to_grad(raw, mask)
            opt.step()
        assert np.array_equal(p.value[~mask.keep], w0[~mask.keep])
        assert np.all(opt.state.m[0][~mask.keep] == 0.0)
        assert np.all(opt.state.v[0][~mask.keep] == 0.0)
        assert np.all(p.value[mask.keep] != w0[mask.keep])

    def test_unknown_hyper(self):
        with pytest.raises(DomainError):
            AdamWState.for_params([], momentum=0.9)

    def test_shape_mismatch(self):
        p = make_param([1.0, 2.0], [1.0, 1.0])
        state = AdamWState.for_params([p])
        p.grad = np.ones(3)
        with pytest.raises(ShapeError):
            adamw_step(state, [p])


@pytest.mark.parametrize("opt_cls", [SGD, AdamW])
def test_t0_trajectory_identical_to_plain_dense(opt_cls):
    r = np.random.default_rng(0)
    x = r.standard_normal((40, 6))
    y = r.integers(0, 3, 40)
    plain = L.Dense(6, 3, Rng(5))
    frozen = L.FrozenDense(6, 3, Rng(5), L.make_mask(3, 6, 0.0, "frozen", 1))
    opts = [opt_cls(layer.params(), lr=0.05) for layer in (plain, frozen)]
    for step in range(30):
        idx = slice(step % 5 * 8, step % 5 * 8 + 8)
        for layer, opt in zip((plain, frozen), opts):
            res = softmax_cross_entropy(layer.forward(x[idx], training=True), y[idx])
            layer.backward(res.grad_logits)
            opt.step()
        assert plain.W.value.tobytes() == frozen.W.value.tobytes()
        assert plain.b.value.tobytes() == frozen.b.value.tobytes()


@pytest.mark.parametrize("opt_cls", [SGD, AdamW])
def test_t1_only_bias_learns(opt_cls):
    r = np.random.default_rng(1)
    x = r.standard_normal((16, 5))
    y = r.integers(0, 2, 16)
    layer = L.FrozenDense(5, 2, Rng(3), L.make_mask(2, 5, 1.0, "frozen", 1))
    w0, b0 = layer.W.value.copy(), layer.b.value.copy()
    opt = opt_cls(layer.params(), lr=0.1)
    for _ in range(20):
        res = softmax_cross_entropy(layer.forward(x, training=True), y)
        layer.backward(res.grad_logits)
        opt.step()
    assert np.array_equal(layer.W.value, w0)
    assert not np.array_equal(layer.b.value, b0)
