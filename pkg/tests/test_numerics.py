"""Tensor/tape engine tests: hand-computed cases, independent oracles, and
finite-difference verification of every primitive the model uses."""

import numpy as np
import numpy.testing as npt
import pytest

from taskdrop.numerics import (
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    activation,
    add,
    affine_pair,
    backward,
    cross_entropy_logits,
    elementwise,
    embedding_lookup,
    finite_difference_check,
    matmul,
    mul,
    reshape,
    sigmoid,
    sub,
    tanh,
    tensor_sum,
    timestep,
)


def naive_matmul(a, b):
    """Triple-loop reference product, independent of numpy's matmul."""
    rows, inner = len(a), len(a[0])
    cols = len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return np.array(out)


class TestMatmul:
    def test_identity(self):
        m = [[1.0, 2.0], [3.0, 4.0]]
        out = matmul(Tensor(np.eye(2)), Tensor(m))
        npt.assert_array_equal(out.data, m)

    def test_unit_vector_selection(self):
        out = matmul(Tensor([[1.0, 0.0]]), Tensor([[5.0], [7.0]]))
        npt.assert_array_equal(out.data, [[5.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        out = matmul(Tensor(a), Tensor(b))
        npt.assert_allclose(out.data, naive_matmul(a.tolist(), b.tolist()), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("rows,inner,cols", [(1, 1, 1), (2, 3, 5), (16, 16, 16), (7, 1, 9)])
    def test_oracle_agreement_across_sizes(self, rows, inner, cols):
        rng = np.random.default_rng(rows * 100 + inner * 10 + cols)
        a = rng.normal(size=(rows, inner))
        b = rng.normal(size=(inner, cols))
        out = matmul(Tensor(a), Tensor(b))
        npt.assert_allclose(out.data, naive_matmul(a.tolist(), b.tolist()), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))

    def test_gradients(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(2, 3)))
        b = Tensor(rng.normal(size=(3, 4)))
        err = finite_difference_check(lambda: tensor_sum(mul(matmul(a, b), matmul(a, b))), [a, b])
        assert err < 1e-6


class TestElementwise:
    def test_mul_binary_mask_semantics(self):
        out = mul(Tensor([1.0, 2.0, 3.0]), Tensor([1.0, 0.0, 1.0]))
        npt.assert_array_equal(out.data, [1.0, 0.0, 3.0])

    def test_add_identity(self):
        x = np.array([0.5, -1.5, 2.0])
        out = add(Tensor(x), Tensor(np.zeros(3)))
        npt.assert_array_equal(out.data, x)

    def test_mul_gradient_is_other_factor(self):
        a, b = Tensor([2.0]), Tensor([3.0])
        with Tape() as tape:
            loss = tensor_sum(mul(a, b))
        backward(tape, loss)
        npt.assert_array_equal(a.grad, [3.0])
        npt.assert_array_equal(b.grad, [2.0])

    def test_dispatcher(self):
        a, b = Tensor([4.0]), Tensor([1.0])
        npt.assert_array_equal(elementwise("add", a, b).data, [5.0])
        npt.assert_array_equal(elementwise("sub", a, b).data, [3.0])
        npt.assert_array_equal(elementwise("mul", a, b).data, [4.0])
        with pytest.raises(ValueError):
            elementwise("div", a, b)

    def test_broadcast_over_batch_axis(self):
        y = Tensor(np.ones((4, 3)))
        v = Tensor([1.0, 0.0, 2.0])
        with Tape() as tape:
            loss = tensor_sum(mul(y, v))
        backward(tape, loss)
        npt.assert_array_equal(y.grad, np.tile([1.0, 0.0, 2.0], (4, 1)))
        npt.assert_array_equal(v.grad, [4.0, 4.0, 4.0])

    def test_incompatible_shapes(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
        with pytest.raises(ShapeError):
            mul(Tensor(np.ones(3)), Tensor(np.ones(5)))

    def test_shared_gradient_not_aliased(self):
        # Both parents of an add see the same upstream array; accumulating
        # into one must not corrupt the other.
        x = Tensor([1.0, 2.0])
        with Tape() as tape:
            s = add(x, x)
            loss = tensor_sum(s)
        backward(tape, loss)
        npt.assert_array_equal(x.grad, [2.0, 2.0])


class TestActivations:
    def test_sigmoid_at_zero(self):
        assert sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_tanh_at_zero(self):
        assert tanh(Tensor([0.0])).data[0] == 0.0

    def test_sigmoid_derivative_at_zero(self):
        x = Tensor([0.0])
        with Tape() as tape:
            loss = tensor_sum(sigmoid(x))
        backward(tape, loss)
        h = 1e-5

        def s(v):
            return 1.0 / (1.0 + np.exp(-v))

        central = (s(h) - s(-h)) / (2 * h)
        assert abs(x.grad[0] - 0.25) < 1e-12
        assert abs(x.grad[0] - central) < 1e-8

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = sigmoid(Tensor([-1000.0, 1000.0]))
        npt.assert_allclose(out.data, [0.0, 1.0], atol=1e-12)
        assert np.isfinite(out.data).all()

    def test_dispatcher(self):
        x = Tensor([0.3])
        assert activation("sigmoid", x).data[0] == sigmoid(Tensor([0.3])).data[0]
        assert activation("tanh", x).data[0] == tanh(Tensor([0.3])).data[0]
        with pytest.raises(ValueError):
            activation("relu", x)

    @pytest.mark.parametrize("fn", [sigmoid, tanh])
    def test_gradients_match_finite_differences(self, fn):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(3, 4)))
        err = finite_difference_check(lambda: tensor_sum(fn(x)), [x])
        assert err < 1e-8


class TestCrossEntropy:
    def test_uniform_softmax(self):
        loss = cross_entropy_logits(Tensor([[0.0, 0.0]]), [0])
        assert abs(loss.item() - np.log(2.0)) < 1e-12

    def test_stabilized_against_large_logits(self):
        loss = cross_entropy_logits(Tensor([[1000.0, 0.0]]), [0])
        assert np.isfinite(loss.item())
        assert loss.item() < 1e-12

    def test_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(7)
        logits = Tensor(rng.normal(size=(5, 3)))
        labels = np.array([0, 2, 1, 1, 0])
        with Tape() as tape:
            loss = cross_entropy_logits(logits, labels)
        backward(tape, loss)
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        onehot = np.zeros_like(probs)
        onehot[np.arange(5), labels] = 1.0
        npt.assert_allclose(logits.grad, (probs - onehot) / 5, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        logits = Tensor(rng.normal(size=(4, 3)))
        labels = np.array([2, 0, 1, 2])
        err = finite_difference_check(lambda: cross_entropy_logits(logits, labels), [logits])
        assert err < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy_logits(Tensor([[0.0, 0.0]]), [2])
        with pytest.raises(IndexError):
            cross_entropy_logits(Tensor([[0.0, 0.0]]), [-1])

    def test_batch_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy_logits(Tensor([[0.0, 0.0]]), [0, 1])


class TestBackward:
    def test_masked_path_gets_zero_gradient(self):
        x = Tensor([5.0, -2.0])
        with Tape() as tape:
            loss = tensor_sum(mul(x, Tensor([1.0, 0.0])))
        backward(tape, loss)
        npt.assert_array_equal(x.grad, [1.0, 0.0])
        assert x.grad[1] == 0.0

    def test_constant_loss_leaves_grads_zero(self):
        x = Tensor([1.0, 2.0])
        with Tape() as tape:
            _ = mul(x, x)  # reachable from nothing
            loss = tensor_sum(Tensor([3.0]))
        backward(tape, loss)
        assert x.grad is None  # exactly zero: never touched

    def test_loss_not_on_tape_is_a_usage_error(self):
        x = Tensor([1.0])
        with Tape() as tape:
            _ = mul(x, x)
        stray = tensor_sum(Tensor([1.0]))
        with pytest.raises(TapeError):
            backward(tape, stray)

    def test_nonscalar_loss_rejected(self):
        x = Tensor([1.0, 2.0])
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(TapeError):
            backward(tape, y)

    def test_untraced_ops_record_nothing(self):
        x = Tensor([1.0, 2.0])
        y = mul(x, x)
        assert y.grad is None and x.grad is None

    def test_reused_tensor_accumulates_both_paths(self):
        x = Tensor([2.0])
        with Tape() as tape:
            loss = tensor_sum(add(mul(x, x), mul(x, Tensor([3.0]))))
        backward(tape, loss)
        npt.assert_allclose(x.grad, [2 * 2.0 + 3.0])


class TestStructuralOps:
    def test_reshape_roundtrip_gradient(self):
        x = Tensor(np.arange(6, dtype=float).reshape(2, 3))
        with Tape() as tape:
            loss = tensor_sum(mul(reshape(x, (3, 2)), Tensor(np.ones((3, 2)))))
        backward(tape, loss)
        npt.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_reshape_bad_size(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.ones((2, 3))), (4, 2))

    def test_timestep_selects_and_scatters(self):
        x = Tensor(np.arange(24, dtype=float).reshape(2, 3, 4))
        out = timestep(x, 1)
        npt.assert_array_equal(out.data, x.data[:, 1, :])
        with Tape() as tape:
            loss = tensor_sum(timestep(x, 2))
        backward(tape, loss)
        expected = np.zeros((2, 3, 4))
        expected[:, 2, :] = 1.0
        npt.assert_array_equal(x.grad, expected)

    def test_timestep_bounds(self):
        x = Tensor(np.ones((2, 3, 4)))
        with pytest.raises(IndexError):
            timestep(x, 3)
        with pytest.raises(ShapeError):
            timestep(Tensor(np.ones((2, 3))), 0)

    def test_embedding_lookup_gathers_and_scatters(self):
        table = Tensor(np.arange(12, dtype=float).reshape(4, 3))
        tokens = np.array([[0, 2], [2, 3]])
        out = embedding_lookup(table, tokens)
        npt.assert_array_equal(out.data, table.data[tokens])
        with Tape() as tape:
            loss = tensor_sum(embedding_lookup(table, tokens))
        backward(tape, loss)
        expected = np.zeros((4, 3))
        expected[0] = 1.0
        expected[2] = 2.0  # token 2 appears twice
        expected[3] = 1.0
        npt.assert_array_equal(table.grad, expected)

    def test_embedding_lookup_range_check(self):
        table = Tensor(np.ones((4, 3)))
        with pytest.raises(IndexError):
            embedding_lookup(table, [[0, 4]])


class TestAffinePair:
    def test_matches_composed_ops(self):
        rng = np.random.default_rng(19)
        x, w = Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(3, 4)))
        h, u = Tensor(rng.normal(size=(5, 2))), Tensor(rng.normal(size=(2, 4)))
        b = Tensor(rng.normal(size=4))
        fused = affine_pair(x, w, h, u, b)
        composed = add(add(matmul(x, w), matmul(h, u)), b)
        npt.assert_array_equal(fused.data, composed.data)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(23)
        x, w = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(2, 3)))
        h, u = Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))
        b = Tensor(rng.normal(size=3))
        err = finite_difference_check(
            lambda: tensor_sum(tanh(affine_pair(x, w, h, u, b))), [x, w, h, u, b]
        )
        assert err < 1e-6

    def test_shape_errors(self):
        ok = lambda *s: Tensor(np.ones(s))
        with pytest.raises(ShapeError):
            affine_pair(ok(2, 3), ok(4, 5), ok(2, 4), ok(4, 5), ok(5))
        with pytest.raises(ShapeError):
            affine_pair(ok(2, 3), ok(3, 5), ok(2, 4), ok(4, 6), ok(5))
        with pytest.raises(ShapeError):
            affine_pair(ok(2, 3), ok(3, 5), ok(2, 4), ok(4, 5), ok(4))


class TestRequiresGrad:
    def test_constants_collect_no_gradient(self):
        x = Tensor([1.0, 2.0])
        c = Tensor([3.0, 4.0], requires_grad=False)
        with Tape() as tape:
            loss = tensor_sum(mul(x, c))
        backward(tape, loss)
        npt.assert_array_equal(x.grad, [3.0, 4.0])
        assert c.grad is None

    def test_constant_only_subgraphs_skip_the_tape(self):
        a = Tensor([1.0], requires_grad=False)
        b = Tensor([2.0], requires_grad=False)
        with Tape() as tape:
            out = mul(a, b)
        assert len(tape) == 0
        assert not out.requires_grad

    def test_coerced_values_are_constants(self):
        z = Tensor([0.25])
        with Tape() as tape:
            loss = tensor_sum(sub(1.0, z))
        backward(tape, loss)
        npt.assert_array_equal(z.grad, [-1.0])


class TestFiniteDifferenceCheck:
    def test_quadratic_is_nearly_exact(self):
        x = Tensor([3.0])
        err = finite_difference_check(lambda: tensor_sum(mul(x, x)), [x])
        assert err < 1e-8

    def test_linear_model_cross_entropy(self):
        rng = np.random.default_rng(21)
        w = Tensor(rng.normal(size=(4, 3)) * 0.5)
        b = Tensor(rng.normal(size=3) * 0.1)
        x = Tensor(rng.normal(size=(6, 4)))
        labels = rng.integers(0, 3, 6)
        err = finite_difference_check(
            lambda: cross_entropy_logits(add(matmul(x, w), b), labels), [w, b]
        )
        assert err < 1e-6

    def test_rejects_bad_step(self):
        x = Tensor([1.0])
        with pytest.raises(ValueError):
            finite_difference_check(lambda: tensor_sum(x), [x], h=0.0)


class TestThreadIsolation:
    def test_independent_tapes_in_parallel_threads(self):
        import threading

        rng = np.random.default_rng(33)
        inputs = [rng.normal(size=(4, 4)) for _ in range(8)]

        def grad_of(data):
            x = Tensor(data)
            with Tape() as tape:
                loss = tensor_sum(mul(sigmoid(x), x))
            backward(tape, loss)
            return x.grad

        serial = [grad_of(d) for d in inputs]
        results = [None] * len(inputs)

        def worker(i):
            results[i] = grad_of(inputs[i])

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(len(inputs))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for a, b in zip(serial, results):
            npt.assert_array_equal(a, b)


class TestTensorBasics:
    def test_row_major_float64(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.data.dtype == np.float64
        assert t.data.flags["C_CONTIGUOUS"]

    def test_ops_on_finite_inputs_stay_finite(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(8, 8)) * 30)
        b = Tensor(rng.normal(size=(8, 8)) * 30)
        for out in (matmul(a, b), add(a, b), sub(a, b), mul(a, b), sigmoid(a), tanh(a)):
            assert np.isfinite(out.data).all()

    def test_operator_sugar_matches_functions(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        npt.assert_array_equal((a @ b).data, matmul(a, b).data)
        c = Tensor([1.0, 2.0])
        npt.assert_array_equal((c + c).data, add(c, c).data)
        npt.assert_array_equal((c - c).data, sub(c, c).data)
        npt.assert_array_equal((c * c).data, mul(c, c).data)
