import numpy as np
import pytest

from c2q import numerics as nm
from c2q.numerics import Rng, Tensor


def test_linear_identity():
    x = Tensor([1.0, 2.0, 3.0])
    w = Tensor(np.eye(3))
    b = Tensor(np.zeros(3))
    y = nm.linear(x, w, b)
    assert np.allclose(y.data, [1.0, 2.0, 3.0])


def test_linear_hand_example():
    x = Tensor([1.0, 2.0])
    w = Tensor([[1.0, 1.0], [0.0, 1.0]])
    b = Tensor([0.0, 1.0])
    y = nm.linear(x, w, b)
    assert np.allclose(y.data, [3.0, 3.0])


def test_linear_backward_outer_product():
    x = Tensor([1.0, 2.0])
    w = Tensor([[0.5, -0.5], [1.5, 2.0]])
    y = nm.matmul(w, x)
    loss = nm.dot(y, Tensor([3.0, -1.0]))  # upstream grad g = [3, -1]
    loss.backward()
    assert np.allclose(w.grad, np.outer([3.0, -1.0], [1.0, 2.0]))


def test_linear_shape_mismatch_names_shapes():
    with pytest.raises(nm.ShapeError, match=r"\(2, 2\).*\(3,\)"):
        nm.matmul(Tensor(np.eye(2)), Tensor([1.0, 2.0, 3.0]))


def test_backward_accumulates_instead_of_overwriting():
    w = Tensor([[1.0, 0.0], [0.0, 1.0]])
    for _ in range(2):
        y = nm.matmul(w, Tensor([1.0, 1.0]))
        nm.sum_all(y).backward()
    assert np.allclose(w.grad, 2 * np.outer([1.0, 1.0], [1.0, 1.0]))


def test_softmax_uniform():
    p = nm.softmax(Tensor([1.0, 1.0, 1.0]))
    assert np.allclose(p.data, [1 / 3] * 3, atol=1e-6)


def test_softmax_hand_example():
    p = nm.softmax(Tensor([0.0, np.log(2.0)]))
    assert np.allclose(p.data, [1 / 3, 2 / 3], atol=1e-6)


def test_softmax_mask():
    p = nm.softmax(Tensor([5.0, 5.0]), mask=[True, False])
    assert np.allclose(p.data, [1.0, 0.0])


def test_softmax_all_masked_errors():
    with pytest.raises(ValueError):
        nm.softmax(Tensor([1.0, 2.0]), mask=[False, False])


def test_softmax_sum_and_nonneg_randomized():
    rng = Rng(3)
    for _ in range(50):
        v = Tensor(rng.uniform(-30, 30, 17))
        p = nm.softmax(v)
        assert abs(float(p.data.sum()) - 1.0) < 1e-6
        assert (p.data >= 0).all()


@pytest.mark.parametrize("x,expected", [
    (0.0, 0.5),
    (100.0, 1.0),
    (np.log(3.0), 0.75),
])
def test_sigmoid_values(x, expected):
    assert abs(float(nm.sigmoid(Tensor(x)).data) - expected) < 1e-6


def test_sigmoid_no_overflow():
    out = nm.sigmoid(Tensor([-1000.0, 1000.0]))
    assert np.allclose(out.data, [0.0, 1.0])


def test_lstm_cell_all_zeros():
    h = 4
    z = Tensor(np.zeros(h))
    w = Tensor(np.zeros((4 * h, h)))
    u = Tensor(np.zeros((4 * h, h)))
    b = Tensor(np.zeros(4 * h))
    hout, cout = nm.lstm_cell(z, z, z, w, u, b)
    assert np.allclose(hout.data, 0.0)
    assert np.allclose(cout.data, 0.0)


def test_lstm_cell_cprev_zero_forget_irrelevant():
    h = 3
    rng = Rng(5)
    w1 = Tensor(rng.uniform(-0.5, 0.5, (4 * h, h)))
    u = Tensor(rng.uniform(-0.5, 0.5, (4 * h, h)))
    x = Tensor(rng.uniform(-1, 1, h))
    hp = Tensor(rng.uniform(-1, 1, h))
    cz = Tensor(np.zeros(h))
    # bias on the forget gate changes f but must not change c when c_prev=0
    b1 = Tensor(np.zeros(4 * h))
    b2 = np.zeros(4 * h)
    b2[h:2 * h] = 5.0
    _, c1 = nm.lstm_cell(x, hp, cz, w1, u, b1)
    _, c2 = nm.lstm_cell(x, hp, cz, w1, u, Tensor(b2))
    assert np.allclose(c1.data, c2.data, atol=1e-6)


def test_lstm_cell_gradients_match_finite_differences():
    h = 4
    rng = Rng(11)
    with nm.use_dtype(np.float64):
        w = Tensor(rng.uniform(-0.3, 0.3, (4 * h, h)))
        u = Tensor(rng.uniform(-0.3, 0.3, (4 * h, h)))
        b = Tensor(rng.uniform(-0.3, 0.3, 4 * h))
        x = Tensor(rng.uniform(-1, 1, h))
        hp = Tensor(rng.uniform(-1, 1, h))
        cp = Tensor(rng.uniform(-1, 1, h))
        probe = Tensor(rng.uniform(-1, 1, h))

        def f():
            hout, _ = nm.lstm_cell(x, hp, cp, w, u, b)
            return nm.dot(hout, probe)

        err = nm.finite_diff_check(f, [w, u, b, x, hp, cp], epsilon=1e-5)
    assert err < 1e-3


def test_finite_diff_polynomial():
    x = Tensor(3.0)

    def f():
        return nm.mul(x, x)

    err = nm.finite_diff_check(f, [x], epsilon=1e-3)
    assert err < 1e-4


def test_finite_diff_constant():
    x = Tensor(2.0)

    def f():
        return nm.mul(x, Tensor(0.0))

    assert nm.finite_diff_check(f, [x]) == 0.0


def test_finite_diff_nonfinite_errors():
    x = Tensor(0.0)

    def f():
        return nm.log(x)

    with pytest.raises(ValueError):
        nm.finite_diff_check(f, [x])


def test_composed_graph_gradcheck():
    rng = Rng(21)
    with nm.use_dtype(np.float64):
        w = Tensor(rng.uniform(-0.5, 0.5, (5, 4)))
        x = Tensor(rng.uniform(-1, 1, 4))
        v = Tensor(rng.uniform(-1, 1, 5))

        def f():
            p = nm.softmax(nm.tanh(nm.matmul(w, x)))
            return nm.dot(nm.log(nm.clamp_min(p, 1e-12)), v)

        err = nm.finite_diff_check(f, [w, x, v], epsilon=1e-6)
    assert err < 1e-4


def test_deterministic_across_runs():
    def run():
        rng = Rng(123)
        w = Tensor(rng.uniform(-1, 1, (6, 6)))
        x = Tensor(rng.uniform(-1, 1, 6))
        y = nm.sum_all(nm.tanh(nm.matmul(w, x)))
        y.backward()
        return y.data.copy(), w.grad.copy()

    y1, g1 = run()
    y2, g2 = run()
    assert (y1 == y2).all() and (g1 == g2).all()


def test_rng_identical_seeds_identical_streams():
    a = Rng(7).uniform(0, 1, 100)
    b = Rng(7).uniform(0, 1, 100)
    assert (a == b).all()


def test_scatter_add_and_pad():
    v = Tensor([0.25, 0.5, 0.25])
    out = nm.scatter_add(v, [2, 0, 2], 4)
    assert np.allclose(out.data, [0.5, 0.0, 0.5, 0.0])
    nm.take_scalar(out, 2).backward()
    assert np.allclose(v.grad, [1.0, 0.0, 1.0])
    padded = nm.pad_zeros(Tensor([1.0, 2.0]), 4)
    assert np.allclose(padded.data, [1.0, 2.0, 0.0, 0.0])


def test_minimum_subgradient():
    a = Tensor([1.0, 5.0])
    b = Tensor([2.0, 3.0])
    nm.sum_all(nm.minimum(a, b)).backward()
    assert np.allclose(a.grad, [1.0, 0.0])
    assert np.allclose(b.grad, [0.0, 1.0])
