import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cobra import nn
from cobra.errors import NumericError, ParameterError, ShapeError
from cobra.nn import Param


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(nn.matmul(np.eye(2), a), a)


def test_matmul_hand_value():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[1.0], [1.0]])
    assert np.array_equal(nn.matmul(a, b), [[3.0], [7.0]])


def test_matmul_zero_annihilates():
    a = np.random.default_rng(0).normal(size=(3, 3))
    assert np.array_equal(nn.matmul(np.zeros((2, 3)), a), np.zeros((2, 3)))


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        nn.matmul(np.zeros((2, 3)), np.zeros((2, 2)))


@given(
    a=arrays(np.float64, (2, 3), elements=st.floats(-10, 10)),
    b=arrays(np.float64, (3, 4), elements=st.floats(-10, 10)),
    c=arrays(np.float64, (4, 2), elements=st.floats(-10, 10)),
)
@settings(max_examples=50, deadline=None)
def test_matmul_associative(a, b, c):
    lhs = nn.matmul(nn.matmul(a, b), c)
    rhs = nn.matmul(a, nn.matmul(b, c))
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_affine_forward_identity():
    y = nn.affine_forward(np.array([[1.0, 0.0]]), np.eye(2), np.zeros((1, 2)))
    assert np.array_equal(y, [[1.0, 0.0]])


def test_affine_forward_hand_value():
    y = nn.affine_forward(
        np.array([[1.0, 1.0]]), np.array([[1.0], [1.0]]), np.array([[1.0]])
    )
    assert np.allclose(y, [[3.0]])


def test_affine_forward_batch_shape():
    y = nn.affine_forward(np.zeros((2, 3)), np.zeros((3, 4)), np.zeros((1, 4)))
    assert y.shape == (2, 4)


def test_affine_backward_zero_upstream():
    gx, gw, gb = nn.affine_backward(np.ones((2, 3)), np.ones((3, 2)), np.zeros((2, 2)))
    assert not gx.any() and not gw.any() and not gb.any()


def test_affine_backward_scalar_chain_rule():
    gx, gw, gb = nn.affine_backward(
        np.array([[2.0]]), np.array([[3.0]]), np.array([[1.0]])
    )
    assert np.allclose(gx, [[3.0]]) and np.allclose(gw, [[2.0]]) and np.allclose(gb, [[1.0]])


def test_affine_backward_matches_finite_diff():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    w = Param("w", rng.normal(size=(4, 2)))
    b = Param("b", rng.normal(size=(1, 2)))
    upstream = rng.normal(size=(3, 2))
    _, gw, gb = nn.affine_backward(x, w.value, upstream)
    numeric = nn.finite_diff_grad(
        lambda: float(np.sum(nn.affine_forward(x, w.value, b.value) * upstream)),
        [w, b],
    )
    assert nn.max_rel_err(gw, numeric["w"]) < 1e-6
    assert nn.max_rel_err(gb, numeric["b"]) < 1e-6


def test_relu_definition():
    assert np.array_equal(nn.relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])


def test_relu_positive_identity():
    x = np.array([[0.5, 3.0]])
    assert np.array_equal(nn.relu(x), x)


def test_relu_backward_zero_at_kink():
    g = nn.relu_backward(np.array([[0.0, 1.0, -1.0]]), np.ones((1, 3)))
    assert np.array_equal(g, [[0.0, 1.0, 0.0]])


def test_dropout_eval_identity():
    x = np.random.default_rng(0).normal(size=(4, 5))
    y, mask = nn.dropout(x, 0.7, "eval", np.random.default_rng(1))
    assert np.array_equal(y, x)
    assert np.array_equal(mask, np.ones_like(x))


def test_dropout_p_zero_identity():
    x = np.ones((3, 3))
    y, _ = nn.dropout(x, 0.0, "train", np.random.default_rng(1))
    assert np.array_equal(y, x)


def test_dropout_survivor_fraction():
    x = np.ones((100, 1000))
    _, mask = nn.dropout(x, 0.5, "train", np.random.default_rng(2))
    assert abs(np.mean(mask > 0) - 0.5) < 0.01


def test_dropout_invalid_p():
    with pytest.raises(ParameterError):
        nn.dropout(np.ones((1, 1)), 1.0, "train", np.random.default_rng(0))
    with pytest.raises(ParameterError):
        nn.dropout(np.ones((1, 1)), -0.1, "train", np.random.default_rng(0))


def test_dropout_backward_linear_in_upstream():
    x = np.random.default_rng(3).normal(size=(5, 5))
    _, mask = nn.dropout(x, 0.4, "train", np.random.default_rng(3))
    u1 = np.random.default_rng(4).normal(size=(5, 5))
    u2 = np.random.default_rng(5).normal(size=(5, 5))
    assert np.allclose((u1 + 2 * u2) * mask, u1 * mask + 2 * (u2 * mask))


def test_sgd_step_direct_rule():
    p = Param("p", np.array([[1.0]]), np.array([[0.5]]))
    nn.sgd_step([p], 0.1)
    assert np.allclose(p.value, [[0.95]])


def test_sgd_step_zero_grad_fixed_point():
    p = Param("p", np.array([[2.0, -1.0]]))
    nn.sgd_step([p], 0.5)
    assert np.array_equal(p.value, [[2.0, -1.0]])


def test_sgd_two_half_steps_equal_one_double_step():
    grad = np.array([[0.25, -0.5]])
    p1 = Param("a", np.ones((1, 2)), grad.copy())
    p2 = Param("b", np.ones((1, 2)), grad.copy())
    nn.sgd_step([p1], 0.1)
    nn.sgd_step([p1], 0.1)
    nn.sgd_step([p2], 0.2)
    assert np.allclose(p1.value, p2.value)


def test_sgd_nonfinite_grad_names_param():
    p = Param("enc.w", np.ones((1, 1)), np.array([[np.nan]]))
    with pytest.raises(NumericError, match="enc.w"):
        nn.sgd_step([p], 0.1)


def test_finite_diff_quadratic():
    p = Param("theta", np.array([[3.0]]))
    g = nn.finite_diff_grad(lambda: float(p.value[0, 0] ** 2), [p])
    assert g["theta"][0, 0] == pytest.approx(6.0, abs=1e-4)


def test_finite_diff_constant():
    p = Param("theta", np.arange(4.0).reshape(2, 2))
    g = nn.finite_diff_grad(lambda: 1.5, [p])
    assert not g["theta"].any()


def test_finite_diff_linear_sum():
    p = Param("theta", np.arange(6.0).reshape(2, 3))
    g = nn.finite_diff_grad(lambda: float(p.value.sum()), [p])
    assert np.allclose(g["theta"], 1.0, atol=1e-6)


def test_rng_streams_deterministic_and_independent():
    a = nn.RngStreams(42)
    b = nn.RngStreams(42)
    assert a.get("init").random(5).tolist() == b.get("init").random(5).tolist()
    # consuming one stream leaves the others untouched
    c = nn.RngStreams(42)
    c.get("negatives").random(100)
    assert np.array_equal(c.get("init").random(5), nn.RngStreams(42).get("init").random(5))
