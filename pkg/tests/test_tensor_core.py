import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from matsf import tensor_core as tc
from matsf.utils.exceptions import ConfigError, ContractError, DimensionError, DomainError


def rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


##############
### matmul ###
##############

def test_matmul_identity():
    a = tc.constant(np.eye(2))
    b = tc.constant([[1., 2.], [3., 4.]])
    assert_array_equal(tc.matmul(a, b).values, [[1., 2.], [3., 4.]])


def test_matmul_zero_annihilates(rng):
    out = tc.matmul(tc.constant(np.zeros((2, 2))), tc.constant(rand(rng, 2, 5)))
    assert_array_equal(out.values, np.zeros((2, 5)))


@pytest.mark.parametrize("m, k, n", [(3, 4, 2), (1, 1, 1), (8, 8, 8), (5, 2, 7)])
def test_matmul_matches_triple_loop(rng, m, k, n):
    a, b = rand(rng, m, k), rand(rng, k, n)
    assert_allclose(tc.matmul(tc.constant(a), tc.constant(b)).values,
        naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        tc.matmul(tc.constant(np.ones((2, 3))), tc.constant(np.ones((2, 3))))


def test_matmul_backward_rule(rng):
    a = tc.parameter(rand(rng, 3, 4))
    b = tc.parameter(rand(rng, 4, 2))
    tc.backward(tc.sum(tc.matmul(a, b)))
    g = np.ones((3, 2))
    assert_allclose(a.grad, g @ b.values.T)
    assert_allclose(b.grad, a.values.T @ g)


###################
### elementwise ###
###################

def test_sigmoid_and_tanh_at_zero():
    assert tc.elementwise('sigmoid', tc.constant([0.0])).item() == 0.5
    assert tc.elementwise('tanh', tc.constant([0.0])).item() == 0.0


def test_sigmoid_derivative_at_zero():
    x = tc.parameter([0.0])
    tc.backward(tc.sigmoid(x))
    assert_allclose(x.grad, [0.25])


def test_sigmoid_is_stable_at_extremes():
    s = tc.sigmoid(tc.constant([-800.0, 800.0])).values
    assert np.all(np.isfinite(s))
    assert_allclose(s, [0.0, 1.0], atol=1e-300)


@pytest.mark.parametrize("value", [0.0, -1.0, np.nan])
def test_log_rejects_non_positive(value):
    with pytest.raises(DomainError):
        tc.elementwise('log', tc.constant([1.0, value]))


def test_unknown_elementwise_op():
    with pytest.raises(NotImplementedError):
        tc.elementwise('softplus', tc.constant([1.0]))


def test_row_broadcast_of_bias(rng):
    a = tc.parameter(rand(rng, 4, 3))
    b = tc.parameter(rand(rng, 3))
    out = tc.add(a, b)
    assert_allclose(out.values, a.values + b.values)
    tc.backward(tc.sum(out))
    assert_allclose(b.grad, np.full(3, 4.0))
    assert_allclose(a.grad, np.ones((4, 3)))


def test_general_broadcast_is_rejected():
    with pytest.raises(DimensionError):
        tc.add(tc.constant(np.ones((4, 3))), tc.constant(np.ones((4, 1))))
    with pytest.raises(DimensionError):
        tc.mul(tc.constant(np.ones((2, 3))), tc.constant(np.ones(2)))


def test_scalar_operators():
    x = tc.parameter([2.0])
    y = 3 * x - 1
    assert y.item() == 5.0
    tc.backward(y)
    assert_allclose(x.grad, [3.0])


##############
### concat ###
##############

def test_concat_values():
    out = tc.concat([tc.constant([1.0]), tc.constant([2.0]), tc.constant([3.0])], axis=0)
    assert_array_equal(out.values, [1.0, 2.0, 3.0])


def test_concat_single_part_is_unchanged():
    a = tc.parameter([[1.0, 2.0]])
    assert tc.concat([a], axis=1) is a


def test_concat_backward_is_linear(rng):
    a = tc.parameter(rand(rng, 2, 3))
    b = tc.parameter(rand(rng, 2, 1))
    tc.backward(tc.sum(tc.concat([a, b], axis=1)))
    assert_array_equal(a.grad, np.ones((2, 3)))
    assert_array_equal(b.grad, np.ones((2, 1)))


def test_concat_extent_disagreement():
    with pytest.raises(DimensionError):
        tc.concat([tc.constant(np.ones((2, 3))), tc.constant(np.ones((3, 3)))], axis=1)


def test_concat_then_split_is_identity(rng):
    a = tc.parameter(rand(rng, 3, 2))
    b = tc.parameter(rand(rng, 3, 4))
    w = rand(rng, 3, 6)
    pa, pb = tc.split(tc.concat([a, b], axis=1), [2, 4], axis=1)
    assert_array_equal(pa.values, a.values)
    assert_array_equal(pb.values, b.values)
    tc.backward(tc.add(tc.sum(tc.mul(pa, tc.constant(w[:, :2]))),
        tc.sum(tc.mul(pb, tc.constant(w[:, 2:])))))
    assert_allclose(a.grad, w[:, :2])
    assert_allclose(b.grad, w[:, 2:])


def test_split_sizes_must_cover_extent():
    with pytest.raises(DimensionError):
        tc.split(tc.constant(np.ones((2, 5))), [2, 2], axis=1)


################
### backward ###
################

def test_backward_square():
    x = tc.parameter([3.0])
    tc.backward(tc.mul(x, x))
    assert_allclose(x.grad, [6.0])


def test_backward_accumulates_without_zeroing():
    x = tc.parameter([3.0])
    root = tc.mul(x, x)
    tc.backward(root)
    tc.backward(root)
    assert_allclose(x.grad, [12.0])


def test_backward_needs_scalar_root():
    with pytest.raises(ContractError):
        tc.backward(tc.mul(tc.parameter([1.0, 2.0]), tc.constant([1.0, 1.0])))


def test_backward_through_reused_node():
    x = tc.parameter([0.7])
    y = tc.tanh(x)
    f = lambda: tc.mul(tc.tanh(x), tc.sigmoid(tc.tanh(x)))
    assert tc.gradcheck(f, [x]) < 1e-6
    tc.backward(tc.mul(y, tc.sigmoid(y)))
    t = np.tanh(0.7)
    s = 1 / (1 + np.exp(-t))
    assert_allclose(x.grad, [(s + t * s * (1 - s)) * (1 - t * t)], rtol=1e-12)


def test_sum_of_product_matches_finite_differences(rng):
    A = tc.parameter(rand(rng, 3, 3))
    B = tc.parameter(rand(rng, 3, 3))
    assert tc.gradcheck(lambda: tc.sum(tc.matmul(A, B)), [A, B]) < 1e-6


def _binary(op):
    return lambda a, b: tc.sum(tc.mul(op(a, b), tc.constant(np.linspace(0.5, 1.5, a.size).reshape(a.shape))))


def _unary(op):
    return lambda a, b: tc.sum(tc.mul(op(a), b))


GRAD_CASES = {
    'add': _binary(tc.add),
    'sub': _binary(tc.sub),
    'mul': _binary(tc.mul),
    'matmul': lambda a, b: tc.sum(tc.sigmoid(tc.matmul(a, tc.transpose(b)))),
    'sigmoid': _unary(tc.sigmoid),
    'tanh': _unary(tc.tanh),
    'neg': _unary(tc.neg),
    'log': lambda a, b: tc.sum(tc.mul(tc.log(tc.shift(tc.mul(a, a), 0.5)), b)),
    'relu': _unary(tc.relu),
    'mean': lambda a, b: tc.mean(tc.mul(a, b)),
    'take': lambda a, b: tc.sum(tc.mul(tc.take(a, 1, 3, axis=1), tc.take(b, 0, 2, axis=1))),
    'reshape': lambda a, b: tc.sum(tc.mul(tc.reshape(a, (-1,)), tc.reshape(b, (-1,)))),
    'concat': lambda a, b: tc.sum(tc.tanh(tc.concat([a, b], axis=0))),
    'clip': lambda a, b: tc.sum(tc.mul(tc.clip(a, -0.5, 0.5), b)),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradients_match_finite_differences(name):
    fn = GRAD_CASES[name]
    local = np.random.default_rng(sorted(GRAD_CASES).index(name))
    for _ in range(8):
        # keep relu / clip inputs away from their kinks
        av = local.uniform(-1, 1, size=(3, 4))
        av[np.abs(av) < 0.05] += 0.1
        av[np.abs(np.abs(av) - 0.5) < 0.05] += 0.1
        a = tc.parameter(av)
        b = tc.parameter(local.uniform(-1, 1, size=(3, 4)))
        assert tc.gradcheck(lambda: fn(a, b), [a, b]) < 1e-4


###################
### no_grad etc. ###
###################

def test_no_grad_records_nothing():
    x = tc.parameter([1.0, 2.0])
    with tc.no_grad():
        y = tc.sum(tc.mul(x, x))
    assert y.is_leaf and not y.requires_grad
    assert tc.is_grad_enabled()


def test_frozen_params_receive_no_gradient():
    w = tc.parameter([2.0])
    x = tc.parameter([3.0])
    with tc.frozen([w]):
        tc.backward(tc.mul(w, x))
    assert w.grad is None
    assert_allclose(x.grad, [2.0])
    assert w.requires_grad


def test_zero_extent_is_rejected():
    with pytest.raises(DimensionError):
        tc.TensorNode(np.ones((0, 3)))


##################
### optimizers ###
##################

def test_sgd_step():
    p = tc.parameter([1.0])
    p.grad = np.array([2.0])
    tc.optimizer_step(tc.OptimizerState('sgd', 0.1), [p])
    assert_allclose(p.values, [0.8])
    assert p.grad is None


@pytest.mark.parametrize("kind", ['sgd', 'adam'])
def test_zero_gradient_is_a_fixed_point(kind):
    p = tc.parameter([1.5, -2.0])
    p.grad = np.zeros(2)
    tc.optimizer_step(tc.OptimizerState(kind, 0.1), [p])
    assert_array_equal(p.values, [1.5, -2.0])


def test_adam_first_step_is_about_lr():
    p = tc.parameter([1.0])
    p.grad = np.array([1.0])
    state = tc.OptimizerState('adam', 0.01)
    tc.optimizer_step(state, [p])
    assert_allclose(p.values, [0.99], atol=1e-8)
    assert state.first_moment[id(p)].shape == p.shape


def test_missing_gradient_names_parameter():
    p = tc.parameter([1.0], name='head.W')
    with pytest.raises(ContractError, match='head.W'):
        tc.optimizer_step(tc.OptimizerState('sgd', 0.1), [p])


@pytest.mark.parametrize("kwargs", [
    dict(kind='rmsprop'),
    dict(learning_rate=0.0),
    dict(adam_beta1=1.0),
    ])
def test_invalid_optimizer_config(kwargs):
    with pytest.raises(ConfigError):
        tc.OptimizerState(**kwargs)
