import numpy as np
import pytest
import scipy.sparse as sp

from conftest import central_diff, rel_err
from gaussembed.encoder import (
    EncoderParameters,
    backward,
    embed,
    forward,
    forward_batch,
    init_xavier,
)


def zero_params(d, hidden, half):
    p = init_xavier(d, hidden, half, seed=0)
    return EncoderParameters.from_arrays([np.zeros_like(a) for a in p.arrays()])


def test_xavier_bound_and_zero_biases():
    p = init_xavier(2879, (512,), 64, seed=0)
    bound = np.sqrt(6 / 3391)
    assert bound == pytest.approx(0.04206, abs=5e-6)
    w = p.hidden[0][0]
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.99 * bound
    for b in p.arrays()[1::2]:
        np.testing.assert_array_equal(b, 0.0)


def test_init_deterministic():
    a, b = init_xavier(7, (5, 4), 3, seed=11), init_xavier(7, (5, 4), 3, seed=11)
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)
    assert a.shapes() == [(7, 5), (5,), (5, 4), (4,), (4, 3), (3,), (4, 3), (3,)]


def test_zero_params_give_unit_gaussian():
    emb, _ = forward(zero_params(4, (3,), 2), np.array([1.0, -2.0, 3.0, 0.5]))
    np.testing.assert_array_equal(emb.mu, 0.0)
    np.testing.assert_array_equal(emb.var, 1.0)


def test_variance_positive_at_extreme():
    p = zero_params(1, (1,), 1)
    p.hidden[0][1][:] = 1.0
    p.var_b[:] = -1001.0
    p.var_w[:] = 1.0
    emb, cache = forward(p, np.array([0.0]))
    assert cache.var_pre[0, 0] == -1000.0
    assert emb.var[0] > 0


def test_relu_blocks_negative_input():
    p = zero_params(1, (1,), 1)
    p.hidden[0][0][:] = 1.0
    p.mu_w[:] = 1.0
    emb, _ = forward(p, np.array([-3.0]))
    assert emb.mu[0] == 0.0


def test_non_finite_input_rejected():
    p = init_xavier(2, (2,), 1, seed=0)
    with pytest.raises(ValueError):
        forward(p, np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        forward_batch(p, np.ones((2, 3)))


def test_zero_upstream_gives_zero_grads():
    p = init_xavier(3, (4,), 2, seed=0)
    _, cache = forward_batch(p, np.ones((2, 3)))
    grads, gx = backward(p, cache, np.zeros((2, 2)), np.zeros((2, 2)))
    for gr in grads:
        np.testing.assert_array_equal(gr, 0.0)


@pytest.mark.parametrize("hidden", [(3,), (4, 3), ()])
def test_backward_finite_differences(hidden):
    rng = np.random.default_rng(len(hidden))
    for trial in range(35):
        p = init_xavier(4, hidden, 3, seed=trial)
        for b in p.arrays()[1::2]:
            b[:] = rng.normal(scale=0.5, size=b.shape)
        x = rng.normal(size=(5, 4))
        cm, cv = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))

        def loss():
            emb = embed(p, x)
            return float((cm * emb.mu).sum() + (cv * emb.var).sum())

        _, cache = forward_batch(p, x)
        grads, gx = backward(p, cache, cm, cv)
        for arr, gr in zip(p.arrays(), grads):
            assert rel_err(gr, central_diff(loss, arr)) < 1e-5
        assert rel_err(gx, central_diff(loss, x)) < 1e-5


def test_one_hot_row_gradient_is_localised():
    p = init_xavier(6, (4,), 2, seed=1)
    x = sp.identity(6, format="csr")[[3]]
    _, cache = forward_batch(p, x)
    grads, _ = backward(p, cache, np.ones((1, 2)), np.ones((1, 2)))
    w_grad = grads[0]
    assert np.any(w_grad[3] != 0)
    np.testing.assert_array_equal(np.delete(w_grad, 3, axis=0), 0.0)


def test_sparse_and_dense_paths_agree():
    p = init_xavier(5, (4,), 3, seed=2)
    dense = np.eye(5)
    a, ca = forward_batch(p, dense)
    b, cb = forward_batch(p, sp.csr_matrix(dense))
    np.testing.assert_array_equal(a.mu, b.mu)
    np.testing.assert_array_equal(a.var, b.var)
    rng = np.random.default_rng(0)
    gm, gv = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    for x, y in zip(backward(p, ca, gm, gv)[0], backward(p, cb, gm, gv)[0]):
        np.testing.assert_allclose(x, y, rtol=1e-14, atol=1e-15)


def test_batch_equals_rows_and_permutes():
    rng = np.random.default_rng(4)
    p = init_xavier(6, (8,), 3, seed=3)
    x = rng.normal(size=(7, 6))
    x[5] = x[2]
    emb = embed(p, x)
    for i in range(7):
        row, _ = forward(p, x[i])
        np.testing.assert_allclose(row.mu, emb.mu[i], rtol=1e-14)
        np.testing.assert_allclose(row.var, emb.var[i], rtol=1e-14)
    np.testing.assert_array_equal(emb.mu[5], emb.mu[2])
    np.testing.assert_array_equal(emb.var[5], emb.var[2])
    perm = rng.permutation(7)
    pe = embed(p, x[perm])
    np.testing.assert_allclose(pe.mu, emb.mu[perm], rtol=1e-14)
    np.testing.assert_allclose(pe.var, emb.var[perm], rtol=1e-14)


def test_positivity_random():
    rng = np.random.default_rng(5)
    p = init_xavier(3, (5,), 4, seed=0)
    for a in p.arrays():
        a *= 50
    emb = embed(p, rng.normal(scale=100, size=(200, 3)))
    assert np.all(emb.var > 0)
