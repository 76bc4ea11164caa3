import numpy as np
import pytest

from gpfl import dataio, loss_model as lm


def _spec(seed=0, n=40, m=5, reg=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return lm.LossSpec(X, y, reg)


def test_loss_at_origin():
    assert np.isclose(lm.local_loss(_spec(reg=3.0), np.zeros(5)), np.log(2))


def test_loss_matches_scalar_loop():
    spec = _spec(n=4)
    theta = np.random.default_rng(1).standard_normal(5)
    total = 0.0
    for row, label in zip(spec.X, spec.y):
        z = sum(a * b for a, b in zip(row, theta))
        total += np.log1p(np.exp(-label * z))
    ref = total / 4 + 0.5 * spec.reg * sum(t * t for t in theta)
    assert abs(lm.local_loss(spec, theta) - ref) < 1e-12


def test_loss_asymptote():
    spec = lm.LossSpec(np.array([[1.0]]), np.array([1.0]), 0.5)
    t = 50.0
    assert np.isclose(lm.local_loss(spec, np.array([t])), 0.25 * t * t, rtol=1e-12)


def test_gradient_zero_on_symmetric_data():
    X = np.array([[1.0, 2.0], [1.0, 2.0]])
    spec = lm.LossSpec(X, np.array([1.0, -1.0]), 0.1)
    assert np.allclose(lm.local_gradient(spec, np.zeros(2)), 0.0)


def test_gradient_finite_differences():
    spec = _spec(3)
    theta = np.random.default_rng(4).standard_normal(5)
    g = lm.local_gradient(spec, theta)
    h = 1e-6
    fd = np.array([(lm.local_loss(spec, theta + h * e) - lm.local_loss(spec, theta - h * e)) / (2 * h)
                   for e in np.eye(5)])
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_gradient_regularizer_dominates():
    spec = _spec(reg=1e8)
    theta = np.ones(5)
    g = lm.local_gradient(spec, theta)
    assert np.allclose(g / 1e8, theta, rtol=1e-6)


def test_hessian_single_sample():
    spec = lm.LossSpec(np.array([[1.0, 0.0, 0.0]]), np.array([1.0]), 1.0)
    H = lm.global_hessian([spec], np.array([1.0]), np.zeros(3))
    assert np.allclose(H, np.diag([1.25, 1.0, 1.0]))


def test_hessian_finite_differences_and_floor():
    specs = [_spec(s) for s in range(3)]
    w = lm.client_weights(specs)
    rng = np.random.default_rng(9)
    for _ in range(5):
        theta = rng.standard_normal(5)
        H = lm.global_hessian(specs, w, theta)
        h = 1e-6
        fd = np.column_stack([(lm.global_gradient(specs, w, theta + h * e)
                               - lm.global_gradient(specs, w, theta - h * e)) / (2 * h)
                              for e in np.eye(5)])
        assert np.allclose(H, fd, atol=1e-5)
        assert np.linalg.eigvalsh(H)[0] >= 0.1 - 1e-10


def test_constants_examples():
    zero = lm.LossSpec(np.zeros((3, 2)), np.ones(3), 1.0)
    c = lm.constants([zero], np.array([1.0]))
    assert (c.lam, c.L) == (1.0, 1.0)
    one = lm.LossSpec(np.array([[2.0, 0.0]]), np.array([1.0]), 1.0)
    assert np.isclose(lm.constants([one], np.array([1.0])).L, 2.0)


def test_constants_sandwich_hessian():
    X, y = dataio.to_dense(dataio.synth_logistic(8, 300, 2.0, 0))
    part = dataio.partition(y, 4, seed=0)
    specs = [lm.LossSpec(X[i], y[i], 0.05) for i in part.assignments]
    w = lm.client_weights(specs)
    c = lm.constants(specs, w)
    assert c.L >= c.lam
    # dense oracle of the curvature ceiling
    M = X.T @ X / len(y)
    assert np.isclose(c.L, 0.05 + 0.25 * np.linalg.eigvalsh(M)[-1], rtol=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(100):
        ev = np.linalg.eigvalsh(lm.global_hessian(specs, w, 3 * rng.standard_normal(8)))
        assert ev[0] >= c.lam - 1e-10 and ev[-1] <= c.L + 1e-10


def test_global_gradient_is_weighted_sum():
    specs = [_spec(s, n=10 + 7 * s) for s in range(4)]
    w = lm.client_weights(specs)
    assert np.isclose(w.sum(), 1.0)
    theta = np.random.default_rng(2).standard_normal(5)
    ref = sum(wk * lm.local_gradient(s, theta) for s, wk in zip(specs, w))
    assert np.allclose(lm.global_gradient(specs, w, theta), ref, atol=1e-12)


def test_solve_optimum():
    specs = [_spec(s) for s in range(3)]
    w = lm.client_weights(specs)
    theta = lm.solve_optimum(specs, w)
    assert np.linalg.norm(lm.global_gradient(specs, w, theta)) <= 1e-10


def test_quadratic_loss():
    A = np.diag([1.0, 2.0])
    q = lm.QuadraticLoss(A, np.array([1.0, -1.0]), n_samples=5)
    assert q.n_samples == 5
    assert np.allclose(q.gradient(np.zeros(2)), [-1.0, 2.0])
    c = lm.constants([q], np.array([1.0]))
    assert np.isclose(c.lam, 1.0) and np.isclose(c.L, 2.0)


def test_accuracy_and_shape_check():
    spec = lm.LossSpec(np.array([[1.0], [-1.0]]), np.array([1.0, -1.0]), 0.1)
    assert spec.accuracy(np.array([1.0])) == 1.0
    with pytest.raises(ValueError):
        spec.loss(np.zeros(2))
