"""Client objectives with exact gradient and Hessian oracles.

Two families are provided: L2-regularized logistic regression (the
generalized linear model used for the LIBSVM-style experiments) and a
strongly convex quadratic used as a benchmark where the Hessian is known in
closed form. Both expose ``loss``, ``gradient``, ``hessian`` and ``n_samples``
so the engine can treat them alike.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class SmoothnessConstants:
    lam: float
    L: float

    def __post_init__(self):
        if not 0 < self.lam <= self.L:
            raise ValueError(f"need 0 < lambda <= L, got {self.lam}, {self.L}")


class LossSpec:
    """Logistic loss on a local dataset plus ``reg/2 * ||theta||^2``."""

    def __init__(self, X, y, reg):
        if reg <= 0:
            raise ValueError("reg must be positive")
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float)
        self.reg = float(reg)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n_samples(self):
        return self.X.shape[0]

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        return theta

    def loss(self, theta):
        theta = self._check(theta)
        margins = self.y * (self.X @ theta)
        return np.mean(np.logaddexp(0.0, -margins)) + 0.5 * self.reg * theta @ theta

    def gradient(self, theta):
        theta = self._check(theta)
        margins = self.y * (self.X @ theta)
        coef = -self.y * expit(-margins)
        return self.X.T @ coef / self.n_samples + self.reg * theta

    def hessian(self, theta):
        theta = self._check(theta)
        p = expit(self.X @ theta)
        w = p * (1.0 - p)
        return (self.X.T * w) @ self.X / self.n_samples + self.reg * np.eye(self.dim)

    def second_moment(self):
        return self.X.T @ self.X / self.n_samples

    def accuracy(self, theta):
        pred = np.where(self.X @ theta >= 0, 1.0, -1.0)
        return float(np.mean(pred == self.y))


class QuadraticLoss:
    """``0.5 (theta - center)^T A (theta - center)`` with a nominal sample count."""

    def __init__(self, A, center, n_samples=1):
        self.A = np.asarray(A, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self._n = int(n_samples)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def n_samples(self):
        return self._n

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        return theta

    def loss(self, theta):
        e = self._check(theta) - self.center
        return 0.5 * e @ self.A @ e

    def gradient(self, theta):
        return self.A @ (self._check(theta) - self.center)

    def hessian(self, theta):
        self._check(theta)
        return self.A.copy()

    def accuracy(self, theta):
        return float("nan")


def local_loss(spec, theta):
    return spec.loss(theta)


def local_gradient(spec, theta):
    return spec.gradient(theta)


def client_weights(specs):
    sizes = np.array([s.n_samples for s in specs], dtype=float)
    return sizes / sizes.sum()


def global_loss(specs, weights, theta):
    return float(sum(w * s.loss(theta) for s, w in zip(specs, weights)))


def global_gradient(specs, weights, theta):
    """Weighted sum of local gradients, accumulated in client order."""
    g = np.zeros(specs[0].dim)
    for s, w in zip(specs, weights):
        g += w * s.gradient(theta)
    return g


def global_hessian(specs, weights, theta):
    H = np.zeros((specs[0].dim, specs[0].dim))
    for s, w in zip(specs, weights):
        H += w * s.hessian(theta)
    return 0.5 * (H + H.T)


def global_accuracy(specs, theta):
    """Sample-weighted accuracy over all clients (nan for non-classifiers)."""
    sizes = np.array([s.n_samples for s in specs], dtype=float)
    accs = np.array([s.accuracy(theta) for s in specs])
    return float(sizes @ accs / sizes.sum())


def power_iteration(A, tol=1e-8, max_iter=10_000, seed=0):
    """Largest eigenvalue of a symmetric PSD matrix."""
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        new = v @ w
        v = w / nrm
        if abs(new - est) <= tol * max(abs(new), 1.0):
            return float(new)
        est = new
    return float(est)


def constants(specs, weights):
    """Certified strong-convexity and smoothness constants.

    For logistic clients lambda is the regularizer and L adds a quarter of the
    top eigenvalue of the weighted second-moment matrix (sigma(1-sigma) <= 1/4).
    For quadratic clients the bounds are the exact spectrum of the weighted
    Hessian.
    """
    if all(isinstance(s, QuadraticLoss) for s in specs):
        H = sum(w * s.A for s, w in zip(specs, weights))
        eig = np.linalg.eigvalsh(0.5 * (H + H.T))
        return SmoothnessConstants(float(eig[0]), float(eig[-1]))
    reg = sum(w * s.reg for s, w in zip(specs, weights))
    M = sum(w * s.second_moment() for s, w in zip(specs, weights))
    top = power_iteration(M)
    return SmoothnessConstants(reg, reg + 0.25 * top)


def solve_optimum(specs, weights, theta0=None, gtol=1e-10, max_iter=200):
    """Minimize the weighted global loss with damped full-batch Newton."""
    theta = np.zeros(specs[0].dim) if theta0 is None else np.array(theta0, dtype=float)
    f = global_loss(specs, weights, theta)
    for _ in range(max_iter):
        g = global_gradient(specs, weights, theta)
        if np.linalg.norm(g) <= gtol:
            return theta
        step = np.linalg.solve(global_hessian(specs, weights, theta), g)
        t = 1.0
        while t > 1e-12:
            cand = theta - t * step
            fc = global_loss(specs, weights, cand)
            if fc <= f - 1e-4 * t * (g @ step) or t < 1e-3:
                break
            t *= 0.5
        theta, f = cand, fc
    if np.linalg.norm(global_gradient(specs, weights, theta)) > gtol:
        raise RuntimeError("Newton did not reach the gradient tolerance")
    return theta
