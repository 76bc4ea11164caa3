"""Gaussian-process model of the quasi-Newton matrix.

Every entry of the quasi-Newton matrix is treated as a Gaussian process
observed jointly with the concatenated window of recent noisy gradient
differences ``o``. A deterministic BFGS recursion driven by the same noisy
differences supplies the samples ``B0_i``; the RBF kernel over the scalar
entries of ``o`` supplies the covariance. Conditioning on ``o`` gives a
posterior mean and variance per entry, a Hessian estimate is drawn from that
posterior, and the search direction is ``-B_hat^{-1} g_tilde``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

C_DAMP = 1e-8


# -- BFGS samples ------------------------------------------------------------

def curvature_ok(w, y, c_damp=C_DAMP):
    w, y = np.asarray(w, dtype=float), np.asarray(y, dtype=float)
    return bool(w @ y > c_damp * np.linalg.norm(w) * np.linalg.norm(y))


def bfgs_sample(B_prev, w, y, c_damp=C_DAMP):
    """One BFGS update ``B - B w w^T B / (w^T B w) + y y^T / (w^T y)``.

    When the curvature condition ``w^T y > c_damp ||w|| ||y||`` fails, or
    ``w^T B w`` is not positive, ``B_prev`` is returned unchanged (same object).
    """
    w, y = np.asarray(w, dtype=float), np.asarray(y, dtype=float)
    if not curvature_ok(w, y, c_damp):
        return B_prev
    Bw = B_prev @ w
    wBw = w @ Bw
    if not wBw > 0:
        return B_prev
    B = B_prev - np.outer(Bw, Bw) / wBw + np.outer(y, y) / (w @ y)
    return 0.5 * (B + B.T)


def inverse_update(Binv_prev, w, y, c_damp=C_DAMP, Bw=None):
    """Inverse of `bfgs_sample`'s output by two Sherman-Morrison steps.

    First ``B1 = B + y y^T / s`` with ``s = w^T y``, then ``B1 - u u^T / (w^T B w)``
    with ``u = B w``. ``Bw`` may be supplied; otherwise it is recovered from
    ``Binv_prev``. Skipped updates return ``Binv_prev`` itself.
    """
    w, y = np.asarray(w, dtype=float), np.asarray(y, dtype=float)
    if not curvature_ok(w, y, c_damp):
        return Binv_prev
    H = Binv_prev
    u = np.linalg.solve(H, w) if Bw is None else np.asarray(Bw, dtype=float)
    wBw = w @ u
    if not wBw > 0:
        return Binv_prev
    s = w @ y
    Hy = H @ y
    yHy = y @ Hy
    H1 = H - np.outer(Hy, Hy) / (s + yHy)
    # B1^{-1} u, and the second denominator w^T B w - u^T B1^{-1} u = s^2 / (s + y^T H y)
    H1u = H1 @ u
    H2 = H1 + np.outer(H1u, H1u) * (s + yHy) / s ** 2
    return 0.5 * (H2 + H2.T)


# -- kernel and window -------------------------------------------------------

def rbf_kernel(u, v, tau):
    """``exp(-|u_i - v_j|^2 / (2 tau^2))`` for all entry pairs."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    diff = u[:, None] - v[None, :]
    return np.exp(-diff ** 2 / (2.0 * tau ** 2))


def median_tau(o):
    """Median heuristic: median of the positive pairwise distances of the entries of ``o``."""
    o = np.sort(np.asarray(o, dtype=float).ravel())
    if o.size < 2:
        return 1.0
    iu = np.triu_indices(o.size, 1)
    dist = np.abs(o[:, None] - o[None, :])[iu]
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


@dataclass
class ObservationWindow:
    """The last ``r`` noisy gradient differences with their steps and BFGS samples.

    ``anchor`` is the difference just before the window, if one exists; it only
    enters the moving-average mean.
    """

    r: int
    y_tilde: list = field(default_factory=list)
    w: list = field(default_factory=list)
    b_samples: list = field(default_factory=list)
    anchor: np.ndarray = None

    def push(self, y, w, B):
        self.y_tilde.append(np.asarray(y, dtype=float))
        self.w.append(np.asarray(w, dtype=float))
        self.b_samples.append(np.asarray(B, dtype=float))
        while len(self.y_tilde) > self.r:
            self.anchor = self.y_tilde.pop(0)
            self.w.pop(0)
            self.b_samples.pop(0)

    def __len__(self):
        return len(self.y_tilde)

    @property
    def o(self):
        return np.concatenate(self.y_tilde) if self.y_tilde else np.zeros(0)

    def moving_mean(self):
        """Per-position means: entry ``i`` averages the anchor and differences up to ``i``."""
        seq = ([self.anchor] if self.anchor is not None else []) + self.y_tilde
        csum = np.cumsum(np.stack(seq), axis=0)
        counts = np.arange(1, len(seq) + 1)[:, None]
        means = csum / counts
        if self.anchor is not None:
            means = means[1:]
        return means.ravel()


@dataclass
class KernelCache:
    tau: float
    K: np.ndarray
    factor: tuple
    mu_o: np.ndarray
    jitter: float
    o: np.ndarray


def build_cache(window, tau=None, jitter=1e-6, max_jitter=1e-2):
    """Kernel matrix over the window's concatenated observations, factorized once."""
    if len(window) == 0:
        raise ValueError("empty observation window")
    o = window.o
    if tau is None or tau == "median":
        tau = median_tau(o)
    K0 = rbf_kernel(o, o, tau)
    eps = float(jitter)
    while True:
        K = K0 + eps * np.eye(o.size)
        try:
            factor = cho_factor(K, lower=True)
            break
        except LinAlgError:
            eps *= 2.0
            if eps > max_jitter:
                raise
    return KernelCache(float(tau), K, factor, window.moving_mean(), eps, o)


# -- posterior ---------------------------------------------------------------

@dataclass
class GaussianPosterior:
    zeta: float
    psi: float
    entry: tuple = None


def conjugate_gradient(A, b, tol=1e-8, max_iter=None, precond=None, x0=None):
    """Preconditioned CG on SPD ``A`` for one or several right-hand sides.

    ``b`` may be (n,) or (n, m); columns are solved independently. Stops when
    every column satisfies ``||r|| <= tol * ||b||``. Returns ``(x, converged)``.
    """
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    n = B.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    matvec = A if callable(A) else (lambda v: A @ v)
    apply_m = precond if precond is not None else (lambda v: v)
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    R = B - matvec(X)
    bnorm = np.linalg.norm(B, axis=0)
    target = tol * np.where(bnorm > 0, bnorm, 1.0)
    Z = apply_m(R)
    P = Z.copy()
    rz = np.sum(R * Z, axis=0)
    converged = False
    for _ in range(max_iter + 1):
        if np.all(np.linalg.norm(R, axis=0) <= target):
            converged = True
            break
        AP = matvec(P)
        pAp = np.sum(P * AP, axis=0)
        step = np.divide(rz, pAp, out=np.zeros_like(rz), where=pAp > 0)
        X += step * P
        R -= step * AP
        Z = apply_m(R)
        rz_new = np.sum(R * Z, axis=0)
        beta = np.divide(rz_new, rz, out=np.zeros_like(rz), where=rz != 0)
        P = Z + beta * P
        rz = rz_new
    return (X[:, 0] if vec else X), converged


def _solve(cache, Phi):
    # CG preconditioned by the cached factor; direct solve if CG stalls
    precond = lambda v: cho_solve(cache.factor, v)
    A, ok = conjugate_gradient(cache.K, Phi, tol=1e-10, precond=precond)
    if not ok:
        A = cho_solve(cache.factor, Phi)
    return A


def entry_posterior(cache, b_history, o_t=None, sign="paper", entry=None):
    """Posterior of one quasi-Newton entry given the window observation.

    ``b_history`` holds this entry of the BFGS samples over the window, oldest
    first; its last element is the current sample. With ``sign="paper"`` the
    mean is ``mean(b) - a^T (o - mu)``; ``"standard"`` uses ``+``.
    """
    b_history = np.asarray(b_history, dtype=float)
    o_t = cache.o if o_t is None else np.asarray(o_t, dtype=float)
    phi = rbf_kernel(cache.o, b_history[-1:], cache.tau)[:, 0]
    a = _solve(cache, phi)
    s = -1.0 if sign == "paper" else 1.0
    zeta = float(b_history.mean() + s * a @ (o_t - cache.mu_o))
    psi = float(1.0 - a @ phi)
    if -1e-8 <= psi < 0:
        psi = 0.0
    return GaussianPosterior(zeta, psi, entry)


def batch_posterior(cache, b_samples, o_t=None, sign="paper", amplitude="unit"):
    """Posterior means and variances for all entries, as (d, d) arrays.

    Entries ``i <= j`` are computed and mirrored. ``amplitude="empirical"``
    scales the prior variance of each entry by the sample variance of its
    history (the posterior mean is unaffected since ``a`` is scale free).
    """
    S = np.asarray(b_samples, dtype=float)           # (n, d, d)
    d = S.shape[1]
    iu = np.triu_indices(d)
    hist = S[:, iu[0], iu[1]]                        # (n, d(d+1)/2)
    o_t = cache.o if o_t is None else np.asarray(o_t, dtype=float)
    Phi = rbf_kernel(cache.o, hist[-1], cache.tau)   # (rd, m)
    A = _solve(cache, Phi)
    s = -1.0 if sign == "paper" else 1.0
    zeta = hist.mean(axis=0) + s * (A.T @ (o_t - cache.mu_o))
    psi = 1.0 - np.sum(A * Phi, axis=0)
    psi = np.where((psi < 0) & (psi >= -1e-8), 0.0, psi)
    if amplitude == "empirical":
        psi = psi * hist.var(axis=0)
    elif amplitude != "unit":
        raise ValueError(f"unknown amplitude {amplitude!r}")
    Z = np.zeros((d, d))
    P = np.zeros((d, d))
    Z[iu] = zeta
    P[iu] = psi
    Z = Z + np.triu(Z, 1).T
    P = P + np.triu(P, 1).T
    return Z, P


# -- sampling and direction --------------------------------------------------

@dataclass
class HessianEstimate:
    B_hat: np.ndarray
    eig_range: tuple


def clip_spectrum(B, lo, hi):
    B = 0.5 * (B + B.T)
    w, V = np.linalg.eigh(B)
    w = np.clip(w, lo, hi)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


def sample_hessian(zeta, psi, constants, seed):
    """Draw entries ``i <= j`` from N(zeta, psi), mirror, clip the spectrum to [lam, L]."""
    zeta = np.asarray(zeta, dtype=float)
    psi = np.maximum(np.asarray(psi, dtype=float), 0.0)
    d = zeta.shape[0]
    iu = np.triu_indices(d)
    rng = np.random.default_rng(seed)
    draw = zeta[iu] + np.sqrt(psi[iu]) * rng.standard_normal(iu[0].size)
    B = np.zeros((d, d))
    B[iu] = draw
    B = B + np.triu(B, 1).T
    lo, hi = constants.lam, constants.L
    return HessianEstimate(clip_spectrum(B, lo, hi), (lo, hi))


def newton_direction(estimate, g_tilde, tol=1e-8):
    """``-B_hat^{-1} g_tilde`` via CG (direct solve if CG stalls)."""
    B = estimate.B_hat if isinstance(estimate, HessianEstimate) else np.asarray(estimate)
    g = np.asarray(g_tilde, dtype=float)
    if not np.any(g):
        return np.zeros_like(g)
    x, ok = conjugate_gradient(B, g, tol=tol)
    if not ok:
        x = np.linalg.solve(B, g)
    return -x
