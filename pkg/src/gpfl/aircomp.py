"""Analog over-the-air gradient aggregation on a fading multiple-access uplink.

Each selected client normalizes its gradient, scales it with a zero-forcing
factor so that ``c^H h_eff b`` is real and proportional to its dataset size,
and all clients transmit simultaneously over ``d`` symbol slots. The server
combines the ``N`` antenna outputs with a receiver ``c`` and rescales.

Noise convention: each antenna's noise sample is complex Gaussian with
variance ``sigma**2`` on each of the real and imaginary parts. Gradients ride
on the in-phase component, so the real-valued estimate has per-entry noise
variance ``sigma**2 ||c||**2 / (|D|**2 alpha)``.
"""

from dataclasses import dataclass

import numpy as np

SIGMA_GRID = np.round(np.arange(1, 201) * 0.005, 6)


class ZeroGradientError(ValueError):
    """A client's local gradient is exactly zero (it has converged)."""


class DegenerateReceiverError(ValueError):
    """The receiver is orthogonal to some effective channel."""


@dataclass
class ChannelRealization:
    """Channels ``h`` (K x N, complex) and per-client noise levels ``sigma``."""

    h: np.ndarray
    sigma: np.ndarray

    @property
    def N(self):
        return self.h.shape[1]


@dataclass
class ReceiverWeights:
    c: np.ndarray
    alpha: float = float("nan")


@dataclass
class NoisyAggregate:
    g_tilde: np.ndarray
    g_true: np.ndarray
    noise_used: np.ndarray
    alpha: float
    c_norm: float
    sigma: float
    D_total: float

    @property
    def noise_scale(self):
        """Per-entry noise std ``sigma ||c|| / (|D| sqrt(alpha))``."""
        return self.sigma * self.c_norm / (self.D_total * np.sqrt(self.alpha))


def normalize_gradient(g):
    g = np.asarray(g, dtype=float)
    nrm = np.linalg.norm(g)
    if nrm == 0.0:
        raise ZeroGradientError("client converged: zero local gradient")
    return g / nrm


def effective_channels(h, grad_norms):
    """``h_k / ||g_k||`` row by row."""
    return np.asarray(h) / np.asarray(grad_norms, dtype=float)[:, None]


def round_sigma(sigma, selected=None):
    """Receiver noise std for a client set: root-sum-square of member levels."""
    sigma = np.asarray(sigma, dtype=float)
    if selected is not None:
        sigma = sigma[np.asarray(selected)]
    return float(np.sqrt(np.sum(sigma ** 2)))


def _projections(c, h_eff):
    # |c^H h_k|^2 for every row of h_eff
    return np.abs(np.asarray(h_eff) @ np.conj(c)) ** 2


def zf_alpha(c, h_eff, sizes, P0, d):
    """Largest common scaling that keeps every client within power ``P0``."""
    proj = _projections(c, h_eff)
    if np.any(proj == 0.0):
        raise DegenerateReceiverError("receiver is orthogonal to an effective channel")
    sizes = np.asarray(sizes, dtype=float)
    return float(P0 * d * np.min(proj / sizes ** 2))


def scale_factor(alpha, sizes, h_eff, c):
    """Zero-forcing transmit scalars ``b_k`` (complex), one per row of ``h_eff``."""
    inner = np.atleast_2d(h_eff) @ np.conj(c)          # c^H h_k
    mag2 = np.abs(inner) ** 2
    if np.any(mag2 == 0.0):
        raise DegenerateReceiverError("receiver is orthogonal to an effective channel")
    # h^H c = conj(c^H h)
    return np.sqrt(alpha) * np.asarray(sizes, dtype=float) * np.conj(inner) / mag2


def assign_noise_levels(K, seed, grid=SIGMA_GRID, scale=1.0):
    """Draw one noise level per client from ``grid`` (without replacement when possible)."""
    rng = np.random.default_rng([seed, 0x51])
    grid = np.asarray(grid, dtype=float)
    picks = rng.choice(grid, size=K, replace=K > len(grid))
    return scale * picks


def draw_channels(K, N, seed, sigma=None, fading="rayleigh"):
    """One coherence block of i.i.d. Rayleigh channels with unit-variance entries."""
    if fading != "rayleigh":
        raise ValueError(f"unsupported fading model {fading!r}")
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2.0)
    if sigma is None:
        sigma = np.zeros(K)
    return ChannelRealization(h, np.asarray(sigma, dtype=float))


def receiver_noise(N, d, sigma, seed):
    """Antenna noise for ``d`` symbol slots, shape (d, N)."""
    rng = np.random.default_rng(seed)
    return sigma * (rng.standard_normal((d, N)) + 1j * rng.standard_normal((d, N)))


def transmit_round(gradients, h, sigma, c, sizes, P0, seed, noise=None):
    """Simulate one over-the-air aggregation round.

    Parameters
    ----------
    gradients : (K, d) array
        Local gradients of the participating clients (all nonzero).
    h : (K, N) complex array
        Physical channels of the same clients.
    sigma : float
        Receiver noise level for this client set.
    c : (N,) complex array
        Receiver combiner.
    sizes : (K,) array
        Local dataset sizes; their sum is ``|D|`` for the round.
    seed
        Seed for the noise stream (ignored when ``noise`` is given).

    Returns
    -------
    NoisyAggregate
    """
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    sizes = np.asarray(sizes, dtype=float)
    K, d = G.shape
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms == 0.0):
        raise ZeroGradientError("client converged: zero local gradient")
    S = G / norms[:, None]
    h_eff = effective_channels(h, norms)
    alpha = zf_alpha(c, h_eff, sizes, P0, d)
    b = scale_factor(alpha, sizes, h_eff, c)
    # x_k[j] = b_k s_k[j];  r_j = sum_k h_k x_k[j] + n_j
    X = b[:, None] * S                                  # (K, d)
    R = X.T @ np.asarray(h)                             # (d, N)
    if noise is None:
        noise = receiver_noise(h.shape[1], d, sigma, seed)
    R = R + noise
    D_total = sizes.sum()
    d_hat = np.real(R @ np.conj(c)) / np.sqrt(alpha)
    g_tilde = d_hat / D_total
    g_true = sizes @ G / D_total
    return NoisyAggregate(
        g_tilde=g_tilde,
        g_true=g_true,
        noise_used=g_tilde - g_true,
        alpha=alpha,
        c_norm=float(np.linalg.norm(c)),
        sigma=float(sigma),
        D_total=float(D_total),
    )


def noise_variance(sigma, c, D_total, alpha):
    """Per-entry variance of the aggregation error."""
    return sigma ** 2 * np.linalg.norm(c) ** 2 / (D_total ** 2 * alpha)
