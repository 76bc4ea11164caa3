import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpfl import aircomp as ac
from gpfl.receiver import mrc_baseline


def _instance(seed, K=4, N=5, d=6):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((K, d)) * rng.uniform(0.1, 5, (K, 1))
    h = ac.draw_channels(K, N, seed).h
    sizes = rng.integers(1, 100, K).astype(float)
    return G, h, sizes


def test_normalize_gradient():
    assert np.allclose(ac.normalize_gradient([3.0, 4.0]), [0.6, 0.8])
    assert np.array_equal(ac.normalize_gradient([1.0, 0.0]), [1.0, 0.0])
    g = np.random.default_rng(0).standard_normal(50)
    s = ac.normalize_gradient(g)
    assert abs(np.linalg.norm(s) - 1) < 1e-12 and abs(s @ g / np.linalg.norm(g) - 1) < 1e-12
    with pytest.raises(ac.ZeroGradientError):
        ac.normalize_gradient(np.zeros(3))


def test_zf_alpha_examples():
    assert np.isclose(ac.zf_alpha(np.array([1.0 + 0j]), np.array([[1.0 + 0j]]), [1.0], 1.0, 4), 4.0)
    h = np.array([[np.sqrt(2.0)], [np.sqrt(0.5)]], dtype=complex)
    assert np.isclose(ac.zf_alpha(np.array([1.0 + 0j]), h, [1.0, 1.0], 1.0, 1), 0.5)
    with pytest.raises(ac.DegenerateReceiverError):
        ac.zf_alpha(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), [1.0], 1.0, 1)


def test_power_feasible_and_tight():
    rng = np.random.default_rng(3)
    for seed in range(50):
        G, h, sizes = _instance(seed)
        h_eff = ac.effective_channels(h, np.linalg.norm(G, axis=1))
        c = mrc_baseline(h_eff)
        P0, d = 0.7, G.shape[1]
        alpha = ac.zf_alpha(c, h_eff, sizes, P0, d)
        b = ac.scale_factor(alpha, sizes, h_eff, c)
        # transmitted symbol b * s_j with ||s|| = 1: average power |b|^2 / d
        power = np.abs(b) ** 2 / d
        assert np.all(power <= P0 * (1 + 1e-9))
        assert np.isclose(power.max(), P0, rtol=1e-9)
        # stationary symbols E|s_j|^2 = 1/d: Monte-Carlo over entries
        s = rng.standard_normal((20_000, d)) / np.sqrt(d)
        emp = np.mean(np.abs(b[0] * s[:, 0]) ** 2)
        assert emp <= power[0] * 1.05
    assert np.allclose(ac.scale_factor(0.0, sizes, h_eff, c), 0.0)


def test_effective_channel_identity():
    G, h, _ = _instance(1)
    norms = np.linalg.norm(G, axis=1)
    assert np.array_equal(ac.effective_channels(h, norms), h / norms[:, None])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 30))
def test_zf_exact_without_noise(seed, K, N, d):
    G, h, sizes = _instance(seed, K, N, d)
    h_eff = ac.effective_channels(h, np.linalg.norm(G, axis=1))
    out = ac.transmit_round(G, h, 0.0, mrc_baseline(h_eff), sizes, 1.0, seed)
    assert np.allclose(out.g_tilde, sizes @ G / sizes.sum(), rtol=0, atol=1e-10)


def test_noise_statistics():
    G, h, sizes = _instance(7, d=1)
    h_eff = ac.effective_channels(h, np.linalg.norm(G, axis=1))
    c = mrc_baseline(h_eff)
    sigma = 0.3
    n = ac.receiver_noise(h.shape[1], 100_000, sigma, 11)
    out = ac.transmit_round(np.tile(G, (1, 1)), h, sigma, c, sizes, 1.0, None,
                            noise=n[:1])
    alpha = out.alpha
    # all symbols share the round's scaling; the error is Re(n^H c) / (|D| sqrt(alpha))
    err = np.real(n @ np.conj(c)) / (sizes.sum() * np.sqrt(alpha))
    var = ac.noise_variance(sigma, c, sizes.sum(), alpha)
    assert abs(err.mean()) <= 4 * err.std() / np.sqrt(err.size)
    assert abs(err.var() / var - 1) < 0.05
    assert np.isclose(out.noise_used[0], err[0])


def test_draw_channels():
    a = ac.draw_channels(3, 5, 42).h
    assert a.shape == (3, 5)
    assert np.array_equal(a, ac.draw_channels(3, 5, 42).h)
    big = ac.draw_channels(2000, 5, 1).h
    assert abs(np.mean(np.abs(big) ** 2) - 1) < 0.05
    with pytest.raises(ValueError):
        ac.draw_channels(2, 2, 0, fading="rician")


def test_noise_levels_and_round_sigma():
    s = ac.assign_noise_levels(20, 0)
    assert s.shape == (20,) and np.all(np.isin(s, ac.SIGMA_GRID))
    assert len(ac.SIGMA_GRID) == 200
    assert np.array_equal(s, ac.assign_noise_levels(20, 0))
    assert np.isclose(ac.round_sigma([3.0, 4.0]), 5.0)
    assert np.isclose(ac.round_sigma([3.0, 4.0, 12.0], [0, 2]), np.sqrt(153.0))


def test_zero_gradient_rejected():
    G, h, sizes = _instance(2)
    G[1] = 0.0
    with pytest.raises(ac.ZeroGradientError):
        ac.transmit_round(G, h, 0.1, np.ones(5, dtype=complex), sizes, 1.0, 0)
