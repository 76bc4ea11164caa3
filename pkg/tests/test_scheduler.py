import numpy as np

from gpfl import scheduler as sc
from gpfl.aircomp import SIGMA_GRID


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_single_candidate():
    h = _cn(np.random.default_rng(0), 1, 5)
    assert list(sc.select_devices(h, [10.0], [0.1])) == [0]


def test_excludes_noisy_weak_client():
    e1, e2 = np.eye(3, dtype=complex)[:2]
    h = np.array([e1 + 0.05 * e2, e1 - 0.05 * e2, 0.01 * (e2 + 0.001 * e1)])
    sizes = np.array([50.0, 50.0, 50.0])
    sigma = np.array([0.01, 0.01, 1.0])
    best, _ = sc.brute_force(h, sizes, sigma)
    assert not best[2]
    chosen = sc.select_devices(h, sizes, sigma, seed=3)
    assert list(chosen) == list(np.flatnonzero(best))


def test_large_reward_selects_all():
    rng = np.random.default_rng(1)
    h = _cn(rng, 6, 4)
    out = sc.select_devices(h, rng.uniform(10, 50, 6), rng.choice(SIGMA_GRID, 6), rho=1e12)
    assert list(out) == list(range(6))


def test_objective_pure_and_fast_path_agrees():
    rng = np.random.default_rng(2)
    h = _cn(rng, 7, 5)
    sizes, sigma = rng.uniform(10, 90, 7), rng.choice(SIGMA_GRID, 7)
    fast = sc._fast_objective(h, sizes, sigma, 1.0, 3, 0.1)
    for _ in range(30):
        mask = rng.random(7) < 0.5
        if not mask.any():
            continue
        a = sc.subset_objective(mask, h, sizes, sigma, 1.0, 3, 0.1)
        assert a == sc.subset_objective(mask, h, sizes, sigma, 1.0, 3, 0.1)
        assert np.isclose(fast(mask), a, rtol=1e-12)
    assert sc.subset_objective(np.zeros(7, bool), h, sizes, sigma) == np.inf


def test_accept_rule():
    assert sc.accept(-1.0, 0.0, 0.99)
    assert not sc.accept(1e-12, 0.0, 0.0)
    assert sc.accept(1.0, 1.0, np.exp(-1.0) - 1e-9)
    assert not sc.accept(1.0, 1.0, np.exp(-1.0) + 1e-9)


def test_near_optimal_small_k():
    hits = 0
    for trial in range(15):
        rng = np.random.default_rng(500 + trial)
        K = int(rng.integers(2, 9))
        h = _cn(rng, K, 5) * rng.uniform(0.1, 3, (K, 1))
        sizes, sigma = rng.integers(20, 200, K).astype(float), rng.choice(SIGMA_GRID, K)
        _, best = sc.brute_force(h, sizes, sigma)
        mask = np.zeros(K, bool)
        mask[sc.select_devices(h, sizes, sigma, seed=trial)] = True
        hits += sc.subset_objective(mask, h, sizes, sigma) <= best * 1.05
    assert hits >= 13


def test_seeded_determinism():
    rng = np.random.default_rng(4)
    h = _cn(rng, 8, 5)
    sizes, sigma = rng.uniform(10, 90, 8), rng.choice(SIGMA_GRID, 8)
    a = sc.select_devices(h, sizes, sigma, seed=11)
    assert np.array_equal(a, sc.select_devices(h, sizes, sigma, seed=11))
