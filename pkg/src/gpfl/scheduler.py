"""Device selection by a simplified annealed Gibbs sampler.

This is a reduced stand-in for a full Gibbs-sampling scheduler: the state is
a client subset, moves are single-client flips accepted with the Metropolis
rule ``exp(-dJ / T)`` and the temperature cools geometrically per sweep. The
objective is the aggregation-error variance of the subset under the cheap
maximum-ratio receiver, minus a participation reward ``rho * |S|``.
"""

from dataclasses import dataclass

import numpy as np

from .receiver import mrc_baseline


@dataclass
class ScheduleState:
    current: np.ndarray        # boolean membership mask
    objective: float
    temperature: float
    seed: int


def subset_objective(mask, h_eff, sizes, sigma, P0=1.0, d=1, rho=0.0):
    """``sigma_S^2 ||c||^2 / (|D_S|^2 alpha) - rho |S|`` with the MRC receiver of S.

    ``sigma`` holds per-client noise levels; the set's receiver noise is their
    root-sum-square. Returns ``inf`` for the empty set.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("inf")
    h = np.asarray(h_eff)[mask]
    D = np.asarray(sizes, dtype=float)[mask]
    c = mrc_baseline(h)
    proj = np.abs(h @ np.conj(c)) ** 2
    if np.any(proj == 0.0):
        return float("inf")
    worst = np.max(D ** 2 * np.vdot(c, c).real / proj)
    sig2 = np.sum(np.asarray(sigma, dtype=float)[mask] ** 2)
    return float(sig2 * worst / (D.sum() ** 2 * P0 * d) - rho * mask.sum())


def _fast_objective(h_eff, sizes, sigma, P0, d, rho):
    # same value as subset_objective with the per-client constants hoisted
    h = np.asarray(h_eff)
    U = h / np.linalg.norm(h, axis=1, keepdims=True)
    D = np.asarray(sizes, dtype=float)
    D2 = D ** 2
    s2 = np.asarray(sigma, dtype=float) ** 2
    denom = P0 * d

    def J(mask):
        s = U[mask].sum(axis=0)
        nrm2 = np.vdot(s, s).real
        if nrm2 == 0.0:
            return float("inf")
        proj = np.abs(h[mask] @ np.conj(s)) ** 2
        if np.any(proj == 0.0):
            return float("inf")
        worst = np.max(D2[mask] / proj) * nrm2
        return float(s2[mask].sum() * worst / (D[mask].sum() ** 2 * denom)
                     - rho * np.count_nonzero(mask))
    return J


def brute_force(h_eff, sizes, sigma, P0=1.0, d=1, rho=0.0):
    """Exhaustive minimizer over all non-empty subsets (small K only)."""
    K = len(sizes)
    best, best_mask = float("inf"), None
    for code in range(1, 2 ** K):
        mask = (code >> np.arange(K)) & 1 == 1
        J = subset_objective(mask, h_eff, sizes, sigma, P0, d, rho)
        if J < best:
            best, best_mask = J, mask
    return best_mask, best


def accept(dJ, temperature, u):
    """Metropolis test; at zero temperature only non-worsening flips pass."""
    if dJ <= 0:
        return True
    if temperature <= 0 or not np.isfinite(dJ):
        return False
    return u < np.exp(-dJ / temperature)


def select_devices(h_eff, sizes, sigma, rounds=200, rho=0.0, seed=0, P0=1.0, d=1,
                   cooling=0.95):
    """Annealed single-flip sampler; returns the sorted indices of the best subset seen."""
    h_eff = np.atleast_2d(h_eff)
    K = h_eff.shape[0]
    if K < 1:
        raise ValueError("need at least one candidate")
    if K == 1:
        return np.array([0])
    rng = np.random.default_rng(seed)
    J = _fast_objective(h_eff, sizes, sigma, P0, d, rho)

    mask = np.ones(K, dtype=bool)
    cur = J(mask)
    probes = []
    for k in rng.integers(0, K, 20):
        trial = mask.copy()
        trial[k] = False
        dj = J(trial) - cur
        if np.isfinite(dj):
            probes.append(abs(dj))
    T = float(np.median(probes)) if probes else 0.0
    state = ScheduleState(mask, cur, T, seed)
    best_mask, best = mask.copy(), cur
    for _ in range(rounds):
        for k in rng.permutation(K):
            trial = state.current.copy()
            trial[k] = not trial[k]
            if not trial.any():
                continue
            Jt = J(trial)
            if accept(Jt - state.objective, state.temperature, rng.random()):
                state.current, state.objective = trial, Jt
                if Jt < best:
                    best_mask, best = trial.copy(), Jt
        state.temperature *= cooling
    # zero-temperature polish from the best state: single flips until none improves
    improved = True
    while improved:
        improved = False
        for k in range(K):
            trial = best_mask.copy()
            trial[k] = not trial[k]
            if trial.any():
                Jt = J(trial)
                if Jt < best:
                    best_mask, best, improved = trial, Jt, True
    return np.flatnonzero(best_mask)
