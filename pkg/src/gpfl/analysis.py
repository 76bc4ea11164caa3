"""Closed-form convergence bounds and their comparison with simulated runs.

The distance bound is ``mu^t E||theta_0 - theta*|| + C_t`` with ``mu = L delta / lam``
and ``C_t = (mu^t - 1)/(mu - 1) * A_t``, where ``A_t`` is ``C0`` up to round
``t0`` and ``C1`` after it. The per-round noise term
``sigma ||c_t|| / (|D| sqrt(alpha_t))`` is round dependent, so besides this
closed form (evaluated with the round-t values) the accumulated recursion
``sum_{s<t} mu^(t-1-s) A_s`` is provided as well.

That noise term is the size of one entry of the aggregation error. The error
vector has ``d`` such entries, so ``E||n_t|| <= sqrt(d) sigma ||c_t|| / (|D| sqrt(alpha_t))``;
``BoundInputs.noise_dim`` selects between the per-entry form (1) and the
whole-vector form (``d``).
"""

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass
class BoundInputs:
    """Constants of a run. ``sigma_n``, ``c_norm`` and ``alpha`` may be scalars or per-round arrays."""

    lam: float
    L: float
    delta: float
    g0_norm: float
    sigma_n: object = 0.0
    c_norm: object = 1.0
    D_total: float = 1.0
    alpha: object = 1.0
    noise_dim: int = 1

    def __post_init__(self):
        if not (self.lam > 0 and self.L > 0 and self.delta >= 0 and self.g0_norm >= 0):
            raise ValueError("need lam, L > 0 and delta, g0_norm >= 0")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")

    @property
    def mu(self):
        return self.L * self.delta / self.lam


@dataclass
class BoundTrace:
    mu: float
    t0: int
    gamma: float
    valid: bool
    rounds: np.ndarray
    A: np.ndarray
    C: np.ndarray
    bound: np.ndarray
    recursion: np.ndarray
    regime: list = field(default_factory=list)


def t0_gamma(lam, L, g0_norm):
    """``t0 = max(0, ceil(2L / (lam^2 ||g0||)) - 2)``, ``gamma = L ||g0|| / (2 lam^2) - t0 / 4``."""
    if g0_norm == 0:
        return 0, 0.0
    t0 = max(0, math.ceil(2.0 * L / (lam ** 2 * g0_norm)) - 2)
    gamma = L * g0_norm / (2.0 * lam ** 2) - t0 / 4.0
    return t0, gamma


def _at(x, t):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return float(x)
    return float(x[min(t, x.size - 1)])


def noise_term(inp, t):
    """``sqrt(noise_dim) sigma_n ||c_t|| / (|D| sqrt(alpha_t))`` at round ``t`` (0 when noiseless)."""
    sig = _at(inp.sigma_n, t)
    if sig == 0:
        return 0.0
    per_entry = sig * _at(inp.c_norm, t) / (inp.D_total * math.sqrt(_at(inp.alpha, t)))
    return math.sqrt(inp.noise_dim) * per_entry


def _tail(mu, t, A):
    # geometric(mu, t) * A, with an empty sum (t = 0) contributing nothing even if A is inf
    return 0.0 if t == 0 else geometric(mu, t) * A


def geometric(mu, t):
    """``(mu^t - 1)/(mu - 1)``, with its limit ``t`` at ``mu = 1``."""
    if mu == 1.0:
        return float(t)
    return (mu ** t - 1.0) / (mu - 1.0)


def _quad_part(lam, L, t, t0, gamma):
    # lam/L times the damped-Newton distance bound; infinite when gamma leaves [0, 1)
    if not 0 <= gamma < 1:
        return math.inf
    if t <= t0:
        return lam / L * (t0 - t + 2.0 * gamma / (1.0 - gamma))
    g = gamma ** (2.0 ** (t - t0))
    return 2.0 * lam * g / (L * (1.0 - g))


def A_term(inp, t):
    """``C0`` for ``t <= t0`` and ``C1`` after."""
    t0, gamma = t0_gamma(inp.lam, inp.L, inp.g0_norm)
    return _quad_part(inp.lam, inp.L, t, t0, gamma) + (inp.delta + 1.0) / inp.lam * noise_term(inp, t)


def A2_term(inp, t):
    """Squared constants ``C'0`` / ``C'1`` of the optimality-gap bound."""
    t0, gamma = t0_gamma(inp.lam, inp.L, inp.g0_norm)
    q = _quad_part(inp.lam, inp.L, t, t0, gamma)
    return q ** 2 + ((inp.delta + 1.0) / inp.lam) ** 2 * noise_term(inp, t) ** 2


def theorem1_bound(inp, t, init_dist):
    """Closed-form distance bound at round ``t``."""
    mu = inp.mu
    return mu ** t * init_dist + _tail(mu, t, A_term(inp, t))


def theorem1_recursion(inp, t, init_dist):
    """Distance bound from unrolling ``e_{s+1} <= mu e_s + A_s``."""
    mu = inp.mu
    acc = mu ** t * init_dist
    for s in range(t):
        acc += mu ** (t - 1 - s) * A_term(inp, s)
    return acc


def theorem2_bound(inp, t, init_dist_sq):
    """Optimality-gap bound ``(L/2)(mu^2t E||e0||^2 + C'_t)``."""
    mu2 = inp.mu ** 2
    return 0.5 * inp.L * (mu2 ** t * init_dist_sq + _tail(mu2, t, A2_term(inp, t)))


def bound_trace(inp, T, init_dist):
    t0, gamma = t0_gamma(inp.lam, inp.L, inp.g0_norm)
    rounds = np.arange(T + 1)
    A = np.array([A_term(inp, t) for t in rounds])
    C = np.array([_tail(inp.mu, t, A[t]) for t in rounds])
    bound = np.array([theorem1_bound(inp, t, init_dist) for t in rounds])
    rec = np.array([theorem1_recursion(inp, t, init_dist) for t in rounds])
    regime = ["pre-t0" if t <= t0 else "post-t0" for t in rounds]
    return BoundTrace(inp.mu, t0, gamma, 0 <= gamma < 1, rounds, A, C, bound, rec, regime)


def corollary1_bound(inp, t):
    """Superlinear-regime bound ``2 (mu^t - 1)/(mu - 1) C1``."""
    return 2.0 * _tail(inp.mu, t, A_term(inp, t))


def corollary2_bound(inp, t, init_dist):
    """Linear-regime bound ``2 mu^t E||theta_0 - theta*||``."""
    return 2.0 * inp.mu ** t * init_dist


def rounds_to_epsilon(inp, eps, regime="linear", init_dist=1.0, max_rounds=100_000):
    """Smallest ``t >= 1`` whose corollary bound is at most ``eps`` (forward scan).

    The scan starts at 1 because the superlinear bound is an empty sum at 0.
    """
    if inp.mu >= 1:
        raise ValueError("no convergence guarantee: mu >= 1")
    if regime == "linear":
        f = lambda t: corollary2_bound(inp, t, init_dist)
    elif regime == "superlinear":
        f = lambda t: corollary1_bound(inp, t)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    for t in range(1, max_rounds + 1):
        if f(t) <= eps:
            return t
    raise RuntimeError(f"bound still above {eps} after {max_rounds} rounds")


def empirical_rounds_to_epsilon(dist, eps):
    """First round at which an observed distance sequence is at most ``eps`` (None if never)."""
    hits = np.flatnonzero(np.asarray(dist, dtype=float) <= eps)
    return int(hits[0]) if hits.size else None


@dataclass
class CheckReport:
    rounds: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    fraction: float
    violations: list


def empirical_check(observed, bound, slack=0.0, atol=0.0):
    """Compare observed mean distances with bound values round by round.

    ``observed`` may be a (rounds,) mean trajectory or a (seeds, rounds) array
    that is averaged over seeds first. A round passes when
    ``observed <= bound * (1 + slack) + atol``; ``atol`` is meant for the
    floating-point floor of exact methods. Violations are listed, never dropped.
    """
    obs = np.asarray(observed, dtype=float)
    if obs.ndim == 2:
        obs = obs.mean(axis=0)
    if obs.size == 0 or np.any(~np.isfinite(obs)):
        raise ValueError("observed distances missing: the run has no optimum oracle")
    bnd = np.asarray(getattr(bound, "bound", bound), dtype=float)[: obs.size]
    ok = obs <= bnd * (1.0 + slack) + atol
    viol = [int(t) for t in np.flatnonzero(~ok)]
    return CheckReport(np.arange(obs.size), obs, bnd, float(ok.mean()), viol)


def inputs_from_metrics(metrics, consts, g0_norm, delta=None, D_total=1.0, noise_dim=1):
    """Bound inputs for one run, taking ``delta`` from its probe when not given."""
    recs = metrics.records
    probe = np.array([r.delta_probe for r in recs], dtype=float)
    if delta is None:
        finite = probe[np.isfinite(probe)]
        delta = float(finite.max()) if finite.size else 0.0
    sig = np.array([getattr(r, "sigma_round", 0.0) for r in recs], dtype=float)
    c = np.array([r.c_norm for r in recs], dtype=float)
    a = np.array([r.alpha for r in recs], dtype=float)
    # rows without a channel use (the final evaluation row) carry the last
    # round's values forward; a run with no channel use at all is noiseless
    for arr, fill in ((sig, 0.0), (c, 1.0), (a, 1.0)):
        for t in range(arr.size):
            if not np.isfinite(arr[t]):
                arr[t] = arr[t - 1] if t > 0 else fill
    return BoundInputs(consts.lam, consts.L, delta, float(g0_norm), sig, c, D_total, a, noise_dim)
