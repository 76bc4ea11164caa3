"""Round loop for GP-FL and its baselines under shared channel randomness.

Methods:

* ``gpfl``: GP posterior-sampled Hessian estimate, direction ``-B_hat^{-1} g_tilde``.
* ``bfgs_air``: damped BFGS on the noisy aggregates.
* ``fedavg_air``: one noisy gradient step per round.
* ``newton_ideal``: noiseless Newton step with the exact Hessian, or with
  ``H^{-1} + world.inverse_error`` when an error is injected (reference only).

Per-round randomness (channels, receiver noise, scheduler, posterior draws)
is keyed by ``(seed, round)`` alone, so every method sees the same draws.
"""

from dataclasses import dataclass, field, asdict
import math
import time

import numpy as np

from . import aircomp, dataio, gp_hessian, loss_model
from .receiver import design_receiver
from .scheduler import select_devices

METHODS = ("gpfl", "fedavg_air", "bfgs_air", "newton_ideal")
SCHEDULERS = ("gibbs", "uniform", "full")

# stream tags for np.random.default_rng([seed, round, tag])
_CHANNEL, _NOISE, _SCHED, _GP = 1, 2, 3, 4


@dataclass
class RunConfig:
    dataset: str = "synthetic"      # "synthetic" or a LIBSVM file path
    m: int = 30
    n: int = 2000
    sep: float = 3.0
    data_seed: int = -1             # -1: each run seed draws its own data
    partition: str = "iid"
    beta: float = 0.5
    maxabs: bool = False
    reg: float = 0.1
    K: int = 20
    N: int = 5
    P0: float = 1.0
    sigma_scale: float = 1.0
    T: int = 50
    r: int = 20
    tau: str = "median"
    jitter: float = 1e-6
    zeta: float = 10.0
    receiver_max_iter: int = 200
    rho: float = 0.0
    scheduler: str = "gibbs"
    sweeps: int = 200
    uniform_fraction: float = 0.5
    posterior_sign: str = "paper"
    amplitude: str = "unit"
    fedavg_lr: float = 0.0          # 0: use 1/L
    methods: tuple = ("gpfl", "fedavg_air", "bfgs_air")
    seeds: tuple = (0,)
    record_wall_time: bool = False
    output: str = "runs/default"

    def validate(self):
        checks = [
            (self.K >= 1, "K must be >= 1"),
            (self.N >= 1, "N must be >= 1"),
            (self.T >= 0, "T must be >= 0"),
            (self.r >= 0, "r must be >= 0"),
            (self.P0 > 0, "P0 must be positive"),
            (self.reg > 0, "reg must be positive"),
            (self.sigma_scale >= 0, "sigma_scale must be >= 0"),
            (self.jitter > 0, "jitter must be positive"),
            (self.zeta >= 0, "zeta must be >= 0"),
            (self.m >= 1 and self.n >= 2, "need m >= 1 and n >= 2"),
            (self.scheduler in SCHEDULERS, f"scheduler must be one of {SCHEDULERS}"),
            (self.partition in ("iid", "dirichlet"), "partition must be iid or dirichlet"),
            (self.posterior_sign in ("paper", "standard"), "posterior_sign must be paper or standard"),
            (self.amplitude in ("unit", "empirical"), "amplitude must be unit or empirical"),
            (0 < self.uniform_fraction <= 1, "uniform_fraction must be in (0, 1]"),
            (len(self.methods) > 0, "need at least one method"),
            (all(mth in METHODS for mth in self.methods), f"methods must be among {METHODS}"),
            (len(self.seeds) > 0, "need at least one seed"),
            (self.fedavg_lr >= 0, "fedavg_lr must be >= 0"),
        ]
        if self.tau != "median":
            try:
                ok = float(self.tau) > 0
            except ValueError:
                ok = False
            checks.append((ok, "tau must be 'median' or a positive number"))
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        return self


@dataclass
class World:
    """Everything about a run that does not depend on the method."""

    specs: list
    sizes: np.ndarray
    weights: np.ndarray
    consts: loss_model.SmoothnessConstants
    theta_star: np.ndarray
    sigma: np.ndarray
    cfg: RunConfig
    seed: int
    inverse_error: np.ndarray = None    # added to H^{-1} by newton_ideal (controlled delta)

    @property
    def dim(self):
        return self.specs[0].dim


@dataclass
class QNState:
    B: np.ndarray
    Binv: np.ndarray
    g_prev: np.ndarray = None
    theta_prev: np.ndarray = None
    window: gp_hessian.ObservationWindow = None


@dataclass
class ModelState:
    theta: np.ndarray
    round: int = 0
    last_direction: np.ndarray = None
    eta_t: float = 1.0
    qn: QNState = None


@dataclass
class RoundRecord:
    round: int
    loss: float
    accuracy: float
    dist_to_opt: float
    g_tilde_norm: float = float("nan")
    eta: float = float("nan")
    alpha: float = float("nan")
    c_norm: float = float("nan")
    delta_probe: float = float("nan")
    wall_ms: float = 0.0
    sigma_round: float = float("nan")    # receiver noise level of the round (not in the CSV)


@dataclass
class RunMetrics:
    method: str
    seed: int
    records: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def learning_rate(consts, g_norm):
    """``min(1, lam^2 / (L ||g||))``, equal to 1 at a zero gradient."""
    if g_norm <= 0:
        return 1.0
    return min(1.0, consts.lam ** 2 / (consts.L * g_norm))


def build_world(cfg, seed):
    data_seed = seed if cfg.data_seed < 0 else cfg.data_seed
    if cfg.dataset == "synthetic":
        samples = dataio.synth_logistic(cfg.m, cfg.n, cfg.sep, data_seed)
    else:
        samples = dataio.read_libsvm(cfg.dataset)
    X, y = dataio.to_dense(samples)
    if cfg.maxabs:
        X = dataio.maxabs_scale(X)
    part = dataio.partition(y, cfg.K, cfg.partition, seed=data_seed, beta=cfg.beta)
    specs = [loss_model.LossSpec(X[idx], y[idx], cfg.reg) for idx in part.assignments]
    return make_world(specs, cfg, seed)


def make_world(specs, cfg, seed):
    """World from ready-made client objectives (also used for the quadratic benchmark)."""
    weights = loss_model.client_weights(specs)
    sizes = np.array([s.n_samples for s in specs], dtype=float)
    consts = loss_model.constants(specs, weights)
    theta_star = loss_model.solve_optimum(specs, weights)
    sigma = aircomp.assign_noise_levels(len(specs), seed, scale=cfg.sigma_scale)
    return World(specs, sizes, weights, consts, theta_star, sigma, cfg, seed)


def quadratic_world(cfg, seed, lam=1.0, L=1.2, g0_norm=1.3):
    """Shared-curvature quadratic clients with ``d = cfg.m``, ``K = cfg.K``.

    The common Hessian has spectrum exactly in [lam, L] (both ends attained)
    and the client centers are scaled so the global gradient at zero has norm
    ``g0_norm``. Local centers differ, so local gradients never vanish.
    """
    rng = np.random.default_rng([seed, 0x0A])
    d = cfg.m
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = np.concatenate([[lam, L], rng.uniform(lam, L, d - 2)]) if d > 1 else np.array([lam])
    A = (Q * eig) @ Q.T
    A = 0.5 * (A + A.T)
    sizes = rng.integers(20, 200, cfg.K)
    centers = rng.standard_normal((cfg.K, d))
    w = sizes / sizes.sum()
    g0 = -A @ (w @ centers)
    centers *= g0_norm / np.linalg.norm(g0)
    specs = [loss_model.QuadraticLoss(A, c, n) for c, n in zip(centers, sizes)]
    return make_world(specs, cfg, seed)


def init_state(world, theta0=None):
    d = world.dim
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    b0 = 0.5 * (world.consts.lam + world.consts.L)
    qn = QNState(B=b0 * np.eye(d), Binv=np.eye(d) / b0,
                 window=gp_hessian.ObservationWindow(world.cfg.r))
    return ModelState(theta, 0, None, 1.0, qn)


def _rng(seed, t, tag):
    return np.random.default_rng([seed, t, tag])


def evaluate(world, theta, t):
    loss = loss_model.global_loss(world.specs, world.weights, theta)
    acc = loss_model.global_accuracy(world.specs, theta)
    dist = float(np.linalg.norm(theta - world.theta_star))
    return RoundRecord(t, float(loss), acc, dist)


def select(world, h_eff, sizes, sigma, t):
    cfg = world.cfg
    K = h_eff.shape[0]
    if cfg.scheduler == "full" or K == 1:
        return np.arange(K)
    if cfg.scheduler == "uniform":
        size = max(1, math.ceil(cfg.uniform_fraction * K))
        return np.sort(_rng(world.seed, t, _SCHED).choice(K, size, replace=False))
    sched_seed = int(_rng(world.seed, t, _SCHED).integers(2 ** 63))
    return select_devices(h_eff, sizes, sigma, rounds=cfg.sweeps,
                          rho=cfg.rho, seed=sched_seed, P0=cfg.P0, d=world.dim)


def aggregate(world, theta, t):
    """Over-the-air estimate of the global gradient at ``theta`` for round ``t``."""
    cfg = world.cfg
    G = np.stack([s.gradient(theta) for s in world.specs])
    norms = np.linalg.norm(G, axis=1)
    live = np.flatnonzero(norms > 0)          # converged clients sit the round out
    chan = aircomp.draw_channels(len(world.specs), cfg.N, _rng(world.seed, t, _CHANNEL))
    if live.size == 0:
        return None
    h = chan.h[live]
    h_eff = aircomp.effective_channels(h, norms[live])
    S = live[select(world, h_eff, world.sizes[live], world.sigma[live], t)]
    rows = np.searchsorted(live, S)
    design = design_receiver(h_eff[rows], world.sizes[S], zeta=cfg.zeta,
                             max_iter=cfg.receiver_max_iter, warn=False)
    sig = aircomp.round_sigma(world.sigma, S)
    noise = aircomp.receiver_noise(cfg.N, world.dim, sig, _rng(world.seed, t, _NOISE))
    return aircomp.transmit_round(G[S], chan.h[S], sig, design.c, world.sizes[S],
                                  cfg.P0, None, noise=noise)


def _delta_probe(world, theta, Binv):
    H = loss_model.global_hessian(world.specs, world.weights, theta)
    Hinv = np.linalg.inv(H)
    return float(np.linalg.norm(Binv - Hinv, 2) / np.linalg.norm(Hinv, 2))


def _qn_observe(state, g_tilde):
    # fold the newest noisy difference into the BFGS sample and the window
    qn = state.qn
    if qn.g_prev is None:
        return False
    y = g_tilde - qn.g_prev
    w = state.theta - qn.theta_prev
    Bw = qn.B @ w
    qn.B = gp_hessian.bfgs_sample(qn.B, w, y)
    qn.Binv = gp_hessian.inverse_update(qn.Binv, w, y, Bw=Bw)
    qn.window.push(y, w, qn.B)
    return True


def run_round(state, method, world, seed=None):
    """One communication round; returns the next state and the record for ``state``."""
    cfg = world.cfg
    t = state.round
    start = time.perf_counter()
    rec = evaluate(world, state.theta, t)
    theta = state.theta
    if method == "newton_ideal":
        g = loss_model.global_gradient(world.specs, world.weights, theta)
        H = loss_model.global_hessian(world.specs, world.weights, theta)
        eta = 1.0
        rec.g_tilde_norm = float(np.linalg.norm(g))
        if world.inverse_error is None:
            direction = -np.linalg.solve(H, g) if np.any(g) else np.zeros_like(g)
            rec.delta_probe = 0.0
        else:
            Binv = np.linalg.inv(H) + world.inverse_error
            direction = -Binv @ g
            rec.delta_probe = _delta_probe(world, theta, Binv)
    else:
        agg = aggregate(world, theta, t)
        if agg is None:
            direction, eta, g_tilde = np.zeros_like(theta), 1.0, np.zeros_like(theta)
        else:
            g_tilde = agg.g_tilde
            rec.alpha, rec.c_norm, rec.sigma_round = agg.alpha, agg.c_norm, agg.sigma
            direction, eta, Binv = _direction(state, method, world, g_tilde, t)
            rec.delta_probe = _delta_probe(world, theta, Binv)
        rec.g_tilde_norm = float(np.linalg.norm(g_tilde))
        state.qn.g_prev, state.qn.theta_prev = g_tilde, theta
    rec.eta = eta
    new_theta = theta + eta * direction
    if cfg.record_wall_time:
        rec.wall_ms = 1e3 * (time.perf_counter() - start)
    nxt = ModelState(new_theta, t + 1, direction, eta, state.qn)
    return nxt, rec


def _direction(state, method, world, g_tilde, t):
    cfg = world.cfg
    consts = world.consts
    lr = cfg.fedavg_lr if cfg.fedavg_lr > 0 else 1.0 / consts.L
    if method == "fedavg_air":
        return -g_tilde, lr, lr * np.eye(g_tilde.size)
    if method not in ("gpfl", "bfgs_air"):
        raise ValueError(f"unknown method {method!r}")
    _qn_observe(state, g_tilde)
    qn = state.qn
    eta = learning_rate(consts, float(np.linalg.norm(g_tilde)))
    if method == "bfgs_air" or cfg.r == 0:
        return -qn.Binv @ g_tilde, eta, qn.Binv
    if t < 2:
        # warm-up before the window holds a difference: plain noisy gradient
        # step, with the rate folded into the direction so that eta stays 1
        return -lr * g_tilde, 1.0, lr * np.eye(g_tilde.size)
    tau = None if cfg.tau == "median" else float(cfg.tau)
    cache = gp_hessian.build_cache(qn.window, tau=tau, jitter=cfg.jitter)
    Z, P = gp_hessian.batch_posterior(cache, qn.window.b_samples, sign=cfg.posterior_sign,
                                      amplitude=cfg.amplitude)
    est = gp_hessian.sample_hessian(Z, P, consts, _rng(world.seed, t, _GP))
    direction = gp_hessian.newton_direction(est, g_tilde)
    return direction, eta, np.linalg.inv(est.B_hat)


def run_method(world, method, theta0=None):
    state = init_state(world, theta0)
    metrics = RunMetrics(method, world.seed)
    for _ in range(world.cfg.T):
        state, rec = run_round(state, method, world)
        metrics.records.append(rec)
    metrics.records.append(evaluate(world, state.theta, state.round))
    return metrics


def run_experiment(cfg):
    """All (method, seed) cells of a config; returns a list of RunMetrics."""
    cfg.validate()
    out = []
    for seed in cfg.seeds:
        world = build_world(cfg, seed)
        for method in cfg.methods:
            out.append(run_method(world, method))
    return out


def config_dict(cfg):
    return asdict(cfg)
