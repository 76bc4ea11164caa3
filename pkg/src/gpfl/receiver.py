"""Receive beamforming for over-the-air aggregation.

The server looks for the combiner ``c`` minimizing the worst-case aggregation
error, ``max_k |D_k|^2 ||c||^2 / |c^H h_k|^2``. This is the non-convex QCQP

    min ||c||^2   s.t.   |c^H h_k|^2 >= |D_k|^2  for all k,

lifted to ``C = c c^H`` and handled as a difference-of-convex program: the
rank-one requirement ``Tr(C) - ||C||_2 = 0`` enters as a penalty weighted by
``zeta`` and the concave part is linearized at the current iterate. Each
linearized problem is a small SDP, solved here through its K-dimensional dual
with a log-barrier Newton method.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
from numba import njit

log = logging.getLogger(__name__)


class InfeasibleReceiverError(ValueError):
    """Some effective channel is identically zero."""


@dataclass
class DcState:
    C: np.ndarray
    zeta: float
    iter: int = 0
    objective: float = float("nan")


@dataclass
class ReceiverDesign:
    c: np.ndarray
    objective: float
    converged: bool = True
    iterations: int = 0
    rank_residual: float = 0.0
    zeta: float = float("nan")
    used_fallback: bool = False
    history: list = field(default_factory=list)


def minmax_objective(c, h_eff, sizes):
    """``max_k |D_k|^2 ||c||^2 / |c^H h_k|^2`` (invariant to scaling of c)."""
    proj = np.abs(np.asarray(h_eff) @ np.conj(c)) ** 2
    if np.any(proj == 0.0):
        return float("inf")
    sizes = np.asarray(sizes, dtype=float)
    return float(np.max(sizes ** 2 * np.vdot(c, c).real / proj))


def penalized_objective(C, zeta):
    ev = np.linalg.eigvalsh(C)
    return float((1.0 + zeta) * ev.sum() - zeta * ev[-1])


def rank_one_residual(C):
    ev = np.linalg.eigvalsh(C)
    tr = ev.sum()
    return float((tr - ev[-1]) / tr) if tr > 0 else float("inf")


def spectral_subgradient(C, mix=None, rtol=1e-9):
    """An element of the subdifferential of ``||C||_2`` at Hermitian PSD ``C``.

    With a simple top eigenvalue this is ``v v^H``. On a repeated top
    eigenvalue the average projector onto that eigenspace is returned, or,
    when ``mix`` is given, ``v v^H`` for the unit vector ``v = V_top mix``.
    """
    w, V = np.linalg.eigh(C)
    top = w[-1]
    mask = w >= top - rtol * max(abs(top), 1e-300)
    Vt = V[:, mask]
    m = Vt.shape[1]
    if m == 1 or mix is None:
        return (Vt @ Vt.conj().T) / m
    v = Vt @ np.asarray(mix)[:m]
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def mrc_baseline(h_eff, sizes=None):
    """Maximum-ratio combiner ``sum_k h_k / ||h_k||`` normalized to unit norm."""
    h_eff = np.atleast_2d(h_eff)
    c = np.sum(h_eff / np.linalg.norm(h_eff, axis=1, keepdims=True), axis=0)
    nrm = np.linalg.norm(c)
    if nrm == 0.0:
        c = h_eff[0] / np.linalg.norm(h_eff[0])
    else:
        c = c / nrm
    return c


def _dedupe(h_eff, sizes, tol=1e-9):
    # parallel channels: keep only the constraint demanding the larger |D|^2/||h||^2
    keep = []
    need = sizes ** 2 / np.sum(np.abs(h_eff) ** 2, axis=1)
    unit = h_eff / np.linalg.norm(h_eff, axis=1, keepdims=True)
    for k in np.argsort(-need, kind="stable"):
        if all(abs(abs(np.vdot(unit[j], unit[k])) - 1.0) > tol for j in keep):
            keep.append(k)
    keep.sort()
    return h_eff[keep], sizes[keep]


def _normalized_channels(h_eff, sizes):
    # constraint k becomes |c^H g_k|^2 >= 1 with columns g_k of unit median norm
    g = h_eff / sizes[:, None]
    scale = np.sqrt(np.median(np.sum(np.abs(g) ** 2, axis=1)))
    return g / scale


def _feasible(C, G):
    lhs = np.real(np.einsum("ik,ij,jk->k", G.conj(), C, G))
    return C * max(1.0, float(np.max(1.0 / lhs)))


@njit(cache=True)
def _barrier_logdet(Gp, Gh, y):
    # log det(I - sum_k y_k g_k g_k^H), or nan when the slack leaves the PD cone
    S = np.eye(Gp.shape[0], dtype=np.complex128) - (Gp * y) @ Gh
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= 0.0:
        return np.nan
    return np.sum(np.log(ev))


@njit(cache=True)
def _dual_barrier(Gp, tol, shrink, centering, max_newton):
    N, K = Gp.shape
    Gh = np.ascontiguousarray(Gp.conj().T)
    eye = np.eye(N, dtype=np.complex128)
    y = 1.0 / (2.0 * K * np.sum(np.abs(Gp) ** 2, axis=0))
    mu = y.sum()
    ld = _barrier_logdet(Gp, Gh, y)
    final = False
    while True:
        # mu S^-1 is only as accurate as the centering, so the last pass is tight
        cen = 1e-14 if final else centering
        f = -y.sum() / mu - ld - np.sum(np.log(y))
        for _ in range(max_newton):
            Si = np.linalg.inv(eye - (Gp * y) @ Gh)
            M = Gh @ Si @ Gp
            grad = -1.0 / mu + np.real(np.diag(M)) - 1.0 / y
            hess = np.abs(M) ** 2 + np.diag(1.0 / y ** 2)
            dy = -np.linalg.solve(hess, grad)
            dec = -(grad @ dy)
            t = 1.0
            for k in range(K):
                if dy[k] < 0:
                    t = min(t, -0.95 * y[k] / dy[k])
            accepted = False
            yn = y
            fn = f
            ldn = ld
            while t > 1e-12:
                yn = y + t * dy
                ldn = _barrier_logdet(Gp, Gh, yn)
                if not np.isnan(ldn):
                    fn = -yn.sum() / mu - ldn - np.sum(np.log(yn))
                    if fn <= f - 0.01 * t * dec:
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
            stalled = fn >= f               # round-off floor: nothing left to gain
            y, f, ld = yn, fn, ldn
            if dec < cen or stalled:
                break
        if final:
            break
        if mu * (N + K) <= tol * y.sum():
            final = True
        else:
            mu /= shrink
    return mu * np.linalg.inv(eye - (Gp * y) @ Gh)


def _solve_lifted(P, G, tol=1e-9, shrink=100.0, centering=1e-2, max_newton=60):
    """min Tr(C') s.t. C' >= 0, g_k^H C' g_k >= 1 for g_k = P G[:, k]; returns P C' P.

    Log-barrier on the dual  max 1^T y  s.t.  I - sum_k y_k g_k g_k^H >= 0, y >= 0.
    On the central path ``mu * S^{-1}`` is primal feasible with duality gap
    ``mu (N + K)``.
    """
    Gp = np.ascontiguousarray(P @ G, dtype=np.complex128)
    Cp = _dual_barrier(Gp, tol, shrink, centering, max_newton)
    C = P @ Cp @ P.conj().T
    return 0.5 * (C + C.conj().T)


def dc_subproblem(state, G, tol=1e-9, mix=None):
    """One linearized DC step.

    Solves ``min (1 + zeta) Tr(C) - zeta <V, C>`` over PSD ``C`` with
    ``|g_k^H C g_k| >= 1``, where ``V`` is a subgradient of ``||C_j||_2`` at the
    current iterate and ``G`` holds the normalized channels ``g_k`` as columns.
    """
    zeta = state.zeta
    N = G.shape[0]
    V = spectral_subgradient(state.C, mix)
    # W = (1 + zeta) I - zeta V is positive definite; substitute C = W^-1/2 C' W^-1/2
    w, U = np.linalg.eigh((1.0 + zeta) * np.eye(N) - zeta * V)
    P = (U / np.sqrt(w)) @ U.conj().T
    return _feasible(_solve_lifted(P, G, tol=tol), G)


def design_receiver(h_eff, sizes, zeta=10.0, max_iter=200, tol=1e-8, warn=True):
    """Min-max receiver via the penalized DC program.

    Returns the principal direction of the final lifted iterate, rescaled so
    every constraint ``|c^H h_k|^2 >= |D_k|^2`` holds with the worst one active.
    If the maximum-ratio combiner scores better, it is returned instead.
    """
    h_eff = np.atleast_2d(np.asarray(h_eff, dtype=complex))
    sizes = np.asarray(sizes, dtype=float)
    if h_eff.shape[0] == 0:
        raise ValueError("need at least one client")
    if np.any(np.linalg.norm(h_eff, axis=1) == 0.0):
        raise InfeasibleReceiverError("zero effective channel")
    hk, dk = _dedupe(h_eff, sizes)
    G = _normalized_channels(hk, dk).T                  # (N, K)
    N = G.shape[0]

    state = DcState(_feasible(np.eye(N, dtype=complex) / N, G), float(zeta))
    state.objective = penalized_objective(state.C, state.zeta)
    history = [state.objective]
    stalled = 0
    converged = False
    # after the first (relaxation) step, break ties in repeated top eigenvalues
    mix = np.random.default_rng(0x5D).standard_normal(N) + 0.5j
    while state.iter < max_iter:
        C_new = dc_subproblem(state, G, mix=mix if state.iter else None)
        obj_new = penalized_objective(C_new, state.zeta)
        residual = rank_one_residual(C_new)
        decrease = state.objective - obj_new
        if decrease < -1e-8 * abs(state.objective):
            # inexact inner solve; keep the better iterate
            residual = rank_one_residual(state.C)
            if residual <= 1e-4:
                converged = True
                break
        else:
            state.C, state.objective = C_new, obj_new
        state.iter += 1
        history.append(state.objective)
        if residual <= 1e-4 and abs(decrease) <= tol * abs(state.objective):
            converged = True
            break
        stalled = stalled + 1 if residual > 1e-3 else 0
        if stalled >= 20:
            state.zeta *= 2.0
            state.objective = penalized_objective(state.C, state.zeta)
            stalled = 0
    if not converged and warn:
        warnings.warn("receiver design hit max_iter; returning best iterate",
                      RuntimeWarning, stacklevel=2)

    w, V = np.linalg.eigh(state.C)
    c = V[:, -1]
    proj = np.abs(h_eff @ np.conj(c)) ** 2
    if np.all(proj > 0):
        c = c * np.sqrt(np.max(sizes ** 2 / proj))
    design = ReceiverDesign(
        c=c,
        objective=minmax_objective(c, h_eff, sizes),
        converged=converged,
        iterations=state.iter,
        rank_residual=rank_one_residual(state.C),
        zeta=state.zeta,
        history=history,
    )
    c_mrc = mrc_baseline(h_eff, sizes)
    mrc_obj = minmax_objective(c_mrc, h_eff, sizes)
    if mrc_obj < design.objective:
        log.debug("MRC beats DC receiver (%g < %g)", mrc_obj, design.objective)
        c_mrc = c_mrc * np.sqrt(np.max(sizes ** 2 / np.abs(h_eff @ np.conj(c_mrc)) ** 2))
        design.c, design.objective, design.used_fallback = c_mrc, mrc_obj, True
    return design
