"""Indefinite Riccati vector field and its flow.

    Phi_m(P) = A'P + PA + P Sigma P + D,     dP/dt = Phi_m(P).

Two integrators are provided.  ``rk4`` is the workhorse: classical
fixed-step RK4 on stacks of matrices.  ``moebius`` is an independent
oracle that writes ``P(t) = Y X^{-1}`` where ``[X; Y]`` solves the
linear Hamiltonian system

    d/dt [X; Y] = [[-A, -Sigma], [D, A']] [X; Y],    X(0) = I, Y(0) = P0,

and evaluates it with a matrix exponential.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import FiniteEscapeError, UsageError
from .expm import expm_pade13
from .symmat import OrderInterval, symmetrize

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "moebius")


@dataclass(frozen=True)
class FlowConfig:
    substeps_per_unit_time: int = 1000
    integrator: str = "rk4"
    # diagnostic only: a warning is logged when a result leaves the interval
    clamp_interval: OrderInterval | None = None

    def __post_init__(self):
        if int(self.substeps_per_unit_time) < 1:
            raise UsageError("substeps_per_unit_time must be >= 1")
        if self.integrator not in INTEGRATORS:
            raise UsageError(f"unknown integrator {self.integrator!r}; use one of {INTEGRATORS}")

    def num_steps(self, t: float) -> int:
        return max(1, math.ceil(t * self.substeps_per_unit_time - 1e-9))


def _mode(inst, consts, m):
    if not 0 <= m < inst.num_modes:
        raise IndexError(f"mode index {m} out of range [0, {inst.num_modes})")
    mode = inst.modes[m]
    return mode.A, consts.Sigma[m], mode.D


def _phi(A, S, D, P):
    AtP = np.swapaxes(A, -1, -2) @ P
    return symmetrize(AtP + np.swapaxes(AtP, -1, -2) + P @ S @ P + D)


def phi(inst, consts, m: int, P) -> np.ndarray:
    """Riccati vector field of mode `m` at `P` (a matrix or a stack)."""
    A, S, D = _mode(inst, consts, m)
    return _phi(A, S, D, np.asarray(P, dtype=float))


@njit(cache=True, nogil=True)
def _phi_into(A, S, D, P, out, tmp):
    # out = A'P + PA + P S P + D for one symmetric P; only the upper triangle is summed
    n = P.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += S[i, k] * P[k, j]
            tmp[i, j] = acc
    for i in range(n):
        for j in range(i, n):
            acc = D[i, j]
            for k in range(n):
                acc += A[k, i] * P[k, j] + P[i, k] * A[k, j] + P[i, k] * tmp[k, j]
            out[i, j] = acc
    for i in range(n):
        for j in range(i + 1, n):
            out[j, i] = out[i, j]


@njit(cache=True, nogil=True)
def _rk4_kernel(A, S, D, P, h, nsteps):
    """Advance the stack `P` in place; return the failing step or -1."""
    K, n = P.shape[0], P.shape[1]
    k1 = np.empty((n, n))
    k2 = np.empty((n, n))
    k3 = np.empty((n, n))
    k4 = np.empty((n, n))
    Q = np.empty((n, n))
    tmp = np.empty((n, n))
    nxt = np.empty((K, n, n))
    for step in range(nsteps):
        for m in range(K):
            X = P[m]
            _phi_into(A, S, D, X, k1, tmp)
            Q[:, :] = X + (0.5 * h) * k1
            _phi_into(A, S, D, Q, k2, tmp)
            Q[:, :] = X + (0.5 * h) * k2
            _phi_into(A, S, D, Q, k3, tmp)
            Q[:, :] = X + h * k3
            _phi_into(A, S, D, Q, k4, tmp)
            for i in range(n):
                for j in range(i, n):
                    v = X[i, j] + (h / 6.0) * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j]
                                               + k4[i, j])
                    if not np.isfinite(v):
                        return step
                    nxt[m, i, j] = v
                    nxt[m, j, i] = v
        P[:, :, :] = nxt
    return -1


def _rk4(A, S, D, P0, t, nsteps):
    h = t / nsteps
    P = np.array(P0, dtype=float, order="C").reshape(-1, *P0.shape[-2:])
    failed = _rk4_kernel(np.ascontiguousarray(A), np.ascontiguousarray(S),
                         np.ascontiguousarray(D), P, h, nsteps)
    if failed >= 0:
        raise FiniteEscapeError(
            f"Riccati solution escaped near t = {(failed + 1) * h:.6g}",
            last_finite=P.reshape(P0.shape), step_index=failed, escape_time=(failed + 1) * h)
    return P.reshape(P0.shape)


def hamiltonian_matrix(A, S, D) -> np.ndarray:
    """Generator ``[[-A, -Sigma], [D, A']]`` of the linear-fractional representation."""
    return np.block([[-A, -S], [D, A.T]])


def _moebius(A, S, D, P0, t):
    n = A.shape[0]
    # the representation passes through poles silently, so det X is tracked
    # on a coarse grid: a sign change means the solution escaped before t
    J = max(1, math.ceil(20 * t))
    Eh = expm_pade13((t / J) * hamiltonian_matrix(A, S, D))
    E = np.eye(2 * n)
    for j in range(J):
        E = Eh @ E
        X = E[:n, :n] + E[:n, n:] @ P0
        if not np.all(np.isfinite(X)) or np.linalg.det(X) <= 0 or np.linalg.cond(X) > 1e14:
            raise FiniteEscapeError(
                f"linear-fractional denominator is singular before t = {(j + 1) * t / J:.6g}",
                escape_time=(j + 1) * t / J)
    Y = E[n:, :n] + E[n:, n:] @ P0
    # P = Y X^{-1}  <=>  X' P' = Y'
    P = np.linalg.solve(X.T, Y.T).T
    return symmetrize(P)


def flow(inst, consts, m: int, P0, t: float, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """Flow map ``M^m_t[P0]``.

    `P0` may be one matrix or a stack of shape (K, n, n); the rk4 path
    integrates a stack in one pass.  ``t = 0`` returns `P0` unchanged.
    """
    if t < 0:
        raise UsageError(f"flow time must be nonnegative, got {t}")
    P0 = np.asarray(P0, dtype=float)
    if t == 0:
        return P0.copy()
    A, S, D = _mode(inst, consts, m)
    if cfg.integrator == "rk4":
        out = _rk4(A, S, D, P0, t, cfg.num_steps(t))
    elif P0.ndim == 2:
        out = _moebius(A, S, D, P0, t)
    else:
        out = np.stack([_moebius(A, S, D, P, t) for P in P0])
    if cfg.clamp_interval is not None:
        for P in out.reshape(-1, *out.shape[-2:]):
            if not cfg.clamp_interval.contains(P, tol=1e-8):
                log.warning("mode %d flow left the clamp interval at t=%g", m, t)
                break
    return out


def flow_composed(inst, consts, mode_sequence, P0, tau: float,
                  cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """Apply ``flow(m, ., tau)`` for each `m` of `mode_sequence` in order."""
    if tau <= 0:
        raise UsageError(f"tau must be positive, got {tau}")
    P = np.asarray(P0, dtype=float).copy()
    for m in mode_sequence:
        P = flow(inst, consts, m, P, tau, cfg)
    return P
