"""Switching linear-quadratic instances and their derived constants.

An instance is a finite family of modes ``(A^m, sigma^m, D^m)`` sharing a
disturbance weight ``gamma``.  Each mode contributes the Hamiltonian

    H^m(x, p) = (A^m x)'p + x'D^m x / 2 + p'Sigma^m p / 2,
    Sigma^m = sigma^m sigma^m' / gamma^2,

and the steady equation is ``max_m H^m(x, grad V) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, DegenerateInstanceError, NumericalFailure, UsageError
from .symmat import as_sym, eigvals_sym, loewner_leq

#: halving stops below this fraction of lambda1
EPSILON_FLOOR = 1e-8


@dataclass(frozen=True)
class ModeData:
    """Matrices of one mode: drift ``A`` (n x n), noise ``sigma`` (n x k), cost ``D``."""

    A: np.ndarray
    sigma: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        sigma = np.array(self.sigma, dtype=float, ndmin=2)
        D = as_sym(self.D)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise UsageError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if sigma.ndim != 2 or sigma.shape[0] != n:
            raise UsageError(f"sigma must have {n} rows, got shape {sigma.shape}")
        if D.shape != (n, n):
            raise UsageError(f"D must be {n}x{n}, got shape {D.shape}")
        for name, M in (("A", A), ("sigma", sigma)):
            if not np.all(np.isfinite(M)):
                raise UsageError(f"{name} has non-finite entries")
        for M in (A, sigma, D):
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "D", D)


@dataclass(frozen=True)
class SwitchedLQInstance:
    gamma: float
    modes: tuple

    def __post_init__(self):
        modes = tuple(m if isinstance(m, ModeData) else ModeData(**m) for m in self.modes)
        if not modes:
            raise UsageError("an instance needs at least one mode")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise UsageError(f"gamma must be a positive real, got {self.gamma!r}")
        n, k = modes[0].sigma.shape
        for i, m in enumerate(modes):
            if m.sigma.shape != (n, k):
                raise UsageError(
                    f"mode {i}: sigma has shape {m.sigma.shape}, expected {(n, k)}")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "modes", modes)

    @property
    def n(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def k(self) -> int:
        return self.modes[0].sigma.shape[1]

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "modes": [{"A": m.A.tolist(), "sigma": m.sigma.tolist(), "D": m.D.tolist()}
                      for m in self.modes],
        }


@dataclass(frozen=True)
class InstanceConstants:
    c_A: float
    c_sigma: float
    c_D: float
    m_D: float
    lambda1: float
    lambda2: float
    epsilon: float
    lam: float
    assumption1_ok: bool
    assumption2_ok: bool
    Sigma: tuple = field(repr=False)
    messages: tuple = ()

    @property
    def assumptions_ok(self) -> bool:
        return self.assumption1_ok and self.assumption2_ok

    def summary(self) -> dict:
        """Scalar constants and verdicts, in display order."""
        return {
            "c_A": self.c_A, "c_sigma": self.c_sigma, "c_D": self.c_D, "m_D": self.m_D,
            "lambda1": self.lambda1, "lambda2": self.lambda2,
            "epsilon": self.epsilon, "lambda": self.lam,
            "assumption1_ok": self.assumption1_ok,
            "assumption2_ok": self.assumption2_ok,
        }


def effective_sigma(inst: SwitchedLQInstance, m: int) -> np.ndarray:
    """``Sigma^m = sigma^m sigma^m' / gamma^2``."""
    if not 0 <= m < inst.num_modes:
        raise IndexError(f"mode index {m} out of range [0, {inst.num_modes})")
    s = inst.modes[m].sigma
    return as_sym(s @ s.T / inst.gamma ** 2)


def _phi_scalar_identity(mode: ModeData, Sigma: np.ndarray, c: float) -> np.ndarray:
    # Phi_m(cI) = c (A + A') + c^2 Sigma + D
    return c * (mode.A + mode.A.T) + c * c * Sigma + mode.D


def derive_constants(inst: SwitchedLQInstance, lam: float | None = None) -> InstanceConstants:
    """Compute the instance constants and check both standing assumptions.

    Assumption failures are reported through the boolean flags and
    ``messages``; only a non positive definite ``D^m`` or an identically
    zero disturbance channel raise.

    Parameters
    ----------
    lam : float, optional
        Upper end of the invariant interval.  Defaults to the midpoint of
        ``[lambda1, lambda2)``.
    """
    Sigmas = tuple(effective_sigma(inst, m) for m in range(inst.num_modes))
    c_A = -max(eigvals_sym(0.5 * (m.A + m.A.T))[-1] for m in inst.modes)
    c_sigma = max(np.linalg.svd(m.sigma, compute_uv=False)[0] for m in inst.modes)
    d_eigs = [eigvals_sym(m.D) for m in inst.modes]
    for i, w in enumerate(d_eigs):
        if not w[0] > 0:
            raise AssumptionError(
                f"mode {i}: D is not positive definite (lambda_min = {w[0]:.6g})", mode=i)
    c_D = max(float(w[-1]) for w in d_eigs)
    m_D = min(float(w[0]) for w in d_eigs)
    if c_sigma == 0:
        raise DegenerateInstanceError("all sigma^m are zero; lambda1 and lambda2 are undefined")

    g2 = inst.gamma ** 2
    s2 = c_sigma ** 2 / g2
    messages = []
    ok1 = c_A > 0 and c_A ** 2 > c_D * s2
    if c_A <= 0:
        messages.append(f"assumption 1: c_A = {c_A:.6g} is not positive")
    elif not ok1:
        messages.append(f"assumption 1: c_A^2 = {c_A**2:.6g} <= c_D c_sigma^2/gamma^2 = {c_D*s2:.6g}")

    disc = c_A ** 2 - c_D * s2
    if disc >= 0 and c_A > 0:
        gap = c_A - math.sqrt(disc)
        lambda1 = gap / s2
        ok2 = ok1 and s2 * m_D > gap ** 2
        if ok1 and not ok2:
            messages.append(
                f"assumption 2: (c_sigma^2/gamma^2) m_D = {s2*m_D:.6g} <= {gap**2:.6g}")
    else:
        lambda1 = math.nan
        ok2 = False
    lambda2 = math.sqrt(m_D / s2)
    if not ok1:
        messages.append("assumption 2 not checked: assumption 1 fails")

    if lam is None:
        lam = 0.5 * (lambda1 + lambda2) if math.isfinite(lambda1) else lambda2
    elif ok2 and not lambda1 <= lam < lambda2:
        messages.append(f"lambda = {lam:.6g} lies outside [lambda1, lambda2)")

    base = lambda1 if math.isfinite(lambda1) and lambda1 > 0 else m_D
    epsilon = base / 2
    while not all(loewner_leq(np.zeros_like(S), _phi_scalar_identity(m, S, epsilon), tol=0.0)
                  for m, S in zip(inst.modes, Sigmas)):
        epsilon /= 2
        if epsilon < EPSILON_FLOOR * base:
            raise NumericalFailure("no epsilon with Phi_m(epsilon I) >= 0 above the search floor")

    return InstanceConstants(
        c_A=float(c_A), c_sigma=float(c_sigma), c_D=c_D, m_D=m_D,
        lambda1=float(lambda1), lambda2=float(lambda2),
        epsilon=float(epsilon), lam=float(lam),
        assumption1_ok=bool(ok1), assumption2_ok=bool(ok2),
        Sigma=Sigmas, messages=tuple(messages),
    )


def mode_hamiltonians(inst, consts, x, p) -> np.ndarray:
    """``H^m(x, p)`` for every mode; `x` and `p` may be batches of shape (G, n).

    Returns an array of shape (num_modes,) or (num_modes, G).
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    out = []
    for mode, S in zip(inst.modes, consts.Sigma):
        Ax = x @ mode.A.T
        h = (np.sum(Ax * p, axis=-1)
             + 0.5 * np.sum(x * (x @ mode.D), axis=-1)
             + 0.5 * np.sum(p * (p @ S), axis=-1))
        out.append(h)
    return np.array(out)


def hamiltonian(inst, consts, x, p):
    """``H(x, p) = max_m H^m(x, p)``; accepts single vectors or (G, n) batches."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape[-1] != inst.n or p.shape[-1] != inst.n:
        raise UsageError(f"x and p must have trailing dimension {inst.n}")
    h = mode_hamiltonians(inst, consts, x, p).max(axis=0)
    return float(h) if h.ndim == 0 else h
