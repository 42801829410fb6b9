"""Dense symmetric-matrix kernel.

Eigendecomposition, Loewner-order tests, the operator norm and the
Thompson part metric on the cone of positive definite matrices.  Matrices
are plain ``numpy`` arrays; :func:`as_sym` is the single entry point that
validates and symmetrizes user input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalFailure, UsageError

#: relative scale of the default Loewner tolerance
LOEWNER_RTOL = 1e-10
#: relative threshold below which a matrix is not considered positive definite
PD_RTOL = 1e-12


def as_sym(M) -> np.ndarray:
    """Return a symmetric float copy of `M`, taking the upper triangle as truth.

    Raises :class:`UsageError` for non-square input and :class:`DomainError`
    for non-finite entries.
    """
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise UsageError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    upper = np.triu(M)
    return upper + np.triu(M, 1).T


def symmetrize(X: np.ndarray) -> np.ndarray:
    """(X + X')/2 over the last two axes; used to kill rounding skew."""
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def eigen_sym(M):
    """Eigendecomposition ``M = Q diag(w) Q'`` with ascending eigenvalues."""
    M = np.asarray(M, dtype=float)
    try:
        w, Q = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}", matrix=M) from exc
    return w, Q


def eigvals_sym(M) -> np.ndarray:
    """Ascending eigenvalues of one symmetric matrix or a stack of them."""
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}", matrix=M) from exc


def opnorm(M) -> float:
    """Operator (spectral) norm of a symmetric matrix."""
    w = eigvals_sym(M)
    return float(max(abs(w[0]), abs(w[-1]))) if w.size else 0.0


def _check_same_dim(A, B):
    if A.shape != B.shape:
        raise UsageError(f"dimension mismatch: {A.shape} vs {B.shape}")


def loewner_leq(A, B, tol: float | None = None) -> bool:
    """Test ``A <= B`` in the Loewner order, i.e. ``lambda_min(B - A) >= -tol``.

    With ``tol=None`` the tolerance is ``1e-10 * ||B - A||``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_same_dim(A, B)
    diff = symmetrize(B - A)
    w = eigvals_sym(diff)
    if tol is None:
        tol = LOEWNER_RTOL * max(abs(w[0]), abs(w[-1]))
    return bool(w[0] >= -tol)


def pd_threshold(P) -> float:
    return PD_RTOL * (1.0 + opnorm(P))


def is_pd(P) -> bool:
    w = eigvals_sym(P)
    return bool(w[0] > PD_RTOL * (1.0 + max(abs(w[0]), abs(w[-1]))))


def require_pd(P, name="matrix"):
    w = eigvals_sym(P)
    if not w[0] > PD_RTOL * (1.0 + max(abs(w[0]), abs(w[-1]))):
        raise DomainError(f"{name} is not positive definite (lambda_min = {w[0]:.6g})")


def _inv_chol(P2: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(P2)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"Cholesky factorization failed: {exc}") from exc
    n = P2.shape[-1]
    eye = np.broadcast_to(np.eye(n), P2.shape)
    return np.linalg.solve(L, eye)


def dominance_factor(P1, P2) -> float:
    """Smallest ``t`` with ``P1 <= t P2``.

    Computed as the largest generalized eigenvalue of ``(P1, P2)`` through a
    Cholesky factor of `P2`, which must be positive definite.
    """
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    _check_same_dim(P1, P2)
    require_pd(P2, "P2")
    Linv = _inv_chol(P2)
    C = symmetrize(Linv @ P1 @ Linv.T)
    return float(eigvals_sym(C)[-1])


def thompson_distance(P1, P2) -> float:
    """Thompson part metric ``log max{M(P1/P2), M(P2/P1)}``."""
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    _check_same_dim(P1, P2)
    require_pd(P1, "P1")
    require_pd(P2, "P2")
    # the spectrum of P2^{-1/2} P1 P2^{-1/2} gives both factors at once
    Linv = _inv_chol(P2)
    w = eigvals_sym(symmetrize(Linv @ P1 @ Linv.T))
    return float(max(np.log(w[-1]), -np.log(w[0]), 0.0))


# -- batched variants used by the propagation hot loops ---------------------

def inv_chol_stack(Ps: np.ndarray) -> np.ndarray:
    """Inverse lower Cholesky factors for a stack of PD matrices."""
    return _inv_chol(np.asarray(Ps, dtype=float))


def dominance_factors(P: np.ndarray, Linvs: np.ndarray) -> np.ndarray:
    """``M(P / Q_j)`` for every ``Q_j = L_j L_j'`` given the stack ``L_j^{-1}``."""
    C = Linvs @ P @ np.swapaxes(Linvs, -1, -2)
    return eigvals_sym(symmetrize(C))[..., -1]


def thompson_distances(P1s: np.ndarray, P2s: np.ndarray) -> np.ndarray:
    """Pairwise-aligned Thompson distances between two stacks of PD matrices."""
    Linv = _inv_chol(np.asarray(P2s, dtype=float))
    w = eigvals_sym(symmetrize(Linv @ P1s @ np.swapaxes(Linv, -1, -2)))
    if np.any(w[..., 0] <= 0):
        raise DomainError("P1 stack contains a matrix that is not positive definite")
    return np.maximum(np.maximum(np.log(w[..., -1]), -np.log(w[..., 0])), 0.0)


@dataclass(frozen=True)
class OrderInterval:
    """Order interval ``[lo, hi] = {P : lo <= P <= hi}``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = as_sym(self.lo), as_sym(self.hi)
        if not loewner_leq(lo, hi):
            raise DomainError("order interval requires lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def scalar(cls, lo: float, hi: float, n: int) -> "OrderInterval":
        return cls(lo * np.eye(n), hi * np.eye(n))

    def contains(self, P, tol: float | None = None) -> bool:
        return loewner_leq(self.lo, P, tol) and loewner_leq(P, self.hi, tol)
