"""Max-plus value functions and the propagate / prune / solve loop.

A value function is represented as ``V(x) = max_j x'P_j x / 2``.  One step
of the scheme replaces every form by its Riccati flows under all modes
(max-plus linearity of the semigroup), then pruning drops forms that are
certified to be (almost) dominated by a kept one.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import planar
from .errors import DomainError, FiniteEscapeError, UsageError, BasisLimitError
from .problem import mode_hamiltonians
from .report import GridSpec, IterationRecord, SolveReport
from .riccati import FlowConfig, flow
from .symmat import (as_sym, dominance_factors, eigvals_sym, inv_chol_stack,
                     require_pd, symmetrize)

#: entrywise distance under which two forms are considered duplicates
DEDUP_TOL = 1e-12
#: default cap on the number of forms produced by one step
DEFAULT_BASIS_CAP = 200_000
#: switching words keep only their most recent modes
WORD_LIMIT = 64
#: forms are propagated in fixed-size chunks so results do not depend on threads
CHUNK = 256

PRUNE_RULES = ("none", "dominated", "thompson", "envelope", "cover")


@dataclass(frozen=True)
class QuadraticForm:
    """The form ``x -> x'Px / 2`` together with the switching word that made it."""

    P: np.ndarray
    word: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "P", as_sym(self.P))
        object.__setattr__(self, "word", tuple(int(m) for m in self.word))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * (x @ self.P), axis=-1)


def _upper_indices(n):
    return np.triu_indices(n)


class MaxPlusValue:
    """Pointwise maximum of finitely many quadratic forms, in canonical order.

    Canonical order sorts by trace, then by the upper-triangle entries
    lexicographically; forms within ``DEDUP_TOL`` entrywise of an earlier
    one are dropped.  The stack of matrices is exposed as ``P`` (K, n, n).
    Switching words are stored right-aligned in an integer table padded with
    -1 and keep only the last ``WORD_LIMIT`` modes.
    """

    __slots__ = ("P", "word_table", "_words")

    def __init__(self, P, words=None, *, canonical=False):
        P = np.array(P, dtype=float)
        if P.ndim == 2:
            P = P[None]
        if P.ndim != 3 or P.shape[0] == 0 or P.shape[1] != P.shape[2]:
            raise UsageError(f"expected a nonempty stack of square matrices, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise DomainError("quadratic forms must have finite entries")
        W = _word_table(words, P.shape[0])
        if not canonical:
            iu = _upper_indices(P.shape[1])
            upper = P[:, iu[0], iu[1]]
            P = np.zeros_like(P)
            P[:, iu[0], iu[1]] = upper
            P[:, iu[1], iu[0]] = upper
            P, W = _canonicalize(P, W)
        P.setflags(write=False)
        W.setflags(write=False)
        self.P = P
        self.word_table = W
        self._words = None

    @property
    def words(self) -> tuple:
        """Switching words as tuples of mode indices, oldest mode first."""
        if self._words is None:
            self._words = tuple(tuple(int(m) for m in row[row >= 0]) for row in self.word_table)
        return self._words

    @classmethod
    def from_forms(cls, forms: Sequence[QuadraticForm]) -> "MaxPlusValue":
        return cls(np.stack([f.P for f in forms]), [f.word for f in forms])

    @classmethod
    def scalar_identity(cls, c: float, n: int) -> "MaxPlusValue":
        return cls(c * np.eye(n)[None])

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    @property
    def quadratics(self) -> list:
        return [QuadraticForm(P, w) for P, w in zip(self.P, self.words)]

    def __len__(self):
        return self.P.shape[0]

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self):
        return f"MaxPlusValue(dim={self.dim}, size={len(self)})"


def _word_table(words, K):
    if words is None:
        return np.full((K, WORD_LIMIT), -1, dtype=np.int16)
    if isinstance(words, np.ndarray) and words.ndim == 2:
        if words.shape != (K, WORD_LIMIT):
            raise UsageError(f"word table must have shape ({K}, {WORD_LIMIT})")
        return np.array(words, dtype=np.int16)
    if len(words) != K:
        raise UsageError("one switching word per form is required")
    W = np.full((K, WORD_LIMIT), -1, dtype=np.int16)
    for i, w in enumerate(words):
        w = [int(m) for m in w][-WORD_LIMIT:]
        if any(m < 0 for m in w):
            raise UsageError("mode indices in switching words must be nonnegative")
        if w:
            W[i, WORD_LIMIT - len(w):] = w
    return W


def _canonicalize(P: np.ndarray, W: np.ndarray):
    n = P.shape[1]
    iu = _upper_indices(n)
    upper = P[:, iu[0], iu[1]]
    tr = np.trace(P, axis1=1, axis2=2)
    # np.lexsort sorts by the last key first
    order = np.lexsort(tuple(upper[:, j] for j in range(upper.shape[1] - 1, -1, -1)) + (tr,))
    P = P[order]
    upper = upper[order]
    tr = tr[order]
    W = W[order]
    if P.shape[0] == 1:
        return np.ascontiguousarray(P), W
    # duplicates differ in trace by at most n * DEDUP_TOL, so only a window is scanned
    keep = np.ones(P.shape[0], dtype=bool)
    starts = np.searchsorted(tr, tr - n * DEDUP_TOL, side="left")
    for i in np.flatnonzero(starts < np.arange(P.shape[0])):
        lo = starts[i]
        cand = np.arange(lo, i)[keep[lo:i]]
        if cand.size and np.any(np.max(np.abs(upper[cand] - upper[i]), axis=1) < DEDUP_TOL):
            keep[i] = False
    return np.ascontiguousarray(P[keep]), W[keep]


@dataclass(frozen=True)
class PruneConfig:
    """Pruning rule and its error budget ``1 + L tau^r``.

    ``tau=None`` means "use the step size of the solve".
    """

    rule: str = "thompson"
    order: float = 2.0
    const: float = 1.0
    tau: Optional[float] = None

    def __post_init__(self):
        if self.rule not in PRUNE_RULES:
            raise UsageError(f"unknown prune rule {self.rule!r}; use one of {PRUNE_RULES}")
        if not self.order > 1:
            raise UsageError(f"prune order r must exceed 1, got {self.order}")
        if not self.const > 0:
            raise UsageError(f"prune constant L must be positive, got {self.const}")
        if self.tau is not None and not self.tau > 0:
            raise UsageError(f"prune tau must be positive, got {self.tau}")

    @property
    def budget(self) -> float:
        """Largest dominance factor accepted by the thompson rule."""
        if self.tau is None:
            raise UsageError("PruneConfig.tau is unset")
        return 1.0 + self.const * self.tau ** self.order


# -- evaluation ---------------------------------------------------------------

def _form_values(V: MaxPlusValue, x: np.ndarray) -> np.ndarray:
    # (..., K): x'P_j x / 2 for every form, as a sum over upper-triangle
    # monomials in a fixed order so each entry is bitwise independent of K
    r, c = _upper_indices(V.dim)
    coef = V.P[:, r, c] * np.where(r == c, 0.5, 1.0)
    mono = x[..., r] * x[..., c]
    out = mono[..., 0:1] * coef[:, 0]
    for t in range(1, r.size):
        out += mono[..., t:t + 1] * coef[:, t]
    return out


def evaluate(V: MaxPlusValue, x):
    """``max_j x'P_j x / 2``; `x` is a vector or a (G, n) batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != V.dim:
        raise UsageError(f"x has dimension {x.shape[-1]}, value has {V.dim}")
    out = _form_values(V, x).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def gradient(V: MaxPlusValue, x):
    """Gradient of the active form at `x` and its index.

    Ties go to the lowest canonical index.  Batched `x` returns arrays.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != V.dim:
        raise UsageError(f"x has dimension {x.shape[-1]}, value has {V.dim}")
    active = np.argmax(_form_values(V, x), axis=-1)
    g = np.einsum("...ij,...j->...i", V.P[active], x)
    if x.ndim == 1:
        return g, int(active)
    return g, active


# -- one step -----------------------------------------------------------------

def step(V: MaxPlusValue, inst, consts, tau: float, cfg: FlowConfig = FlowConfig(),
         threads: Optional[int] = None) -> MaxPlusValue:
    """Apply ``sup_m S^m_tau``: flow every form under every mode for time `tau`."""
    if not tau > 0:
        raise UsageError(f"tau must be positive, got {tau}")
    if V.dim != inst.n:
        raise UsageError(f"value has dimension {V.dim}, instance has {inst.n}")
    K, M = len(V), inst.num_modes
    chunks = [(m, lo) for m in range(M) for lo in range(0, K, CHUNK)]

    def run(job):
        m, lo = job
        try:
            return flow(inst, consts, m, V.P[lo:lo + CHUNK], tau, cfg)
        except FiniteEscapeError as exc:
            exc.word = _escaping_word(inst, consts, m, V, lo, tau, cfg)
            raise

    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(job) for job in chunks]

    # form-major layout: index j * M + m
    out = np.empty((K, M, V.dim, V.dim))
    for (m, lo), R in zip(chunks, results):
        out[lo:lo + R.shape[0], m] = R
    W = np.empty((K, M, WORD_LIMIT), dtype=np.int16)
    W[:, :, :-1] = V.word_table[:, None, 1:]
    W[:, :, -1] = np.arange(M)
    return MaxPlusValue(out.reshape(K * M, V.dim, V.dim), W.reshape(K * M, WORD_LIMIT))


def _escaping_word(inst, consts, m, V, lo, tau, cfg):
    for j in range(lo, min(lo + CHUNK, len(V))):
        try:
            flow(inst, consts, m, V.P[j], tau, cfg)
        except FiniteEscapeError:
            return V.words[j] + (m,)
    return None


# -- pruning ------------------------------------------------------------------

def prune(V: MaxPlusValue, pc: PruneConfig) -> MaxPlusValue:
    """Select a subset of forms.

    ``dominated`` drops forms lying below a kept form in the Loewner order and
    leaves the function unchanged.  ``thompson`` sweeps by decreasing trace and
    drops ``P_i`` whenever ``P_i <= (1 + L tau^r) P_j`` for a kept ``P_j``,
    which certifies ``pruned <= V <= (1 + L tau^r) pruned``.

    ``envelope`` and ``cover`` compare against the whole maximum rather than
    one form at a time.  ``envelope`` keeps exactly the forms that attain the
    maximum somewhere (value unchanged); ``cover`` keeps a subset whose
    maximum times ``1 + L tau^r`` dominates the full maximum.  Both are exact
    computations for n <= 2; for n >= 3 they fall back to ``dominated`` and
    ``thompson`` respectively.
    """
    if pc.rule == "none" or len(V) == 1:
        return V
    if pc.rule in ("envelope", "cover"):
        kept = _envelope_rule(V.P, pc)
    else:
        kept = _sweep(V.P, pc)
    if len(kept) == len(V):
        return V
    kept = sorted(kept)
    return MaxPlusValue(V.P[kept], V.word_table[kept], canonical=True)


def _envelope_rule(P: np.ndarray, pc: PruneConfig) -> list:
    n = P.shape[1]
    if n == 1:
        return [int(np.argmax(P[:, 0, 0]))]
    if n >= 3:
        return _sweep(P, replace(pc, rule="dominated" if pc.rule == "envelope" else "thompson"))
    if pc.rule == "envelope":
        return planar.envelope_indices(P).tolist()
    return planar.cover_indices(P, pc.budget).tolist()


def _sweep(P: np.ndarray, pc: PruneConfig) -> list:
    K = P.shape[0]
    kept = [K - 1]
    if pc.rule == "dominated":
        for i in range(K - 2, -1, -1):
            lam_min = eigvals_sym(P[kept] - P[i])[:, 0]
            if not np.any(lam_min >= 0.0):
                kept.append(i)
        return kept
    budget = pc.budget
    lam_min = eigvals_sym(P)[:, 0]
    if np.any(lam_min <= 0):
        raise DomainError("thompson pruning needs positive definite forms")
    linv = inv_chol_stack(P[K - 1:K])
    for i in range(K - 2, -1, -1):
        if not np.any(dominance_factors(P[i], linv) <= budget):
            kept.append(i)
            linv = np.concatenate([linv, inv_chol_stack(P[i:i + 1])])
    return kept


# -- residual -----------------------------------------------------------------

def residual_sup(V: MaxPlusValue, inst, consts, grid: GridSpec) -> float:
    """Back-substitution error ``max_x |H(x, grad V(x))|`` over the grid."""
    X = grid.points()
    g, _ = gradient(V, X)
    H = mode_hamiltonians(inst, consts, X, g).max(axis=0)
    return float(np.max(np.abs(H)))


# -- solve loop ---------------------------------------------------------------

def _check_v0(V0, consts):
    n = V0.dim
    lo = consts.epsilon * np.eye(n)
    hi = consts.lam * np.eye(n)
    for P in V0.P:
        w = eigvals_sym(P)
        if w[0] < consts.epsilon - 1e-10 or w[-1] > consts.lam + 1e-10:
            warnings.warn(
                "V0 has a form outside [epsilon I, lambda I]; error bounds do not apply",
                stacklevel=3)
            return


def solve(inst, consts, V0: MaxPlusValue, tau: float, N: int,
          pc: PruneConfig = PruneConfig(), cfg: FlowConfig = FlowConfig(),
          residual_grid: Optional[GridSpec] = None, *,
          check_bounds: bool = True, basis_cap: int = DEFAULT_BASIS_CAP,
          threads: Optional[int] = None, seed: Optional[int] = None,
          callback: Optional[Callable] = None):
    """Iterate ``prune o step`` `N` times starting from `V0`.

    Parameters
    ----------
    pc : PruneConfig
        When ``pc.tau`` is unset the step size `tau` is used for the budget.
    residual_grid : GridSpec, optional
        If given, ``|H|_inf`` is recorded after every iteration.
    check_bounds : bool
        Warn when `V0` has forms outside ``[epsilon I, lambda I]``.
    basis_cap : int
        Largest number of forms a step may produce before
        :class:`BasisLimitError` is raised.
    callback : callable, optional
        ``callback(k, stepped, pruned)`` after each iteration ``k >= 1``.

    Returns
    -------
    (MaxPlusValue, SolveReport)
    """
    if not tau > 0:
        raise UsageError(f"tau must be positive, got {tau}")
    if N < 0 or int(N) != N:
        raise UsageError(f"N must be a nonnegative integer, got {N}")
    N = int(N)
    if pc.tau is None:
        pc = replace(pc, tau=tau)
    if check_bounds:
        _check_v0(V0, consts)

    report = SolveReport(tau=tau, steps=N, prune_rule=pc.rule, prune_order=pc.order,
                         prune_const=pc.const, integrator=cfg.integrator,
                         substeps_per_unit_time=cfg.substeps_per_unit_time, seed=seed)

    def residual(V):
        return None if residual_grid is None else residual_sup(V, inst, consts, residual_grid)

    t0 = time.perf_counter_ns()
    V = V0
    report.records.append(IterationRecord(0, len(V), 0, residual(V), time.perf_counter_ns() - t0))
    for k in range(1, N + 1):
        t0 = time.perf_counter_ns()
        if len(V) * inst.num_modes > basis_cap:
            raise BasisLimitError(
                f"iteration {k}: {len(V) * inst.num_modes} forms exceed the cap of {basis_cap}; "
                "enable pruning or raise the cap")
        stepped = step(V, inst, consts, tau, cfg, threads=threads)
        V = prune(stepped, pc)
        if callback is not None:
            callback(k, stepped, V)
        res = residual(V)
        report.records.append(
            IterationRecord(k, len(V), len(stepped) - len(V), res, time.perf_counter_ns() - t0))
    return V, report


# -- distances between value functions ----------------------------------------

def sphere_points(n: int, samples: int, seed: int = 0) -> np.ndarray:
    """Unit vectors for sampling 2-homogeneous functions.

    In 2-D the half circle is covered by equally spaced angles; otherwise
    normalized Gaussian samples from a seeded generator are used.
    """
    if samples < 1:
        raise UsageError("need at least one sphere sample")
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        th = np.pi * np.arange(samples) / samples
        return np.column_stack([np.cos(th), np.sin(th)])
    X = np.random.default_rng(seed).standard_normal((samples, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def value_distance(V1: MaxPlusValue, V2: MaxPlusValue, sphere_samples: int = 1000,
                   seed: int = 0) -> float:
    """Sampled Thompson distance ``max_x |log(V1(x) / V2(x))|`` over unit vectors.

    This is a lower bound of the true distance; see :func:`value_distance_upper`.
    """
    if V1.dim != V2.dim:
        raise UsageError("values have different dimensions")
    X = sphere_points(V1.dim, sphere_samples, seed)
    v1, v2 = evaluate(V1, X), evaluate(V2, X)
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise DomainError("value_distance needs strictly positive values on the sphere")
    return float(np.max(np.abs(np.log(v1) - np.log(v2))))


def value_distance_upper(V1: MaxPlusValue, V2: MaxPlusValue) -> float:
    """Upper bound on the Thompson distance from pairwise dominance factors.

    ``M(f/g) <= max_i min_j M(P_i/Q_j)`` since ``f_i <= t g_j <= t g``.
    """
    def factor(F, G):
        linv = inv_chol_stack(G.P)
        return max(float(np.min(dominance_factors(P, linv))) for P in F.P)

    for V in (V1, V2):
        for P in V.P:
            require_pd(P, "form")
    return float(max(math.log(factor(V1, V2)), math.log(factor(V2, V1)), 0.0))
