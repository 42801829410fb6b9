"""Validation harness: residuals, error-rate fits, contraction, payoffs, stationarity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import SamplingError, UsageError
from .propagation import (MaxPlusValue, PruneConfig, evaluate, residual_sup, solve,
                          value_distance)
from .report import GridSpec, SolveReport
from .riccati import FlowConfig, flow
from .symmat import thompson_distances

__all__ = [
    "GridSpec", "SolveReport", "residual_sup", "LineFit", "fit_line",
    "estimate_contraction_rate", "HorizonCurve", "horizon_error_curve",
    "ErrorCurve", "discretization_error_curve", "Schedule", "simulate_payoff",
    "ConvergenceTime", "convergence_time", "random_pd",
]


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float


def fit_line(x, y) -> LineFit:
    """Least-squares line through (x, y); needs two distinct abscissae."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise UsageError("a line fit needs at least two distinct abscissae")
    res = stats.linregress(x, y)
    r2 = float(res.rvalue ** 2) if np.isfinite(res.rvalue) else 1.0
    return LineFit(float(res.slope), float(res.intercept), r2)


# -- contraction --------------------------------------------------------------

def random_pd(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """``Q diag(w) Q'`` with Haar-random ``Q`` and log-uniform ``w`` in [lo, hi]."""
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    w = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    P = (Q * w) @ Q.T
    return 0.5 * (P + P.T)


def estimate_contraction_rate(inst, consts, t: float, samples: int = 200, seed: int = 0,
                              cfg: FlowConfig = FlowConfig(), spread: float = 1e-3):
    """Empirical Thompson contraction of the mode flows over time `t`.

    Pairs are drawn in ``(0, lam I]`` with eigenvalues log-uniform on
    ``[spread * lam, lam]``.  Returns ``(alpha_hat, worst_ratio)`` where
    ``worst_ratio`` is the largest ``d_T(flow P1, flow P2) / d_T(P1, P2)``
    over all pairs and modes and ``alpha_hat = -log(worst_ratio) / t``.
    """
    if not t > 0:
        raise UsageError(f"t must be positive, got {t}")
    if samples < 1:
        raise UsageError("samples must be positive")
    rng = np.random.default_rng(seed)
    n, lam = inst.n, consts.lam
    P1 = np.stack([random_pd(rng, n, spread * lam, lam) for _ in range(samples)])
    P2 = np.stack([random_pd(rng, n, spread * lam, lam) for _ in range(samples)])
    d0 = thompson_distances(P1, P2)
    ok = d0 >= 1e-12
    if not np.any(ok):
        raise SamplingError("every sampled pair is degenerate (d_T < 1e-12)")
    worst = 0.0
    for m in range(inst.num_modes):
        F1 = flow(inst, consts, m, P1[ok], t, cfg)
        F2 = flow(inst, consts, m, P2[ok], t, cfg)
        worst = max(worst, float(np.max(thompson_distances(F1, F2) / d0[ok])))
    alpha = -math.log(worst) / t if worst > 0 else math.inf
    return alpha, worst


# -- horizon error ------------------------------------------------------------

@dataclass(frozen=True)
class HorizonCurve:
    T: np.ndarray
    distance: np.ndarray
    fit: Optional[LineFit]
    fit_mask: np.ndarray = field(repr=False)

    @property
    def rate(self) -> float:
        """Fitted exponential decay rate (``-slope``)."""
        return math.nan if self.fit is None else -self.fit.slope


def horizon_error_curve(inst, consts, tau: float, N_max: int, pc: PruneConfig = PruneConfig(),
                        cfg: FlowConfig = FlowConfig(), grid: Optional[GridSpec] = None, *,
                        V0: Optional[MaxPlusValue] = None, checkpoint: int = 1,
                        sphere_samples: int = 1000, fit_fraction: float = 0.5,
                        floor: float = 1e-10, seed: int = 0) -> HorizonCurve:
    """Distance of every checkpoint iterate to the final one, with an exponential fit.

    The fit uses checkpoints with ``T <= fit_fraction * T_final`` whose
    distance exceeds `floor`; near the end the distance collapses because the
    comparison target is itself an iterate.  `grid` is accepted for
    signature symmetry and ignored: distances are taken on the unit sphere.
    """
    del grid
    if checkpoint < 1:
        raise UsageError("checkpoint must be a positive integer")
    if V0 is None:
        V0 = MaxPlusValue.scalar_identity(consts.epsilon, inst.n)
    snaps = {0: V0}

    def keep(k, stepped, pruned):
        if k % checkpoint == 0:
            snaps[k] = pruned

    V, _ = solve(inst, consts, V0, tau, N_max, pc, cfg, callback=keep, seed=seed)
    snaps[N_max] = V
    ks = np.array(sorted(snaps))
    T = ks * tau
    dist = np.array([value_distance(snaps[k], V, sphere_samples, seed) for k in ks])
    mask = (T <= fit_fraction * T[-1]) & (dist > floor)
    fit = fit_line(T[mask], np.log(dist[mask])) if np.count_nonzero(mask) >= 2 else None
    return HorizonCurve(T, dist, fit, mask)


# -- discretization error -----------------------------------------------------

@dataclass(frozen=True)
class ErrorCurve:
    taus: np.ndarray
    errors: np.ndarray
    fit: Optional[LineFit]
    reference_tau: float
    basis_sizes: tuple = ()

    @property
    def slope(self) -> float:
        return math.nan if self.fit is None else self.fit.slope


def _steps_for(T: float, tau: float) -> int:
    N = T / tau
    if not tau > 0 or abs(N - round(N)) > 1e-9 * max(1.0, N):
        raise UsageError(f"T = {T} is not an integer multiple of tau = {tau}")
    return int(round(N))


def discretization_error_curve(inst, consts, T: float, tau_list: Sequence[float],
                               pc: PruneConfig = PruneConfig(), cfg: FlowConfig = FlowConfig(),
                               grid: Optional[GridSpec] = None,
                               reference_refinement: int = 4, *,
                               V0: Optional[MaxPlusValue] = None,
                               reference_prune: PruneConfig = PruneConfig("envelope"),
                               threads: Optional[int] = None) -> ErrorCurve:
    """Signed error ``max_x (V_ref(x) - V_tau(x))`` at horizon `T` for each step size.

    The reference uses ``min(tau_list) / reference_refinement`` and a
    value-exact pruning rule, so it equals the unpruned scheme.  The log-log
    slope is fitted over the taus with positive error.
    """
    if reference_refinement < 4 or int(reference_refinement) != reference_refinement:
        raise UsageError("reference_refinement must be an integer >= 4")
    taus = np.array(sorted(set(float(t) for t in tau_list), reverse=True))
    if taus.size == 0:
        raise UsageError("tau_list is empty")
    steps = [_steps_for(T, t) for t in taus]
    tau_ref = taus[-1] / reference_refinement
    N_ref = _steps_for(T, tau_ref)
    grid = grid or GridSpec.box(inst.n)
    X = grid.points()
    if V0 is None:
        V0 = MaxPlusValue.scalar_identity(consts.epsilon, inst.n)
    V_ref, _ = solve(inst, consts, V0, tau_ref, N_ref, reference_prune, cfg, threads=threads)
    v_ref = evaluate(V_ref, X)
    errors, sizes = [], []
    for tau, N in zip(taus, steps):
        V, _ = solve(inst, consts, V0, tau, N, replace_tau(pc, tau), cfg, threads=threads)
        errors.append(float(np.max(v_ref - evaluate(V, X))))
        sizes.append(len(V))
    errors = np.array(errors)
    pos = errors > 0
    fit = fit_line(np.log(taus[pos]), np.log(errors[pos])) if np.count_nonzero(pos) >= 2 else None
    return ErrorCurve(taus, errors, fit, tau_ref, tuple(sizes))


def replace_tau(pc: PruneConfig, tau: float) -> PruneConfig:
    # a budget pinned to another step size would not scale with tau
    return pc if pc.tau is not None else PruneConfig(pc.rule, pc.order, pc.const, tau)


# -- trajectories -------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant signal: ``values[i]`` on ``[times[i], times[i+1])``.

    ``times`` starts at 0 and has one more entry than ``values``; the last
    entry is the horizon.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) != len(self.values) + 1 or len(times) < 2:
            raise UsageError("a schedule needs len(times) == len(values) + 1 >= 2")
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise UsageError("schedule times must start at 0 and increase strictly")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", tuple(self.values))

    @classmethod
    def constant(cls, value, T: float) -> "Schedule":
        return cls((0.0, T), (value,))

    @classmethod
    def uniform(cls, values, T: float) -> "Schedule":
        """Equal-length pieces covering ``[0, T]``."""
        k = len(values)
        return cls(tuple(T * i / k for i in range(k + 1)), tuple(values))

    @property
    def horizon(self) -> float:
        return self.times[-1]


def _merged_breaks(mu: Schedule, w: Schedule):
    return sorted(set(mu.times) | set(w.times))


def _lookup(s: Schedule, t: float):
    i = int(np.searchsorted(s.times, t, side="right")) - 1
    return s.values[min(max(i, 0), len(s.values) - 1)]


def simulate_payoff(inst, x0, mu: Schedule, w: Schedule, T: float, V0: MaxPlusValue,
                    dt: float) -> float:
    """Payoff ``int_0^T (x'D x/2 - gamma^2 |w|^2 / 2) dt + V0(x_T)`` of one schedule pair.

    The state and the running cost are integrated together by RK4 with step
    `dt`, which must divide every constancy interval.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (inst.n,):
        raise UsageError(f"x0 must have shape ({inst.n},)")
    if not dt > 0:
        raise UsageError("dt must be positive")
    for s, name in ((mu, "mu"), (w, "w")):
        if abs(s.horizon - T) > 1e-12 * max(1.0, T):
            raise UsageError(f"{name} schedule ends at {s.horizon}, expected {T}")
    for m in mu.values:
        if not (isinstance(m, (int, np.integer)) and 0 <= m < inst.num_modes):
            raise UsageError(f"invalid mode {m!r} in switching schedule")
    g2 = inst.gamma ** 2
    breaks = _merged_breaks(mu, w)
    x, J = x0.copy(), 0.0
    for t0, t1 in zip(breaks, breaks[1:]):
        steps = (t1 - t0) / dt
        if abs(steps - round(steps)) > 1e-8 * max(1.0, steps):
            raise UsageError(f"dt = {dt} does not divide the interval [{t0}, {t1}]")
        mode = inst.modes[int(_lookup(mu, t0))]
        wv = np.asarray(_lookup(w, t0), dtype=float).reshape(inst.k)
        drive = mode.sigma @ wv
        pen = 0.5 * g2 * float(wv @ wv)

        def rhs(y):
            return mode.A @ y + drive, 0.5 * float(y @ mode.D @ y) - pen

        for _ in range(int(round(steps))):
            k1, c1 = rhs(x)
            k2, c2 = rhs(x + 0.5 * dt * k1)
            k3, c3 = rhs(x + 0.5 * dt * k2)
            k4, c4 = rhs(x + dt * k3)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            J += dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
    return J + evaluate(V0, x)


# -- stationarity -------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceTime:
    T_star: float
    N_star: int
    converged: bool

    def __iter__(self):
        return iter((self.T_star, self.N_star))


def convergence_time(report, rel_tol: float = 0.01, window: int = 20,
                     tau: Optional[float] = None) -> ConvergenceTime:
    """First iteration whose trailing window of residuals is flat.

    ``N_star`` is the least ``N >= window`` with
    ``(max - min) / max|r| < rel_tol`` over ``r[N - window .. N]``.
    `report` is a :class:`SolveReport` or a residual sequence (then `tau`
    is required).  Without stationarity ``converged`` is false and
    ``T_star`` is NaN.
    """
    if isinstance(report, SolveReport):
        r = report.residuals
        tau = report.tau
    else:
        if tau is None:
            raise UsageError("tau is required with a raw residual series")
        r = np.asarray(report, dtype=float)
        if r.ndim != 1 or r.size == 0 or not np.all(np.isfinite(r)):
            raise UsageError("residuals must be a nonempty finite series")
    if window < 1 or not rel_tol > 0:
        raise UsageError("window must be >= 1 and rel_tol > 0")
    for N in range(window, r.size):
        seg = r[N - window:N + 1]
        top = np.max(np.abs(seg))
        if top == 0 or (seg.max() - seg.min()) / top < rel_tol:
            return ConvergenceTime(N * tau, N, True)
    return ConvergenceTime(math.nan, -1, False)
