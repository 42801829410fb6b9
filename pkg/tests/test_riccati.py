import math

import numpy as np
import pytest

from conftest import SCALAR_ROOT, random_instance, scalar_instance
from hjbmaxplus.diagnostics import random_pd
from hjbmaxplus.errors import FiniteEscapeError, UsageError
from hjbmaxplus.expm import expm_pade13
from hjbmaxplus.problem import ModeData, SwitchedLQInstance, derive_constants
from hjbmaxplus.riccati import FlowConfig, flow, flow_composed, hamiltonian_matrix, phi
from hjbmaxplus.symmat import loewner_leq, thompson_distance

MOEBIUS = FlowConfig(integrator="moebius")


def scalar_closed_form(A, S, D, p0, t):
    """Scalar Riccati p' = 2 A p + S p^2 + D by separation of variables."""
    r1 = (-A - math.sqrt(A * A - S * D)) / S
    r2 = (-A + math.sqrt(A * A - S * D)) / S
    k = S * (r1 - r2)
    c = (p0 - r1) / (p0 - r2)
    e = c * math.exp(k * t)
    return (r1 - r2 * e) / (1 - e)


class TestPhi:
    def test_zero_gives_cost(self):
        inst, c = random_instance(np.random.default_rng(0), 2)
        for m in range(3):
            assert np.allclose(phi(inst, c, m, np.zeros((2, 2))), inst.modes[m].D)

    def test_hand_arithmetic(self):
        inst = SwitchedLQInstance(1.0, [ModeData([[-1.0]], [[1.0]], [[1.0]])])
        c = derive_constants(inst)
        assert phi(inst, c, 0, [[1.0]])[0, 0] == pytest.approx(0)

    def test_equilibrium(self, scalar):
        inst, c = scalar
        assert abs(phi(inst, c, 0, [[c.lambda1]])[0, 0]) < 1e-9

    def test_symmetric_output(self):
        inst, c = random_instance(np.random.default_rng(1), 3)
        P = random_pd(np.random.default_rng(2), 3, 0.1, 1.0)
        F = phi(inst, c, 1, P)
        assert np.array_equal(F, F.T)


class TestFlow:
    def test_zero_time_is_identity(self, scalar):
        inst, c = scalar
        P0 = np.array([[0.3]])
        assert np.array_equal(flow(inst, c, 0, P0, 0.0), P0)

    def test_scalar_converges_to_root(self, scalar):
        inst, c = scalar
        P = flow(inst, c, 0, [[0.1]], 50.0)
        assert abs(P[0, 0] - SCALAR_ROOT) < 1e-6

    @pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
    @pytest.mark.parametrize("cfg", [FlowConfig(), MOEBIUS], ids=["rk4", "moebius"])
    def test_scalar_closed_form(self, scalar, t, cfg):
        inst, c = scalar
        exact = scalar_closed_form(-1.0, 0.25, 0.75, 0.1, t)
        assert flow(inst, c, 0, [[0.1]], t, cfg)[0, 0] == pytest.approx(exact, abs=1e-10)

    def test_embedded_equilibrium_is_fixed(self):
        mode = ModeData(-np.eye(2), 0.5 * np.eye(2), 0.75 * np.eye(2))
        inst = SwitchedLQInstance(1.0, [mode, mode, mode])
        c = derive_constants(inst)
        P0 = c.lambda1 * np.eye(2)
        for t in (0.5, 5.0):
            for m in range(3):
                assert np.allclose(flow(inst, c, m, P0, t), P0, atol=1e-12)

    def test_integrators_agree(self):
        rng = np.random.default_rng(3)
        for trial in range(30):
            n = 1 + trial % 3
            inst, c = random_instance(rng, n)
            m = int(rng.integers(inst.num_modes))
            P0 = random_pd(rng, n, c.epsilon, c.lam)
            t = float(rng.uniform(0, 1))
            a = flow(inst, c, m, P0, t)
            b = flow(inst, c, m, P0, t, MOEBIUS)
            assert np.linalg.norm(a - b, 2) <= 1e-7 * (1 + np.linalg.norm(a, 2))

    def test_semigroup(self):
        inst, c = random_instance(np.random.default_rng(4), 2)
        P0 = 0.5 * np.eye(2)
        a = flow(inst, c, 0, flow(inst, c, 0, P0, 0.3), 0.45)
        b = flow(inst, c, 0, P0, 0.75)
        assert np.allclose(a, b, atol=1e-8)

    def test_stack_matches_single(self):
        rng = np.random.default_rng(5)
        inst, c = random_instance(rng, 2)
        Ps = np.stack([random_pd(rng, 2, c.epsilon, c.lam) for _ in range(5)])
        out = flow(inst, c, 2, Ps, 0.2)
        for P, Q in zip(Ps, out):
            assert np.array_equal(flow(inst, c, 2, P, 0.2), Q)

    def test_taylor_slope(self):
        inst, c = random_instance(np.random.default_rng(6), 2)
        P = 0.5 * np.eye(2) + 0.1
        taus = np.logspace(-1, -4, 7)
        cfg = FlowConfig(substeps_per_unit_time=100_000)
        res = [np.linalg.norm(flow(inst, c, 0, P, t, cfg) - P - t * phi(inst, c, 0, P), 2)
               for t in taus]
        slope = np.polyfit(np.log(taus), np.log(res), 1)[0]
        assert 1.9 <= slope <= 2.1

    def test_invariant_interval(self):
        rng = np.random.default_rng(7)
        inst, c = random_instance(rng, 2)
        n = inst.n
        for _ in range(20):
            P0 = random_pd(rng, n, c.epsilon, c.lam)
            for m in range(inst.num_modes):
                for t in (0.1, 1.0, 10.0):
                    P = flow(inst, c, m, P0, t)
                    assert loewner_leq(c.epsilon * np.eye(n), P, tol=1e-8)
                    assert loewner_leq(P, c.lam * np.eye(n), tol=1e-8)

    def test_order_preserving(self):
        rng = np.random.default_rng(8)
        inst, c = random_instance(rng, 2)
        for _ in range(20):
            P = random_pd(rng, 2, c.epsilon, 0.5 * c.lam)
            G = rng.normal(size=(2, 2))
            Q = P + 0.1 * G @ G.T
            for m in range(3):
                assert loewner_leq(flow(inst, c, m, P, 1.0), flow(inst, c, m, Q, 1.0), tol=1e-8)

    def test_thompson_contraction(self):
        rng = np.random.default_rng(9)
        inst, c = random_instance(rng, 2)
        worst = 0.0
        for _ in range(20):
            P1 = random_pd(rng, 2, 1e-3 * c.lam, c.lam)
            P2 = random_pd(rng, 2, 1e-3 * c.lam, c.lam)
            d0 = thompson_distance(P1, P2)
            for m in range(3):
                d1 = thompson_distance(flow(inst, c, m, P1, 1.0), flow(inst, c, m, P2, 1.0))
                assert d1 <= d0 + 1e-9
                worst = max(worst, d1 / d0)
        assert worst < 1

    def test_negative_time(self, scalar):
        inst, c = scalar
        with pytest.raises(UsageError):
            flow(inst, c, 0, [[0.1]], -1.0)

    def test_finite_escape(self):
        # P' = P^2 from P0 = 1 escapes at t = 1
        inst = SwitchedLQInstance(1.0, [ModeData([[0.0]], [[1.0]], [[1e-9]])])
        c = derive_constants(inst)
        with pytest.raises(FiniteEscapeError) as info:
            flow(inst, c, 0, [[1.0]], 3.0)
        assert info.value.last_finite is not None
        assert info.value.escape_time <= 3.0
        with pytest.raises(FiniteEscapeError):
            flow(inst, c, 0, [[1.0]], 1.5, MOEBIUS)


class TestComposed:
    def test_empty_sequence(self, scalar):
        inst, c = scalar
        P0 = np.array([[0.2]])
        assert np.array_equal(flow_composed(inst, c, [], P0, 0.1), P0)

    def test_single(self):
        inst, c = random_instance(np.random.default_rng(10), 2)
        P0 = 0.3 * np.eye(2)
        assert np.array_equal(flow_composed(inst, c, [1], P0, 0.1), flow(inst, c, 1, P0, 0.1))

    def test_noncommuting(self):
        inst, c = random_instance(np.random.default_rng(11), 2)
        P0 = 0.3 * np.eye(2)
        a = flow_composed(inst, c, [0, 1], P0, 0.5)
        b = flow_composed(inst, c, [1, 0], P0, 0.5)
        assert not np.allclose(a, b, atol=1e-6)


def test_pade13_matches_scipy():
    from scipy.linalg import expm
    rng = np.random.default_rng(12)
    for scale in (1e-3, 0.5, 3.0, 40.0):
        A = scale * rng.standard_normal((4, 4))
        ref = expm(A)
        assert np.allclose(expm_pade13(A), ref, rtol=1e-11, atol=1e-12 * np.abs(ref).max())


def test_hamiltonian_matrix_block_convention():
    A, S, D = np.array([[-1.0]]), np.array([[0.25]]), np.array([[0.75]])
    K = hamiltonian_matrix(A, S, D)
    assert np.array_equal(K, np.array([[1.0, -0.25], [0.75, -1.0]]))
