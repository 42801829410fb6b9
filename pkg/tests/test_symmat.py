import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbmaxplus.errors import DomainError, UsageError
from hjbmaxplus.symmat import (OrderInterval, as_sym, dominance_factor, eigen_sym, is_pd,
                               loewner_leq, opnorm, thompson_distance, thompson_distances)


def random_spd(rng, n, lo=0.1, hi=5.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


class TestEigen:
    def test_identity(self):
        w, _ = eigen_sym(np.eye(2))
        assert np.allclose(w, [1, 1])

    def test_diagonal_sorted_ascending(self):
        w, _ = eigen_sym(np.diag([3.0, -1.0]))
        assert np.allclose(w, [-1, 3])

    def test_characteristic_polynomial(self):
        # lambda^2 - 4 lambda + 3 = 0
        w, _ = eigen_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(w, [1, 3], atol=1e-14)

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 5, 20):
            M = as_sym(rng.standard_normal((n, n)))
            w, Q = eigen_sym(M)
            assert np.linalg.norm(M - (Q * w) @ Q.T, 2) <= 1e-12 * (1 + opnorm(M))
            assert np.allclose(Q.T @ Q, np.eye(n), atol=1e-12)


class TestAsSym:
    def test_upper_triangle_authoritative(self):
        M = as_sym([[1.0, 2.0], [5.0, 3.0]])
        assert M[1, 0] == M[0, 1] == 2.0

    def test_exact_symmetry(self):
        M = as_sym(np.random.default_rng(1).standard_normal((4, 4)))
        assert np.array_equal(M, M.T)

    def test_rejects_nonfinite(self):
        with pytest.raises(DomainError):
            as_sym([[1.0, np.nan], [0.0, 1.0]])

    def test_rejects_nonsquare(self):
        with pytest.raises(UsageError):
            as_sym(np.ones((2, 3)))


class TestLoewner:
    def test_scalar_multiple(self):
        assert loewner_leq(np.eye(2), 2 * np.eye(2), 0)

    def test_incomparable(self):
        assert not loewner_leq(np.diag([1.0, 3.0]), np.diag([2.0, 2.0]), 0)

    def test_psd_increments(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            A = as_sym(rng.standard_normal((3, 3)))
            G = rng.standard_normal((3, 3))
            assert loewner_leq(A, A + G @ G.T)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            loewner_leq(np.eye(2), np.eye(3))

    def test_interval_membership_scalar(self):
        rng = np.random.default_rng(3)
        I = OrderInterval.scalar(0.5, 2.0, 3)
        for _ in range(100):
            P = random_spd(rng, 3, 0.3, 2.5)
            w = np.linalg.eigvalsh(P)
            expect = w[0] >= 0.5 - 1e-10 and w[-1] <= 2.0 + 1e-10
            assert I.contains(P, tol=1e-10) == expect

    def test_interval_requires_order(self):
        with pytest.raises(DomainError):
            OrderInterval(2 * np.eye(2), np.eye(2))


class TestDominance:
    def test_scalar_multiple(self):
        assert dominance_factor(2 * np.eye(2), np.eye(2)) == pytest.approx(2)

    def test_diagonal_pair(self):
        # eigenvalues of diag(1/2, 4)
        assert dominance_factor(np.diag([1.0, 4.0]), np.diag([2.0, 1.0])) == pytest.approx(4)

    def test_reflexive(self):
        P = random_spd(np.random.default_rng(4), 3)
        assert dominance_factor(P, P) == pytest.approx(1, abs=1e-12)

    def test_requires_pd_denominator(self):
        with pytest.raises(DomainError, match="lambda_min"):
            dominance_factor(np.eye(2), np.diag([1.0, -1.0]))

    def test_is_minimal_loewner_scale(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            P1, P2 = random_spd(rng, 3), random_spd(rng, 3)
            lo, hi = 0.0, 1e3
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if loewner_leq(P1, mid * P2, tol=0.0):
                    hi = mid
                else:
                    lo = mid
            assert dominance_factor(P1, P2) == pytest.approx(hi, abs=1e-8)


class TestThompson:
    def test_identity(self):
        assert thompson_distance(np.eye(2), np.eye(2)) == 0

    def test_scalar(self):
        assert thompson_distance([[2.0]], [[1.0]]) == pytest.approx(math.log(2))

    def test_diagonal_pair(self):
        # M(P1/P2) = 4, M(P2/P1) = 2
        d = thompson_distance(np.diag([1.0, 4.0]), np.diag([2.0, 1.0]))
        assert d == pytest.approx(math.log(4))

    def test_requires_pd(self):
        with pytest.raises(DomainError):
            thompson_distance(np.eye(2), np.diag([1.0, 0.0]))

    @pytest.mark.parametrize("s", [0.1, 0.5, 2.0, 10.0])
    def test_scaling_law(self, s):
        P = random_spd(np.random.default_rng(6), 3)
        assert thompson_distance(s * P, P) == pytest.approx(abs(math.log(s)), abs=1e-10)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            A, B, C = (random_spd(rng, 3, 0.01, 10) for _ in range(3))
            assert thompson_distance(A, C) <= (
                thompson_distance(A, B) + thompson_distance(B, C) + 1e-9)

    def test_symmetric_and_batched(self):
        rng = np.random.default_rng(8)
        P1 = np.stack([random_spd(rng, 2) for _ in range(10)])
        P2 = np.stack([random_spd(rng, 2) for _ in range(10)])
        d = thompson_distances(P1, P2)
        for i in range(10):
            assert d[i] == pytest.approx(thompson_distance(P1[i], P2[i]), abs=1e-12)
            assert d[i] == pytest.approx(thompson_distance(P2[i], P1[i]), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=2, max_size=2),
       st.lists(st.floats(0.05, 20.0), min_size=2, max_size=2),
       st.floats(0, math.pi))
def test_thompson_zero_iff_equal(w1, w2, angle):
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    P1 = (R * w1) @ R.T
    P2 = (R * w2) @ R.T
    d = thompson_distance(P1, P2)
    expected = max(abs(math.log(a / b)) for a, b in zip(w1, w2))
    assert d == pytest.approx(expected, abs=1e-9)
    assert is_pd(P1)
