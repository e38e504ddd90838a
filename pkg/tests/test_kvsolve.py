from fractions import Fraction

import numpy as np
import pytest

from kvgeom.cyclic import kv2_residual
from kvgeom.freelie import LieSeries
from kvgeom.kvsolve import (
    InfeasibleDegreeError,
    KVPair,
    eq1_kernel_basis,
    evaluate_pair,
    kv1_residual,
    solve_exact,
    solve_kv,
)
from kvgeom.matrixlie import matrix_exp

F = Fraction


class TestKV1Residual:
    def test_zero_pair_degree_two(self):
        p = KVPair(LieSeries.zero(2), LieSeries.zero(2), 2)
        assert kv1_residual(p, 2) == LieSeries(2, {"xy": F(-1, 2)})

    def test_no_linear_part_for_any_pair(self):
        # dropping all brackets, both sides have no degree-1 content
        for coeffs in ({"x": F(2)}, {"y": F(-1, 3)}, {"x": F(1), "y": F(1)}):
            p = KVPair(LieSeries(2, coeffs), LieSeries(2, coeffs), 2)
            assert kv1_residual(p, 2).component(1).is_zero()

    def test_a_multiple_of_x_contributes_nothing(self):
        for b in (F(1), F(-3), F(2, 7)):
            p = KVPair(LieSeries(2, {"x": b}), LieSeries.zero(2), 2)
            assert kv1_residual(p, 2) == LieSeries(2, {"xy": F(-1, 2)})


class TestSolveKV:
    def test_degree_one_tie_break(self):
        # constraint c - b = 1/2; zeroed free variables give b = 0, c = 1/2
        p = solve_kv(1)
        a, b = p.A.coefficient("x"), p.A.coefficient("y")
        c, d = p.B.coefficient("x"), p.B.coefficient("y")
        assert c - b == F(1, 2)
        assert (a, b, c, d) == (F(0), F(0), F(1, 2), F(0))

    def test_vanishing_at_origin(self):
        # A, B have no constant term by construction (series start at degree 1)
        p = solve_kv(3)
        assert all(len(w) >= 1 for w in p.A.words() + p.B.words())

    def test_deterministic(self):
        p1, p2 = solve_kv(4), solve_kv(4)
        assert p1.A == p2.A and p1.B == p2.B

    @pytest.mark.parametrize("degree", [1, 2, 3, 5])
    def test_residual_exactly_zero(self, degree):
        p = solve_kv(degree)
        assert kv1_residual(p, degree).is_zero()

    def test_degree_two_unique_solution(self):
        p = solve_kv(2)
        assert p.A.component(2) == LieSeries(2, {"xy": F(1, 12)}).component(2)
        assert p.B.component(2) == LieSeries(2, {"xy": F(1, 6)}).component(2)

    def test_joint_strategy_feasible_and_closes_trace_equation(self):
        p = solve_kv(4, "joint-eq1-eq2")
        assert kv1_residual(p, 4).is_zero()
        assert kv2_residual(p.A, p.B, 4).is_zero()

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError):
            solve_kv(2, "newton")


class TestKernel:
    def test_infeasible_system_reports_ranks(self):
        rows = [[F(1), F(0)], [F(1), F(0)]]
        rhs = [F(1), F(2)]
        _, _, (r1, r2) = solve_exact(rows, rhs)
        assert r1 == 1 and r2 == 2

    @pytest.mark.parametrize("degree", [1, 2, 3, 4])
    def test_kernel_vectors_preserve_solutions(self, degree):
        sol = solve_kv(5)
        kernel = eq1_kernel_basis(degree, 5)
        rng = np.random.default_rng(degree)
        for _ in range(3):
            if not kernel:
                break
            weights = [F(int(rng.integers(-2, 3))) for _ in kernel]
            A, B = sol.A, sol.B
            for w, k in zip(weights, kernel):
                A = A + k.A.scaled(w)
                B = B + k.B.scaled(w)
            assert kv1_residual(KVPair(A, B, 5), 5).is_zero()

    def test_kernel_dimensions(self):
        # degree-1 block: 4 unknowns, 1 independent equation
        assert len(eq1_kernel_basis(1)) == 3
        assert len(eq1_kernel_basis(2)) == 0


class TestEvaluatePair:
    def test_zero_pair(self, so3):
        p = KVPair(LieSeries.zero(3), LieSeries.zero(3), 3)
        A, B = evaluate_pair(p, so3, np.array([0.1, 0.2, 0.3]), np.array([0.3, 0.1, 0.2]))
        assert np.allclose(A, 0) and np.allclose(B, 0)

    def test_at_origin(self, so3):
        p = solve_kv(3)
        A, B = evaluate_pair(p, so3, np.zeros(3), np.zeros(3))
        assert np.allclose(A, 0) and np.allclose(B, 0)

    def test_degree_one_solution_value(self, so3):
        p = solve_kv(1)
        X = np.array([0.2, -0.1, 0.3])
        Y = np.array([0.1, 0.4, -0.2])
        A, B = evaluate_pair(p, so3, X, Y)
        assert np.allclose(A, 0)
        assert np.allclose(B, X / 2)

    def test_equivariance(self, so3):
        rng = np.random.default_rng(9)
        p = solve_kv(4)
        X = 0.25 * rng.standard_normal(3)
        Y = 0.25 * rng.standard_normal(3)
        W = 0.25 * rng.standard_normal(3)
        Adg = matrix_exp(so3.ad(W))
        A0, B0 = evaluate_pair(p, so3, X, Y)
        A1, B1 = evaluate_pair(p, so3, Adg @ X, Adg @ Y)
        scale = max(np.max(np.abs(A0)), np.max(np.abs(B0)), 1.0)
        assert np.max(np.abs(A1 - Adg @ A0)) <= 1e-8 * scale
        assert np.max(np.abs(B1 - Adg @ B0)) <= 1e-8 * scale
