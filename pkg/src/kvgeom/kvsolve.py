"""Degreewise exact solver for the Kashiwara-Vergne equations.

The first equation,

    log(e^Y e^X) - X - Y = (1 - e^{-ad_X}) A + (e^{ad_Y} - 1) B,

is linear in (A, B) degree by degree: the degree-d parts of A and B enter
the degree-(d+1) component (ad raises degree by one), together with known
contributions from lower degrees.  Each degree is an exact linear system
over the rationals, solved by Gaussian elimination; free variables are set
to zero under a fixed column order (A-coefficients before B-coefficients,
words in lex order).  The joint strategy appends the degreewise components
of the trace equation, which is affine in (A, B).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import cyclic
from .freelie import (
    LieSeries,
    ad_series_apply,
    bch,
    exp_minus_one,
    lie_bracket,
    lyndon_basis,
    one_minus_exp_neg,
    standard_factorization,
)


class KVPair:
    """A candidate solution pair (A, B), truncated at a common degree."""

    __slots__ = ("A", "B", "degree", "strategy")

    def __init__(self, A: LieSeries, B: LieSeries, degree: int, strategy: str = ""):
        self.A = A.truncated(degree) if A.degree != degree else A
        self.B = B.truncated(degree) if B.degree != degree else B
        self.degree = degree
        self.strategy = strategy

    def __repr__(self):
        return f"KVPair(N={self.degree}, strategy={self.strategy!r})"


class InfeasibleDegreeError(RuntimeError):
    """The linear system at some degree has no solution."""

    def __init__(self, degree: int, rank_lhs: int, rank_aug: int, n_unknowns: int):
        self.degree = degree
        self.rank_lhs = rank_lhs
        self.rank_aug = rank_aug
        self.n_unknowns = n_unknowns
        super().__init__(
            f"infeasible linear system at degree {degree}: "
            f"rank(M) = {rank_lhs}, rank([M|b]) = {rank_aug}, unknowns = {n_unknowns}")


def kv1_residual(pair: KVPair, degree: int) -> LieSeries:
    """[bch(YX) - X - Y] - [(1 - e^{-ad_X}) A + (e^{ad_Y} - 1) B], exact."""
    lhs = bch(degree, "YX") - LieSeries.generator("x", degree) - LieSeries.generator("y", degree)
    fA = one_minus_exp_neg().upto(degree)
    fB = exp_minus_one().upto(degree)
    rhs = (ad_series_apply(fA, "x", pair.A.truncated(degree), degree)
           + ad_series_apply(fB, "y", pair.B.truncated(degree), degree))
    return lhs - rhs


# ---------------------------------------------------------------------------
# exact linear algebra

def _rref(rows: List[List[Fraction]], ncols: int) -> Tuple[List[List[Fraction]], List[int]]:
    """Reduced row echelon form; returns (rows, pivot column indices)."""
    mat = [row[:] for row in rows]
    pivots: List[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(mat)) if mat[i][c]), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        inv = Fraction(1) / mat[r][c]
        mat[r] = [v * inv for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c]:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    return mat[:r] + [row for row in mat[r:] if any(row)], pivots


def solve_exact(rows: List[List[Fraction]], rhs: List[Fraction]
                ) -> Tuple[List[Fraction], List[List[Fraction]], Tuple[int, int]]:
    """Solve M x = b exactly; free variables zero.

    Pivots are chosen scanning columns right to left, so the free variables
    (zeroed) are the earliest columns under the fixed ordering: with
    A-coefficients listed before B-coefficients this prefers solutions
    supported on B.  Returns (particular solution, kernel basis,
    (rank M, rank [M|b])); callers inspect the ranks for feasibility.
    """
    n = len(rows[0]) if rows else 0
    aug = [row[::-1] + [b] for row, b in zip(rows, rhs)]
    red, pivots = _rref(aug, n)
    rank_aug = len([row for row in red if any(row)])
    rank_lhs = len(pivots)
    sol = [Fraction(0)] * n
    if rank_aug == rank_lhs:
        for i, c in enumerate(pivots):
            sol[n - 1 - c] = red[i][n]
    kernel: List[List[Fraction]] = []
    free_cols = [c for c in range(n) if c not in pivots]
    for fc in free_cols:
        vec = [Fraction(0)] * n
        vec[n - 1 - fc] = Fraction(1)
        for i, c in enumerate(pivots):
            vec[n - 1 - c] = -red[i][fc]
        kernel.append(vec)
    return sol, kernel, (rank_lhs, rank_aug)


# ---------------------------------------------------------------------------
# system assembly

def _bracket_columns(direction: str, words: Sequence[str], degree: int
                     ) -> Dict[str, Dict[str, Fraction]]:
    """For each basis word w, the Lyndon coordinates of [gen, w] one degree up."""
    gen = LieSeries.generator(direction, degree)
    cols = {}
    for w in words:
        col = lie_bracket(gen, LieSeries(degree, {w: Fraction(1)}), degree)
        cols[w] = dict(col.items())
    return cols


def _eq1_rows(d: int, lowerA: LieSeries, lowerB: LieSeries,
              homogeneous: bool = False
              ) -> Tuple[List[str], List[List[Fraction]], List[Fraction]]:
    """Rows of the degree-(d+1) component of the first equation.

    Unknown order: A-coefficients then B-coefficients, words in lex order.
    With homogeneous=True the Campbell-Hausdorff inhomogeneity is dropped
    (used to complete kernel vectors upward through the triangular system).
    """
    words_d = lyndon_basis(d)
    words_d1 = lyndon_basis(d + 1)
    n = d + 1
    colsA = _bracket_columns("x", words_d, n)
    colsB = _bracket_columns("y", words_d, n)

    # known part: LHS_{d+1} minus the lower-degree operator contributions
    if homogeneous:
        lhs = LieSeries.zero(n)
    else:
        lhs = (bch(n, "YX") - LieSeries.generator("x", n)
               - LieSeries.generator("y", n)).component(d + 1)
    fA = one_minus_exp_neg().upto(n)
    fB = exp_minus_one().upto(n)
    known = ad_series_apply(fA, "x", lowerA.truncated(n), n).component(d + 1) \
        + ad_series_apply(fB, "y", lowerB.truncated(n), n).component(d + 1)
    target = lhs - known

    rows = []
    rhs = []
    for w1 in words_d1:
        row = [colsA[w].get(w1, Fraction(0)) for w in words_d]
        row += [colsB[w].get(w1, Fraction(0)) for w in words_d]
        rows.append(row)
        rhs.append(target.coefficient(w1))
    return words_d, rows, rhs


def _necklaces(d: int) -> List[str]:
    seen = set()
    for bits in range(2 ** d):
        w = "".join("xy"[(bits >> i) & 1] for i in range(d))
        seen.add(cyclic.min_rotation(w))
    return sorted(seen)


def _eq2_rows(d: int) -> Tuple[List[List[Fraction]], List[Fraction]]:
    """Degree-d necklace component of the trace equation, linear in (A_d, B_d)."""
    words_d = lyndon_basis(d)
    necks = _necklaces(d)
    idx = {m: i for i, m in enumerate(necks)}

    def lhs_column(word: str, slot: str) -> List[Fraction]:
        s = LieSeries(d, {word: Fraction(1)})
        letter = "x" if slot == "X" else "y"
        contrib = cyclic.cyclic_reduce(
            cyclic.delta_derivative(s, slot, d).left_concat(letter))
        col = [Fraction(0)] * len(necks)
        for m, c in contrib.items():
            col[idx[m]] = c
        return col

    colsA = [lhs_column(w, "X") for w in words_d]
    colsB = [lhs_column(w, "Y") for w in words_d]

    rhs_series = cyclic.kv2_residual(LieSeries.zero(d), LieSeries.zero(d), d).component(d)
    # residual(0,0) = LHS(0,0) - RHS = -RHS; the equation LHS(A,B) = RHS reads
    # LHS(A,B) + residual(0,0) = 0
    rhs = [-rhs_series.coefficient(m) for m in necks]

    rows = []
    for i in range(len(necks)):
        rows.append([colsA[j][i] for j in range(len(words_d))]
                    + [colsB[j][i] for j in range(len(words_d))])
    return rows, rhs


def solve_kv(degree: int, strategy: str = "eq1-only") -> KVPair:
    """Solve the Kashiwara-Vergne system degree by degree, exactly.

    strategy 'eq1-only' imposes the first equation; 'joint-eq1-eq2' adds the
    degreewise necklace components of the trace equation.  Deterministic:
    free variables are zero under the fixed column order.  Raises
    InfeasibleDegreeError if some degree admits no solution.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if strategy not in ("eq1-only", "joint-eq1-eq2"):
        raise ValueError(f"unknown strategy {strategy!r}")
    coeffsA: Dict[str, Fraction] = {}
    coeffsB: Dict[str, Fraction] = {}
    for d in range(1, degree + 1):
        lowerA = LieSeries(degree, dict(coeffsA))
        lowerB = LieSeries(degree, dict(coeffsB))
        words_d, rows, rhs = _eq1_rows(d, lowerA, lowerB)
        if strategy == "joint-eq1-eq2":
            rows2, rhs2 = _eq2_rows(d)
            rows += rows2
            rhs += rhs2
        sol, _, (rank_lhs, rank_aug) = solve_exact(rows, rhs)
        if rank_aug != rank_lhs:
            raise InfeasibleDegreeError(d, rank_lhs, rank_aug, 2 * len(words_d))
        k = len(words_d)
        for w, c in zip(words_d, sol[:k]):
            if c:
                coeffsA[w] = c
        for w, c in zip(words_d, sol[k:]):
            if c:
                coeffsB[w] = c
    return KVPair(LieSeries(degree, coeffsA), LieSeries(degree, coeffsB),
                  degree, strategy)


def eq1_kernel_basis(d: int, degree_cap: int | None = None) -> List[KVPair]:
    """Kernel elements of the truncated first equation, seeded at degree d.

    Each degree-d block-kernel vector is completed upward: the higher
    degrees solve the homogeneous continuation (the triangular system with
    the Campbell-Hausdorff inhomogeneity dropped), free variables zero.
    Adding any returned pair to a solution preserves kv1_residual = 0 up to
    degree_cap.
    """
    cap = degree_cap or d
    words_d = lyndon_basis(d)
    _, rows, _ = _eq1_rows(d, LieSeries.zero(d + 1), LieSeries.zero(d + 1))
    _, kernel, _ = solve_exact(rows, [Fraction(0)] * len(rows))
    out = []
    k = len(words_d)
    for vec in kernel:
        coeffsA = {w: c for w, c in zip(words_d, vec[:k]) if c}
        coeffsB = {w: c for w, c in zip(words_d, vec[k:]) if c}
        for dd in range(d + 1, cap + 1):
            lowerA = LieSeries(cap, dict(coeffsA))
            lowerB = LieSeries(cap, dict(coeffsB))
            words_dd, rows_dd, rhs_dd = _eq1_rows(dd, lowerA, lowerB,
                                                  homogeneous=True)
            sol, _, (r1, r2) = solve_exact(rows_dd, rhs_dd)
            if r1 != r2:
                raise InfeasibleDegreeError(dd, r1, r2, 2 * len(words_dd))
            m = len(words_dd)
            for w, c in zip(words_dd, sol[:m]):
                if c:
                    coeffsA[w] = c
            for w, c in zip(words_dd, sol[m:]):
                if c:
                    coeffsB[w] = c
        out.append(KVPair(LieSeries(cap, coeffsA), LieSeries(cap, coeffsB),
                          cap, "kernel"))
    return out


# ---------------------------------------------------------------------------
# numerical evaluation on a concrete algebra

def evaluate_pair(pair: KVPair, algebra, X: np.ndarray, Y: np.ndarray
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate (A, B) at concrete algebra elements, in basis coordinates."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)

    def eval_series(series: LieSeries) -> np.ndarray:
        values: Dict[str, np.ndarray] = {"x": X, "y": Y}

        def value(word: str) -> np.ndarray:
            if word in values:
                return values[word]
            u, v = standard_factorization(word)
            out = algebra.bracket(value(u), value(v))
            values[word] = out
            return out

        acc = np.zeros(algebra.dim)
        for w, c in series.items():
            acc = acc + float(c) * value(w)
        return acc

    return eval_series(pair.A), eval_series(pair.B)
