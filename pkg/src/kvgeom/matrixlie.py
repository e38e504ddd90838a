"""Concrete quadratic Lie algebras given by matrices.

An algebra descriptor carries a matrix basis, the Gram matrix of an
invariant nondegenerate pairing, structure constants derived from the
basis, and a domain radius inside which exp is a chart.  Descriptors are
validated on construction (antisymmetry, Jacobi, invariance of the form,
unimodularity) and immutable afterwards.

The module also provides numerically robust exp/log, the operator calculus
f(ad_X) for analytic f with removable singularities, the Jacobian of exp,
the interpolating maps Phi_t, and the density kappa_t.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from .cyclic import g_coefficients

Vec = np.ndarray

_VALIDATION_TOL = 1e-12
_CLOSURE_TOL = 1e-9
_SMALL_EIG = 1e-4       # removable-singularity threshold for analytic_ad
_TAYLOR_ORDER = 12      # per-eigenvalue fallback order near 0


class AlgebraValidationError(ValueError):
    """A quadratic-Lie-algebra descriptor failed a construction invariant."""


class OutsideDomainError(ValueError):
    """A point or operator left the validity domain of the construction."""


@dataclass(eq=False)
class QuadraticLieAlgebra:
    """Validated quadratic Lie algebra descriptor.  Immutable after init."""

    name: str
    basis: np.ndarray          # (d, n, n)
    Q: np.ndarray              # (d, d) Gram matrix of the invariant pairing
    domain_radius: float
    structure: np.ndarray = field(init=False)   # c[a, b, k]: [e_a,e_b] = c[a,b,k] e_k
    Qinv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        d = self.basis.shape[0]
        if self.basis.ndim != 3 or self.basis.shape[1] != self.basis.shape[2]:
            raise AlgebraValidationError("basis must be a (d, n, n) array")
        if self.Q.shape != (d, d):
            raise AlgebraValidationError("form must be d x d")
        if np.max(np.abs(self.Q - self.Q.T)) > _VALIDATION_TOL:
            raise AlgebraValidationError("form is not symmetric")
        if abs(np.linalg.det(self.Q)) < 1e-10:
            raise AlgebraValidationError("form is degenerate")
        self.Qinv = np.linalg.inv(self.Q)

        flat = self.basis.reshape(d, -1).T          # (n*n, d)
        self._pinv = np.linalg.pinv(flat)           # (d, n*n)
        comms = np.einsum('aij,bjk->abik', self.basis, self.basis)
        comms = comms - np.transpose(comms, (1, 0, 2, 3))
        self.structure = np.einsum('di,abi->abd', self._pinv,
                                   comms.reshape(d, d, -1))
        recon = np.einsum('abd,dij->abij', self.structure, self.basis)
        if np.max(np.abs(recon - comms)) > _VALIDATION_TOL * max(1.0, np.max(np.abs(comms))):
            raise AlgebraValidationError("basis does not close under brackets")
        self._validate()

    # -- validation ---------------------------------------------------------
    def _validate(self):
        c = self.structure
        if np.max(np.abs(c + np.transpose(c, (1, 0, 2)))) > _VALIDATION_TOL:
            raise AlgebraValidationError("structure constants not antisymmetric")
        jac = (np.einsum('abm,mck->abck', c, c)
               + np.einsum('bcm,mak->abck', c, c)
               + np.einsum('cam,mbk->abck', c, c))
        if np.max(np.abs(jac)) > _VALIDATION_TOL:
            raise AlgebraValidationError("Jacobi identity fails")
        # invariance: <[e_a,e_b], e_k> + <e_b, [e_a,e_k]> = 0
        T = np.einsum('abl,lk->abk', c, self.Q)
        if np.max(np.abs(T + np.transpose(T, (0, 2, 1)))) > _VALIDATION_TOL:
            raise AlgebraValidationError("form is not invariant")
        # quadratic => unimodular: tr(ad_{e_a}) = 0
        if np.max(np.abs(np.einsum('abb->a', c))) > _VALIDATION_TOL:
            raise AlgebraValidationError("algebra is not unimodular")

    # -- basic operations ----------------------------------------------------
    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def matrix_size(self) -> int:
        return self.basis.shape[1]

    def ad(self, X: Vec) -> np.ndarray:
        """Matrix of ad_X in the basis; supports stacked inputs (..., d)."""
        return np.einsum('...a,abk->...kb', np.asarray(X, dtype=float), self.structure)

    def bracket(self, u: Vec, v: Vec) -> Vec:
        return np.einsum('...a,...b,abk->...k', np.asarray(u, float),
                         np.asarray(v, float), self.structure)

    def pairing(self, u: Vec, v: Vec) -> float | np.ndarray:
        return np.einsum('...a,ab,...b->...', np.asarray(u, float), self.Q,
                         np.asarray(v, float))

    def to_matrix(self, X: Vec) -> np.ndarray:
        return np.einsum('...a,aij->...ij', np.asarray(X, dtype=float), self.basis)

    def from_matrix(self, M: np.ndarray, closure_tol: float = _CLOSURE_TOL) -> Vec:
        """Least-squares coordinates; raises if M leaves the subalgebra."""
        M = np.asarray(M, dtype=float)
        coords = np.einsum('di,...i->...d', self._pinv, M.reshape(*M.shape[:-2], -1))
        recon = self.to_matrix(coords)
        resid = np.max(np.abs(recon - M), axis=(-2, -1))
        if np.any(resid > closure_tol * (1.0 + np.max(np.abs(M)))):
            raise OutsideDomainError(
                f"matrix leaves the subalgebra (closure residual {np.max(resid):.2e})")
        return coords

    def coord_norm(self, X: Vec) -> float | np.ndarray:
        return np.linalg.norm(np.asarray(X, float), axis=-1)

    def check_point(self, X: Vec, Y: Vec) -> None:
        r = self.domain_radius
        if np.any(self.coord_norm(X) > r + 1e-12) or np.any(self.coord_norm(Y) > r + 1e-12):
            raise OutsideDomainError(f"point outside the |X|,|Y| <= {r} domain of {self.name}")

    # -- chart maps (exp/log on the defining representation) -----------------
    def exp_chart(self, X: Vec) -> np.ndarray:
        """exp of coordinate vectors, batched; closed forms for n <= 3 built-ins."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.name == "so3":
            return _so3_exp(X)
        if self.matrix_size == 2:
            return _exp_2x2(self.to_matrix(X))
        return np.stack([scipy.linalg.expm(m) for m in self.to_matrix(X)])

    def log_chart(self, M: np.ndarray) -> Vec:
        """Principal log of chart matrices back to coordinates, batched."""
        M = np.asarray(M, dtype=float)
        squeeze = M.ndim == 2
        M = M.reshape(-1, *M.shape[-2:])
        if self.name == "so3":
            out = _so3_log(M)
        elif self.matrix_size == 2:
            out = self.from_matrix(_log_2x2(M))
        else:
            out = self.from_matrix(np.stack([_logm_checked(m) for m in M]))
        return out[0] if squeeze else out


@dataclass(frozen=True)
class PointV:
    """A point (X, Y) of the product domain, in basis coordinates."""
    X: np.ndarray
    Y: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.X, float), np.asarray(self.Y, float)])

    @staticmethod
    def from_array(p: np.ndarray, d: int) -> "PointV":
        p = np.asarray(p, dtype=float)
        return PointV(p[:d], p[d:])


# ---------------------------------------------------------------------------
# matrix exp / log

def matrix_exp(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximants)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite entries in matrix_exp input")
    return scipy.linalg.expm(M)


def matrix_log(M: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm on the exp chart.

    Rejects matrices whose spectrum touches the closed negative real axis
    and verifies the exp round trip to 1e-10.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite entries in matrix_log input")
    return _logm_checked(M)


def _logm_checked(M: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(M))))
    eigs = np.linalg.eigvals(M)
    if np.any((eigs.real <= 1e-12 * scale) & (np.abs(eigs.imag) <= 1e-10 * scale)):
        raise OutsideDomainError("outside exp(U): spectrum meets the negative real axis")
    L = scipy.linalg.logm(M)
    if np.max(np.abs(L.imag)) > 1e-9 * (1.0 + np.max(np.abs(L.real))):
        raise OutsideDomainError("outside exp(U): log is not real")
    L = L.real
    if np.max(np.abs(scipy.linalg.expm(L) - M)) > 1e-10 * (1.0 + scale):
        raise OutsideDomainError("outside exp(U): exp/log round trip failed")
    return L


# -- closed-form charts ------------------------------------------------------

def _hat3(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]; out[..., 1, 0] = v[..., 2]
    out[..., 0, 2] = v[..., 1];  out[..., 2, 0] = -v[..., 1]
    out[..., 1, 2] = -v[..., 0]; out[..., 2, 1] = v[..., 0]
    return out


def _so3_exp(v: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(v, axis=-1)
    K = _hat3(v)
    K2 = K @ K
    t2 = theta * theta
    small = theta < 1e-3
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                     np.sin(theta) / np.where(small, 1.0, theta))
        c = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                     (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + s[..., None, None] * K + c[..., None, None] * K2


def _so3_log(R: np.ndarray) -> np.ndarray:
    tr = np.trace(R, axis1=-2, axis2=-1)
    ct = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(ct)
    if np.any(theta > 2.8):
        raise OutsideDomainError("outside exp(U): rotation angle near pi")
    a = np.stack([R[..., 2, 1] - R[..., 1, 2],
                  R[..., 0, 2] - R[..., 2, 0],
                  R[..., 1, 0] - R[..., 0, 1]], axis=-1) / 2.0
    t2 = theta * theta
    small = theta < 1e-3
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0,
                     theta / np.where(small, 1.0, np.sin(theta)))
    return a * f[..., None]


def _exp_2x2(M: np.ndarray) -> np.ndarray:
    tau = 0.5 * np.trace(M, axis1=-2, axis2=-1)
    N = M - tau[..., None, None] * np.eye(2)
    mu2 = -np.linalg.det(N)                     # N^2 = mu^2 I
    mu = np.sqrt(mu2.astype(complex))
    small = np.abs(mu) < 1e-4
    mu_safe = np.where(small, 1.0, mu)
    ch = np.where(small, 1.0 + mu2 / 2.0 + mu2 * mu2 / 24.0, np.cosh(mu))
    sh = np.where(small, 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0, np.sinh(mu) / mu_safe)
    out = (ch[..., None, None] * np.eye(2) + sh[..., None, None] * N)
    return np.exp(tau)[..., None, None] * out.real


def _log_2x2(M: np.ndarray) -> np.ndarray:
    det = np.linalg.det(M)
    if np.any(det <= 1e-12):
        raise OutsideDomainError("outside exp(U): nonpositive determinant")
    s = np.sqrt(det)
    U = M / s[..., None, None]
    c = 0.5 * np.trace(U, axis1=-2, axis2=-1)
    if np.any(c <= -1.0 + 1e-10):
        raise OutsideDomainError("outside exp(U): 2x2 trace at branch cut")
    W = U - c[..., None, None] * np.eye(2)
    mu2 = (c * c - 1.0).astype(complex)
    mu = np.sqrt(mu2)
    small = np.abs(mu) < 1e-4
    mu_safe = np.where(small, 1.0, mu)
    # angle a with cosh a = c, sinh a = mu; a/mu = arcsinh(mu)/mu near 0
    a = np.log(c + mu)
    f = np.where(small, 1.0 - mu2 / 6.0 + 3.0 * mu2 * mu2 / 40.0, a / mu_safe)
    out = f[..., None, None] * W
    if np.max(np.abs(out.imag)) > 1e-9:
        raise OutsideDomainError("outside exp(U): complex 2x2 logarithm")
    return np.log(s)[..., None, None] * np.eye(2) + out.real


# ---------------------------------------------------------------------------
# analytic functions of ad_X

@dataclass(frozen=True)
class AnalyticFunction:
    """Scalar analytic function with its Taylor series at 0 and a pole test."""
    name: str
    fn: Callable[[complex], complex]
    taylor: Tuple[float, ...]
    pole_test: Callable[[complex], bool] | None = None

    def eval_scalar(self, z: complex) -> complex:
        if abs(z) < _SMALL_EIG:
            acc = 0.0 + 0.0j
            for c in reversed(self.taylor[: _TAYLOR_ORDER + 1]):
                acc = acc * z + c
            return acc
        return self.fn(z)


def _g_pole(z: complex) -> bool:
    return abs(z) > 1.0 and abs(cmath.exp(z) - 1.0) < 1e-6


def _taylor_L(n: int) -> Tuple[float, ...]:
    return tuple((-1.0) ** k / math.factorial(k + 1) for k in range(n))


def _taylor_R(n: int) -> Tuple[float, ...]:
    return tuple(1.0 / math.factorial(k + 1) for k in range(n))


def _taylor_g(n: int) -> Tuple[float, ...]:
    return tuple(float(c) for c in g_coefficients(n - 1))


#: (1 - e^{-s})/s -- the pullback of the left Maurer-Cartan form, d(exp).
fn_dexp = AnalyticFunction(
    "(1-exp(-s))/s",
    lambda z: -(cmath.exp(-z) - 1.0) / z,
    _taylor_L(48))

#: (e^s - 1)/s -- the right-Maurer-Cartan pullback.
fn_dexp_right = AnalyticFunction(
    "(exp(s)-1)/s",
    lambda z: (cmath.exp(z) - 1.0) / z,
    _taylor_R(48))

#: s/(e^s - 1) -- the generating function of the trace equation.
fn_todd = AnalyticFunction(
    "s/(exp(s)-1)",
    lambda z: z / (cmath.exp(z) - 1.0),
    _taylor_g(48),
    pole_test=_g_pole)


def analytic_ad(alg: QuadraticLieAlgebra, f: AnalyticFunction, X: Vec) -> np.ndarray:
    """f(ad_X) via eigendecomposition, Taylor fallback near removable zeros.

    Eigenvalues with |lambda| < 1e-4 are evaluated by the order-12 Taylor
    polynomial; if the eigenvector matrix is ill conditioned (ad_X close to
    defective) the whole matrix function falls back to the Taylor series of
    f, whose convergence is monitored.
    """
    A = alg.ad(np.asarray(X, dtype=float))
    eigs, V = np.linalg.eig(A)
    if f.pole_test is not None and any(f.pole_test(l) for l in eigs):
        raise OutsideDomainError(f"outside V: spectrum of ad_X at a pole of {f.name}")
    if np.linalg.cond(V) < 1e8:
        vals = np.array([f.eval_scalar(l) for l in eigs])
        F = V @ np.diag(vals) @ np.linalg.inv(V)
        return F.real
    return _matrix_taylor(f, A)


def _matrix_taylor(f: AnalyticFunction, A: np.ndarray) -> np.ndarray:
    out = np.zeros_like(A)
    P = np.eye(A.shape[0])
    norm = 0.0
    last = np.inf
    for c in f.taylor:
        term = c * P
        out = out + term
        last = np.max(np.abs(term))
        norm = max(norm, np.max(np.abs(out)))
        P = P @ A
    if last > 1e-12 * (1.0 + norm):
        raise OutsideDomainError(f"Taylor series of {f.name} did not converge on ad_X")
    return out


def ad_matrix(alg: QuadraticLieAlgebra, X: Vec) -> np.ndarray:
    """Matrix of ad_X in the chosen basis (linear in X)."""
    return alg.ad(X)


def jacobian_J(alg: QuadraticLieAlgebra, X: Vec) -> float:
    """Jacobian of exp: det((1 - e^{-ad_X})/ad_X); positive on the domain."""
    J = float(np.linalg.det(analytic_ad(alg, fn_dexp, X)))
    if J <= 0.0:
        raise OutsideDomainError("outside V: Jacobian of exp not positive")
    return J


# ---------------------------------------------------------------------------
# the interpolation Phi_t and the density kappa_t

def phi_t(alg: QuadraticLieAlgebra, t: float, p: PointV) -> Vec:
    """(1/t) log(e^{tX} e^{tY}) in basis coordinates; X + Y at t = 0."""
    X = np.asarray(p.X, dtype=float)
    Y = np.asarray(p.Y, dtype=float)
    if t == 0.0:
        return X + Y
    M = matrix_exp(alg.to_matrix(t * X)) @ matrix_exp(alg.to_matrix(t * Y))
    return alg.from_matrix(matrix_log(M)) / t


def kappa_t(alg: QuadraticLieAlgebra, t: float, p: PointV) -> float:
    """J^{1/2}(tX) J^{1/2}(tY) / J^{1/2}(t Phi_t); equals 1 at t = 0."""
    if t == 0.0:
        return 1.0
    X = np.asarray(p.X, float)
    Y = np.asarray(p.Y, float)
    W = t * phi_t(alg, t, p)
    num = math.sqrt(jacobian_J(alg, t * X)) * math.sqrt(jacobian_J(alg, t * Y))
    return num / math.sqrt(jacobian_J(alg, W))


# ---------------------------------------------------------------------------
# built-in algebras

def _so3() -> QuadraticLieAlgebra:
    basis = _hat3(np.eye(3))
    # pairing -1/2 tr(uv) makes the Gram matrix the identity
    gram = -0.5 * np.einsum('aij,bji->ab', basis, basis)
    return QuadraticLieAlgebra("so3", basis, gram, domain_radius=0.5)


def _sl2() -> QuadraticLieAlgebra:
    h = np.array([[1.0, 0.0], [0.0, -1.0]])
    e = np.array([[0.0, 1.0], [0.0, 0.0]])
    f = np.array([[0.0, 0.0], [1.0, 0.0]])
    basis = np.stack([h, e, f])
    gram = np.einsum('aij,bji->ab', basis, basis)   # trace form
    return QuadraticLieAlgebra("sl2", basis, gram, domain_radius=0.5)


def _gl2() -> QuadraticLieAlgebra:
    basis = np.zeros((4, 2, 2))
    basis[0, 0, 0] = 1.0
    basis[1, 0, 1] = 1.0
    basis[2, 1, 0] = 1.0
    basis[3, 1, 1] = 1.0
    gram = np.einsum('aij,bji->ab', basis, basis)   # trace form
    return QuadraticLieAlgebra("gl2", basis, gram, domain_radius=0.4)


_BUILTINS: dict[str, Callable[[], QuadraticLieAlgebra]] = {
    "so3": _so3, "sl2": _sl2, "gl2": _gl2,
}
_cache: dict[str, QuadraticLieAlgebra] = {}


def builtin_algebras() -> List[QuadraticLieAlgebra]:
    """The validated built-in algebras: so(3), sl(2,R), gl(2,R)."""
    return [get_algebra(name) for name in ("so3", "sl2", "gl2")]


def get_algebra(name: str) -> QuadraticLieAlgebra:
    if name not in _BUILTINS:
        raise KeyError(f"unknown algebra {name!r}; choose from {sorted(_BUILTINS)}")
    if name not in _cache:
        _cache[name] = _BUILTINS[name]()
    return _cache[name]


def load_algebra(source) -> QuadraticLieAlgebra:
    """Load a custom algebra from a JSON descriptor (path or dict).

    Schema: {"name": str, "basis": [[[...]]], "form": "trace" | [[...]],
             "domain_radius": float}.  Validation runs on construction.
    """
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    basis = np.asarray(doc["basis"], dtype=float)
    form = doc.get("form", "trace")
    if isinstance(form, str):
        if form == "trace":
            gram = np.einsum('aij,bji->ab', basis, basis)
        elif form == "neg_half_trace":
            gram = -0.5 * np.einsum('aij,bji->ab', basis, basis)
        else:
            raise AlgebraValidationError(f"unknown form type {form!r}")
    else:
        gram = np.asarray(form, dtype=float)
    return QuadraticLieAlgebra(doc.get("name", "custom"), basis, gram,
                               float(doc.get("domain_radius", 0.3)))
