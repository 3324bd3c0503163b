"""Symmetric-matrix algebra on the PSD cone.

Real symmetric d x d matrices with the Frobenius pairing are the state
space everywhere in this package.  This module provides the cone tests,
the small-jump cutoff map, an orthonormal coordinate chart for the
n = d(d+1)/2 dimensional symmetric-matrix space, and structured linear
operators on that space (Lyapunov, congruence sums, rank-one sums, dense)
together with their adjoints and exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (
    DimensionMismatchError,
    EigenSolverError,
    OperatorExpError,
)

__all__ = [
    "symmetrize",
    "check_symmetric",
    "inner",
    "frob_norm",
    "min_eigenvalue",
    "is_psd",
    "cone_leq",
    "chi",
    "VecBasis",
    "SuperOperator",
    "ZeroOperator",
    "LyapunovOperator",
    "CongruenceSum",
    "RankOneSum",
    "DenseOperator",
    "OperatorSum",
    "operator_norm",
    "expm_action",
    "ExpPropagator",
    "random_symmetric",
    "random_psd",
    "sym_to_json",
    "sym_from_json",
]


# ---------------------------------------------------------------------------
# elementary matrix helpers
# ---------------------------------------------------------------------------

def symmetrize(a):
    """Exactly symmetric part (a + a.T)/2 as a float array."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def check_symmetric(a, rel_tol=1e-12):
    """Validate that `a` is square and symmetric within a relative tolerance.

    Returns the symmetrized array.  Raises DimensionMismatchError on
    non-square input and ValueError when the asymmetry exceeds
    rel_tol * (1 + ||a||).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    scale = 1.0 + np.linalg.norm(a)
    asym = np.abs(a - a.T).max()
    if asym > rel_tol * scale:
        raise ValueError(f"matrix is asymmetric: max |a - a.T| = {asym:.3e} exceeds {rel_tol:.1e}*(1+||a||)")
    return symmetrize(a)


def _check_same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")


def inner(a, b):
    """Frobenius pairing <a, b> = sum_ij a_ij b_ij."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_dim(a, b)
    return float(np.tensordot(a, b))


def frob_norm(a):
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def min_eigenvalue(a):
    """Smallest eigenvalue of a symmetric matrix.

    Dimensions 1 and 2 use the closed form; larger matrices go through the
    LAPACK symmetric eigensolver, whose non-convergence is reported as
    EigenSolverError with the solver diagnostics attached.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    if d == 1:
        return float(a[0, 0])
    if d == 2:
        half_tr = 0.5 * (a[0, 0] + a[1, 1])
        off = 0.5 * (a[0, 1] + a[1, 0])
        gap = 0.5 * (a[0, 0] - a[1, 1])
        return float(half_tr - np.hypot(gap, off))
    try:
        return float(np.linalg.eigvalsh(symmetrize(a))[0])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails at desk scale
        raise EigenSolverError(f"symmetric eigensolver did not converge: {exc}") from exc


def is_psd(a, tol=0.0):
    return min_eigenvalue(a) >= -tol


def cone_leq(a, b, tol=0.0):
    """Loewner order test a <= b, i.e. min eig(b - a) >= -tol."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_dim(a, b)
    return min_eigenvalue(b - a) >= -tol


def chi(xi):
    """Small-jump cutoff: xi itself when ||xi|| <= 1 (boundary included), else 0."""
    xi = np.asarray(xi, dtype=float)
    if frob_norm(xi) <= 1.0:
        return xi.copy()
    return np.zeros_like(xi)


# ---------------------------------------------------------------------------
# orthonormal coordinates for symmetric matrices
# ---------------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


class VecBasis:
    """Orthonormal coordinates for d x d symmetric matrices.

    Basis: the diagonal units E_ii followed by (E_ij + E_ji)/sqrt(2) for
    i < j, so that vec/unvec are mutually inverse isometries:
    <A, B> = dot(vec(A), vec(B)).
    """

    def __init__(self, dim):
        if dim < 1:
            raise DimensionMismatchError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.n = self.dim * (self.dim + 1) // 2
        self._iu = np.triu_indices(self.dim, k=1)
        self._di = np.diag_indices(self.dim)

    def vec(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"expected shape {(self.dim, self.dim)}, got {a.shape}")
        out = np.empty(self.n)
        out[: self.dim] = a[self._di]
        out[self.dim:] = _SQRT2 * a[self._iu]
        return out

    def unvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise DimensionMismatchError(f"expected shape {(self.n,)}, got {v.shape}")
        a = np.zeros((self.dim, self.dim))
        a[self._iu] = v[self.dim:] / _SQRT2
        a += a.T
        a[self._di] = v[: self.dim]
        return a

    def basis_matrix(self, j):
        e = np.zeros(self.n)
        e[j] = 1.0
        return self.unvec(e)

    def dense_matrix(self, op):
        """n x n coordinate matrix of a linear map on symmetric matrices."""
        cols = [self.vec(op.apply(self.basis_matrix(j))) for j in range(self.n)]
        return np.column_stack(cols)


# ---------------------------------------------------------------------------
# structured linear operators with explicit adjoints
# ---------------------------------------------------------------------------

class SuperOperator:
    """Linear map on symmetric matrices with an explicitly available adjoint."""

    dim: int

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, x):
        return self.adjoint().apply(x)

    def adjoint(self):
        raise NotImplementedError

    def to_dense(self, basis=None):
        basis = basis or VecBasis(self.dim)
        return basis.dense_matrix(self)

    def __add__(self, other):
        if not isinstance(other, SuperOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionMismatchError("cannot add operators at different dimensions")
        terms = []
        for op in (self, other):
            terms.extend(op.terms if isinstance(op, OperatorSum) else [op])
        return OperatorSum(tuple(terms))


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ZeroOperator(SuperOperator):
    dim: int

    def apply(self, x):
        return np.zeros((self.dim, self.dim))

    apply_adjoint = apply

    def adjoint(self):
        return self


@dataclass(frozen=True, eq=False)
class LyapunovOperator(SuperOperator):
    """x -> beta x + x beta^T for a (not necessarily symmetric) d x d beta."""

    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _freeze(self.beta))
        if self.beta.ndim != 2 or self.beta.shape[0] != self.beta.shape[1]:
            raise DimensionMismatchError(f"beta must be square, got {self.beta.shape}")

    @property
    def dim(self):
        return self.beta.shape[0]

    def apply(self, x):
        bx = self.beta @ x
        return bx + bx.T

    def apply_adjoint(self, x):
        bx = self.beta.T @ x
        return bx + bx.T

    def adjoint(self):
        return LyapunovOperator(self.beta.T)


@dataclass(frozen=True, eq=False)
class CongruenceSum(SuperOperator):
    """x -> sum_j G_j x G_j^T; completely positive for any G_j."""

    gs: tuple

    def __post_init__(self):
        object.__setattr__(self, "gs", tuple(_freeze(g) for g in self.gs))
        if not self.gs:
            raise ValueError("CongruenceSum needs at least one factor; use ZeroOperator instead")
        d = self.gs[0].shape[0]
        for g in self.gs:
            if g.shape != (d, d):
                raise DimensionMismatchError("congruence factors must share one square shape")

    @property
    def dim(self):
        return self.gs[0].shape[0]

    def apply(self, x):
        return sum(g @ x @ g.T for g in self.gs)

    def apply_adjoint(self, x):
        return sum(g.T @ x @ g for g in self.gs)

    def adjoint(self):
        return CongruenceSum(tuple(g.T for g in self.gs))


@dataclass(frozen=True, eq=False)
class RankOneSum(SuperOperator):
    """x -> sum_i <A_i, x> C_i with symmetric coefficient/output pairs."""

    pairs: tuple  # of (A_i, C_i)

    def __post_init__(self):
        frozen = tuple((_freeze(a), _freeze(c)) for a, c in self.pairs)
        object.__setattr__(self, "pairs", frozen)
        if not frozen:
            raise ValueError("RankOneSum needs at least one pair; use ZeroOperator instead")
        d = frozen[0][0].shape[0]
        for a, c in frozen:
            if a.shape != (d, d) or c.shape != (d, d):
                raise DimensionMismatchError("rank-one pairs must share one square shape")

    @property
    def dim(self):
        return self.pairs[0][0].shape[0]

    def apply(self, x):
        out = np.zeros((self.dim, self.dim))
        for a, c in self.pairs:
            out += float(np.tensordot(a, x)) * c
        return out

    def apply_adjoint(self, x):
        out = np.zeros((self.dim, self.dim))
        for a, c in self.pairs:
            out += float(np.tensordot(c, x)) * a
        return out

    def adjoint(self):
        return RankOneSum(tuple((c, a) for a, c in self.pairs))


@dataclass(frozen=True, eq=False)
class DenseOperator(SuperOperator):
    """Operator given by its n x n matrix in VecBasis coordinates."""

    dim: int
    mat: np.ndarray
    _basis: VecBasis = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mat", _freeze(self.mat))
        basis = VecBasis(self.dim)
        if self.mat.shape != (basis.n, basis.n):
            raise DimensionMismatchError(
                f"expected a {basis.n} x {basis.n} coordinate matrix for dim {self.dim}, got {self.mat.shape}")
        object.__setattr__(self, "_basis", basis)

    def apply(self, x):
        return self._basis.unvec(self.mat @ self._basis.vec(x))

    def apply_adjoint(self, x):
        return self._basis.unvec(self.mat.T @ self._basis.vec(x))

    def adjoint(self):
        return DenseOperator(self.dim, self.mat.T)

    def to_dense(self, basis=None):
        return np.array(self.mat)


@dataclass(frozen=True, eq=False)
class OperatorSum(SuperOperator):
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("OperatorSum needs at least one term")
        d = self.terms[0].dim
        for t in self.terms:
            if t.dim != d:
                raise DimensionMismatchError("operator sum terms must share the dimension")

    @property
    def dim(self):
        return self.terms[0].dim

    def apply(self, x):
        out = np.zeros((self.dim, self.dim))
        for t in self.terms:
            out += t.apply(x)
        return out

    def apply_adjoint(self, x):
        out = np.zeros((self.dim, self.dim))
        for t in self.terms:
            out += t.apply_adjoint(x)
        return out

    def adjoint(self):
        return OperatorSum(tuple(t.adjoint() for t in self.terms))


def operator_norm(op, basis=None):
    """Operator norm of a SuperOperator w.r.t. the Frobenius pairing.

    Equals the spectral norm of the coordinate matrix because VecBasis is an
    isometry.
    """
    return float(np.linalg.norm(op.to_dense(basis), 2))


# ---------------------------------------------------------------------------
# operator exponentials
# ---------------------------------------------------------------------------

def expm_action(op, t, v, basis=None):
    """e^{t op} v via the dense coordinate matrix and scaling-and-squaring.

    Requires t >= 0.  Raises OperatorExpError when the result is not finite
    (operator too large for the requested horizon).
    """
    if t < 0:
        raise ValueError(f"expm_action requires t >= 0, got {t}")
    basis = basis or VecBasis(op.dim)
    mat = op.to_dense(basis)
    with np.errstate(invalid="ignore", over="ignore"):
        out = scipy.linalg.expm(t * mat) @ basis.vec(np.asarray(v, dtype=float))
    if not np.all(np.isfinite(out)):
        raise OperatorExpError(f"e^(tL)v overflowed for t={t} and ||L||={np.linalg.norm(mat, 2):.3e}")
    return symmetrize(basis.unvec(out))


class ExpPropagator:
    """Repeated evaluation of e^{tM} y for one square matrix M and many t.

    Diagonalizes M once and reuses the factors; falls back to dense
    scaling-and-squaring when M is numerically defective.  Results agree
    with scipy.linalg.expm to ~1e-12 on well-conditioned eigenbases.
    """

    def __init__(self, mat, cond_limit=1e7):
        self.mat = np.asarray(mat, dtype=float)
        n = self.mat.shape[0]
        if self.mat.shape != (n, n):
            raise DimensionMismatchError(f"expected a square matrix, got {self.mat.shape}")
        try:
            w, vr = np.linalg.eig(self.mat)
            cond = np.linalg.cond(vr)
        except np.linalg.LinAlgError:  # pragma: no cover
            cond = np.inf
        self.use_eig = bool(np.isfinite(cond) and cond < cond_limit)
        if self.use_eig:
            self._w = w
            self._vr = vr
            self._vinv = np.linalg.inv(vr)

    def mat_exp(self, t):
        """Dense e^{tM}."""
        if self.use_eig:
            return np.real((self._vr * np.exp(t * self._w)) @ self._vinv)
        return scipy.linalg.expm(t * self.mat)

    def dot(self, t, y):
        """e^{tM} y without forming the dense exponential when diagonalized."""
        if self.use_eig:
            return np.real(self._vr @ (np.exp(t * self._w) * (self._vinv @ y)))
        return scipy.linalg.expm(t * self.mat) @ np.asarray(y, dtype=float)

    def phi1_dot(self, t, y):
        """(integral_0^t e^{sM} ds) y; exact via eigenvalues, (e^{tl}-1)/l with l=0 limit t."""
        y = np.asarray(y, dtype=float)
        if self.use_eig:
            z = t * self._w
            small = np.abs(z) < 1e-4
            safe = np.where(small, 1.0, self._w)
            taylor = t * (1.0 + z / 2.0 + z * z / 6.0)  # rel. error < 5e-14 for |z| < 1e-4
            f = np.where(small, taylor, (np.exp(z) - 1.0) / safe)
            return np.real(self._vr @ (f * (self._vinv @ y)))
        # defective fallback: augmented block exponential
        n = self.mat.shape[0]
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = self.mat
        aug[:n, n] = y
        return scipy.linalg.expm(t * aug)[:n, n]


# ---------------------------------------------------------------------------
# random elements (testing and randomized admissibility checks)
# ---------------------------------------------------------------------------

def random_symmetric(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * symmetrize(a)


def random_psd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T) / dim


# ---------------------------------------------------------------------------
# JSON encoding of symmetric matrices
# ---------------------------------------------------------------------------

def sym_to_json(a):
    a = np.asarray(a, dtype=float)
    return {"dim": int(a.shape[0]), "rows": [[float(x) for x in row] for row in a]}


def sym_from_json(obj, rel_tol=1e-12):
    """Read the {"dim", "rows"} encoding, rejecting asymmetry beyond rel_tol."""
    try:
        dim = int(obj["dim"])
        rows = np.asarray(obj["rows"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed symmetric-matrix object: {exc}") from exc
    if rows.shape != (dim, dim):
        raise DimensionMismatchError(f"declared dim {dim} but rows have shape {rows.shape}")
    return check_symmetric(rows, rel_tol=rel_tol)
