"""Jump-measure parameter sets on the PSD cone.

A parameter set is a tuple (b, B, m, mu): constant drift b, linear drift
operator B, a scalar-weighted jump measure m (state-independent jumps) and
an operator-weighted jump measure mu (state-dependent jumps).  Measures are
represented as finite atom lists plus radial rays with parametric densities
(power law or exponential), which keeps every integral computable by 1-D
quadrature while still allowing infinite activity near zero.

For an operator ray the stored density is g(r), the radial density of the
kernel mu(dxi)/||xi||^2 along the ray, so the mu-mass density is r^2 g(r).

At a fixed matrix dimension, weak and strong small-jump first moments
coincide, so these measures can have infinite activity (power-law rays
reaching radius zero with exponent in (0, 1)) but never infinite
variation; the small-jump first-moment invariant enforces this.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .exceptions import (
    DimensionMismatchError,
    MeasureError,
    ParameterFileError,
    QuadratureError,
)
from . import symcone
from .symcone import (
    CongruenceSum,
    DenseOperator,
    LyapunovOperator,
    OperatorSum,
    RankOneSum,
    SuperOperator,
    ZeroOperator,
    check_symmetric,
    frob_norm,
    inner,
    min_eigenvalue,
    sym_from_json,
    sym_to_json,
)

__all__ = [
    "PowerLawDensity",
    "ExponentialDensity",
    "radial_quad",
    "ScalarAtom",
    "ScalarRay",
    "OperatorAtom",
    "OperatorRay",
    "ScalarJumpMeasure",
    "OperatorJumpMeasure",
    "ParameterSet",
    "ALL",
    "norm_gt",
    "norm_leq",
    "integrate_scalar",
    "integrate_operator",
    "integrate_kernel",
    "truncate",
    "orthogonal_psd_pair",
    "ConditionResult",
    "AdmissibilityReport",
    "validate_admissibility",
    "build_admissible",
    "params_to_json",
    "params_from_json",
    "load_params",
    "save_params",
]

_INF = math.inf


# ---------------------------------------------------------------------------
# radial densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawDensity:
    """rho(r) = c * r^(-1-alpha) on [rmin, rmax]."""

    c: float
    alpha: float
    rmin: float = 0.0
    rmax: float = _INF

    def __post_init__(self):
        if self.c <= 0:
            raise MeasureError(f"power-law constant must be positive, got {self.c}")
        if self.rmin < 0 or self.rmax <= self.rmin:
            raise MeasureError(f"invalid radial range [{self.rmin}, {self.rmax}]")

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        out = self.c * r ** (-1.0 - self.alpha)
        return np.where((r >= self.rmin) & (r <= self.rmax), out, 0.0)

    def partial_moment(self, p, lo=0.0, hi=_INF):
        """integral of r^p rho(r) dr over [lo, hi] within the support; may be inf."""
        a = max(lo, self.rmin)
        b = min(hi, self.rmax)
        if b <= a:
            return 0.0
        q = p - self.alpha
        if a == 0.0 and q <= 0.0:
            return _INF
        if b == _INF:
            if q >= 0.0:
                return _INF
            return -self.c * a ** q / q
        if abs(q) < 1e-13:
            if a == 0.0:
                return _INF
            return self.c * math.log(b / a)
        ga = 0.0 if a == 0.0 else a ** q
        return self.c * (b ** q - ga) / q

    def cdf_mass(self, r):
        """Vectorized integral of rho over [rmin, r]."""
        r = np.minimum(np.asarray(r, dtype=float), self.rmax)
        q = -self.alpha
        if abs(q) < 1e-13:
            out = self.c * np.log(np.maximum(r, self.rmin) / self.rmin)
        else:
            out = self.c * (np.maximum(r, self.rmin) ** q - self.rmin ** q) / q
        return np.where(r <= self.rmin, 0.0, out)

    def restricted(self, lo, hi):
        a = max(lo, self.rmin)
        b = min(hi, self.rmax)
        if b <= a:
            return None
        return PowerLawDensity(self.c, self.alpha, a, b)


@dataclass(frozen=True)
class ExponentialDensity:
    """rho(r) = c * exp(-lam * r) on [rmin, rmax] (rmax may be inf)."""

    c: float
    lam: float
    rmin: float = 0.0
    rmax: float = _INF

    def __post_init__(self):
        if self.c <= 0 or self.lam <= 0:
            raise MeasureError(f"exponential density needs c > 0, lam > 0; got c={self.c}, lam={self.lam}")
        if self.rmin < 0 or self.rmax <= self.rmin:
            raise MeasureError(f"invalid radial range [{self.rmin}, {self.rmax}]")

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        out = self.c * np.exp(-self.lam * r)
        return np.where((r >= self.rmin) & (r <= self.rmax), out, 0.0)

    def partial_moment(self, p, lo=0.0, hi=_INF):
        from scipy.special import gammaincc, gamma

        a = max(lo, self.rmin)
        b = min(hi, self.rmax)
        if b <= a:
            return 0.0
        s = p + 1.0
        scale = self.c * self.lam ** (-s) * gamma(s)
        upper_a = gammaincc(s, self.lam * a)
        upper_b = 0.0 if b == _INF else gammaincc(s, self.lam * b)
        return float(scale * (upper_a - upper_b))

    def cdf_mass(self, r):
        r = np.minimum(np.asarray(r, dtype=float), self.rmax)
        out = (self.c / self.lam) * (np.exp(-self.lam * self.rmin) - np.exp(-self.lam * np.maximum(r, self.rmin)))
        return np.where(r <= self.rmin, 0.0, out)

    def restricted(self, lo, hi):
        a = max(lo, self.rmin)
        b = min(hi, self.rmax)
        if b <= a:
            return None
        return ExponentialDensity(self.c, self.lam, a, b)


def radial_quad(density, fn, lo=0.0, hi=_INF, abs_tol=1e-10, rel_tol=1e-8, ray_index=None):
    """Adaptive quadrature of fn(r) * density(r) over [lo, hi] within the support.

    Power-law densities with a singular endpoint at r = 0 and alpha in (0, 1)
    are regularized by the substitution r = s^(1/(1-alpha)); the caller must
    ensure fn decays fast enough at 0 for the product to be integrable.
    """
    a = max(lo, density.rmin)
    b = min(hi, density.rmax)
    if b <= a:
        return 0.0
    singular = (
        isinstance(density, PowerLawDensity)
        and a == 0.0
        and 0.0 < density.alpha < 1.0
    )
    if singular:
        beta = 1.0 / (1.0 - density.alpha)
        cb = density.c * beta

        def g(s):
            return cb * fn(s ** beta) * s ** (-beta)

        lo_t, hi_t = 0.0, b ** (1.0 - density.alpha)
    else:
        def g(r):
            return fn(r) * float(density.pdf(r))

        lo_t, hi_t = a, b
    out = scipy.integrate.quad(g, lo_t, hi_t, epsabs=abs_tol, epsrel=rel_tol, limit=200, full_output=1)
    if len(out) > 3 or not math.isfinite(out[0]):
        raise QuadratureError(
            f"radial quadrature failed on [{lo_t}, {hi_t}]: "
            f"{out[3] if len(out) > 3 else 'non-finite result'}",
            ray_index=ray_index,
        )
    return float(out[0])


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def _check_direction(d_mat):
    d_mat = check_symmetric(d_mat)
    nrm = frob_norm(d_mat)
    if abs(nrm - 1.0) > 1e-12:
        raise MeasureError(f"ray direction must have unit Frobenius norm, got {nrm}")
    if min_eigenvalue(d_mat) < -1e-12 * (1.0 + nrm):
        raise MeasureError("ray direction must be PSD")
    return d_mat


def _check_psd(mat, what):
    mat = check_symmetric(mat)
    if min_eigenvalue(mat) < -1e-12 * (1.0 + frob_norm(mat)):
        raise MeasureError(f"{what} must be PSD")
    return mat


@dataclass(frozen=True, eq=False)
class ScalarAtom:
    xi: np.ndarray
    weight: float
    norm: float = field(init=False)

    def __post_init__(self):
        xi = _check_psd(self.xi, "atom location")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "norm", frob_norm(xi))
        if self.norm == 0.0:
            raise MeasureError("atoms must sit away from the origin")
        if self.weight <= 0:
            raise MeasureError(f"atom weight must be positive, got {self.weight}")


@dataclass(frozen=True, eq=False)
class ScalarRay:
    direction: np.ndarray
    density: PowerLawDensity | ExponentialDensity

    def __post_init__(self):
        d_mat = _check_direction(self.direction)
        d_mat.setflags(write=False)
        object.__setattr__(self, "direction", d_mat)


@dataclass(frozen=True, eq=False)
class OperatorAtom:
    xi: np.ndarray
    weight: np.ndarray  # PSD matrix mass at the atom
    norm: float = field(init=False)

    def __post_init__(self):
        xi = _check_psd(self.xi, "atom location")
        w = _check_psd(self.weight, "atom operator weight")
        xi.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "norm", frob_norm(xi))
        if self.norm == 0.0:
            raise MeasureError("atoms must sit away from the origin")


@dataclass(frozen=True, eq=False)
class OperatorRay:
    direction: np.ndarray
    weight: np.ndarray
    density: PowerLawDensity | ExponentialDensity  # g(r), kernel form

    def __post_init__(self):
        d_mat = _check_direction(self.direction)
        w = _check_psd(self.weight, "ray operator weight")
        d_mat.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "direction", d_mat)
        object.__setattr__(self, "weight", w)


@dataclass(frozen=True, eq=False)
class ScalarJumpMeasure:
    """Finite atoms plus radial rays; ray densities are the m-mass densities."""

    dim: int
    atoms: tuple = ()
    rays: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "rays", tuple(self.rays))
        for a in self.atoms:
            if a.xi.shape != (self.dim, self.dim):
                raise DimensionMismatchError("atom dimension does not match the measure")
        for j, r in enumerate(self.rays):
            if r.direction.shape != (self.dim, self.dim):
                raise DimensionMismatchError("ray dimension does not match the measure")
            if r.density.partial_moment(2) == _INF:
                raise MeasureError(f"m-ray {j}: second moment is infinite")
            if r.density.partial_moment(1, 0.0, 1.0) == _INF:
                raise MeasureError(f"m-ray {j}: small-jump first moment is infinite")

    @classmethod
    def empty(cls, dim):
        return cls(dim)

    @property
    def is_empty(self):
        return not self.atoms and not self.rays

    def total_mass(self):
        """Total activity; may be inf for power-law rays reaching r = 0."""
        return float(sum(a.weight for a in self.atoms)) + sum(
            r.density.partial_moment(0) for r in self.rays)

    def second_moment(self):
        return float(sum(a.weight * a.norm ** 2 for a in self.atoms)) + sum(
            r.density.partial_moment(2) for r in self.rays)

    def chi_integral(self):
        """integral of chi(xi) m(dxi): the small-jump mean, a symmetric matrix."""
        out = np.zeros((self.dim, self.dim))
        for a in self.atoms:
            if a.norm <= 1.0:
                out += a.weight * a.xi
        for r in self.rays:
            out += r.density.partial_moment(1, 0.0, 1.0) * r.direction
        return out

    def tail_first_moment_matrix(self):
        """integral of xi over ||xi|| > 1 against m."""
        out = np.zeros((self.dim, self.dim))
        for a in self.atoms:
            if a.norm > 1.0:
                out += a.weight * a.xi
        for r in self.rays:
            out += r.density.partial_moment(1, 1.0, _INF) * r.direction
        return out

    def restricted(self, lo=0.0, hi=_INF):
        atoms = tuple(a for a in self.atoms if lo < a.norm <= hi)
        rays = []
        for r in self.rays:
            den = r.density.restricted(lo, hi)
            if den is not None:
                rays.append(ScalarRay(r.direction, den))
        return ScalarJumpMeasure(self.dim, atoms, tuple(rays))

    @property
    def is_finite_activity(self):
        return self.total_mass() < _INF


@dataclass(frozen=True, eq=False)
class OperatorJumpMeasure:
    """Finite atoms plus radial rays with PSD operator weights.

    Ray densities are stored in kernel form g(r) (density of mu/||xi||^2);
    the mu-mass density along a ray is r^2 g(r).
    """

    dim: int
    atoms: tuple = ()
    rays: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "rays", tuple(self.rays))
        for a in self.atoms:
            if a.xi.shape != (self.dim, self.dim) or a.weight.shape != (self.dim, self.dim):
                raise DimensionMismatchError("atom dimension does not match the measure")
        for j, r in enumerate(self.rays):
            if r.direction.shape != (self.dim, self.dim) or r.weight.shape != (self.dim, self.dim):
                raise DimensionMismatchError("ray dimension does not match the measure")
            if r.density.partial_moment(2) == _INF:
                raise MeasureError(f"mu-ray {j}: total mass (kernel second moment) is infinite")
            if r.density.partial_moment(1, 0.0, 1.0) == _INF:
                raise MeasureError(f"mu-ray {j}: small-jump kernel first moment is infinite")

    @classmethod
    def empty(cls, dim):
        return cls(dim)

    @property
    def is_empty(self):
        return not self.atoms and not self.rays

    def total_mass_matrix(self):
        """mu applied to everything: sum of atom weights plus ray masses; finite PSD."""
        out = np.zeros((self.dim, self.dim))
        for a in self.atoms:
            out += a.weight
        for r in self.rays:
            out += r.density.partial_moment(2) * r.weight
        return out

    def kernel_total_matrix(self):
        """integral of mu(dxi)/||xi||^2; None when the activity is infinite."""
        out = np.zeros((self.dim, self.dim))
        for a in self.atoms:
            out += a.weight / a.norm ** 2
        for r in self.rays:
            mass = r.density.partial_moment(0)
            if mass == _INF:
                return None
            out += mass * r.weight
        return out

    def chi_compensator_pairs(self):
        """Rank-one data for x -> integral chi(xi) <mu(dxi), x>/||xi||^2.

        Returns pairs (M, K) so the map is x -> sum <M, x> K.
        """
        pairs = []
        for a in self.atoms:
            if a.norm <= 1.0:
                pairs.append((a.weight, a.xi / a.norm ** 2))
        for r in self.rays:
            mom = r.density.partial_moment(1, 0.0, 1.0)
            if mom > 0.0:
                pairs.append((r.weight, mom * r.direction))
        return tuple(pairs)

    def tail_pairs(self):
        """Rank-one data for v -> integral_{||xi||>1} <xi, v> mu(dxi)/||xi||^2."""
        pairs = []
        for a in self.atoms:
            if a.norm > 1.0:
                pairs.append((a.xi, a.weight / a.norm ** 2))
        for r in self.rays:
            mom = r.density.partial_moment(1, 1.0, _INF)
            if mom > 0.0:
                pairs.append((r.direction, mom * r.weight))
        return tuple(pairs)

    def restricted(self, lo=0.0, hi=_INF):
        atoms = tuple(a for a in self.atoms if lo < a.norm <= hi)
        rays = []
        for r in self.rays:
            den = r.density.restricted(lo, hi)
            if den is not None:
                rays.append(OperatorRay(r.direction, r.weight, den))
        return OperatorJumpMeasure(self.dim, atoms, tuple(rays))

    @property
    def is_finite_activity(self):
        return self.kernel_total_matrix() is not None


# ---------------------------------------------------------------------------
# integration against the measures
# ---------------------------------------------------------------------------

ALL = ("all", 0.0)


def norm_gt(c):
    return ("gt", float(c))


def norm_leq(c):
    return ("leq", float(c))


def _region_bounds(region):
    kind, c = region
    if kind == "all":
        return 0.0, _INF
    if kind == "gt":
        return c, _INF
    if kind == "leq":
        return 0.0, c
    raise ValueError(f"unknown region {region!r}")


def _atom_in_region(norm, region):
    kind, c = region
    if kind == "all":
        return True
    return norm > c if kind == "gt" else norm <= c


def integrate_scalar(m, f, region=ALL):
    """integral of f(xi) m(dxi) over the region, atoms exactly, rays by quadrature."""
    lo, hi = _region_bounds(region)
    total = sum(a.weight * f(a.xi) for a in m.atoms if _atom_in_region(a.norm, region))
    for j, r in enumerate(m.rays):
        d_mat = r.direction
        total += radial_quad(r.density, lambda s: f(s * d_mat), lo, hi, ray_index=j)
    return float(total)


def integrate_operator(mu, f, region=ALL):
    """integral of f(xi) mu(dxi) over the region; returns a symmetric matrix."""
    lo, hi = _region_bounds(region)
    out = np.zeros((mu.dim, mu.dim))
    for a in mu.atoms:
        if _atom_in_region(a.norm, region):
            out += f(a.xi) * a.weight
    for j, r in enumerate(mu.rays):
        d_mat = r.direction
        val = radial_quad(r.density, lambda s: f(s * d_mat) * s * s, lo, hi, ray_index=j)
        out += val * r.weight
    return out


def integrate_kernel(mu, f, region=ALL):
    """integral of f(xi) mu(dxi)/||xi||^2 over the region."""
    lo, hi = _region_bounds(region)
    out = np.zeros((mu.dim, mu.dim))
    for a in mu.atoms:
        if _atom_in_region(a.norm, region):
            out += f(a.xi) * a.weight / a.norm ** 2
    for j, r in enumerate(mu.rays):
        d_mat = r.direction
        val = radial_quad(r.density, lambda s: f(s * d_mat), lo, hi, ray_index=j)
        out += val * r.weight
    return out


# ---------------------------------------------------------------------------
# parameter sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParameterSet:
    dim: int
    b: np.ndarray
    B: SuperOperator
    m: ScalarJumpMeasure
    mu: OperatorJumpMeasure

    def __post_init__(self):
        b = check_symmetric(self.b)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if b.shape != (self.dim, self.dim):
            raise DimensionMismatchError("drift b has the wrong dimension")
        if self.B.dim != self.dim or self.m.dim != self.dim or self.mu.dim != self.dim:
            raise DimensionMismatchError("parameter-set components disagree on the dimension")

    @property
    def is_finite_activity(self):
        return self.m.is_finite_activity and self.mu.is_finite_activity


def truncate(p_set, k):
    """Drop all jumps of norm <= 1/k; drift terms are unchanged."""
    if k < 1:
        raise ValueError(f"truncation level must be >= 1, got {k}")
    cut = 1.0 / float(k)
    return ParameterSet(
        p_set.dim,
        p_set.b,
        p_set.B,
        p_set.m.restricted(lo=cut),
        p_set.mu.restricted(lo=cut),
    )


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

def orthogonal_psd_pair(rng, dim):
    """Random PSD pair (u, x) with <u, x> = 0, from a split orthonormal frame."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    if dim == 1:
        u = rng.uniform(0.5, 1.5) * np.outer(q[:, 0], q[:, 0])
        return u, np.zeros((1, 1))
    split = int(rng.integers(1, dim))
    coeff_u = rng.uniform(0.5, 1.5, split)
    coeff_x = rng.uniform(0.5, 1.5, dim - split)
    vu = q[:, :split]
    vx = q[:, split:]
    u = (vu * coeff_u) @ vu.T
    x = (vx * coeff_x) @ vx.T
    return symcone.symmetrize(u), symcone.symmetrize(x)


@dataclass(frozen=True)
class ConditionResult:
    condition: str
    passed: bool
    detail: str
    violation: float = 0.0
    witness: dict | None = None


@dataclass(frozen=True)
class AdmissibilityReport:
    dim: int
    seed: int
    n_pairs: int
    conditions: tuple

    @property
    def all_passed(self):
        return all(c.passed for c in self.conditions)

    def condition(self, name):
        for c in self.conditions:
            if c.condition == name:
                return c
        raise KeyError(name)

    def to_json(self):
        return {
            "dim": self.dim,
            "seed": self.seed,
            "n_pairs": self.n_pairs,
            "all_passed": self.all_passed,
            "conditions": [
                {
                    "condition": c.condition,
                    "passed": c.passed,
                    "detail": c.detail,
                    "violation": c.violation,
                    "witness": c.witness,
                }
                for c in self.conditions
            ],
        }


def _compensator_value(mu, u, x):
    """integral <chi(xi), u> <mu(dxi), x> / ||xi||^2 in closed form."""
    return float(sum(inner(mk, x) * inner(kk, u) for mk, kk in mu.chi_compensator_pairs()))


def validate_admissibility(p_set, tol=None, n_pairs=50, seed=0):
    """Check the four admissibility conditions, randomized where quantified.

    Conditions over all orthogonal cone pairs (u, x) are sampled at n_pairs
    seeded draws; the report records the worst witness.  The default cone
    tolerance is 1e-9 * (1 + ||operand||).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    results = []

    second = p_set.m.second_moment()
    results.append(ConditionResult(
        "i_a", second < _INF, f"m second moment = {second}", 0.0 if second < _INF else _INF))

    small_first = float(sum(a.weight * a.norm for a in p_set.m.atoms if a.norm <= 1.0)) + sum(
        r.density.partial_moment(1, 0.0, 1.0) for r in p_set.m.rays)
    if small_first < _INF:
        i_m = p_set.m.chi_integral()
        results.append(ConditionResult(
            "i_b", True, f"I_m exists, ||I_m|| = {frob_norm(i_m):.6g}"))
    else:
        i_m = None
        results.append(ConditionResult(
            "i_b", False, "small-jump first moment of m diverges", _INF))

    if i_m is None:
        results.append(ConditionResult("ii", False, "not checkable: I_m does not exist", _INF))
    else:
        gap = p_set.b - i_m
        lam = min_eigenvalue(gap)
        tol_ii = tol if tol is not None else 1e-9 * (1.0 + frob_norm(gap))
        witness = None
        if lam < -tol_ii:
            w, v = np.linalg.eigh(gap)
            vec = v[:, 0]
            witness = {"v": sym_to_json(np.outer(vec, vec))}
        results.append(ConditionResult(
            "ii", lam >= -tol_ii, f"min eig(b - I_m) = {lam:.6g}", max(0.0, -lam), witness))

    ray_ok = all(r.density.partial_moment(1, 0.0, 1.0) < _INF for r in p_set.mu.rays)
    pairs = [orthogonal_psd_pair(rng, p_set.dim) for _ in range(n_pairs)]
    comp_vals = [_compensator_value(p_set.mu, u, x) for u, x in pairs]
    max_comp = max((abs(v) for v in comp_vals), default=0.0)
    results.append(ConditionResult(
        "iii", ray_ok and all(math.isfinite(v) for v in comp_vals),
        f"kernel small-jump moments finite; max sampled compensator = {max_comp:.6g}",
        0.0 if ray_ok else _INF))

    worst = _INF
    worst_pair = None
    for (u, x), comp in zip(pairs, comp_vals):
        q = inner(p_set.B.apply_adjoint(u), x) - comp
        if q < worst:
            worst = q
            worst_pair = (u, x)
    tol_iv = tol if tol is not None else 1e-9 * (1.0 + symcone.operator_norm(p_set.B))
    witness = None
    if worst < -tol_iv and worst_pair is not None:
        witness = {"u": sym_to_json(worst_pair[0]), "x": sym_to_json(worst_pair[1])}
    results.append(ConditionResult(
        "iv", worst >= -tol_iv,
        f"min over {n_pairs} orthogonal pairs of <B*(u),x> - compensator = {worst:.6g}",
        max(0.0, -worst), witness))

    return AdmissibilityReport(p_set.dim, seed, n_pairs, tuple(results))


def build_admissible(dim, beta=None, gs=(), mu=None, m=None, b_extra=None):
    """Assemble a parameter set that is admissible by construction.

    B is the Lyapunov part plus congruences plus the exact small-jump
    compensator of mu, so the cone-compatibility inequality holds with
    nonnegative slack; b is b_extra plus the small-jump mean of m, so the
    drift inequality holds with slack min eig(b_extra).
    """
    m = m if m is not None else ScalarJumpMeasure.empty(dim)
    mu = mu if mu is not None else OperatorJumpMeasure.empty(dim)
    if b_extra is None:
        b_extra = np.zeros((dim, dim))
    b_extra = check_symmetric(b_extra)
    if min_eigenvalue(b_extra) < -1e-12 * (1.0 + frob_norm(b_extra)):
        raise MeasureError("b_extra must be PSD")

    terms = []
    if beta is not None:
        terms.append(LyapunovOperator(beta))
    if gs:
        terms.append(CongruenceSum(tuple(gs)))
    comp_pairs = mu.chi_compensator_pairs()
    if comp_pairs:
        terms.append(RankOneSum(comp_pairs))
    if not terms:
        op = ZeroOperator(dim)
    elif len(terms) == 1:
        op = terms[0]
    else:
        op = OperatorSum(tuple(terms))

    b = b_extra + m.chi_integral()
    return ParameterSet(dim, b, op, m, mu)


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------

def _density_to_json(den):
    if isinstance(den, PowerLawDensity):
        return {"type": "power", "c": den.c, "alpha": den.alpha,
                "rmin": den.rmin, "rmax": None if den.rmax == _INF else den.rmax}
    return {"type": "exponential", "c": den.c, "lam": den.lam,
            "rmin": den.rmin, "rmax": None if den.rmax == _INF else den.rmax}


def _density_from_json(obj):
    try:
        kind = obj["type"]
        rmin = float(obj.get("rmin", 0.0))
        rmax_raw = obj.get("rmax")
        rmax = _INF if rmax_raw is None else float(rmax_raw)
        if kind == "power":
            return PowerLawDensity(float(obj["c"]), float(obj["alpha"]), rmin, rmax)
        if kind == "exponential":
            return ExponentialDensity(float(obj["c"]), float(obj["lam"]), rmin, rmax)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterFileError(f"malformed density object {obj!r}: {exc}") from exc
    raise ParameterFileError(f"unknown density type {kind!r}")


def _plain_matrix(a):
    return [[float(x) for x in row] for row in np.asarray(a, dtype=float)]


def params_to_json(p_set):
    b_obj = {}
    terms = p_set.B.terms if isinstance(p_set.B, OperatorSum) else (p_set.B,)
    comp_pairs = p_set.mu.chi_compensator_pairs()
    for t in terms:
        if isinstance(t, LyapunovOperator):
            b_obj["lyapunov"] = _plain_matrix(t.beta)
        elif isinstance(t, CongruenceSum):
            b_obj["conjugations"] = [_plain_matrix(g) for g in t.gs]
        elif isinstance(t, RankOneSum) and _pairs_match(t.pairs, comp_pairs):
            b_obj["compensate_mu"] = True
        elif isinstance(t, ZeroOperator):
            pass
        else:
            dense = b_obj.get("_dense_acc")
            mat = t.to_dense()
            b_obj["_dense_acc"] = mat if dense is None else dense + mat
    if "_dense_acc" in b_obj:
        b_obj["dense"] = _plain_matrix(b_obj.pop("_dense_acc"))
    return {
        "dim": p_set.dim,
        "b": sym_to_json(p_set.b),
        "B": b_obj,
        "m": {
            "atoms": [{"xi": sym_to_json(a.xi), "w": a.weight} for a in p_set.m.atoms],
            "rays": [{"D": sym_to_json(r.direction), "density": _density_to_json(r.density)}
                     for r in p_set.m.rays],
        },
        "mu": {
            "atoms": [{"xi": sym_to_json(a.xi), "M": sym_to_json(a.weight)} for a in p_set.mu.atoms],
            "rays": [{"D": sym_to_json(r.direction), "M": sym_to_json(r.weight),
                      "density": _density_to_json(r.density)} for r in p_set.mu.rays],
        },
    }


def _pairs_match(p1, p2):
    if len(p1) != len(p2):
        return False
    return all(np.allclose(a1, a2) and np.allclose(c1, c2)
               for (a1, c1), (a2, c2) in zip(p1, p2))


def params_from_json(obj):
    try:
        dim = int(obj["dim"])
        b = sym_from_json(obj["b"])
        m_obj = obj.get("m", {})
        mu_obj = obj.get("mu", {})
        b_obj = obj.get("B", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterFileError(f"malformed parameter file: {exc}") from exc

    try:
        m = ScalarJumpMeasure(
            dim,
            tuple(ScalarAtom(sym_from_json(a["xi"]), float(a["w"])) for a in m_obj.get("atoms", [])),
            tuple(ScalarRay(sym_from_json(r["D"]), _density_from_json(r["density"]))
                  for r in m_obj.get("rays", [])),
        )
        mu = OperatorJumpMeasure(
            dim,
            tuple(OperatorAtom(sym_from_json(a["xi"]), sym_from_json(a["M"]))
                  for a in mu_obj.get("atoms", [])),
            tuple(OperatorRay(sym_from_json(r["D"]), sym_from_json(r["M"]),
                              _density_from_json(r["density"]))
                  for r in mu_obj.get("rays", [])),
        )
    except (KeyError, TypeError, ValueError, MeasureError, DimensionMismatchError) as exc:
        raise ParameterFileError(f"malformed jump measure: {exc}") from exc

    terms = []
    if b_obj.get("lyapunov") is not None:
        terms.append(LyapunovOperator(np.asarray(b_obj["lyapunov"], dtype=float)))
    if b_obj.get("conjugations"):
        terms.append(CongruenceSum(tuple(np.asarray(g, dtype=float) for g in b_obj["conjugations"])))
    if b_obj.get("compensate_mu"):
        comp_pairs = mu.chi_compensator_pairs()
        if comp_pairs:
            terms.append(RankOneSum(comp_pairs))
    if b_obj.get("dense") is not None:
        terms.append(DenseOperator(dim, np.asarray(b_obj["dense"], dtype=float)))
    if not terms:
        op = ZeroOperator(dim)
    elif len(terms) == 1:
        op = terms[0]
    else:
        op = OperatorSum(tuple(terms))

    try:
        return ParameterSet(dim, b, op, m, mu)
    except (DimensionMismatchError, ValueError) as exc:
        raise ParameterFileError(str(exc)) from exc


def load_params(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParameterFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterFileError(
            f"invalid JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return params_from_json(obj)


def save_params(p_set, path):
    with open(path, "w") as fh:
        json.dump(params_to_json(p_set), fh, indent=2)
        fh.write("\n")
