"""Generalized Riccati system on the PSD cone and its truncation cascade.

The transform pair (phi, psi) solves phi' = F(psi), psi' = R(psi) with
phi(0) = 0, psi(0) = u, where F and R are built from a parameter set
(b, B, m, mu).  R is quasi-monotone on the cone, so the exact flow never
leaves it; the integrator enforces the same property numerically by
rejecting (or optionally eigenvalue-clipping) steps whose state dips below
the cone tolerance.  Removing jumps of norm <= 1/k gives globally Lipschitz
right-hand sides whose solutions decrease monotonically (in the Loewner
order) to the untruncated solution as k grows; solve_cascade runs that
schedule and reports the convergence residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CascadeError, RiccatiSolverError
from . import symcone
from .symcone import VecBasis, frob_norm, inner, min_eigenvalue
from .params import radial_quad, truncate

__all__ = [
    "RiccatiOptions",
    "RiccatiSolution",
    "CascadeDiagnostics",
    "eval_F",
    "eval_R",
    "eval_Fk",
    "eval_Rk",
    "growth_rate",
    "rk_lipschitz_bound",
    "solve_riccati",
    "solve_cascade",
    "solution_to_csv",
]

_INF = math.inf


@dataclass(frozen=True)
class RiccatiOptions:
    """Step-controller and cascade settings for the cone-aware integrator."""

    dt_init: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_t: float = 100.0
    cone_tol: float = 1e-9
    projection: str = "reject"  # "reject" halves the step; "clip" floors eigenvalues and logs
    k_schedule: tuple = (1, 2, 4, 8, 16, 32, 64)
    n_grid: int = 33
    max_steps: int = 200_000
    growth_fudge: float = 1e-6

    def __post_init__(self):
        if self.dt_init <= 0 or self.abs_tol <= 0 or self.rel_tol <= 0 or self.cone_tol <= 0:
            raise ValueError("tolerances and the initial step must be positive")
        if self.projection not in ("reject", "clip"):
            raise ValueError(f"unknown projection policy {self.projection!r}")
        if any(k2 <= k1 for k1, k2 in zip(self.k_schedule, self.k_schedule[1:])):
            raise ValueError("k schedule must be strictly increasing")


@dataclass(eq=False)
class RiccatiSolution:
    """Transform values on a time grid plus integrator diagnostics."""

    t: np.ndarray
    phi: np.ndarray
    psi: np.ndarray  # (N, d, d)
    min_eig: np.ndarray
    step_size: np.ndarray
    k: int | None  # truncation level; None means the untruncated (limit) field
    diagnostics: dict = field(default_factory=dict)

    @property
    def psi_final(self):
        return self.psi[-1]

    @property
    def phi_final(self):
        return float(self.phi[-1])


@dataclass(eq=False)
class CascadeDiagnostics:
    ks: tuple
    residuals: dict  # k -> sup_t ||psi_k - psi_prev||
    worst_monotonicity: float  # most negative min eig of (psi_prev - psi_k) seen
    final_residual: float

    def to_json(self):
        return {
            "ks": list(self.ks),
            "residuals": {str(k): v for k, v in self.residuals.items()},
            "worst_monotonicity": self.worst_monotonicity,
            "final_residual": self.final_residual,
        }


# ---------------------------------------------------------------------------
# F and R
# ---------------------------------------------------------------------------

def _bracket_scalar(m, u):
    """integral of (e^{-<xi,u>} - 1 + <chi(xi),u>) m(dxi)."""
    total = 0.0
    for a in m.atoms:
        s = inner(a.xi, u)
        total += a.weight * (math.expm1(-s) + (s if a.norm <= 1.0 else 0.0))
    for j, r in enumerate(m.rays):
        slope = inner(r.direction, u)
        if slope == 0.0:
            continue
        total += radial_quad(r.density, lambda rr: math.expm1(-slope * rr) + slope * rr,
                             0.0, 1.0, ray_index=j)
        total += radial_quad(r.density, lambda rr: math.expm1(-slope * rr),
                             1.0, _INF, ray_index=j)
    return total


def _bracket_kernel(mu, u):
    """integral of (e^{-<xi,u>} - 1 + <chi(xi),u>) mu(dxi)/||xi||^2, a matrix."""
    out = np.zeros((mu.dim, mu.dim))
    for a in mu.atoms:
        s = inner(a.xi, u)
        out += (math.expm1(-s) + (s if a.norm <= 1.0 else 0.0)) / a.norm ** 2 * a.weight
    for j, r in enumerate(mu.rays):
        slope = inner(r.direction, u)
        if slope == 0.0:
            continue
        val = radial_quad(r.density, lambda rr: math.expm1(-slope * rr) + slope * rr,
                          0.0, 1.0, ray_index=j)
        val += radial_quad(r.density, lambda rr: math.expm1(-slope * rr),
                           1.0, _INF, ray_index=j)
        out += val * r.weight
    return out


def eval_F(p_set, u, check_bound=True):
    """F(u) = <b,u> - integral of the compensated exponential bracket against m."""
    u = symcone.check_symmetric(u)
    val = inner(p_set.b, u) - _bracket_scalar(p_set.m, u)
    if check_bound:
        cap = (frob_norm(p_set.b) + p_set.m.second_moment()) * (1.0 + frob_norm(u) ** 2)
        if abs(val) > cap * (1.0 + 1e-9) + 1e-12:
            raise RiccatiSolverError(
                f"|F(u)| = {abs(val):.6g} exceeds its quadratic-growth cap {cap:.6g}")
    return float(val)


def eval_R(p_set, u, check_bound=True):
    """R(u) = B*(u) - integral of the bracket against mu(dxi)/||xi||^2."""
    u = symcone.check_symmetric(u)
    out = p_set.B.apply_adjoint(u) - _bracket_kernel(p_set.mu, u)
    if check_bound:
        cap = (symcone.operator_norm(p_set.B) + frob_norm(p_set.mu.total_mass_matrix())) \
            * (1.0 + frob_norm(u) ** 2)
        if frob_norm(out) > cap * (1.0 + 1e-9) + 1e-12:
            raise RiccatiSolverError(
                f"||R(u)|| = {frob_norm(out):.6g} exceeds its quadratic-growth cap {cap:.6g}")
    return symcone.symmetrize(out)


def eval_Fk(p_set, k, u, check_bound=True):
    return eval_F(truncate(p_set, k), u, check_bound=check_bound)


def eval_Rk(p_set, k, u, check_bound=True):
    return eval_R(truncate(p_set, k), u, check_bound=check_bound)


def growth_rate(p_set):
    """||B|| + 2 ||mu total mass||: the exponential growth rate of ||psi||."""
    return symcone.operator_norm(p_set.B) + 2.0 * frob_norm(p_set.mu.total_mass_matrix())


def rk_lipschitz_bound(p_set, k):
    """Lipschitz constant of the level-k field: ||B|| + 2 k ||mu total mass||."""
    return symcone.operator_norm(p_set.B) + 2.0 * k * frob_norm(p_set.mu.total_mass_matrix())


# ---------------------------------------------------------------------------
# vectorized right-hand side
# ---------------------------------------------------------------------------

class _Field:
    """Precompiled (F, R) evaluation in VecBasis coordinates."""

    def __init__(self, p_set):
        self.basis = VecBasis(p_set.dim)
        n = self.basis.n
        self.b_vec = self.basis.vec(p_set.b)
        self.bstar = p_set.B.adjoint().to_dense(self.basis)

        m = p_set.m
        self.m_xi = np.array([self.basis.vec(a.xi) for a in m.atoms]).reshape(len(m.atoms), n)
        self.m_w = np.array([a.weight for a in m.atoms])
        self.m_chi = np.array([a.norm <= 1.0 for a in m.atoms], dtype=float)
        self.m_rays = m.rays
        self.m_ray_dirs = np.array([self.basis.vec(r.direction) for r in m.rays]).reshape(len(m.rays), n)

        mu = p_set.mu
        self.mu_xi = np.array([self.basis.vec(a.xi) for a in mu.atoms]).reshape(len(mu.atoms), n)
        self.mu_out = np.array([self.basis.vec(a.weight) / a.norm ** 2 for a in mu.atoms]).reshape(len(mu.atoms), n)
        self.mu_chi = np.array([a.norm <= 1.0 for a in mu.atoms], dtype=float)
        self.mu_rays = mu.rays
        self.mu_ray_dirs = np.array([self.basis.vec(r.direction) for r in mu.rays]).reshape(len(mu.rays), n)
        self.mu_ray_out = np.array([self.basis.vec(r.weight) for r in mu.rays]).reshape(len(mu.rays), n)

    def rhs(self, psi_vec):
        """Returns (F(psi), vec R(psi))."""
        f_val = float(self.b_vec @ psi_vec)
        if self.m_xi.size:
            s = self.m_xi @ psi_vec
            f_val -= float(self.m_w @ (np.expm1(-s) + self.m_chi * s))
        for j, r in enumerate(self.m_rays):
            f_val -= self._ray_bracket(r.density, float(self.m_ray_dirs[j] @ psi_vec), j)

        r_vec = self.bstar @ psi_vec
        if self.mu_xi.size:
            s = self.mu_xi @ psi_vec
            r_vec = r_vec - (np.expm1(-s) + self.mu_chi * s) @ self.mu_out
        for j, r in enumerate(self.mu_rays):
            val = self._ray_bracket(r.density, float(self.mu_ray_dirs[j] @ psi_vec), j)
            if val != 0.0:
                r_vec = r_vec - val * self.mu_ray_out[j]
        return f_val, r_vec

    @staticmethod
    def _ray_bracket(density, slope, j):
        if slope == 0.0:
            return 0.0
        small = radial_quad(density, lambda rr: math.expm1(-slope * rr) + slope * rr,
                            0.0, 1.0, ray_index=j)
        big = radial_quad(density, lambda rr: math.expm1(-slope * rr), 1.0, _INF, ray_index=j)
        return small + big


# Dormand-Prince 4(5) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_ERR = _DP_B5 - _DP_B4


def solve_riccati(p_set, u, T, opts=None, k=None, t_eval=None):
    """Integrate the transform ODEs up to T with cone-aware step control.

    Parameters
    ----------
    p_set : ParameterSet
    u : initial condition for psi, PSD within the cone tolerance.
    T : horizon, t >= 0.
    opts : RiccatiOptions, defaults used when omitted.
    k : optional truncation level; jumps of norm <= 1/k are removed first.
    t_eval : output times; 0 and T are always included.  The controller
        lands on every output time exactly (no interpolation).

    Returns a RiccatiSolution whose grid values satisfy phi(0) = 0,
    psi(0) = u, cone positivity within opts.cone_tol, and the exponential
    growth bound of the field.
    """
    opts = opts or RiccatiOptions()
    if T < 0:
        raise ValueError("T must be >= 0")
    if T > opts.max_t:
        raise ValueError(f"T = {T} exceeds opts.max_t = {opts.max_t}")
    work = truncate(p_set, k) if k is not None else p_set
    u = symcone.check_symmetric(u)
    u_norm = frob_norm(u)
    if min_eigenvalue(u) < -opts.cone_tol * (1.0 + u_norm):
        raise ValueError("initial condition u must lie in the PSD cone")

    field = _Field(work)
    basis = field.basis
    rate = growth_rate(work)
    bound_slack = 1e-12 * (1.0 + u_norm)

    if t_eval is None:
        grid = np.linspace(0.0, T, opts.n_grid)
    else:
        grid = np.asarray(t_eval, dtype=float)
        grid = np.unique(np.concatenate([[0.0], grid[(grid >= 0) & (grid <= T)], [T]]))

    n = basis.n
    y = np.zeros(n + 1)
    y[1:] = basis.vec(u)

    out_phi = np.empty(len(grid))
    out_psi = np.empty((len(grid), p_set.dim, p_set.dim))
    out_me = np.empty(len(grid))
    out_h = np.empty(len(grid))

    def record(idx, yv, h_last):
        out_phi[idx] = yv[0]
        psi = symcone.symmetrize(basis.unvec(yv[1:]))
        out_psi[idx] = psi
        out_me[idx] = min_eigenvalue(psi)
        out_h[idx] = h_last

    record(0, y, 0.0)
    next_out = 1

    diag = {"n_steps": 0, "n_rejected_error": 0, "n_rejected_cone": 0,
            "max_cone_violation": 0.0, "clip_total": 0.0}

    if T == 0.0:
        return RiccatiSolution(grid, out_phi[:1], out_psi[:1], out_me[:1], out_h[:1],
                               k, diag)

    def f(yv):
        fv, rv = field.rhs(yv[1:])
        out = np.empty_like(yv)
        out[0] = fv
        out[1:] = rv
        return out

    t = 0.0
    h_ctrl = min(opts.dt_init, T)
    k1 = f(y)
    ks = np.empty((7, n + 1))
    h_floor = 1e-14 * T

    while next_out < len(grid):
        target = grid[next_out]
        h = min(h_ctrl, target - t)
        if h < h_floor:
            raise RiccatiSolverError(
                f"stiffness/cone breach: step size underflow at t = {t:.6g} (h = {h:.3e})")
        ks[0] = k1
        for i in range(1, 7):
            yi = y + h * (_DP_A[i] @ ks[:i])
            ks[i] = f(yi)
        y5 = y + h * (_DP_B5 @ ks)
        err = h * (_DP_ERR @ ks)
        scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))

        if err_norm > 1.0:
            diag["n_rejected_error"] += 1
            h_ctrl = h * max(0.2, 0.9 * err_norm ** -0.2)
            continue

        psi_new = symcone.symmetrize(basis.unvec(y5[1:]))
        me = min_eigenvalue(psi_new)
        clipped = False
        if me < -opts.cone_tol:
            if opts.projection == "reject":
                diag["n_rejected_cone"] += 1
                h_ctrl = 0.5 * h
                continue
            w, v = np.linalg.eigh(psi_new)
            clip = float(-w[w < 0.0].sum())
            diag["clip_total"] += clip
            w = np.maximum(w, 0.0)
            psi_new = symcone.symmetrize((v * w) @ v.T)
            y5 = np.concatenate([[y5[0]], basis.vec(psi_new)])
            clipped = True
        diag["max_cone_violation"] = max(diag["max_cone_violation"], max(0.0, -me))

        t_new = t + h
        cap = math.exp(rate * t_new) * u_norm * (1.0 + opts.growth_fudge) + bound_slack
        if frob_norm(psi_new) > cap:
            raise RiccatiSolverError(
                f"growth bound breached at t = {t_new:.6g}: ||psi|| = {frob_norm(psi_new):.6g} > {cap:.6g}")

        t = t_new
        y = y5
        k1 = f(y) if clipped else ks[6].copy()
        diag["n_steps"] += 1
        if diag["n_steps"] > opts.max_steps:
            raise RiccatiSolverError(f"exceeded max_steps = {opts.max_steps}")
        if abs(t - target) <= 1e-12 * max(1.0, T):
            t = target
            record(next_out, y, h)
            next_out += 1
        h_ctrl = h * min(5.0, max(0.2, 0.9 * (err_norm + 1e-16) ** -0.2))

    return RiccatiSolution(grid, out_phi, out_psi, out_me, out_h, k, diag)


def solve_cascade(p_set, u, T, opts=None, t_eval=None):
    """Solve the truncation levels of opts.k_schedule and check monotone decrease.

    Returns the largest-k solution together with per-level residuals
    sup_t ||psi_k - psi_prev||; a Loewner-monotonicity violation beyond the
    cone tolerance raises CascadeError (it flags an integrator or measure
    bug, not a modelling choice).
    """
    opts = opts or RiccatiOptions()
    if not opts.k_schedule:
        raise ValueError("k schedule must be nonempty")
    grid = t_eval if t_eval is not None else np.linspace(0.0, T, opts.n_grid)

    residuals = {}
    worst = 0.0
    prev = None
    sol = None
    for k in opts.k_schedule:
        sol = solve_riccati(p_set, u, T, opts=opts, k=k, t_eval=grid)
        if prev is not None:
            gaps = prev.psi - sol.psi
            worst_here = min(min_eigenvalue(g) for g in gaps)
            worst = min(worst, worst_here)
            if worst_here < -opts.cone_tol:
                raise CascadeError(
                    f"cascade monotonicity violated between k={prev.k} and k={k}: "
                    f"min eig(psi_{prev.k} - psi_{k}) = {worst_here:.3e}")
            residuals[k] = float(max(frob_norm(g) for g in gaps))
        prev = sol

    final_res = residuals[opts.k_schedule[-1]] if len(opts.k_schedule) > 1 else 0.0
    diag = CascadeDiagnostics(tuple(opts.k_schedule), residuals, worst, final_res)
    sol.diagnostics["cascade_residual"] = final_res
    return sol, diag


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

def solution_to_csv(sol, fh):
    """Write t, phi, the psi upper triangle, min_eig and step_size columns."""
    d = sol.psi.shape[1]
    names = [f"psi_{i + 1}{j + 1}" for i in range(d) for j in range(i, d)]
    fh.write(",".join(["t", "phi"] + names + ["min_eig", "step_size"]) + "\n")
    iu = [(i, j) for i in range(d) for j in range(i, d)]
    for idx in range(len(sol.t)):
        row = [sol.t[idx], sol.phi[idx]]
        row += [sol.psi[idx][i, j] for i, j in iu]
        row += [sol.min_eig[idx], sol.step_size[idx]]
        fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
