import io
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from affinehs import library
from affinehs.params import (
    OperatorAtom,
    OperatorJumpMeasure,
    OperatorRay,
    PowerLawDensity,
    ScalarAtom,
    ScalarJumpMeasure,
    build_admissible,
    orthogonal_psd_pair,
    truncate,
)
from affinehs.riccati import (
    RiccatiOptions,
    eval_F,
    eval_Fk,
    eval_R,
    eval_Rk,
    growth_rate,
    rk_lipschitz_bound,
    solution_to_csv,
    solve_cascade,
    solve_riccati,
)
from affinehs.symcone import frob_norm, inner, min_eigenvalue, random_psd

from oracle import rk4_scalar_batch


def unit_dir(d=2):
    a = np.eye(d) + 0.2 * np.ones((d, d))
    return a / frob_norm(a)


# ---------------------------------------------------------------------------
# F and R evaluation
# ---------------------------------------------------------------------------

def test_eval_f_examples(atom_p1, bench):
    for s in bench[:6]:
        assert eval_F(s.params, np.zeros((s.params.dim,) * 2)) == 0.0
    # empty m: F(u) = <b, u>
    p = build_admissible(2, beta=-np.eye(2), b_extra=np.eye(2))
    u = 0.5 * np.eye(2)
    assert eval_F(p, u) == pytest.approx(inner(p.b, u), rel=1e-14)
    # one atom at xi = 2 with weight 1, u = 0.5, b = 0
    from affinehs.params import ParameterSet
    from affinehs.symcone import ZeroOperator
    m = ScalarJumpMeasure(1, (ScalarAtom(np.array([[2.0]]), 1.0),))
    p1 = ParameterSet(1, np.zeros((1, 1)), ZeroOperator(1), m, OperatorJumpMeasure.empty(1))
    assert eval_F(p1, np.array([[0.5]])) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)


def test_eval_r_examples(atom_p1):
    p = atom_p1
    np.testing.assert_allclose(eval_R(p, np.zeros((1, 1))), np.zeros((1, 1)), atol=0.0)
    # empty mu: R = B*
    p2 = build_admissible(2, beta=-np.eye(2), b_extra=np.eye(2))
    u = random_psd(np.random.default_rng(0), 2)
    np.testing.assert_allclose(eval_R(p2, u), p2.B.apply_adjoint(u), rtol=1e-14)
    # one mu atom at xi = 2 with M = 1, B = 0, u = 0.5: (1 - e^{-1})/4
    from affinehs.params import ParameterSet
    from affinehs.symcone import ZeroOperator
    mu = OperatorJumpMeasure(1, (OperatorAtom(np.array([[2.0]]), np.array([[1.0]])),))
    p3 = ParameterSet(1, np.zeros((1, 1)), ZeroOperator(1), ScalarJumpMeasure.empty(1), mu)
    got = eval_R(p3, np.array([[0.5]]))
    assert got[0, 0] == pytest.approx((1.0 - math.exp(-1.0)) / 4.0, rel=1e-14)


def test_eval_quadratic_growth_bounds(bench, rng):
    for s in bench[:8]:
        p = s.params
        f_cap = frob_norm(p.b) + p.m.second_moment()
        r_cap = frob_norm(p.B.to_dense()) + frob_norm(p.mu.total_mass_matrix())
        for _ in range(5):
            u = random_psd(rng, p.dim, scale=2.0)
            assert abs(eval_F(p, u)) <= f_cap * (1.0 + frob_norm(u) ** 2) * (1 + 1e-9)
            assert frob_norm(eval_R(p, u)) <= r_cap * (1.0 + frob_norm(u) ** 2) * (1 + 1e-9)


def test_eval_k_truncations(atom_p1, rng):
    p = atom_p1  # all atoms at norm 2 > 1/k for any k: truncation changes nothing
    u = np.array([[0.8]])
    assert eval_Fk(p, 3, u) == eval_F(p, u)
    np.testing.assert_array_equal(eval_Rk(p, 3, u), eval_R(p, u))
    assert eval_Fk(p, 5, np.zeros((1, 1))) == 0.0

    # Lipschitz diagnostic on the truncated field
    k = 4
    bound = rk_lipschitz_bound(p, k)
    for _ in range(20):
        u1 = random_psd(rng, 1, scale=2.0)
        u2 = random_psd(rng, 1, scale=2.0)
        gap = frob_norm(eval_Rk(p, k, u1) - eval_Rk(p, k, u2))
        assert gap <= bound * frob_norm(u1 - u2) * (1 + 1e-9) + 1e-12


def test_rk_to_r_tail_bound(rng):
    # || R_k(u) - R(u) || <= || mu({||xi|| <= 1/k}) || * ||u||^2 for ray measures
    weight = np.array([[0.5, 0.1], [0.1, 0.4]])
    ray = OperatorRay(unit_dir(), weight, PowerLawDensity(0.7, 0.5, 0.0, 1.0))
    mu = OperatorJumpMeasure(2, (), (ray,))
    p = build_admissible(2, beta=-np.eye(2), mu=mu, b_extra=np.eye(2))
    for k in (2, 4, 16):
        tail = p.mu.restricted(0.0, 1.0 / k).total_mass_matrix()
        for _ in range(5):
            u = random_psd(rng, 2)
            gap = frob_norm(eval_Rk(p, k, u) - eval_R(p, u))
            assert gap <= frob_norm(tail) * frob_norm(u) ** 2 * (1 + 1e-6) + 1e-12


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

def test_solve_zero_initial(atom_p1):
    sol = solve_riccati(atom_p1, np.zeros((1, 1)), 2.0)
    assert np.all(sol.phi == 0.0)
    assert np.all(sol.psi == 0.0)


def test_solve_linear_closed_form(rng):
    d = 2
    beta = -0.4 * np.eye(d) + 0.3 * rng.standard_normal((d, d))
    p = build_admissible(d, beta=beta, b_extra=np.eye(d))
    u = random_psd(rng, d)
    grid = np.linspace(0.0, 2.0, 9)
    sol = solve_riccati(p, u, 2.0, t_eval=grid)
    for i, t in enumerate(grid):
        e_mat = scipy.linalg.expm(t * beta)
        np.testing.assert_allclose(sol.psi[i], e_mat.T @ u @ e_mat,
                                   atol=1e-8 * frob_norm(u))
    # phi(t) = integral of <b, psi(s)> ds
    ref = scipy.integrate.quad(
        lambda s: inner(p.b, scipy.linalg.expm(s * beta).T @ u @ scipy.linalg.expm(s * beta)),
        0.0, 2.0, epsabs=1e-12)[0]
    assert sol.phi_final == pytest.approx(ref, abs=1e-8)


def test_solve_matches_rk4_oracle_one_atom(atom_p1):
    u0 = np.array([[0.7]])
    phi_o, psi_o = rk4_scalar_batch([atom_p1], np.array([0.7]), 1.0, 1e-5)
    sol = solve_riccati(atom_p1, u0, 1.0, t_eval=(0.0, 1.0))
    assert sol.psi_final[0, 0] == pytest.approx(psi_o[0], rel=1e-7)
    assert sol.phi_final == pytest.approx(phi_o[0], rel=1e-7)


def test_solution_invariants_on_library(bench, rng):
    for s in bench[:12]:
        p = s.params
        u = s.u
        sol = solve_riccati(p, u, 1.0, t_eval=(0.0, 0.5, 1.0))
        scale = 1.0 + frob_norm(u)
        assert sol.phi[0] == 0.0
        np.testing.assert_array_equal(sol.psi[0], u)
        assert np.all(sol.min_eig >= -1e-9 * scale)
        rate = growth_rate(p)
        for t, psi in zip(sol.t, sol.psi):
            assert frob_norm(psi) <= math.exp(rate * t) * frob_norm(u) * (1 + 1e-6) + 1e-12
        # phi is nonneg and nondecreasing (F >= 0 on the cone for admissible sets)
        assert np.all(sol.phi >= -1e-12)
        assert np.all(np.diff(sol.phi) >= -1e-10)


def test_order_preservation(bench, rng):
    for s in bench[12:16]:
        p = s.params
        u = s.u
        v = u + random_psd(rng, p.dim, scale=0.3)
        grid = (0.0, 0.3, 0.7, 1.0)
        su = solve_riccati(p, u, 1.0, t_eval=grid)
        sv = solve_riccati(p, v, 1.0, t_eval=grid)
        for a, b in zip(su.psi, sv.psi):
            assert min_eigenvalue(b - a) >= -1e-8


def test_truncated_solution_lipschitz_in_initial_condition(rng):
    # || psi_k(t,u) - psi_k(t,v) || <= exp((||B|| + 2k||mu||) t) ||u - v||
    s = library.get("cascade-00")
    p = s.params
    grid = (0.0, 0.5, 1.0)
    for k in (2, 8):
        cap_rate = rk_lipschitz_bound(p, k)
        for _ in range(3):
            u = random_psd(rng, p.dim)
            v = random_psd(rng, p.dim)
            su = solve_riccati(p, u, 1.0, k=k, t_eval=grid)
            sv = solve_riccati(p, v, 1.0, k=k, t_eval=grid)
            for t, a, b in zip(grid, su.psi, sv.psi):
                cap = math.exp(cap_rate * t) * frob_norm(u - v) * (1 + 1e-6) + 1e-12
                assert frob_norm(a - b) <= cap


def test_flow_property(atom_p1):
    u = np.array([[0.9]])
    s, t = 0.4, 0.6
    full = solve_riccati(atom_p1, u, s + t, t_eval=(0.0, s + t))
    first = solve_riccati(atom_p1, u, s, t_eval=(0.0, s))
    second = solve_riccati(atom_p1, first.psi_final, t, t_eval=(0.0, t))
    gap = frob_norm(full.psi_final - second.psi_final)
    assert gap <= 1e-7 * (1.0 + frob_norm(u))


def test_quasi_monotonicity_spot_check(bench, rng):
    for s in bench[:6]:
        p = s.params
        for _ in range(10):
            delta, w = orthogonal_psd_pair(rng, p.dim)
            u = random_psd(rng, p.dim)
            v = u + delta
            gap = inner(eval_R(p, v) - eval_R(p, u), w)
            assert gap >= -1e-9


def test_solver_rejects_non_cone_start(atom_p1):
    with pytest.raises(ValueError):
        solve_riccati(atom_p1, np.array([[-1.0]]), 1.0)


def test_growth_bound_tight_linear_case():
    # pure expansion saturates the growth envelope exactly; the guard's
    # (1 + 1e-6) fudge must still admit it
    from affinehs.params import ParameterSet
    from affinehs.symcone import DenseOperator
    p = ParameterSet(1, np.zeros((1, 1)), DenseOperator(1, np.array([[3.0]])),
                     ScalarJumpMeasure.empty(1), OperatorJumpMeasure.empty(1))
    sol = solve_riccati(p, np.array([[1.0]]), 1.0)
    assert sol.psi_final[0, 0] == pytest.approx(math.exp(3.0), rel=1e-8)


def test_clip_policy_logs(atom_p1):
    opts = RiccatiOptions(projection="clip")
    sol = solve_riccati(atom_p1, np.array([[0.5]]), 1.0, opts=opts)
    assert sol.diagnostics["clip_total"] >= 0.0


def test_options_validation():
    with pytest.raises(ValueError):
        RiccatiOptions(projection="banana")
    with pytest.raises(ValueError):
        RiccatiOptions(k_schedule=(4, 2))
    with pytest.raises(ValueError):
        RiccatiOptions(abs_tol=-1.0)


# ---------------------------------------------------------------------------
# cascade
# ---------------------------------------------------------------------------

def test_cascade_trivial_when_mass_above_one(atom_p1):
    opts = RiccatiOptions(k_schedule=(1, 2, 4))
    sol, diag = solve_cascade(atom_p1, np.array([[0.5]]), 1.0, opts=opts)
    assert all(v == 0.0 for v in diag.residuals.values())
    sol0, diag0 = solve_cascade(atom_p1, np.zeros((1, 1)), 1.0, opts=opts)
    assert np.all(sol0.psi == 0.0)


def test_cascade_converges_to_direct_limit_solve():
    # the deepest level must sit within its own residual scale of the
    # directly integrated limit equation (singular ray handled by quadrature)
    s = library.get("cascade-00")
    grid = (0.0, 0.5, 1.0)
    direct = solve_riccati(s.params, s.u, 1.0, t_eval=grid)
    opts = RiccatiOptions(k_schedule=(1, 2, 4, 8, 16, 32, 64))
    deep, diag = solve_cascade(s.params, s.u, 1.0, opts=opts, t_eval=grid)
    gap = max(frob_norm(a - b) for a, b in zip(direct.psi, deep.psi))
    assert gap <= 2.0 * diag.final_residual + 1e-9
    # and every level bounds the limit from above in the cone order
    assert all(min_eigenvalue(a - b) >= -1e-8 for a, b in zip(deep.psi, direct.psi))


def test_cascade_residuals_decrease():
    s = library.get("cascade-01")
    sol, diag = solve_cascade(s.params, s.u, 1.0)
    ks = sorted(diag.residuals)
    vals = [diag.residuals[k] for k in ks]
    assert vals[-1] < vals[0]
    assert diag.worst_monotonicity >= -1e-8
    assert sol.k == max(ks)
    assert "cascade_residual" in sol.diagnostics
    payload = diag.to_json()
    assert set(payload) == {"ks", "residuals", "worst_monotonicity", "final_residual"}


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

def test_solution_csv_layout(atom_p1):
    sol = solve_riccati(atom_p1, np.array([[0.5]]), 1.0, t_eval=np.linspace(0, 1, 5))
    buf = io.StringIO()
    solution_to_csv(sol, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,phi,psi_11,min_eig,step_size"
    assert len(lines) == 6
    row0 = [float(x) for x in lines[1].split(",")]
    assert row0[0] == 0.0 and row0[1] == 0.0 and row0[2] == 0.5

    s2 = library.get("mc2-00")
    sol2 = solve_riccati(truncate(s2.params, 4), s2.u, 0.5, t_eval=(0.0, 0.5))
    buf2 = io.StringIO()
    solution_to_csv(sol2, buf2)
    header = buf2.getvalue().split("\n")[0].split(",")
    assert header == ["t", "phi", "psi_11", "psi_12", "psi_22", "min_eig", "step_size"]
