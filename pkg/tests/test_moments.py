import math

import numpy as np
import pytest

from affinehs import library
from affinehs.moments import (
    d2psi0,
    derivative_bundle,
    dpsi0,
    fit_growth_envelope,
    generator_exp,
    generator_linear,
    laplace,
    mean,
    second_moment,
)
from affinehs.params import (
    OperatorAtom,
    OperatorJumpMeasure,
    ParameterSet,
    ScalarJumpMeasure,
    build_admissible,
    integrate_kernel,
    integrate_scalar,
    norm_gt,
    truncate,
)
from affinehs.riccati import solve_riccati
from affinehs.symcone import (
    LyapunovOperator,
    frob_norm,
    inner,
    min_eigenvalue,
    random_psd,
)

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])
E22 = np.array([[0.0, 0.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def mc_truncated():
    s = library.get("mc2-01")
    return truncate(s.params, 4), s.x0, s.u


# ---------------------------------------------------------------------------
# derivative bundle
# ---------------------------------------------------------------------------

def test_bundle_empty_measures(empty_p2, rng):
    bundle = derivative_bundle(empty_p2)
    v = random_psd(rng, 2)
    np.testing.assert_allclose(bundle.basis.unvec(bundle.dR0_mat @ bundle.basis.vec(v)),
                               empty_p2.B.apply_adjoint(v), rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(bundle.dF0_mat, empty_p2.b)
    assert bundle.d2R0(v, v).max() == 0.0
    assert bundle.d2F0(v, v) == 0.0


def test_bundle_small_atom():
    # one mu atom inside the ball: no tail, but a second derivative
    xi = 0.5 * E11
    mu = OperatorJumpMeasure(2, (OperatorAtom(xi, E22),))
    p = ParameterSet(2, np.eye(2), LyapunovOperator(-np.eye(2)),
                     ScalarJumpMeasure.empty(2), mu)
    bundle = derivative_bundle(p)
    v = np.array([[2.0, 0.3], [0.3, 1.0]])
    w = np.array([[1.0, -0.2], [-0.2, 3.0]])
    np.testing.assert_allclose(bundle.basis.unvec(bundle.dR0_mat @ bundle.basis.vec(v)),
                               p.B.apply_adjoint(v), rtol=1e-13, atol=1e-14)
    expected = -inner(xi, v) * inner(xi, w) * E22 / inner(xi, xi)
    np.testing.assert_allclose(bundle.d2R0(v, w), expected, rtol=1e-13)
    np.testing.assert_allclose(bundle.d2R0(v, w), bundle.d2R0(w, v), rtol=0, atol=0)


def test_bundle_tail_matches_quadrature(bench, rng):
    for s in bench[12:17]:
        p = s.params
        bundle = derivative_bundle(p)
        for _ in range(3):
            v = random_psd(rng, p.dim)
            tail = integrate_kernel(p.mu, lambda x: inner(x, v), norm_gt(1.0))
            got = bundle.basis.unvec(bundle.dR0_mat @ bundle.basis.vec(v)) - p.B.apply_adjoint(v)
            np.testing.assert_allclose(got, tail, rtol=1e-7, atol=1e-10)
            # norm estimate: the tail is bounded by the total kernel mass
            assert frob_norm(got) <= frob_norm(p.mu.total_mass_matrix()) * frob_norm(v) * (1 + 1e-9)
            df_tail = integrate_scalar(p.m, lambda x: inner(x, v), norm_gt(1.0))
            assert inner(bundle.dF0_mat - p.b, v) == pytest.approx(df_tail, rel=1e-7, abs=1e-10)


def test_d2_closed_forms_match_quadrature(bench, rng):
    # bundle coefficients come from closed-form radial moments; the adaptive
    # quadrature against the raw measures is the independent route
    for s in (library.get("mc2-00"), library.get("cascade-00")):
        p = s.params
        bundle = derivative_bundle(p)
        for _ in range(3):
            v = random_psd(rng, p.dim)
            w = random_psd(rng, p.dim)
            ref_f = -integrate_scalar(p.m, lambda x: inner(x, v) * inner(x, w))
            assert bundle.d2F0(v, w) == pytest.approx(ref_f, rel=1e-7, abs=1e-10)
            ref_r = -integrate_kernel(p.mu, lambda x: inner(x, v) * inner(x, w))
            np.testing.assert_allclose(bundle.d2R0(v, w), ref_r, rtol=1e-7, atol=1e-10)


def test_d2_signs(bench, rng):
    for s in bench[:8]:
        bundle = derivative_bundle(s.params)
        for _ in range(5):
            v = random_psd(rng, s.params.dim)
            assert -bundle.d2F0(v, v) >= 0.0
            assert min_eigenvalue(-bundle.d2R0(v, v)) >= -1e-12


# ---------------------------------------------------------------------------
# variational solutions
# ---------------------------------------------------------------------------

def test_dpsi0_examples(mc_truncated, rng):
    p, _, _ = mc_truncated
    v = random_psd(rng, 2)
    np.testing.assert_allclose(dpsi0(p, 0.0, v), v, rtol=0, atol=1e-14)
    assert min_eigenvalue(dpsi0(p, 1.0, v)) >= -1e-9
    # pure Lyapunov: closed form
    import scipy.linalg
    beta = -0.3 * np.eye(2) + 0.2 * rng.standard_normal((2, 2))
    p_lin = build_admissible(2, beta=beta, b_extra=np.eye(2))
    e_mat = scipy.linalg.expm(0.8 * beta)
    np.testing.assert_allclose(dpsi0(p_lin, 0.8, v), e_mat.T @ v @ e_mat, rtol=1e-10, atol=1e-12)


def test_dpsi0_first_order_against_solver(mc_truncated):
    p, _, _ = mc_truncated
    v = 0.4 * np.eye(2) + 0.2 * np.ones((2, 2))
    ref = dpsi0(p, 1.0, v)
    errs = []
    for theta in (1e-2, 1e-3, 1e-4):
        sol = solve_riccati(p, theta * v, 1.0, t_eval=(0.0, 1.0))
        errs.append(frob_norm(sol.psi_final / theta - ref))
    slope = np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


def test_d2psi0_basics(mc_truncated, empty_p2, rng):
    p, _, _ = mc_truncated
    v = random_psd(rng, 2)
    w = random_psd(rng, 2)
    np.testing.assert_allclose(d2psi0(empty_p2, 1.0, v, w), np.zeros((2, 2)), atol=0.0)
    np.testing.assert_allclose(d2psi0(p, 0.0, v, w), np.zeros((2, 2)), atol=0.0)
    a = d2psi0(p, 0.7, v, w)
    b = d2psi0(p, 0.7, w, v)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_variational_ode_residual(mc_truncated, rng):
    # d/dt dpsi0 = dR0(dpsi0), checked by central differences
    p, _, _ = mc_truncated
    bundle = derivative_bundle(p)
    v = random_psd(rng, 2)
    t, h = 0.6, 1e-5
    lhs = (dpsi0(p, t + h, v, bundle=bundle) - dpsi0(p, t - h, v, bundle=bundle)) / (2 * h)
    mid = bundle.basis.vec(dpsi0(p, t, v, bundle=bundle))
    rhs = bundle.basis.unvec(bundle.dR0_mat @ mid)
    assert frob_norm(lhs - rhs) <= 1e-6 * max(1.0, frob_norm(rhs))


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def test_mean_examples(pure_drift_p1):
    # no drift operator, no jumps: <x,v> + t <b,v>
    x = np.array([[2.0]])
    v = np.array([[1.5]])
    assert mean(pure_drift_p1, x, 2.0, v) == pytest.approx(
        inner(x, v) + 2.0 * inner(pure_drift_p1.b, v), rel=1e-10)
    assert mean(pure_drift_p1, x, 0.0, v) == pytest.approx(inner(x, v))


def test_mean_scalar_closed_form():
    # d = 1, B = -1 (multiplication), b = 1, no jumps:
    # E[<X_t, v>] = v (1 - e^{-t}) + x v e^{-t}
    from affinehs.symcone import DenseOperator
    p = ParameterSet(1, np.array([[1.0]]), DenseOperator(1, np.array([[-1.0]])),
                     ScalarJumpMeasure.empty(1), OperatorJumpMeasure.empty(1))
    got = mean(p, np.array([[2.0]]), 1.0, np.array([[1.0]]))
    assert got == pytest.approx((1.0 - math.exp(-1.0)) + 2.0 * math.exp(-1.0), rel=1e-9)


def test_mean_invariant_under_truncation(bench):
    # the first moment does not depend on the truncation level
    s = library.get("cascade-00")
    v = np.eye(s.params.dim)
    m_full = mean(s.params, s.x0, 1.0, v)
    for k in (2, 8, 32):
        assert mean(truncate(s.params, k), s.x0, 1.0, v) == pytest.approx(m_full, rel=1e-9)


def test_second_moment_examples(empty_p2, rng):
    x = random_psd(rng, 2)
    v = random_psd(rng, 2)
    w = random_psd(rng, 2)
    # no jumps: deterministic, so second moment factorizes
    sm = second_moment(empty_p2, x, 1.0, v, w)
    assert sm == pytest.approx(mean(empty_p2, x, 1.0, v) * mean(empty_p2, x, 1.0, w), rel=1e-9)
    assert second_moment(empty_p2, x, 0.0, v, w) == pytest.approx(inner(x, v) * inner(x, w))


def test_variance_nonnegative(bench):
    for s in bench[:10]:
        p = s.params if s.params.is_finite_activity else truncate(s.params, 8)
        v = np.eye(p.dim)
        sm = second_moment(p, s.x0, 1.0, v)
        mv = mean(p, s.x0, 1.0, v)
        assert sm - mv * mv >= -1e-8


def test_laplace_examples(mc_truncated):
    p, x, u = mc_truncated
    assert laplace(p, x, 0.0, u) == pytest.approx(math.exp(-inner(x, u)), rel=1e-14)
    assert laplace(p, x, 1.0, np.zeros((2, 2))) == pytest.approx(1.0, abs=1e-12)
    val = laplace(p, x, 1.0, u)
    assert 0.0 < val <= 1.0
    # monotone nonincreasing along rays in u
    vals = [laplace(p, x, 1.0, theta * u) for theta in (0.5, 1.0, 2.0)]
    assert vals[0] >= vals[1] >= vals[2]


def test_laplace_uses_cascade_for_infinite_activity():
    s = library.get("cascade-02")
    val = laplace(s.params, s.x0, 0.5, s.u)
    assert 0.0 < val <= 1.0


def test_generator_exp(mc_truncated, empty_p2, rng):
    p, x, u = mc_truncated
    assert generator_exp(p, np.zeros((2, 2)), x) == 0.0
    # no jumps: (-<b,u> - <x, B*(u)>) e^{-<x,u>}
    u2 = random_psd(rng, 2)
    x2 = random_psd(rng, 2)
    expected = (-inner(empty_p2.b, u2) - inner(x2, empty_p2.B.apply_adjoint(u2))) \
        * math.exp(-inner(x2, u2))
    assert generator_exp(empty_p2, u2, x2) == pytest.approx(expected, rel=1e-12)
    # finite-difference slope of the Laplace transform at t = 0
    g = generator_exp(p, u, x)
    hs = (1e-2, 1e-3, 1e-4)
    errs = [abs((laplace(p, x, h, u) - math.exp(-inner(x, u))) / h - g) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


def test_generator_linear(mc_truncated, rng):
    p, x, _ = mc_truncated
    v = random_psd(rng, 2)
    # x = 0 and empty m: <b, v>
    p0 = build_admissible(2, beta=-np.eye(2), b_extra=np.eye(2))
    assert generator_linear(p0, v, np.zeros((2, 2))) == pytest.approx(inner(p0.b, v), rel=1e-12)
    # all jumps below norm 1: <b + B(x), v>
    mu = OperatorJumpMeasure(2, (OperatorAtom(0.5 * E11, E22),))
    p_small = build_admissible(2, beta=-np.eye(2), mu=mu, b_extra=np.eye(2))
    x2 = random_psd(rng, 2)
    assert generator_linear(p_small, v, x2) == pytest.approx(
        inner(p_small.b + p_small.B.apply(x2), v), rel=1e-11)
    # finite-difference consistency with the mean
    g = generator_linear(p, v, x)
    hs = (1e-2, 1e-3, 1e-4)
    errs = [abs((mean(p, x, h, v) - inner(x, v)) / h - g) for h in hs]
    assert errs[2] < errs[0]
    assert errs[2] <= 1e-3 * max(1.0, abs(g))


def test_fit_growth_envelope(mc_truncated):
    p, x, _ = mc_truncated
    m_const, omega = fit_growth_envelope(p, x, np.linspace(0.1, 1.0, 4))
    assert m_const >= 1.0
    assert math.isfinite(omega)
