"""Monte Carlo simulation of the finite-activity jump processes.

Between jumps the state follows the linear flow driven by the compensated
drift pair (btilde, Btilde); jumps arrive with the affine intensity
lambda(x) = m(total) + <kernel mass, x> and are drawn from the normalized
state-dependent kernel.  The jump clock is realized by thinning: on short
lookahead windows a dominating rate is taken as the grid maximum of the
intensity along the flow times a safety factor, proposals are accepted with
probability lambda/lambda_bar, and a proposal that lands above the bound
restarts the window with the safety factor doubled.

Estimators draw one counter-based RNG stream per path index, so results
are bitwise identical for a fixed (seed, n_paths) regardless of how many
worker processes are used.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .exceptions import SimulationError
from . import symcone
from .symcone import ExpPropagator, RankOneSum, VecBasis, frob_norm, inner, min_eigenvalue

__all__ = [
    "DriftData",
    "drift_data",
    "FlowPropagator",
    "flow",
    "jump_intensity",
    "RadialSampler",
    "sample_jump",
    "SimPath",
    "PathSimulator",
    "simulate_path",
    "MCEstimate",
    "terminal_statistics",
    "mc_summary",
    "mc_laplace",
    "mc_mean",
    "mc_second_moment",
]

_INF = math.inf
_U64 = np.uint64
_MASK64 = (1 << 64) - 1

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# compensated drift and the deterministic flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DriftData:
    """Drift of the piecewise-deterministic motion: x' = btilde + Btilde(x)."""

    dim: int
    btilde: np.ndarray
    Btilde: symcone.SuperOperator


def drift_data(p_set):
    """Compensate the small jumps into the drift.

    btilde = b - integral_{||xi||<=1} xi m(dxi) stays PSD for admissible
    sets; Btilde subtracts the small-jump kernel compensator from B.
    """
    btilde = p_set.b - p_set.m.chi_integral()
    lam = min_eigenvalue(btilde)
    if lam < -1e-9 * (1.0 + frob_norm(btilde)):
        raise SimulationError(
            f"compensated drift btilde is not PSD (min eig = {lam:.3e}); parameter set inadmissible")
    comp = p_set.mu.chi_compensator_pairs()
    if comp:
        op = p_set.B + RankOneSum(tuple((mk, -kk) for mk, kk in comp))
    else:
        op = p_set.B
    return DriftData(p_set.dim, symcone.symmetrize(btilde), op)


class FlowPropagator:
    """Evaluates the closed-form flow e^{t Btilde} x + int_0^t e^{(t-s)Btilde} btilde ds.

    The drift integral uses the resolvent identity through the eigenvalues
    of Btilde when the eigenbasis is well conditioned, and a 16-panel
    Gauss-Legendre rule otherwise.  When the augmented block matrix
    [[Btilde, btilde], [0, 0]] is diagonalizable the whole affine flow is a
    single eigen-propagated matvec, which is what the simulation loop hits.
    """

    def __init__(self, drift):
        self.dim = drift.dim
        self.basis = VecBasis(drift.dim)
        self.mat = drift.Btilde.to_dense(self.basis)
        self.b_vec = self.basis.vec(drift.btilde)
        self.prop = ExpPropagator(self.mat)
        n = self.basis.n
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = self.mat
        aug[:n, n] = self.b_vec
        self._aug = ExpPropagator(aug)
        self._n = n

    def drift_vec(self, t):
        """integral_0^t e^{s Btilde} btilde ds in coordinates."""
        if t == 0.0:
            return np.zeros_like(self.b_vec)
        if self.prop.use_eig:
            return self.prop.phi1_dot(t, self.b_vec)
        half = 0.5 * t
        nodes = half * (_GL16_X + 1.0)
        out = np.zeros_like(self.b_vec)
        for s, w in zip(nodes, _GL16_W):
            out += w * self.prop.dot(s, self.b_vec)
        return half * out

    def flow_vec(self, x_vec, t):
        if self._aug.use_eig:
            aug = np.empty(self._n + 1)
            aug[: self._n] = x_vec
            aug[self._n] = 1.0
            return self._aug.dot(t, aug)[: self._n]
        return self.prop.dot(t, x_vec) + self.drift_vec(t)

    def flow(self, x, t):
        out = self.basis.unvec(self.flow_vec(self.basis.vec(np.asarray(x, dtype=float)), t))
        return symcone.symmetrize(out)


def flow(drift, x, t):
    """Deterministic motion from x over time t >= 0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return FlowPropagator(drift).flow(x, t)


# ---------------------------------------------------------------------------
# jump intensity and jump sampling
# ---------------------------------------------------------------------------

def jump_intensity(p_set, x):
    """Total jump rate lambda(x) = m(total) + <kernel mass, x>; affine in x."""
    m_tot = p_set.m.total_mass()
    kappa = p_set.mu.kernel_total_matrix()
    if not math.isfinite(m_tot) or kappa is None:
        raise SimulationError("jump activity is infinite: truncate first")
    return float(m_tot + inner(kappa, x))


class RadialSampler:
    """Inverse-CDF sampling of a radial density, tabulated and PCHIP-inverted."""

    TABLE = 4096

    def __init__(self, density):
        total = density.partial_moment(0)
        if not math.isfinite(total):
            raise SimulationError("cannot sample an infinite-activity radial density")
        self.density = density
        self.total = float(total)
        lo = density.rmin
        hi = density.rmax
        if hi == _INF:
            hi = max(lo + 1.0, 2.0 * lo)
            while total - density.partial_moment(0, lo, hi) > 1e-12 * total:
                hi *= 2.0
        if lo > 0.0:
            grid = np.geomspace(lo, hi, self.TABLE)
        else:
            grid = np.linspace(lo, hi, self.TABLE)
        grid[0], grid[-1] = lo, hi
        cdf = np.asarray(density.cdf_mass(grid), dtype=float)
        keep = np.concatenate([[True], np.diff(cdf) > 0.0])
        self._cdf_hi = cdf[keep][-1]
        self._inv = PchipInterpolator(cdf[keep], grid[keep])

    def draw(self, rng):
        q = min(rng.random() * self.total, self._cdf_hi)
        return float(self._inv(q))


class _JumpTable:
    """Component masses and samplers for the state-dependent kernel."""

    def __init__(self, p_set, basis):
        self.basis = basis
        const, rows, payload = [], [], []
        for a in p_set.m.atoms:
            const.append(a.weight)
            rows.append(np.zeros(basis.n))
            payload.append(("atom", a.xi, None))
        for r in p_set.m.rays:
            mass = r.density.partial_moment(0)
            if not math.isfinite(mass):
                raise SimulationError("jump activity is infinite: truncate first")
            const.append(mass)
            rows.append(np.zeros(basis.n))
            payload.append(("ray", r.direction, RadialSampler(r.density)))
        for a in p_set.mu.atoms:
            const.append(0.0)
            rows.append(basis.vec(a.weight) / a.norm ** 2)
            payload.append(("atom", a.xi, None))
        for r in p_set.mu.rays:
            mass = r.density.partial_moment(0)
            if not math.isfinite(mass):
                raise SimulationError("jump activity is infinite: truncate first")
            const.append(0.0)
            rows.append(mass * basis.vec(r.weight))
            payload.append(("ray", r.direction, RadialSampler(r.density)))
        self.const = np.asarray(const)
        self.rows = np.asarray(rows).reshape(len(const), basis.n)
        self.payload = payload
        self.m_total = float(sum(c for c in const))
        self.kappa_vec = self.rows.sum(axis=0)

    @property
    def is_empty(self):
        return not self.payload

    def intensity(self, x_vec):
        return self.m_total + float(self.kappa_vec @ x_vec)

    def draw(self, x_vec, rng):
        masses = self.const + self.rows @ x_vec
        total = float(masses.sum())
        if total <= 0.0:
            raise SimulationError("jump drawn at zero intensity")
        u = rng.random() * total
        acc = 0.0
        idx = len(masses) - 1
        for i, mass in enumerate(masses):
            acc += mass
            if u <= acc:
                idx = i
                break
        kind, direction, sampler = self.payload[idx]
        if kind == "atom":
            return direction
        return sampler.draw(rng) * direction


def sample_jump(p_set, x, rng):
    """One draw from the normalized jump kernel at state x."""
    basis = VecBasis(p_set.dim)
    table = _JumpTable(p_set, basis)
    x_vec = basis.vec(np.asarray(x, dtype=float))
    if table.intensity(x_vec) <= 0.0:
        raise SimulationError("jump intensity vanishes at this state")
    return table.draw(x_vec, rng)


# ---------------------------------------------------------------------------
# path simulation (thinning)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SimPath:
    times: np.ndarray        # jump times
    sizes: np.ndarray        # (J, d, d) jump sizes
    states: np.ndarray       # (J, d, d) post-jump states
    terminal: np.ndarray     # X_T
    stream_id: object
    n_proposals: int
    n_accepted: int
    n_breaches: int
    min_state_eig: float
    rng_states: tuple | None = None

    @property
    def n_jumps(self):
        return len(self.times)

    @property
    def acceptance_ratio(self):
        return self.n_accepted / self.n_proposals if self.n_proposals else 1.0


_WINDOW_GRID = 16
_BASE_SAFETY = 1.5
_MAX_ESCALATIONS = 6


class PathSimulator:
    """Reusable per-parameter-set machinery for thinning simulation."""

    def __init__(self, p_set):
        if not p_set.is_finite_activity:
            raise SimulationError("jump activity is infinite: truncate first")
        self.p_set = p_set
        self.basis = VecBasis(p_set.dim)
        self.drift = drift_data(p_set)
        self.flowprop = FlowPropagator(self.drift)
        self.table = _JumpTable(p_set, self.basis)
        self._window_cache = {}

    def _window_data(self, delta):
        data = self._window_cache.get(delta)
        if data is None:
            grid = np.linspace(0.0, delta, _WINDOW_GRID)
            rows = np.empty((_WINDOW_GRID, self.basis.n))
            consts = np.empty(_WINDOW_GRID)
            for j, s in enumerate(grid):
                e_mat = self.flowprop.prop.mat_exp(s)
                rows[j] = e_mat.T @ self.table.kappa_vec
                consts[j] = self.table.kappa_vec @ self.flowprop.drift_vec(s) + self.table.m_total
            data = (rows, consts)
            self._window_cache[delta] = data
        return data

    def _loop(self, x_vec, T, rng, delta, events=None, snaps=None):
        """Thinning core; returns (terminal vec, n_proposals, n_accepted, n_breaches)."""
        rows, consts = self._window_data(delta)
        flow_vec = self.flowprop.flow_vec
        kappa = self.table.kappa_vec
        m_total = self.table.m_total
        n_prop = n_acc = n_breach = 0
        t = 0.0
        while t < T:
            wend = min(t + delta, T)
            anchor_t = t
            anchor_x = x_vec
            safety = _BASE_SAFETY
            lam_bar = safety * float((rows @ anchor_x + consts).max())
            if lam_bar <= 0.0:
                x_vec = flow_vec(anchor_x, wend - anchor_t)
                t = wend
                continue
            while True:
                gap = rng.exponential(1.0 / lam_bar)
                if t + gap >= wend:
                    x_vec = flow_vec(anchor_x, wend - anchor_t)
                    t = wend
                    break
                t = t + gap
                x_vec = flow_vec(anchor_x, t - anchor_t)
                lam = m_total + float(kappa @ x_vec)
                if lam > lam_bar:
                    n_breach += 1
                    safety *= 2.0
                    if safety > _BASE_SAFETY * 2 ** _MAX_ESCALATIONS:
                        raise SimulationError(
                            f"intensity bound failed after {_MAX_ESCALATIONS} escalations at t = {t:.6g}")
                    anchor_t, anchor_x = t, x_vec
                    lam_bar = safety * float((rows @ anchor_x + consts).max())
                    continue
                n_prop += 1
                if rng.random() * lam_bar <= lam:
                    size = self.table.draw(x_vec, rng)
                    x_vec = x_vec + self.basis.vec(size)
                    n_acc += 1
                    if events is not None:
                        events.append((t, size, x_vec.copy()))
                    if snaps is not None:
                        snaps.append(rng.bit_generator.state)
                    break
        return x_vec, n_prop, n_acc, n_breach

    def terminal_vec(self, x_vec, T, rng, window=None):
        """Terminal state in coordinates plus the jump count; no event records."""
        if self.table.is_empty or T == 0.0:
            term = self.flowprop.flow_vec(x_vec, T) if T > 0.0 else x_vec
            return term, 0
        delta = window if window is not None else min(0.1, T / 10.0)
        term, _, n_acc, _ = self._loop(x_vec, T, rng, delta)
        return term, n_acc

    def run(self, x0, T, rng, window=None, record_rng_states=False, stream_id=None):
        basis = self.basis
        x0 = symcone.check_symmetric(x0)
        if min_eigenvalue(x0) < -1e-9 * (1.0 + frob_norm(x0)):
            raise SimulationError("initial state must be PSD")
        if T < 0:
            raise ValueError("T must be >= 0")
        x_vec = basis.vec(x0)
        worst_eig = min_eigenvalue(x0)
        d = self.p_set.dim

        events = []
        snaps = [] if record_rng_states else None
        if self.table.is_empty or T == 0.0:
            term = self.flowprop.flow_vec(x_vec, T) if T > 0.0 else x_vec
            n_prop = n_acc = n_breach = 0
        else:
            delta = window if window is not None else min(0.1, T / 10.0)
            term, n_prop, n_acc, n_breach = self._loop(
                x_vec, T, rng, delta, events=events, snaps=snaps)

        term_mat = symcone.symmetrize(basis.unvec(term))
        worst_eig = min(worst_eig, min_eigenvalue(term_mat))
        times = np.asarray([e[0] for e in events])
        sizes = np.asarray([e[1] for e in events]).reshape(len(events), d, d)
        states = np.asarray([symcone.symmetrize(basis.unvec(e[2])) for e in events]).reshape(
            len(events), d, d)
        for st in states:
            worst_eig = min(worst_eig, min_eigenvalue(st))
        return SimPath(times, sizes, states, term_mat, stream_id,
                       n_prop, n_acc, n_breach, worst_eig,
                       tuple(snaps) if record_rng_states else None)


def simulate_path(p_set, x0, T, rng, window=None, record_rng_states=False, simulator=None):
    """Simulate one path; rng may be a numpy Generator or an int seed."""
    sim = simulator or PathSimulator(p_set)
    stream_id = None
    if isinstance(rng, (int, np.integer)):
        stream_id = int(rng)
        rng = np.random.default_rng(rng)
    return sim.run(x0, T, rng, window=window, record_rng_states=record_rng_states,
                   stream_id=stream_id)


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    std_error: float
    n_paths: int
    seed: int
    wall_time: float


def _path_rng(seed, index):
    key = np.array([seed & _MASK64, index], dtype=_U64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunk_rows(p_set, x0, T, seed, start, stop, window):
    sim = PathSimulator(p_set)
    basis = sim.basis
    x0 = symcone.check_symmetric(x0)
    if min_eigenvalue(x0) < -1e-9 * (1.0 + frob_norm(x0)):
        raise SimulationError("initial state must be PSD")
    x_vec = basis.vec(x0)
    out = np.empty((stop - start, basis.n + 1))
    for i in range(start, stop):
        term, n_jumps = sim.terminal_vec(x_vec, T, _path_rng(seed, i), window=window)
        out[i - start, : basis.n] = term
        out[i - start, basis.n] = n_jumps
    return start, out


def terminal_statistics(p_set, x0, T, n_paths, seed, workers=1, window=None):
    """Terminal states (vectorized) and jump counts, one row per path index.

    Row i is produced from the stream keyed by (seed, i); the output is
    independent of the worker count.
    """
    basis = VecBasis(p_set.dim)
    out = np.empty((n_paths, basis.n + 1))
    if workers <= 1:
        _, rows = _chunk_rows(p_set, x0, T, seed, 0, n_paths, window)
        out[:] = rows
        return out
    chunk = max(64, -(-n_paths // (workers * 8)))
    ranges = [(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_chunk_rows, p_set, x0, T, seed, s, e, window) for s, e in ranges]
        for fut in futures:
            start, rows = fut.result()
            out[start: start + len(rows)] = rows
    return out


def _reduce(values, n_paths, seed, wall):
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MCEstimate(est, se, n_paths, seed, wall)


def mc_summary(p_set, x0, T, n_paths, seed, u=None, v=None, w=None, workers=1, window=None):
    """Shared-paths Monte Carlo estimates.

    Returns a dict with keys among {"laplace", "mean", "second_moment",
    "jump_count"}: the Laplace functional at u, the linear functional at v,
    the mixed second moment at (v, w or v), and the raw jump count.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    basis = VecBasis(p_set.dim)
    tic = time.perf_counter()
    stats = terminal_statistics(p_set, x0, T, n_paths, seed, workers=workers, window=window)
    wall = time.perf_counter() - tic

    term = stats[:, : basis.n]
    counts = stats[:, basis.n]
    out = {"jump_count": _reduce(counts, n_paths, seed, wall)}
    if u is not None:
        vals = np.exp(-(term @ basis.vec(np.asarray(u, dtype=float))))
        out["laplace"] = _reduce(vals, n_paths, seed, wall)
    if v is not None:
        pv = term @ basis.vec(np.asarray(v, dtype=float))
        out["mean"] = _reduce(pv, n_paths, seed, wall)
        pw = pv if w is None else term @ basis.vec(np.asarray(w, dtype=float))
        out["second_moment"] = _reduce(pv * pw, n_paths, seed, wall)
    return out


def mc_laplace(p_set, x0, T, u, n_paths, seed, workers=1, window=None):
    return mc_summary(p_set, x0, T, n_paths, seed, u=u, workers=workers, window=window)["laplace"]


def mc_mean(p_set, x0, T, v, n_paths, seed, workers=1, window=None):
    return mc_summary(p_set, x0, T, n_paths, seed, v=v, workers=workers, window=window)["mean"]


def mc_second_moment(p_set, x0, T, v, w, n_paths, seed, workers=1, window=None):
    return mc_summary(p_set, x0, T, n_paths, seed, v=v, w=w, workers=workers, window=window)["second_moment"]


def worker_cap():
    """Worker limit from the AFFINEHS_THREADS environment variable (0 = no cap)."""
    raw = os.environ.get("AFFINEHS_THREADS", "").strip()
    if not raw:
        return 0
    try:
        return max(1, int(raw))
    except ValueError:
        return 0
