"""HUM null control for the linear Schrodinger equation and the local
fixed-point construction for the nonlinear one.

Everything lives on a Galerkin truncation: the first ``modes`` Dirichlet
eigenfunctions per axis. In these coordinates e^{it Lap} is diagonal, so the
controlled linear equation

    i psi_t + Lap psi = v,   v(t) = a^2 phi(t)^2 e^{it Lap} d

gives psi(T) = e^{iT Lap}(psi(0) - S d) with

    S d = i int_0^T phi^2 e^{-is Lap} a^2 e^{is Lap} d ds = i G d,

G a Hermitian positive semi-definite Gramian. The time integral uses the
RK4 stage nodes (t, t + h/2, t + h); RK4 on a pure source is Simpson's
rule, and the same nodes drive the nonlinear solver, so L = K + S holds
exactly for the discrete operators.

Sign convention: data psi0 is steered to zero by solving S d = psi0 and
applying +v in i psi_t + Lap psi = v.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft

from .profile import CutoffSpec, smooth_bump, _g
from .spectral import ComplexField, build_grid

log = logging.getLogger(__name__)


class HumConvergenceError(RuntimeError):
    def __init__(self, message, residual, iterations, factor=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.factor = factor


@dataclass(frozen=True)
class TimeBump:
    """phi(t): smooth bump supported on [t_start, t_stop]."""
    t_start: float
    t_stop: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        u = 2.0 * (t - self.t_start) / (self.t_stop - self.t_start) - 1.0
        return _g(u)


@dataclass(frozen=True)
class ControlShape:
    """Spatial profile a, time profile phi_t and horizon T.

    ``a`` is a CutoffSpec (smooth bump), a positive constant, or a callable
    grid -> nodal array.
    """
    a: object
    T: float
    phi_t: TimeBump = None

    def a_values(self, grid):
        if isinstance(self.a, CutoffSpec):
            return smooth_bump(self.a, grid)
        if callable(self.a):
            return np.asarray(self.a(grid), dtype=float)
        return np.full(grid.shape, float(self.a))

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.phi_t is None:
            object.__setattr__(self, "phi_t", TimeBump(0.1 * self.T, 0.9 * self.T))
        if not 0 <= self.phi_t.t_start < self.phi_t.t_stop <= self.T:
            raise ValueError("time profile must be supported inside [0, T]")
        if np.isscalar(self.a) and not float(self.a) != 0.0:
            raise ValueError("spatial profile a must not vanish identically")


@dataclass(frozen=True, eq=False)
class DualDatum:
    coeffs: np.ndarray = field(repr=False)  # mode vector
    problem: "HumProblem" = field(repr=False)
    iterations: int = 0
    residual: float = 0.0

    @property
    def psi0_dual(self):
        return self.problem.from_modes(self.coeffs)


@dataclass
class CGReport:
    iterations: int
    residual: float
    history: list


class HumProblem:
    """Mode-truncated control operators on a rectangle.

    ``grid`` fixes the domain and the physical sampling used for
    input/output fields; ``modes`` is the truncation per axis.
    """

    def __init__(self, grid, shape, modes=32, n_steps=None, p=None, a2_nodes=4095, omega_dt=0.25):
        self.grid = grid
        self.shape = shape
        self.dim = grid.dim
        self.modes = tuple([modes] * self.dim) if np.isscalar(modes) else tuple(modes)
        if any(m > n for m, n in zip(self.modes, grid.n)):
            raise ValueError(f"modes {self.modes} exceed grid capacity {grid.n}")
        self.p = 1.0 + 4.0 / self.dim if p is None else p
        mu_axes = [(np.pi * np.arange(1, m + 1) / l) ** 2 for m, l in zip(self.modes, grid.lengths)]
        self.mu = np.add.outer(*mu_axes).ravel() if self.dim == 2 else mu_axes[0]
        self.K = self.mu.size
        T = shape.T
        if n_steps is None:
            # resolve the fastest beat mu_max - mu_min to omega_dt per step
            n_steps = int(np.ceil(T * (self.mu.max() - self.mu.min()) / omega_dt))
            n_steps = max(n_steps, 200)
        self.n_steps = int(n_steps)
        self.dt = T / self.n_steps
        self.a2_nodes = a2_nodes
        # quadrature grid for the nonlinearity: N + 1 > 3 M avoids aliasing into kept modes
        nq = [fft.next_fast_len(4 * m) - 1 for m in self.modes]
        self.qgrid = build_grid(grid.domain, tuple(nq))

    # -- geometry -----------------------------------------------------------
    @cached_property
    def times(self):
        return np.linspace(0.0, self.shape.T, 2 * self.n_steps + 1)

    @cached_property
    def simpson_weights(self):
        w = np.zeros(self.times.size)
        h = self.dt
        w[0:-1:2] += h / 6.0
        w[1::2] += 4.0 * h / 6.0
        w[2::2] += h / 6.0
        return w

    @cached_property
    def phi2(self):
        return self.shape.phi_t(self.times) ** 2

    @cached_property
    def phases(self):
        """E[j, k] = exp(-i mu_k t_j)."""
        return np.exp(-1j * np.outer(self.times, self.mu))

    @cached_property
    def A2(self):
        """Galerkin matrix int a^2 e_k e_l on the truncation (real symmetric)."""
        fine = build_grid(self.grid.domain, tuple([self.a2_nodes] * self.dim))
        a2 = self.shape.a_values(fine) ** 2
        if not np.any(a2):
            raise ValueError("spatial profile a vanishes on the grid")
        cols = []
        for l in range(self.K):
            e = np.zeros(self.K)
            e[l] = 1.0
            vals = fine.to_values(self._pad(e, fine))
            cols.append(self._trunc(fine.to_coeffs(a2 * vals)).real)
        A = np.array(cols).T
        return 0.5 * (A + A.T)

    def _pad(self, vec, grid):
        c = np.zeros(grid.shape, dtype=complex)
        c[tuple(slice(0, m) for m in self.modes)] = np.asarray(vec).reshape(self.modes)
        return c

    def _trunc(self, coeffs):
        return coeffs[tuple(slice(0, m) for m in self.modes)].ravel()

    def to_modes(self, f):
        if f.grid.shape != self.grid.shape:
            raise ValueError("field lives on a different grid")
        return self._trunc(self.grid.to_coeffs(f.values))

    def from_modes(self, vec):
        return ComplexField(self.grid, self.grid.to_values(self._pad(vec, self.grid)))

    # -- linear operators ---------------------------------------------------
    def _sandwich(self, vec, sign):
        # sum_j w_j phi_j^2 e^{i mu t_j} A2 e^{-i mu t_j} vec, times sign*i
        E = self.phases
        D = E * vec[None, :]
        Y = D @ self.A2
        c = (self.simpson_weights * self.phi2)[:, None]
        return sign * 1j * np.sum(c * np.conj(E) * Y, axis=0)

    def apply_S(self, vec):
        return self._sandwich(np.asarray(vec, dtype=complex), +1.0)

    def apply_S_adjoint(self, vec):
        # reverse-time accumulation of the same integrand with conjugated factor
        E = self.phases[::-1]
        D = E * np.asarray(vec, dtype=complex)[None, :]
        Y = D @ self.A2
        c = (self.simpson_weights * self.phi2)[::-1, None]
        return -1j * np.sum(c * np.conj(E) * Y, axis=0)

    def dense_S(self):
        """S as a dense matrix; intended for K < 64 diagnostics."""
        c = self.simpson_weights * self.phi2
        E = self.phases
        beats = np.conj(E).T @ (c[:, None] * E)
        return 1j * self.A2 * beats

    def condition_number(self):
        return float(np.linalg.cond(self.dense_S()))

    def source_modes(self, dual, j):
        """P v(t_j) for control generated by ``dual`` (mode vector)."""
        return self.phi2[j] * (self.A2 @ (self.phases[j] * dual))

    def control_field(self, dual, t, grid=None):
        """v(t, x) = a^2 phi(t)^2 (e^{it Lap} d)(x) on a grid."""
        grid = self.grid if grid is None else grid
        a2 = self.shape.a_values(grid) ** 2
        d = self._pad(np.exp(-1j * self.mu * t) * dual, grid)
        return a2 * float(self.shape.phi_t(t) ** 2) * grid.to_values(d)

    # -- nonlinear pieces ---------------------------------------------------
    def _project_nl(self, c):
        q = self.qgrid
        vals = q.to_values(self._pad(c, q))
        nl = np.abs(vals) ** (self.p - 1) * vals
        return self._trunc(q.to_coeffs(nl))

    def _rhs(self, j, y, dual, nonlinear):
        # interaction picture y = e^{i mu t} c:  y' = -i e^{i mu t} (P v - P N(c))
        E = self.phases[j]
        src = self.source_modes(dual, j) if dual is not None else 0.0
        if nonlinear:
            src = src - self._project_nl(E * y)
        return -1j * np.conj(E) * src

    def integrate(self, y_start, dual, forward, nonlinear=True):
        """Lawson-RK4 on the stage-node grid; returns c at the far end."""
        y = np.asarray(y_start, dtype=complex).copy()
        n = self.n_steps
        if forward:
            h = self.dt
            order = range(n)
            idx = lambda k: (2 * k, 2 * k + 1, 2 * k + 2)
        else:
            h = -self.dt
            order = range(n - 1, -1, -1)
            idx = lambda k: (2 * k + 2, 2 * k + 1, 2 * k)
        for k in order:
            j0, jh, j1 = idx(k)
            k1 = self._rhs(j0, y, dual, nonlinear)
            k2 = self._rhs(jh, y + 0.5 * h * k1, dual, nonlinear)
            k3 = self._rhs(jh, y + 0.5 * h * k2, dual, nonlinear)
            k4 = self._rhs(j1, y + h * k3, dual, nonlinear)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        j_end = self.times.size - 1 if forward else 0
        return self.phases[j_end] * y

    def apply_L(self, dual):
        """psi(0) of the nonlinear backward problem with psi(T) = 0."""
        return self.integrate(np.zeros(self.K, dtype=complex), dual, forward=False, nonlinear=True)

    def apply_K(self, dual):
        """K = L - S on the shared time grid."""
        return self.apply_L(dual) - self.apply_S(dual)

    def h2_norm(self, vec):
        return float(np.sqrt(np.sum((1.0 + self.mu) ** 2 * np.abs(vec) ** 2)))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def apply_S(dual, problem):
    vec = dual.coeffs if isinstance(dual, DualDatum) else problem.to_modes(dual)
    return problem.from_modes(problem.apply_S(vec))


def cgnr(problem, target, tol=1e-10, max_iter=200, x0=None):
    """Conjugate gradients on S^H S x = S^H b. Returns (x, CGReport)."""
    b = np.asarray(target, dtype=complex)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), CGReport(0, 0.0, [0.0])
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=complex).copy()
    r = b - problem.apply_S(x) if x0 is not None else b.copy()
    z = problem.apply_S_adjoint(r)
    pdir = z.copy()
    zz = np.vdot(z, z).real
    hist = [float(np.linalg.norm(r)) / bnorm]
    it = 0
    while hist[-1] > tol and it < max_iter:
        w = problem.apply_S(pdir)
        alpha = zz / np.vdot(w, w).real
        x = x + alpha * pdir
        r = r - alpha * w
        it += 1
        if it % 25 == 0:
            # periodic true residual to stop recursion drift
            r = b - problem.apply_S(x)
        hist.append(float(np.linalg.norm(r)) / bnorm)
        z = problem.apply_S_adjoint(r)
        zz_new = np.vdot(z, z).real
        pdir = z + (zz_new / zz) * pdir
        zz = zz_new
    final = float(np.linalg.norm(b - problem.apply_S(x))) / bnorm
    hist[-1] = final
    if final > tol:
        raise HumConvergenceError(
            f"CG did not reach tol={tol:.1e} in {max_iter} iterations (residual {final:.3e})", final, it
        )
    return x, CGReport(it, final, hist)


def solve_S_inverse(target, problem, tol=1e-10, max_iter=200):
    vec = problem.to_modes(target) if isinstance(target, ComplexField) else np.asarray(target)
    x, rep = cgnr(problem, vec, tol, max_iter)
    return DualDatum(x, problem, rep.iterations, rep.residual)


@dataclass
class NullControlResult:
    dual: DualDatum
    terminal: np.ndarray  # mode vector of psi(T)
    initial_norm: float
    log: list = field(default_factory=list)  # (iter, residual, contraction_estimate)
    converged: bool = True
    contraction: float = 0.0

    @property
    def terminal_norm(self):
        return float(np.linalg.norm(self.terminal))

    def control(self, t, grid=None):
        return self.dual.problem.control_field(self.dual.coeffs, t, grid)


def linear_null_control(psi0, problem, tol=1e-10, max_iter=200):
    """HUM control steering psi0 to rest at T; simulated by forward stepping."""
    u = problem.to_modes(psi0) if isinstance(psi0, ComplexField) else np.asarray(psi0, dtype=complex)
    x, rep = cgnr(problem, u, tol, max_iter)
    dual = DualDatum(x, problem, rep.iterations, rep.residual)
    yT = problem.integrate(u, x, forward=True, nonlinear=False)
    h = rep.history
    rows = [(i, r, r / h[i - 1] if i and h[i - 1] > 0 else 0.0) for i, r in enumerate(h)]
    return NullControlResult(dual, yT, float(np.linalg.norm(u)), rows)


def nonlinear_null_control(u0, problem, tol=1e-10, max_fp_iter=30, cg_tol=1e-12, cg_max_iter=400,
                           simulate=True):
    """Picard iteration of B x = S^{-1}(u0 - K x).

    Stops when successive iterates differ by less than tol (relative).
    The log rows are (iteration, increment, increment ratio). Divergence
    (two consecutive ratios >= 1 or a non-finite iterate) raises.
    """
    u = problem.to_modes(u0) if isinstance(u0, ComplexField) else np.asarray(u0, dtype=complex)
    if not np.any(u):
        z = np.zeros(problem.K, dtype=complex)
        return NullControlResult(DualDatum(z, problem), z, 0.0, [(0, 0.0, 0.0)])
    x, _ = cgnr(problem, u, cg_tol, cg_max_iter)
    rows = []
    prev_inc = None
    bad = 0
    converged = False
    ratio = 0.0
    for it in range(1, max_fp_iter + 1):
        rhs = u - problem.apply_K(x)
        x_new, _ = cgnr(problem, rhs, cg_tol, cg_max_iter, x0=x)
        inc = float(np.linalg.norm(x_new - x))
        rel = inc / max(float(np.linalg.norm(x_new)), 1e-300)
        ratio = inc / prev_inc if prev_inc else 0.0
        rows.append((it, rel, ratio))
        if not np.all(np.isfinite(x_new)):
            raise HumConvergenceError("Picard iterate is not finite", rel, it, ratio)
        bad = bad + 1 if (prev_inc and ratio >= 1.0) else 0
        x = x_new
        if rel < tol:
            converged = True
            break
        if bad >= 2:
            raise HumConvergenceError(f"Picard iteration diverges (ratio {ratio:.3g})", rel, it, ratio)
        prev_inc = inc
    if not converged:
        raise HumConvergenceError(f"no convergence in {max_fp_iter} Picard steps", rows[-1][1],
                                  max_fp_iter, ratio)
    dual = DualDatum(x, problem, len(rows), rows[-1][1])
    yT = problem.integrate(u, x, forward=True, nonlinear=True) if simulate else np.full(problem.K, np.nan)
    return NullControlResult(dual, yT, float(np.linalg.norm(u)), rows, True, ratio)


def lipschitz_estimate(problem, x, rng, n_probe=3, rel_step=0.25, cg_tol=1e-13):
    """max ||B(x + e) - B(x)|| / ||e|| over random probes e of size rel_step ||x||."""
    base = problem.apply_K(x)
    best = 0.0
    scale = rel_step * max(float(np.linalg.norm(x)), 1e-300)
    for _ in range(n_probe):
        e = rng.standard_normal(problem.K) + 1j * rng.standard_normal(problem.K)
        e *= scale / np.linalg.norm(e)
        dk = problem.apply_K(x + e) - base
        db, _ = cgnr(problem, dk, cg_tol, 400)
        best = max(best, float(np.linalg.norm(db)) / scale)
    return best


def smooth_datum(problem, rng, h2_size, n_active=6):
    """Random mode vector on the lowest modes with ||.||_{H2,spec} = h2_size."""
    v = np.zeros(problem.K, dtype=complex)
    order = np.argsort(problem.mu)[:n_active]
    v[order] = (rng.standard_normal(n_active) + 1j * rng.standard_normal(n_active)) / (1.0 + np.arange(n_active))
    return v * (h2_size / problem.h2_norm(v))


def estimate_delta_T(problem, direction, lo, hi, n_bisect=8, max_fp_iter=30, tol=1e-10):
    """Empirical local radius: bisection (geometric) on ||u0||_{H2} along ``direction``.

    Returns (radius, log) where log rows are (size, converged, last ratio).
    """
    direction = direction / problem.h2_norm(direction)
    rows = []

    def ok(size):
        try:
            res = nonlinear_null_control(size * direction, problem, tol, max_fp_iter, simulate=False)
            rows.append((size, True, res.contraction))
            return True
        except HumConvergenceError as err:
            rows.append((size, False, err.factor if err.factor is not None else float("nan")))
            return False

    if not ok(lo):
        raise ValueError("lower bracket already fails")
    if ok(hi):
        return hi, rows
    for _ in range(n_bisect):
        mid = np.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, rows
