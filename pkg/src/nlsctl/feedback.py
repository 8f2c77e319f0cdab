"""Piecewise feedback stabilization around a blow-up profile, and the
explicit open-loop null control.

Both feedback laws have the form v = chi (|psi|^(p-1) psi - F(t)), so the
controlled right-hand side is -(1 - chi)|psi|^(p-1) psi - chi F(t): inside
{chi = 1} the equation becomes linear with a prescribed source. That is
how the controllers are handed to the stepper.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import Controller, Outcome, SimState, StepControl, Trajectory, evolve, Monitors
from .profile import _g, _g_total, cutoff_on_grid, smooth_step, synth_profile
from .spectral import ComplexField, sobolev_norm

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlSchedule:
    t1: float
    t2: float
    mu: float
    epsilon: float
    delta: float
    lam: float
    T_lambda: float

    def __post_init__(self):
        if not 0 < self.t1 < self.t2 < self.T_lambda:
            raise ValueError("need 0 < t1 < t2 < T_lambda")


def make_schedule(lam, T_lambda, epsilon):
    """t1 = T(1 - 2T), t2 = T(1 - T), mu = 1/(lam T^4), delta = epsilon/16."""
    if not lam > 0 or not epsilon > 0:
        raise ValueError("lambda and epsilon must be positive")
    if not 0 < T_lambda < 0.25:
        raise ValueError(f"T_lambda must lie in (0, 1/4), got {T_lambda}")
    T = float(T_lambda)
    return ControlSchedule(
        t1=T * (1.0 - 2.0 * T),
        t2=T * (1.0 - T),
        mu=1.0 / (lam * T ** 4),
        epsilon=float(epsilon),
        delta=epsilon / 16.0,
        lam=float(lam),
        T_lambda=T,
    )


def ball_radii(lambda0, C, C_tilde, c):
    """Fixed-point ball radii (M1, M2) for given proof constants.

    The constants are not known; this only evaluates the formulas so runs
    can log them for whatever values are configured.
    """
    m2 = np.sqrt(lambda0 ** 4 / (4.0 * C_tilde * c ** 2))
    x = c * lambda0 ** -2
    if not 0 < x < 0.5:
        raise ValueError("need 0 < c lambda0^-2 < 1/2")
    m1 = min(np.sqrt(1.0 / (4.0 * C * x * (1.0 - 2.0 * x))), m2 / 4.0)
    return float(m1), float(m2)


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------

class ReferenceTrajectory:
    """t -> nodal values of the reference, with a small evaluation cache.

    The stepper asks for t, t + dt/2, t + dt and then the next step starts
    at t + dt, so a few cached entries remove most recomputation.
    """

    provenance = "analytic_Rlambda"

    def __init__(self, fn, grid, t_max, cache=4):
        self._fn = fn
        self.grid = grid
        self.t_max = t_max
        self._cache = OrderedDict()
        self._size = cache

    def __call__(self, t):
        key = float(t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        val = self._fn(min(key, self.t_max))
        self._cache[key] = val
        if len(self._cache) > self._size:
            self._cache.popitem(last=False)
        return val

    def field(self, t):
        return ComplexField(self.grid, self(t))


def rlambda_reference(spec, gs, grid, clamp=1e-9):
    """R_lambda as reference; times are clamped to T(1 - clamp) so t = T is finite."""
    t_max = spec.T_lambda * (1.0 - clamp)
    return ReferenceTrajectory(lambda t: synth_profile(spec, gs, t, grid).values, grid, t_max)


class StoredReference(ReferenceTrajectory):
    """Replay of recorded snapshots, linear in time between samples."""

    provenance = "stored_free_run"

    def __init__(self, times, fields, grid):
        self._t = np.asarray(times, dtype=float)
        self._v = np.stack([np.asarray(f.values if hasattr(f, "values") else f) for f in fields])
        if self._t.size < 2 or np.any(np.diff(self._t) <= 0):
            raise ValueError("need at least two strictly increasing sample times")
        super().__init__(self._interp, grid, float(self._t[-1]))

    def _interp(self, t):
        if t <= self._t[0]:
            return self._v[0].copy()
        i = int(np.searchsorted(self._t, t)) - 1
        i = min(i, self._t.size - 2)
        w = (t - self._t[i]) / (self._t[i + 1] - self._t[i])
        return (1.0 - w) * self._v[i] + w * self._v[i + 1]


# ---------------------------------------------------------------------------
# feedback laws
# ---------------------------------------------------------------------------

def _nl(u, p):
    return np.abs(u) ** (p - 1) * u


def _chi_values(chi, grid):
    if isinstance(chi, np.ndarray):
        return chi
    return cutoff_on_grid(chi, grid).chi


def k1_feedback(psi, ref, chi, p=None):
    """v = chi (|psi|^(p-1) psi - |ref|^(p-1) ref)."""
    if psi.values.shape != ref.values.shape:
        raise ValueError("psi and ref shapes differ")
    p = 1.0 + 4.0 / psi.grid.dim if p is None else p
    c = _chi_values(chi, psi.grid)
    return ComplexField(psi.grid, c * (_nl(psi.values, p) - _nl(ref.values, p)))


def k2_feedback(psi, ref, chi, mu, t, t1, t2=None, p=None):
    """v = chi (|psi|^(p-1) psi - e^{-mu(t - t1)} (|ref|^(p-1) ref + i mu ref))."""
    if t < t1 or (t2 is not None and t > t2):
        raise ValueError(f"t={t} outside the second-stage window")
    p = 1.0 + 4.0 / psi.grid.dim if p is None else p
    c = _chi_values(chi, psi.grid)
    damp = np.exp(-mu * (t - t1))
    r = ref.values
    return ComplexField(psi.grid, c * (_nl(psi.values, p) - damp * (_nl(r, p) + 1j * mu * r)))


class K1Controller(Controller):
    def __init__(self, ref, chi_values, p):
        self.ref = ref
        self.chi = chi_values
        self.weight = 1.0 - chi_values
        self.support = chi_values > 0
        self._p = p

    def forcing(self, t):
        return -self.chi * _nl(self.ref(t), self._p)


class K2Controller(Controller):
    def __init__(self, ref, chi_values, p, mu, t1):
        self.ref = ref
        self.chi = chi_values
        self.weight = 1.0 - chi_values
        self.support = chi_values > 0
        self._p = p
        self.mu = mu
        self.t1 = t1

    def forcing(self, t):
        r = self.ref(t)
        return -self.chi * np.exp(-self.mu * (t - self.t1)) * (_nl(r, self._p) + 1j * self.mu * r)


@dataclass
class StabilizeResult:
    stage1: Trajectory
    stage2: Trajectory
    schedule: ControlSchedule
    initial_offset: float  # ||psi0 - ref(0)||_{H2,spec}
    tracking_error: float  # ||psi(t1) - ref(t1)||_{L2}
    omega_content: tuple = ()  # L2 norm on {chi = 1} at t1 and t2

    @property
    def final(self):
        return self.stage2.final

    @property
    def terminal_l2(self):
        return float(np.sqrt(np.sum(np.abs(self.final.values) ** 2) * self.final.grid.cell_volume))

    @property
    def outcome(self):
        if self.stage1.outcome != Outcome.COMPLETED:
            return self.stage1.outcome
        return self.stage2.outcome

    def merged_monitors(self):
        m = Monitors()
        for tr in (self.stage1, self.stage2):
            for col in Monitors.COLUMNS:
                getattr(m, col).extend(getattr(tr.monitors, col))
        # drop the duplicated seam sample
        keep = np.concatenate([[True], np.diff(m.t) > 0])
        for col in Monitors.COLUMNS:
            setattr(m, col, [v for v, k in zip(getattr(m, col), keep) if k])
        return m


def stabilize_run(psi0, chi, schedule, ref, p=None, steps=StepControl(c_cfl=0.01),
                  mu_resolution=0.05, monitor_every=50, strict=True, log_control=True):
    """K1 on [0, t1], then K2 on [t1, t2].

    Stage 2 caps dt at ``mu_resolution / mu`` so the e^{-mu(t - t1)} decay
    is resolved. With ``strict`` the initial H2 offset may not exceed
    delta; the boundary ||w0|| = delta is admitted up to roundoff.
    """
    grid = psi0.grid
    p = 1.0 + 4.0 / grid.dim if p is None else p
    chi_v = _chi_values(chi, grid)
    offset = sobolev_norm(ComplexField(grid, psi0.values - ref(0.0)), 2)
    if strict and not offset <= schedule.delta * (1.0 + 1e-12):
        raise ValueError(f"initial offset {offset:.3g} exceeds delta = {schedule.delta:.3g}")
    s1 = evolve(SimState(0.0, psi0), schedule.t1, K1Controller(ref, chi_v, p), monitor_every,
                steps, p, log_control=log_control)
    err1 = float(np.sqrt(np.sum(np.abs(s1.final.values - ref(schedule.t1)) ** 2) * grid.cell_volume))
    inner = chi_v >= 1.0

    def content(v):
        return float(np.sqrt(np.sum(np.abs(v[inner]) ** 2) * grid.cell_volume))

    if s1.outcome != Outcome.COMPLETED:
        return StabilizeResult(s1, s1, schedule, offset, err1)
    st2 = replace(steps, dt_cap=min(steps.dt_cap, mu_resolution / schedule.mu))
    s2 = evolve(s1.state, schedule.t2, K2Controller(ref, chi_v, p, schedule.mu, schedule.t1),
                monitor_every, st2, p, log_control=log_control)
    res = StabilizeResult(s1, s2, schedule, offset, err1,
                          (content(s1.final.values), content(s2.final.values)))
    log.info("stabilize_run: offset %.3g, tracking %.3g, terminal L2 %.3g",
             offset, err1, res.terminal_l2)
    return res


def random_perturbation(grid, rng, size, modes=8):
    """Smooth random field with ||w||_{H2,spec} = size, low modes only."""
    c = np.zeros(grid.shape, dtype=complex)
    sl = tuple(slice(0, min(modes, m)) for m in grid.shape)
    block = c[sl]
    block[...] = rng.standard_normal(block.shape) + 1j * rng.standard_normal(block.shape)
    w = ComplexField(grid, grid.to_values(c))
    return ComplexField(grid, w.values * (size / sobolev_norm(w, 2)))


# ---------------------------------------------------------------------------
# open-loop control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaProfile:
    """theta = 0 on [0, t_on], smooth rise, theta = 1 on [t_full, T]."""
    t_on: float
    t_full: float

    @classmethod
    def for_horizon(cls, T):
        return cls(0.25 * T, 0.5 * T)

    def __call__(self, t):
        return float(1.0 - smooth_step((t - self.t_on) / (self.t_full - self.t_on)))

    def derivative(self, t):
        w = self.t_full - self.t_on
        u = 2.0 * (t - self.t_on) / w - 1.0
        return float(_g(np.array(u)) * 2.0 / (w * _g_total()))


def local_gradient(grid, values):
    """Fourth-order central differences, odd reflection at the walls.

    Used instead of the spectral gradient in the control: near the blow-up
    time the profile is unresolved and its spectral derivative leaks over
    the whole box, while this stencil stays local.
    """
    out = []
    for ax, h in enumerate(grid.spacing):
        pad = [(0, 0)] * values.ndim
        pad[ax] = (2, 2)
        ext = np.pad(values, pad, mode="constant")
        # Dirichlet odd extension: psi(-x) = -psi(x), psi(0) = 0
        idx = [slice(None)] * values.ndim
        src = [slice(None)] * values.ndim
        idx[ax] = slice(0, 1); src[ax] = slice(2, 3)
        ext[tuple(idx)] = -ext[tuple(src)]
        m = ext.shape[ax]
        idx[ax] = slice(m - 1, m); src[ax] = slice(m - 3, m - 2)
        ext[tuple(idx)] = -ext[tuple(src)]
        sl = lambda k: tuple(slice(2 + k, m - 2 + k) if a == ax else slice(None) for a in range(values.ndim))
        out.append((ext[sl(-2)] - 8.0 * ext[sl(-1)] + 8.0 * ext[sl(1)] - ext[sl(2)]) / (12.0 * h))
    return out


def open_loop_reference(theta, chi_field, ref, t):
    """(1 - theta(t) chi) ref(t)."""
    return ComplexField(ref.grid, (1.0 - theta(t) * chi_field.chi) * ref(t))


def open_loop_control(theta, chi_field, ref, t, p=None):
    """Control that makes (1 - theta chi) ref an exact solution when ref is one.

    v = -i theta' chi phi - 2 theta grad chi . grad phi - theta (Lap chi) phi
        + ((1 - theta chi)^p - (1 - theta chi)) |phi|^(p-1) phi
    """
    grid = ref.grid
    p = 1.0 + 4.0 / grid.dim if p is None else p
    phi = ref(t)
    th = theta(t)
    dth = theta.derivative(t)
    chi = chi_field.chi
    s = 1.0 - th * chi
    v = (s ** p - s) * _nl(phi, p)
    if dth != 0.0:
        v = v - 1j * dth * chi * phi
    if th != 0.0:
        grads = local_gradient(grid, phi)
        dot = sum(gc * gp for gc, gp in zip(chi_field.grad, grads))
        v = v - 2.0 * th * dot - th * chi_field.lap * phi
    return v


class OpenLoopController(Controller):
    def __init__(self, theta, chi_field, ref, p):
        self.theta = theta
        self.chi_field = chi_field
        self.ref = ref
        self.support = chi_field.chi > 0
        self._p = p

    def forcing(self, t):
        return open_loop_control(self.theta, self.chi_field, self.ref, t, self._p)


@dataclass
class OpenLoopResult:
    trajectory: Trajectory
    initial_l2: float
    terminal_l2: float
    control_energy: float
    max_leak: float

    @property
    def relative_terminal(self):
        return self.terminal_l2 / self.initial_l2 if self.initial_l2 > 0 else 0.0


def open_loop_run(spec, gs, theta, chi, grid, steps=StepControl(c_cfl=0.01), monitor_every=50,
                  ref=None):
    """Simulate from R(0) with the open-loop control up to T_lambda."""
    p = gs.p
    ref = rlambda_reference(spec, gs, grid) if ref is None else ref
    chi_field = cutoff_on_grid(chi, grid)
    psi0 = open_loop_reference(theta, chi_field, ref, 0.0)
    ctl = OpenLoopController(theta, chi_field, ref, p)
    tr = evolve(SimState(0.0, psi0), spec.T_lambda, ctl, monitor_every, steps, p, log_control=True)
    l2 = lambda f: float(np.sqrt(np.sum(np.abs(f.values) ** 2) * grid.cell_volume))
    return OpenLoopResult(tr, l2(psi0), l2(tr.final), tr.control_energy(), tr.max_leak())
