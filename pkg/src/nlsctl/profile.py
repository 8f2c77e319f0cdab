"""Blow-up profile R_lambda, its cutoffs, and the profile diagnostics.

R(t, x) = L^(-d/2) sum_k exp(i/(lam^2 (T - t)) - i|x - x_k|^2 / (4(T - t)))
          phi_k(x) Q((x - x_k)/L),        L = lam (T - t).

For d = 2 this is the usual pseudo-conformal profile; d = 1 uses the same
construction with the quintic Q.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spectral import ComplexField, sobolev_norm, gradient_values

DEFAULT_A = 0.5


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSpec:
    center: tuple
    r_inner: float
    r_outer: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError(f"need 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}")

    def fits_in(self, domain):
        c = np.asarray(self.center)
        l = np.asarray(domain.lengths)
        return c.size == domain.dim and bool(np.all(c - self.r_outer >= 0) and np.all(c + self.r_outer <= l))


def _g(u):
    # standard bump exp(1 - 1/(1 - u^2)) on (-1, 1), zero outside
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
    return out


@lru_cache(maxsize=1)
def _gauss(n=80):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=1)
def _g_total():
    # same rule as _g_integral_0 so the step hits 0 and 1 exactly
    return float(2.0 * _g_integral_0(np.array(1.0)))


def _g_integral_0(u):
    # int_0^u g(s) ds for u in [-1, 1], by Gauss-Legendre on [0, u]
    x, w = _gauss()
    u = np.asarray(u, dtype=float)
    nodes = 0.5 * u[..., None] * (x + 1.0)
    return 0.5 * u * np.sum(w * _g(nodes), axis=-1)


def smooth_step(s):
    """C-infinity step: 1 for s <= 0, 0 for s >= 1, exactly 1/2 at s = 1/2."""
    s = np.asarray(s, dtype=float)
    u = np.clip(2.0 * s - 1.0, -1.0, 1.0)
    # odd part of the integral keeps the midpoint value exact
    return 0.5 - _g_integral_0(u) / _g_total()


def _radial_derivs(spec, r):
    """chi(r), chi'(r), chi''(r) of the radial bump."""
    w = spec.r_outer - spec.r_inner
    s = (r - spec.r_inner) / w
    u = np.clip(2.0 * s - 1.0, -1.0, 1.0)
    chi = 0.5 - _g_integral_0(u) / _g_total()
    g = _g(u)
    inside = np.abs(u) < 1.0
    dg = np.zeros_like(u)
    dg[inside] = g[inside] * (-2.0 * u[inside] / (1.0 - u[inside] ** 2) ** 2)
    du = 2.0 / w
    return chi, -g / _g_total() * du, -dg / _g_total() * du * du


def smooth_bump(spec, x):
    """Radial cutoff: 1 on |x - c| <= r_inner, 0 on |x - c| >= r_outer.

    ``x`` is a point, an array of points (last axis = coordinates) or a Grid.
    """
    r = _distance(spec, x)
    return smooth_step((r - spec.r_inner) / (spec.r_outer - spec.r_inner))


def _distance(spec, x):
    if hasattr(x, "distance_from"):
        return x.distance_from(spec.center)
    x = np.asarray(x, dtype=float)
    c = np.asarray(spec.center)
    if c.size == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x - c[0])
    return np.sqrt(np.sum((x - c) ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class CutoffField:
    """chi, grad chi and Laplacian of chi sampled on a grid (closed form)."""
    chi: np.ndarray = field(repr=False)
    grad: tuple = field(repr=False)
    lap: np.ndarray = field(repr=False)


def cutoff_on_grid(spec, grid):
    r = grid.distance_from(spec.center)
    chi, d1, d2 = _radial_derivs(spec, r)
    # near r_outer chi rounds to 0 before g does; keep the derivatives
    # inside the support of chi so controls never leak out of {chi > 0}
    flat = (chi == 0.0) | (chi == 1.0)
    d1 = np.where(flat, 0.0, d1)
    d2 = np.where(flat, 0.0, d2)
    safe = np.where(r > 0, r, 1.0)
    # d1 vanishes on the inner ball, so r = 0 never contributes
    grad = tuple(np.where(r > 0, d1 * (xj - cj) / safe, 0.0) for xj, cj in zip(grid.coords, spec.center))
    lap = d2 + np.where(r > 0, (grid.dim - 1) * d1 / safe, 0.0)
    return CutoffField(chi, grad, lap)


# ---------------------------------------------------------------------------
# blow-up profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupSpec:
    points: tuple
    lam: float
    T_lambda: float
    cutoffs: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cutoffs", tuple(self.cutoffs))
        if not pts:
            raise ValueError("need at least one blow-up point")
        if not self.lam > 0 or not self.T_lambda > 0:
            raise ValueError("lambda and T_lambda must be positive")
        if len(self.cutoffs) != len(pts):
            raise ValueError("one cutoff per blow-up point")
        for p, c in zip(pts, self.cutoffs):
            if not np.allclose(p, c.center):
                raise ValueError("cutoff must be centered at its blow-up point")
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                gap = np.linalg.norm(np.subtract(pts[i], pts[j]))
                if gap == 0:
                    raise ValueError("blow-up points must be distinct")
                if gap < self.cutoffs[i].r_outer + self.cutoffs[j].r_outer:
                    raise ValueError("cutoff supports overlap")

    @classmethod
    def from_scale(cls, points, lam, a=DEFAULT_A, r_inner=0.3, r_outer=0.6):
        """T_lambda = a / lam^2 with one cutoff of the given radii per point."""
        pts = [tuple(np.atleast_1d(p)) for p in points]
        return cls(tuple(pts), float(lam), a / lam ** 2, tuple(CutoffSpec(p, r_inner, r_outer) for p in pts))

    @property
    def a(self):
        return self.T_lambda * self.lam ** 2

    def scale(self, t):
        """Core width L = lam (T - t)."""
        return self.lam * (self.T_lambda - t)

    def validate_domain(self, domain):
        for p, c in zip(self.points, self.cutoffs):
            if not domain.contains(p):
                raise ValueError(f"blow-up point {p} is not interior")
            if not c.fits_in(domain):
                raise ValueError(f"cutoff ball around {p} leaves the domain")


@lru_cache(maxsize=32)
def _static_parts(cutoff, grid):
    # distance and cutoff depend only on (cutoff, grid); both are immutable
    r = grid.distance_from(cutoff.center)
    return r, smooth_bump(cutoff, grid)


def _single(spec, k, gs, t, grid):
    L = spec.scale(t)
    tau = spec.T_lambda - t
    r, cut = _static_parts(spec.cutoffs[k], grid)
    phase = 1.0 / (spec.lam ** 2 * tau) - r ** 2 / (4.0 * tau)
    amp = L ** (-grid.dim / 2.0) * cut * gs(r / L)
    return amp * np.exp(1j * phase)


def synth_profile(spec, gs, t, grid):
    if not t < spec.T_lambda:
        raise ValueError(f"profile only defined for t < T_lambda = {spec.T_lambda}, got t={t}")
    if gs.dim != grid.dim:
        raise ValueError("ground state and grid dimensions differ")
    spec.validate_domain(grid.domain)
    out = np.zeros(grid.shape, dtype=complex)
    for k in range(len(spec.points)):
        out += _single(spec, k, gs, t, grid)
    return ComplexField(grid, out)


def exterior_mask(spec, grid):
    """True on nodes outside every inner cutoff ball."""
    m = np.ones(grid.shape, dtype=bool)
    for c in spec.cutoffs:
        m &= grid.distance_from(c.center) > c.r_inner
    return m


def exterior_norm(f, spec, s=0):
    """H^s-type norm restricted to nodes outside all inner balls.

    Weights mirror the spectral norm: s=1 adds |grad u|^2, s=2 adds
    2|grad u|^2 + |Lap u|^2 (the expansion of (1 + mu)^2).
    """
    if s not in (0, 1, 2):
        raise ValueError(f"unsupported Sobolev index s={s}")
    grid = f.grid
    m = exterior_mask(spec, grid)
    dens = np.abs(f.values) ** 2
    if s >= 1:
        c = grid.to_coeffs(f.values)
        g2 = sum(np.abs(g) ** 2 for g in gradient_values(grid, c))
        dens = dens + s * g2
        if s == 2:
            dens = dens + np.abs(grid.to_values(-grid.eigenvalues * c)) ** 2
    return float(np.sqrt(np.sum(dens[m]) * grid.cell_volume))


def fd_time_step(spec, t, rel=1e-3):
    """Centered-difference step resolving the fastest phase rate of R at t."""
    tau = spec.T_lambda - t
    r_out = max(c.r_outer for c in spec.cutoffs)
    omega = 1.0 / spec.scale(t) ** 2 + r_out ** 2 / (4.0 * tau ** 2)
    return min(rel / omega, 0.25 * tau, 0.25 * t if t > 0 else np.inf)


def nls_residual_field(spec, gs, t, dt, grid):
    """i dR/dt + Lap R + |R|^(p-1) R at nodes; dR/dt by centered difference."""
    if not (t - dt > 0 and t + dt < spec.T_lambda and dt > 0):
        raise ValueError("need 0 < t - dt and t + dt < T_lambda")
    p = gs.p
    r0 = synth_profile(spec, gs, t, grid).values
    rp = synth_profile(spec, gs, t + dt, grid).values
    rm = synth_profile(spec, gs, t - dt, grid).values
    lap = grid.to_values(-grid.eigenvalues * grid.to_coeffs(r0))
    return 1j * (rp - rm) / (2 * dt) + lap + np.abs(r0) ** (p - 1) * r0


def nls_residual(spec, gs, t, dt, grid):
    res = nls_residual_field(spec, gs, t, dt, grid)
    return float(np.sqrt(np.sum(np.abs(res) ** 2) * grid.cell_volume))


def profile_h2_growth(spec, gs, t, grid):
    if not 0 <= t < spec.T_lambda:
        raise ValueError("need 0 <= t < T_lambda")
    return sobolev_norm(synth_profile(spec, gs, t, grid), 2)


# ---------------------------------------------------------------------------
# empirical constants
# ---------------------------------------------------------------------------

def fit_exponential_rate(inv_scale, values):
    """Fit values ~ C exp(-k * inv_scale); returns (C, k)."""
    x = np.asarray(inv_scale, dtype=float)
    y = np.asarray(values, dtype=float)
    ok = y > 0
    if np.count_nonzero(ok) < 2:
        raise ValueError("need at least two positive samples")
    slope, icpt = np.polyfit(x[ok], np.log(y[ok]), 1)
    return float(np.exp(icpt)), float(-slope)


def fit_power_law(tau, values):
    """Fit values ~ C tau^(-beta); returns (C, beta)."""
    slope, icpt = np.polyfit(np.log(tau), np.log(values), 1)
    return float(np.exp(icpt)), float(-slope)


@dataclass(frozen=True)
class ResidualBudget:
    """Tracking budget for runs that use R_lambda as their reference.

    ``integral`` is int_0^t_end ||residual(s)||_{L2} ds (trapezoid on the
    sample times), the Duhamel bound on how far the true flow can drift
    from R_lambda. ``C``, ``kappa`` fit residual ~ C exp(-kappa/(lam(T-t))).
    """
    times: tuple
    residuals: tuple
    integral: float
    C: float
    kappa: float

    def relative(self, ref_norm):
        return self.integral / ref_norm


def residual_budget(spec, gs, grid, t_end, n_samples=41, weight=None):
    """Sample the profile residual on [0, t_end] and integrate it.

    ``weight`` (nodal array or callable t -> array) multiplies the residual
    field before the norm, e.g. (1 - theta chi) for the open-loop target.
    """
    if not 0 < t_end < spec.T_lambda:
        raise ValueError("need 0 < t_end < T_lambda")
    ts = np.linspace(0.0, t_end, n_samples)
    vals = []
    for t in ts:
        # t = 0 is sampled one small step inside the window
        tc = t if t > 0 else 1e-6 * spec.T_lambda
        res = nls_residual_field(spec, gs, tc, fd_time_step(spec, tc), grid)
        if weight is not None:
            res = res * (weight(t) if callable(weight) else weight)
        vals.append(float(np.sqrt(np.sum(np.abs(res) ** 2) * grid.cell_volume)))
    vals = np.array(vals)
    integral = float(np.trapezoid(vals, ts))
    try:
        c, k = fit_exponential_rate(1.0 / spec.scale(ts), vals)
    except ValueError:
        c, k = 0.0, float("inf")
    return ResidualBudget(tuple(ts), tuple(vals), integral, c, k)
