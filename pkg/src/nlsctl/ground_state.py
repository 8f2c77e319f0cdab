"""Ground state Q of -Delta Q + Q = Q^p, p = 1 + 4/d.

d = 1 uses the closed form 3^(1/4) sech^(1/2)(2x). d = 2 (Townes soliton)
is found by shooting on Q(0) with an RK4 radial integrator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from . import _accel
from .spectral import ComplexField

log = logging.getLogger(__name__)

MASS_SQ_1D = np.sqrt(3.0) * np.pi / 2.0
Q0_1D = 3.0 ** 0.25


class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RadialProfile:
    r: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    dim: int = 2
    dq: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if r.ndim != 1 or r.shape != q.shape or r.size < 2:
            raise ValueError("profile needs matching 1D arrays r and q")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("abscissae must be nonnegative and strictly increasing")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", q)

    @property
    def p(self):
        return 1.0 + 4.0 / self.dim

    def check_shape(self):
        """Positive and strictly decreasing; raises on the wrong branch."""
        if np.any(self.q <= 0):
            raise ShootingError("profile is not positive")
        if np.any(np.diff(self.q) >= 0):
            raise ShootingError("profile is not strictly decreasing")


@dataclass(frozen=True, eq=False)
class GroundState:
    profile: RadialProfile
    mass_sq: float
    decay: tuple
    grad_sq: float = float("nan")
    # optional exact evaluator r -> Q(r); used instead of the spline when set
    closed_form: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.profile.dim

    @property
    def p(self):
        return self.profile.p

    @property
    def q0(self):
        return float(self.profile.q[0])

    @property
    def norm(self):
        """||Q||_{L2(R^d)}."""
        return float(np.sqrt(self.mass_sq))

    @cached_property
    def _spline(self):
        return CubicSpline(self.profile.r, self.profile.q, bc_type=((1, 0.0), "not-a-knot"))

    def __call__(self, r):
        """Q at radius r >= 0; exponential tail past the stored abscissae."""
        r = np.asarray(r, dtype=float)
        if self.closed_form is not None:
            return self.closed_form(r)
        r_last = self.profile.r[-1]
        q_last = self.profile.q[-1]
        d0 = self.decay[1]
        inside = r <= r_last
        out = np.empty_like(r)
        out[inside] = self._spline(r[inside])
        out[~inside] = q_last * np.exp(-d0 * (r[~inside] - r_last))
        return out


def q_1d_exact(x):
    # sech^(1/2)(2x) written without cosh so large |x| cannot overflow
    e = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return Q0_1D * np.sqrt(2.0 * e / (1.0 + e * e))


def decay_fit(profile, tail_fraction=0.25):
    """Fit |Q(r)| <= C0 exp(-D0 r) from the tail of a sampled profile.

    D0 comes from a least-squares line through log q on the last
    ``tail_fraction`` of the abscissa range; C0 is then raised to the
    smallest value for which the bound holds on every sample.
    """
    r, q = profile.r, profile.q
    r_start = r[-1] - tail_fraction * (r[-1] - r[0])
    tail = r >= r_start
    if np.count_nonzero(tail) < 10:
        raise ValueError("decay fit needs at least 10 tail samples")
    if np.any(q[tail] <= 0):
        raise ValueError("tail samples must be positive")
    slope, _ = np.polyfit(r[tail], np.log(q[tail]), 1)
    d0 = -slope
    if not d0 > 0:
        raise ValueError(f"profile does not decay (fitted D0 = {d0:.3g})")
    c0 = float(np.max(np.abs(q) * np.exp(d0 * r)))
    return c0, float(d0)


def ground_state_1d(h=1e-3, r_max=20.0):
    """Closed-form quintic ground state, sampled on [0, r_max]."""
    r = np.arange(0.0, r_max + 0.5 * h, h)
    q = q_1d_exact(r)
    dq = -Q0_1D * np.tanh(2.0 * r) / np.sqrt(np.cosh(2.0 * r))
    prof = RadialProfile(r, q, dim=1, dq=dq)
    # int Q'^2 = sqrt(3) int sech(2x) tanh^2(2x) dx = sqrt(3) pi / 4
    return GroundState(prof, MASS_SQ_1D, decay_fit(prof), grad_sq=np.sqrt(3.0) * np.pi / 4.0,
                       closed_form=q_1d_exact)


def ode_residual_1d(n=1024, half_width=40.0, window=20.0):
    """Sup norm of -Q'' + Q - Q^5 on |x| <= window.

    Q'' comes from Fourier differentiation on the periodic box
    [-half_width, half_width); the box is wider than the window so the
    periodic wrap (where Q ~ 1e-17) does not pollute the estimate.
    """
    x = -half_width + 2.0 * half_width * np.arange(n) / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * half_width / n)
    q = q_1d_exact(x)
    qxx = np.fft.ifft(-(k ** 2) * np.fft.fft(q)).real
    res = -qxx + q - q ** 5
    return float(np.max(np.abs(res[np.abs(x) <= window])))


def _shoot(q0, d, h, r_max):
    return _accel.shoot_radial_kernel(float(q0), float(d), float(h), float(r_max))


def shoot_radial(d=2, tol=1e-8, h=1e-3, r_max=20.0, bracket=(2.0, 2.5), width=1e-12,
                 r_positive=15.0, separation=1e-6):
    """Townes-type ground state by bisection on Q(0).

    Shots above the ground state cross zero, shots below turn upward; the
    bracket is halved until its width drops below ``width``. The stored
    profile is the lower shot cut where the two bracket shots separate by
    ``separation`` (relative); the tail beyond is exponential.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if d != 2:
        raise ValueError("radial shooting is implemented for d = 2 (use ground_state_1d for d = 1)")
    lo, hi = map(float, bracket)
    if _shoot(lo, d, h, r_max)[3] != -1 or _shoot(hi, d, h, r_max)[3] != 1:
        raise ShootingError(f"bracket {bracket} does not straddle the ground state")
    n_iter = 0
    while hi - lo > width and n_iter < 200:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _shoot(mid, d, h, r_max)[3] == 1:
            hi = mid
        else:
            lo = mid
        n_iter += 1
    r_lo, q_lo, dq_lo, _ = _shoot(lo, d, h, r_max)
    r_hi, q_hi, _, _ = _shoot(hi, d, h, r_max)
    if min(r_lo[-1], r_hi[-1]) < r_positive:
        raise ShootingError(
            f"bracket shots leave the positive-decreasing branch before r={r_positive} "
            f"(at {min(r_lo[-1], r_hi[-1]):.2f})"
        )
    m = min(q_lo.size, q_hi.size)
    rel = np.abs(q_lo[:m] - q_hi[:m]) / np.abs(q_lo[:m])
    cut = int(np.argmax(rel > separation)) if np.any(rel > separation) else m - 1
    prof = RadialProfile(r_lo[: cut + 1].copy(), q_lo[: cut + 1].copy(), dim=d, dq=dq_lo[: cut + 1].copy())
    prof.check_shape()
    res = radial_residual(prof)
    if res > tol:
        raise ShootingError(f"ODE residual {res:.3e} exceeds tol={tol:.1e}")
    c0, d0 = decay_fit(prof)
    mass_sq, grad_sq = _radial_moments(prof, d0)
    log.debug("shoot_radial: Q(0)=%.15f after %d halvings, r_cut=%.3f", lo, n_iter, prof.r[-1])
    return GroundState(prof, mass_sq, (c0, d0), grad_sq=grad_sq)


def radial_residual(profile, r_min=None):
    """Sup of |Q'' + (d-1)/r Q' - Q + Q^p| by 4th-order central differences."""
    r, q, d = profile.r, profile.q, profile.dim
    h = r[1] - r[0]
    i = np.arange(2, r.size - 2)
    d1 = (q[i - 2] - 8 * q[i - 1] + 8 * q[i + 1] - q[i + 2]) / (12 * h)
    d2 = (-q[i - 2] + 16 * q[i - 1] - 30 * q[i] + 16 * q[i + 1] - q[i + 2]) / (12 * h * h)
    res = d2 + (d - 1) / r[i] * d1 - q[i] + q[i] ** profile.p
    if r_min is not None:
        res = res[r[i] >= r_min]
    return float(np.max(np.abs(res)))


def _radial_moments(profile, d0):
    """(||Q||^2, ||grad Q||^2) on R^2 with the exponential tail added analytically."""
    from scipy.integrate import simpson

    r, q, dq = profile.r, profile.q, profile.dq
    mass = simpson(q ** 2 * r, x=r)
    grad = simpson(dq ** 2 * r, x=r)
    # tail q_last e^{-d0 (s - R)}: int_R^inf e^{-2 d0 (s-R)} s ds = R/(2 d0) + 1/(4 d0^2)
    big_r = r[-1]
    tail = big_r / (2 * d0) + 1.0 / (4 * d0 ** 2)
    mass += q[-1] ** 2 * tail
    grad += (d0 * q[-1]) ** 2 * tail
    return float(2 * np.pi * mass), float(2 * np.pi * grad)


def ground_state(dim):
    return ground_state_1d() if dim == 1 else shoot_radial(dim)


def assemble_Q_on_grid(gs, grid, center, scale):
    """Q(|x - center| / scale) sampled on the grid nodes."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    if not grid.domain.contains(center):
        raise ValueError(f"center {center} lies outside the domain")
    r = grid.distance_from(center) / scale
    return ComplexField(grid, gs(r).astype(complex))
