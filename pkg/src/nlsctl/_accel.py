"""Hot kernels with a numba path and a pure-numpy fallback.

Set ``NLSCTL_NO_NUMBA=1`` in the environment (before import) to force the
numpy path. Both paths are kept importable so they can be benchmarked and
cross-checked against each other.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("NLSCTL_NO_NUMBA", "0") not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def phase_rotate_np(psi, dt, p):
    """Exact flow of i psi' = -|psi|^(p-1) psi over a step dt."""
    return psi * np.exp(1j * dt * np.abs(psi) ** (p - 1))


def _forced_rhs_np(psi, weight, g, p):
    return 1j * (weight * np.abs(psi) ** (p - 1) * psi - g)


def rk4_forced_np(psi, weight, g0, gh, g1, dt, p):
    """One RK4 step of i psi' = -weight |psi|^(p-1) psi + g(t), nodewise.

    ``g0``, ``gh`` and ``g1`` are the forcing sampled at t, t + dt/2, t + dt.
    """
    k1 = _forced_rhs_np(psi, weight, g0, p)
    k2 = _forced_rhs_np(psi + 0.5 * dt * k1, weight, gh, p)
    k3 = _forced_rhs_np(psi + 0.5 * dt * k2, weight, gh, p)
    k4 = _forced_rhs_np(psi + dt * k3, weight, g1, p)
    return psi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def shoot_radial_py(q0, d, h, rmax):
    """RK4 shot for Q'' + (d-1)/r Q' - Q + Q^p = 0 from Q(0) = q0.

    Returns (r, q, dq, status) truncated at the first sign event:
    status = +1 when Q crosses zero (q0 above the ground state),
    -1 when Q' turns nonnegative (q0 below), 0 when r = rmax is reached.
    """
    n = int(round(rmax / h))
    r = np.empty(n + 1)
    q = np.empty(n + 1)
    dq = np.empty(n + 1)
    p = 1.0 + 4.0 / d
    # removable singularity at r = 0: the first nodes come from the series
    # q0 + c r^2 + e4 r^4 + e6 r^6
    c = (q0 - q0 ** p) / (2.0 * d)
    e4 = (1.0 - p * q0 ** (p - 1.0)) * c / (4.0 * (d + 2.0))
    e6 = (e4 * (1.0 - p * q0 ** (p - 1.0)) - 0.5 * p * (p - 1.0) * q0 ** (p - 2.0) * c * c) / (
        6.0 * (d + 4.0)
    )
    n0 = 8
    for i in range(n0 + 1):
        ri = i * h
        r[i] = ri
        q[i] = q0 + c * ri ** 2 + e4 * ri ** 4 + e6 * ri ** 6
        dq[i] = 2.0 * c * ri + 4.0 * e4 * ri ** 3 + 6.0 * e6 * ri ** 5
    for i in range(n0, n):
        ri = r[i]
        y = q[i]
        z = dq[i]
        rm = ri + 0.5 * h
        k1y = z
        k1z = -(d - 1.0) / ri * z + y - y ** p
        y2 = y + 0.5 * h * k1y
        z2 = z + 0.5 * h * k1z
        k2y = z2
        k2z = -(d - 1.0) / rm * z2 + y2 - y2 ** p
        y3 = y + 0.5 * h * k2y
        z3 = z + 0.5 * h * k2z
        k3y = z3
        k3z = -(d - 1.0) / rm * z3 + y3 - y3 ** p
        y4 = y + h * k3y
        z4 = z + h * k3z
        k4y = z4
        k4z = -(d - 1.0) / (ri + h) * z4 + y4 - y4 ** p
        q[i + 1] = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        dq[i + 1] = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        r[i + 1] = ri + h
        if q[i + 1] <= 0.0:
            return r[: i + 2], q[: i + 2], dq[: i + 2], 1
        if dq[i + 1] >= 0.0:
            return r[: i + 2], q[: i + 2], dq[: i + 2], -1
    return r, q, dq, 0


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, inline="always")
    def _modpow(a2, e):
        # |z|^(p-1) from |z|^2; integer exponents avoid the generic pow
        if e == 1.0:
            return a2
        if e == 2.0:
            return a2 * a2
        return a2 ** e

    @numba.njit(cache=True, inline="always")
    def _rotate_point(z, dt, e):
        th = dt * _modpow(z.real * z.real + z.imag * z.imag, e)
        return z * complex(np.cos(th), np.sin(th))

    @numba.njit(cache=True, inline="always")
    def _rk4_point(y, w, f0, fh, f1, dt, e):
        k1 = 1j * (w * _modpow(y.real * y.real + y.imag * y.imag, e) * y - f0)
        y2 = y + 0.5 * dt * k1
        k2 = 1j * (w * _modpow(y2.real * y2.real + y2.imag * y2.imag, e) * y2 - fh)
        y3 = y + 0.5 * dt * k2
        k3 = 1j * (w * _modpow(y3.real * y3.real + y3.imag * y3.imag, e) * y3 - fh)
        y4 = y + dt * k3
        k4 = 1j * (w * _modpow(y4.real * y4.real + y4.imag * y4.imag, e) * y4 - f1)
        return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    # The loops pass e as a literal for the cubic and quintic cases, so the
    # branch in _modpow folds away and LLVM can vectorise; a runtime e
    # inside the loop costs about 10x.

    @numba.njit(cache=True)
    def _rotate_loop(z, dt, e, out):
        if e == 1.0:
            for i in range(z.size):
                out[i] = _rotate_point(z[i], dt, 1.0)
        elif e == 2.0:
            for i in range(z.size):
                out[i] = _rotate_point(z[i], dt, 2.0)
        else:
            for i in range(z.size):
                out[i] = _rotate_point(z[i], dt, e)

    @numba.njit(cache=True)
    def _rk4_loop(y, w, f0, fh, f1, dt, e, out):
        if e == 1.0:
            for i in range(y.size):
                out[i] = _rk4_point(y[i], w[i], f0[i], fh[i], f1[i], dt, 1.0)
        elif e == 2.0:
            for i in range(y.size):
                out[i] = _rk4_point(y[i], w[i], f0[i], fh[i], f1[i], dt, 2.0)
        else:
            for i in range(y.size):
                out[i] = _rk4_point(y[i], w[i], f0[i], fh[i], f1[i], dt, e)

    def _flat(a, dtype):
        return np.ascontiguousarray(a, dtype=dtype).ravel()

    def phase_rotate_nb(psi, dt, p):
        z = _flat(psi, complex)
        out = np.empty_like(z)
        _rotate_loop(z, float(dt), 0.5 * (p - 1.0), out)
        return out.reshape(np.shape(psi))

    def rk4_forced_nb(psi, weight, g0, gh, g1, dt, p):
        y = _flat(psi, complex)
        out = np.empty_like(y)
        _rk4_loop(y, _flat(weight, float), _flat(g0, complex), _flat(gh, complex), _flat(g1, complex),
                  float(dt), 0.5 * (p - 1.0), out)
        return out.reshape(np.shape(psi))

    shoot_radial_nb = numba.njit(cache=True)(shoot_radial_py)
else:  # pragma: no cover
    phase_rotate_nb = None
    rk4_forced_nb = None
    shoot_radial_nb = None


if USE_NUMBA:
    phase_rotate = phase_rotate_nb
    rk4_forced = rk4_forced_nb
    shoot_radial_kernel = shoot_radial_nb
else:
    phase_rotate = phase_rotate_np
    rk4_forced = rk4_forced_np
    shoot_radial_kernel = shoot_radial_py


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
