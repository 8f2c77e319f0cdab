import os
import subprocess
import sys

import numpy as np
import pytest

from nlsctl import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("p", [3.0, 5.0, 2.5])
def test_phase_rotate_agree(rng, p):
    psi = rng.standard_normal((33, 17)) + 1j * rng.standard_normal((33, 17))
    a = _accel.phase_rotate_np(psi, 0.013, p)
    b = _accel.phase_rotate_nb(psi, 0.013, p)
    np.testing.assert_allclose(b, a, rtol=1e-13, atol=1e-15)


@needs_numba
@pytest.mark.parametrize("p", [3.0, 5.0, 2.5])
def test_rk4_forced_agree(rng, p):
    shape = (257,)
    c = lambda: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    psi, g0, gh, g1 = c(), c(), c(), c()
    w = rng.uniform(0, 1, shape)
    a = _accel.rk4_forced_np(psi, w, g0, gh, g1, 1e-3, p)
    b = _accel.rk4_forced_nb(psi, w, g0, gh, g1, 1e-3, p)
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-14)


@needs_numba
def test_shoot_agree():
    a = _accel.shoot_radial_py(2.2, 2, 1e-2, 10.0)
    b = _accel.shoot_radial_nb(2.2, 2, 1e-2, 10.0)
    assert a[3] == b[3]
    np.testing.assert_allclose(b[1], a[1], rtol=1e-12)


def test_phase_rotate_exact_flow(rng):
    psi = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    out = _accel.phase_rotate(psi, 0.1, 5.0)
    np.testing.assert_allclose(np.abs(out), np.abs(psi), rtol=1e-14)
    np.testing.assert_allclose(np.angle(out / psi), 0.1 * np.abs(psi) ** 4 % (2 * np.pi) - 2 * np.pi * (
        0.1 * np.abs(psi) ** 4 % (2 * np.pi) > np.pi), atol=1e-10)


def test_env_flag_forces_numpy():
    env = dict(os.environ, NLSCTL_NO_NUMBA="1")
    r = subprocess.run([sys.executable, "-c", "from nlsctl import _accel; print(_accel.backend_name())"],
                       capture_output=True, text=True, env=env, timeout=120)
    assert r.stdout.strip() == "numpy"
