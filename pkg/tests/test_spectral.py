import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsctl.spectral import (
    ComplexField,
    RectDomain,
    SpectralCoeffs,
    apply_laplacian,
    build_grid,
    dst_forward,
    dst_inverse,
    gradient_values,
    linear_propagator,
    sobolev_norm,
)

FAST_N = [3, 4, 7, 8, 15, 31, 63, 127]


def random_field(grid, rng):
    return ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


def mode(grid, k):
    c = np.zeros(grid.shape, dtype=complex)
    c[k] = 1.0
    return SpectralCoeffs(grid, c)


def test_nodes_three_on_pi():
    g = build_grid((np.pi,), 3)
    np.testing.assert_allclose(g.axes[0], [np.pi / 4, np.pi / 2, 3 * np.pi / 4], rtol=0, atol=1e-15)


def test_spacing_rectangle():
    g = build_grid((1.0, 2.0), (4, 8))
    np.testing.assert_allclose(g.spacing, (0.2, 2.0 / 9.0), rtol=1e-15)
    assert g.shape == (4, 8)


@pytest.mark.parametrize("n", [(2,), (1,), (0,)])
def test_too_few_nodes(n):
    with pytest.raises(ValueError):
        build_grid((1.0,), n)


def test_slow_size_rejected_with_hint():
    # 1025 = 5^2 * 41 is not a fast length; the next one is 1029
    with pytest.raises(ValueError, match="1028"):
        build_grid((1.0,), 1024)


@pytest.mark.parametrize("lengths", [(0.0,), (-1.0,), (1.0, 1.0, 1.0), (np.inf,)])
def test_bad_domain(lengths):
    with pytest.raises(ValueError):
        RectDomain(lengths)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_grid((1.0, 1.0), (7,))


def test_sine_mode_single_coefficient():
    g = build_grid((2.0,), 31)
    x = g.axes[0]
    f = ComplexField(g, np.sqrt(2.0 / 2.0) * np.sin(np.pi * x / 2.0))
    c = dst_forward(f).coeffs
    assert abs(c[0] - 1.0) < 1e-13
    assert np.max(np.abs(c[1:])) < 1e-13


@pytest.mark.parametrize("n", FAST_N)
def test_round_trip_1d(n, rng):
    g = build_grid((1.3,), n)
    f = random_field(g, rng)
    back = dst_inverse(dst_forward(f)).values
    assert np.max(np.abs(back - f.values)) < 1e-12 * max(1.0, np.max(np.abs(f.values)))


def test_round_trip_2d(rng):
    g = build_grid((1.0, 2.0), (15, 31))
    f = random_field(g, rng)
    assert np.max(np.abs(dst_inverse(dst_forward(f)).values - f.values)) < 1e-12


def test_parseval_against_direct_sum(rng):
    # oracle: O(n^2) synthesis matrix against the fast transform
    g = build_grid((1.7,), 63)
    f = random_field(g, rng)
    x = g.axes[0]
    k = np.arange(1, 64)
    basis = np.sqrt(2.0 / 1.7) * np.sin(np.outer(x, k) * np.pi / 1.7)
    c_direct = basis.T @ f.values * g.spacing[0]
    c_fast = dst_forward(f).coeffs
    assert np.max(np.abs(c_direct - c_fast)) < 1e-12 * np.max(np.abs(c_fast))
    l2_nodes = np.sum(np.abs(f.values) ** 2) * g.cell_volume
    l2_coeffs = np.sum(np.abs(c_fast) ** 2)
    assert abs(l2_nodes / l2_coeffs - 1.0) < 1e-12


def test_laplacian_multiplier_interval():
    g = build_grid((np.pi,), 15)
    lap = apply_laplacian(mode(g, (0,))).coeffs
    assert lap[0] == pytest.approx(-1.0, rel=1e-15)


def test_laplacian_multiplier_square():
    g = build_grid((1.0, 1.0), (7, 7))
    lap = apply_laplacian(mode(g, (0, 0))).coeffs
    assert lap[0, 0] == pytest.approx(-2 * np.pi ** 2, rel=1e-14)


def test_laplacian_zero():
    g = build_grid((1.0, 1.0), (7, 15))
    assert not np.any(apply_laplacian(SpectralCoeffs(g, g.zeros())).coeffs)


def test_laplacian_vs_finite_differences():
    # smooth field vanishing at the walls; FD error falls by ~4x per halving
    errs = []
    for n in (63, 127, 255):
        g = build_grid((1.0,), n)
        x = g.axes[0]
        f = x ** 2 * (1 - x) ** 2 * np.exp(x)
        spec = g.to_values(-g.eigenvalues * g.to_coeffs(f)).real
        ext = np.concatenate([[0.0], f, [0.0]])
        fd = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / g.spacing[0] ** 2
        inner = (x > 0.2) & (x < 0.8)
        errs.append(np.max(np.abs(spec - fd)[inner]))
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(order > 1.8)


def test_sobolev_unit_mode():
    g = build_grid((np.pi,), 15)
    c = mode(g, (0,))
    assert sobolev_norm(c, 0) == pytest.approx(1.0)
    assert sobolev_norm(c, 2) == pytest.approx(2.0)


def test_sobolev_h1_of_sine():
    g = build_grid((np.pi,), 31)
    a = 0.7
    f = ComplexField(g, a * np.sin(g.axes[0]))
    # ||a sin||_{L2} = a sqrt(pi/2); (1 + mu_1)^(1/2) = sqrt(2)
    assert sobolev_norm(f, 1) == pytest.approx(a * np.sqrt(np.pi / 2) * np.sqrt(2.0), rel=1e-13)


def test_sobolev_rejects_index():
    g = build_grid((1.0,), 7)
    with pytest.raises(ValueError):
        sobolev_norm(mode(g, (0,)), 3)


def test_propagator_identity_and_period(rng):
    g = build_grid((np.pi,), 31)
    c = dst_forward(random_field(g, rng))
    np.testing.assert_array_equal(linear_propagator(c, 0.0).coeffs, c.coeffs)
    m = mode(g, (0,))
    assert abs(linear_propagator(m, 2 * np.pi).coeffs[0] - 1.0) < 1e-14


def test_propagator_rejects_nonfinite():
    g = build_grid((1.0,), 7)
    with pytest.raises(ValueError):
        linear_propagator(mode(g, (0,)), np.nan)


def test_gradient_of_mode():
    g = build_grid((2.0, 1.0), (31, 15))
    x, y = g.coords
    c = g.to_coeffs(np.sin(np.pi * x / 2.0) * np.sin(2 * np.pi * y))
    gx, gy = gradient_values(g, c)
    np.testing.assert_allclose(gx.real, np.pi / 2 * np.cos(np.pi * x / 2) * np.sin(2 * np.pi * y), atol=1e-12)
    np.testing.assert_allclose(gy.real, 2 * np.pi * np.sin(np.pi * x / 2) * np.cos(2 * np.pi * y), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-50, 50), s=st.floats(-50, 50), seed=st.integers(0, 2 ** 32 - 1))
def test_propagator_group_and_unitary(t, s, seed):
    g = build_grid((1.0, 1.5), (7, 15))
    c = dst_forward(random_field(g, np.random.default_rng(seed)))
    a = linear_propagator(linear_propagator(c, s), t).coeffs
    b = linear_propagator(c, t + s).coeffs
    scale = np.max(np.abs(c.coeffs))
    # phases mu (t + s) reach ~1e4 rad, so roundoff in the argument dominates
    assert np.max(np.abs(a - b)) < 1e-10 * scale
    n0 = np.linalg.norm(c.coeffs)
    assert abs(np.linalg.norm(linear_propagator(c, t).coeffs) / n0 - 1.0) < 1e-13


@settings(max_examples=20, deadline=None)
@given(n=st.sampled_from(FAST_N), seed=st.integers(0, 2 ** 32 - 1))
def test_round_trip_property(n, seed):
    g = build_grid((0.5 + seed % 7,), n)
    f = random_field(g, np.random.default_rng(seed))
    back = g.to_values(g.to_coeffs(f.values))
    assert np.max(np.abs(back - f.values)) <= 1e-12 * np.max(np.abs(f.values))
