import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsctl.dynamics import mass
from nlsctl.profile import (
    BlowupSpec,
    CutoffSpec,
    cutoff_on_grid,
    exterior_norm,
    fit_exponential_rate,
    fit_power_law,
    nls_residual,
    nls_residual_field,
    profile_h2_growth,
    smooth_bump,
    smooth_step,
    synth_profile,
)
from nlsctl.spectral import ComplexField, build_grid


@pytest.fixture(scope="module")
def sq():
    return build_grid((2.0, 2.0), (255, 255))


@pytest.fixture(scope="module")
def spec2():
    return BlowupSpec.from_scale([(1.0, 1.0)], 1.0, a=0.2, r_inner=0.4, r_outer=0.8)


def test_bump_values():
    c = CutoffSpec((0.5,), 0.1, 0.3)
    assert smooth_bump(c, np.array([0.5])) == 1.0
    assert smooth_bump(c, np.array([0.5 + 0.6])) == 0.0
    assert abs(smooth_bump(c, np.array([0.5 + 0.2])) - 0.5) < 1e-12


def test_bump_2d_midpoint():
    c = CutoffSpec((1.0, 1.0), 0.2, 0.6)
    x = np.array([1.0 + 0.4 / np.sqrt(2), 1.0 + 0.4 / np.sqrt(2)])
    assert abs(smooth_bump(c, x) - 0.5) < 1e-12


def test_step_monotone_and_flat():
    s = np.linspace(-0.5, 1.5, 4001)
    y = smooth_step(s)
    assert np.all(np.diff(y) <= 1e-15)
    assert np.all(y[s <= 0] == 1.0) and np.all(y[s >= 1] == 0.0)
    # odd symmetry about the midpoint
    np.testing.assert_allclose(smooth_step(s) + smooth_step(1 - s), 1.0, atol=1e-14)


@pytest.mark.parametrize("ri,ro", [(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (-1.0, 1.0)])
def test_cutoff_validation(ri, ro):
    with pytest.raises(ValueError):
        CutoffSpec((0.0,), ri, ro)


def test_cutoff_derivatives_closed_form():
    # closed-form Laplacian against spectral differentiation of chi; the
    # bump is C-infinity, so the gap closes faster than any power of h
    c = CutoffSpec((1.0, 1.0), 0.3, 0.7)
    errs = []
    for n in (255, 511):
        g = build_grid((2.0, 2.0), (n, n))
        cf = cutoff_on_grid(c, g)
        lap = g.to_values(-g.eigenvalues * g.to_coeffs(cf.chi)).real
        errs.append(np.max(np.abs(lap - cf.lap)) / np.max(np.abs(cf.lap)))
    assert errs[1] < 1e-4
    assert np.log2(errs[0] / errs[1]) > 4.0


def test_spec_validation():
    c = CutoffSpec((1.0,), 0.2, 0.4)
    with pytest.raises(ValueError):
        BlowupSpec(((1.0,),), -1.0, 0.1, (c,))
    with pytest.raises(ValueError):
        BlowupSpec.from_scale([(1.0,), (1.5,)], 1.0, r_inner=0.2, r_outer=0.4)
    with pytest.raises(ValueError):
        BlowupSpec.from_scale([(1.0,), (1.0,)], 1.0, r_inner=0.2, r_outer=0.4)
    with pytest.raises(ValueError):
        BlowupSpec(((1.0,),), 1.0, 0.1, (CutoffSpec((0.5,), 0.2, 0.4),))
    sp = BlowupSpec.from_scale([(0.1,)], 1.0, r_inner=0.2, r_outer=0.4)
    with pytest.raises(ValueError):
        sp.validate_domain(build_grid((1.0,), 63).domain)


def test_modulus_and_phase_at_point_2d(gs2, sq, spec2):
    t = 0.3 * spec2.T_lambda
    f = synth_profile(spec2, gs2, t, sq)
    i = (127, 127)  # node (1, 1)
    tau = spec2.T_lambda - t
    L = spec2.lam * tau
    assert abs(f.values[i]) == pytest.approx(gs2.q0 / L, rel=1e-13)
    want = np.mod(1.0 / (spec2.lam ** 2 * tau), 2 * np.pi)
    got = np.mod(np.angle(f.values[i]), 2 * np.pi)
    assert got == pytest.approx(want, abs=1e-9)


def test_modulus_1d_scaling(gs1):
    g = build_grid((2.0,), 1023)
    sp = BlowupSpec.from_scale([(1.0,)], 4.0, a=0.5, r_inner=0.3, r_outer=0.6)
    t = 0.5 * sp.T_lambda
    f = synth_profile(sp, gs1, t, g)
    # L^(-d/2) with d = 1
    assert abs(f.values[511]) == pytest.approx(gs1.q0 / np.sqrt(sp.scale(t)), rel=1e-13)


def test_mass_approaches_critical(gs2, sq, spec2):
    errs = []
    for frac in (0.0, 0.5, 0.75):
        f = synth_profile(spec2, gs2, frac * spec2.T_lambda, sq)
        errs.append(abs(mass(f) / gs2.mass_sq - 1.0))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-7


def test_rejects_late_time(gs2, sq, spec2):
    with pytest.raises(ValueError):
        synth_profile(spec2, gs2, spec2.T_lambda, sq)
    with pytest.raises(ValueError):
        profile_h2_growth(spec2, gs2, -1e-3, sq)


def test_additive_over_points(gs1):
    g = build_grid((4.0,), 2047)
    a, b = (1.0,), (3.0,)
    kw = dict(a=0.5, r_inner=0.3, r_outer=0.6)
    both = BlowupSpec.from_scale([a, b], 3.0, **kw)
    t = 0.2 * both.T_lambda
    s = synth_profile(BlowupSpec.from_scale([a], 3.0, **kw), gs1, t, g).values
    s = s + synth_profile(BlowupSpec.from_scale([b], 3.0, **kw), gs1, t, g).values
    np.testing.assert_array_equal(synth_profile(both, gs1, t, g).values, s)


def test_exterior_norm_basic(sq, spec2):
    r = sq.distance_from((1.0, 1.0))
    inside = ComplexField(sq, np.where(r < 0.3, 1.0 + 0j, 0.0))
    assert exterior_norm(inside, spec2, 0) == 0.0
    ones = ComplexField(sq, np.ones(sq.shape, dtype=complex))
    count = np.count_nonzero(r > 0.4)
    assert exterior_norm(ones, spec2, 0) == pytest.approx(np.sqrt(count * sq.cell_volume), rel=1e-14)
    assert exterior_norm(ones, spec2, 2) > exterior_norm(ones, spec2, 1) > exterior_norm(ones, spec2, 0)
    with pytest.raises(ValueError):
        exterior_norm(ones, spec2, 3)


def test_exterior_decays_exponentially(gs2, sq, spec2):
    T = spec2.T_lambda
    ts = T * (1 - np.array([0.5, 0.3, 0.2, 0.15, 0.1]))
    ex = [exterior_norm(synth_profile(spec2, gs2, t, sq), spec2, 0) for t in ts]
    assert np.all(np.diff(ex) < 0)
    _, delta = fit_exponential_rate(1.0 / spec2.scale(ts), ex)
    # tail of Q outside r_inner / L: rate close to D0 * r_inner
    assert delta > 0
    assert delta == pytest.approx(gs2.decay[1] * 0.4, rel=0.15)


def test_h2_growth_power_law(gs2, sq, spec2):
    T = spec2.T_lambda
    tau = T * np.array([1.0, 0.7, 0.5, 0.35, 0.25])
    h2 = [profile_h2_growth(spec2, gs2, T - x, sq) for x in tau]
    _, beta = fit_power_law(tau, h2)
    assert 1.0 <= beta <= 3.0


def test_h2_grows_with_lambda(gs2, sq):
    # T_lambda = a / lam^2, so at fixed t the core width a / lam - lam t shrinks
    a = BlowupSpec.from_scale([(1.0, 1.0)], 1.0, a=0.2, r_inner=0.4, r_outer=0.8)
    b = BlowupSpec.from_scale([(1.0, 1.0)], 2.0, a=0.2, r_inner=0.4, r_outer=0.8)
    t = 0.5 * b.T_lambda
    assert profile_h2_growth(b, gs2, t, sq) > profile_h2_growth(a, gs2, t, sq)


def test_residual_core_vs_annulus(gs2, sq, spec2):
    t = 0.5 * spec2.T_lambda
    r = sq.distance_from((1.0, 1.0))
    core, ann = r < 0.2, (r > 0.4) & (r < 0.8)
    errs = []
    for dt in (1e-4, 5e-5, 2.5e-5):
        F = nls_residual_field(spec2, gs2, t, dt, sq)
        errs.append(np.max(np.abs(F[core])))
        # exact solution where the cutoff is 1: only the dt^2 difference error is left
        assert errs[-1] < 0.01 * np.max(np.abs(F[ann]))
    ratio = np.array(errs[:-1]) / errs[1:]
    np.testing.assert_allclose(ratio, 4.0, rtol=0.05)


def test_residual_preconditions(gs2, sq, spec2):
    with pytest.raises(ValueError):
        nls_residual(spec2, gs2, 1e-5, 2e-5, sq)
    with pytest.raises(ValueError):
        nls_residual(spec2, gs2, spec2.T_lambda * 0.99, spec2.T_lambda * 0.02, sq)


@settings(max_examples=25, deadline=None)
@given(ri=st.floats(0.05, 1.0), w=st.floats(0.05, 1.0), x=st.floats(-3, 3))
def test_bump_range_property(ri, w, x):
    c = CutoffSpec((0.0,), ri, ri + w)
    v = float(smooth_bump(c, np.array([x])))
    assert 0.0 <= v <= 1.0
    if abs(x) <= ri:
        assert v == 1.0
    if abs(x) >= ri + w:
        assert v == 0.0
