import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nlsctl.dynamics import (
    Controller,
    Monitors,
    Outcome,
    RelaxationStepper,
    SimState,
    StepControl,
    Trajectory,
    adaptive_dt,
    detect_blowup,
    energy,
    evolve,
    fit_blowup,
    gn_energy_bound_check,
    grad_norm,
    mass,
    second_differences,
    strang_step,
    virial,
)
from nlsctl.ground_state import assemble_Q_on_grid, q_1d_exact
from nlsctl.spectral import ComplexField, build_grid, linear_propagator, dst_forward


@pytest.fixture(scope="module")
def line():
    return build_grid((50.0,), 1023)


@pytest.fixture(scope="module")
def soliton(line, gs1):
    return assemble_Q_on_grid(gs1, line, (25.0,), 1.0)


def sine_mode(grid, a):
    return ComplexField(grid, a * np.sin(grid.axes[0] * np.pi / grid.lengths[0]).astype(complex))


class Manufactured(Controller):
    """Forcing that makes psi*(t, x) = (1 + t) e^{it} sin x an exact solution on (0, pi)."""

    def __init__(self, grid, p):
        self.x = grid.axes[0]
        self._p = p

    def exact(self, t):
        return (1 + t) * np.exp(1j * t) * np.sin(self.x)

    def forcing(self, t):
        u = self.exact(t)
        ut = np.exp(1j * t) * np.sin(self.x) + 1j * u
        # v = i u_t + u_xx + |u|^(p-1) u
        return 1j * ut - u + np.abs(u) ** (self._p - 1) * u


def test_mode_mass_and_kinetic():
    g = build_grid((np.pi,), 63)
    a = 0.8
    f = sine_mode(g, a)
    assert mass(f) == pytest.approx(a * a * np.pi / 2, rel=1e-13)
    assert 0.5 * grad_norm(f) ** 2 == pytest.approx(a * a * np.pi / 4, rel=1e-13)


def test_soliton_energy_zero(soliton, gs1):
    # E(Q) = 0 in the mass-critical case; oracle by adaptive quadrature
    kin, _ = quad(lambda x: 3 ** 0.5 * np.tanh(2 * x) ** 2 / np.cosh(2 * x), -25, 25, limit=200)
    pot, _ = quad(lambda x: q_1d_exact(x) ** 6, -25, 25, limit=200)
    assert abs(0.5 * kin - pot / 6) < 1e-12
    assert abs(energy(soliton)) < 1e-9
    assert mass(soliton) == pytest.approx(gs1.mass_sq, rel=1e-12)


def test_small_amplitude_is_linear():
    g = build_grid((np.pi,), 63)
    errs = []
    for a in (1e-2, 1e-3, 1e-4):
        f = sine_mode(g, a)
        out = strang_step(SimState(0.0, f), 0.05).field
        lin = g.to_values(linear_propagator(dst_forward(f), 0.05).coeffs)
        errs.append(np.max(np.abs(out.values - lin)) / a)
    # relative deviation ~ a^(p-1) = a^4
    assert errs[2] < 1e-15 + 1e-6 * errs[0]


def test_step_conserves_mass(soliton):
    psi = ComplexField(soliton.grid, 1.3 * soliton.values)
    out = strang_step(SimState(0.0, psi), 0.01)
    assert abs(mass(out.field) / mass(psi) - 1) < 1e-13


def test_step_rejects_dt(soliton):
    with pytest.raises(ValueError):
        strang_step(SimState(0.0, soliton), 0.0)
    with pytest.raises(ValueError):
        SimState(0.0, soliton, dt=-1.0)


def test_soliton_modulus_second_order(soliton):
    # e^{it} Q is exact on the line; the box is wide enough that walls do not matter
    # the splitting constant is large here; the asymptotic regime starts near dt = 0.01
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        tr = evolve(SimState(0.0, soliton, dt), 2 * np.pi, monitor_every=10 ** 9,
                    steps=StepControl(adaptive=False, dt_fixed=dt))
        errs.append(np.max(np.abs(np.abs(tr.final.values) - np.abs(soliton.values))))
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((order > 1.8) & (order < 2.2))


def test_zero_field_stays_zero():
    g = build_grid((1.0, 1.0), (15, 15))
    tr = evolve(SimState(0.0, ComplexField(g, g.zeros())), 1.0)
    assert tr.outcome is Outcome.COMPLETED
    assert not np.any(tr.final.values)
    assert tr.state.t == 1.0


def test_evolve_arguments(soliton):
    with pytest.raises(ValueError):
        evolve(SimState(1.0, soliton), 0.5)
    with pytest.raises(ValueError):
        evolve(SimState(0.0, soliton), 0.5, method="rk45")


def test_monitor_series_consistent(soliton):
    tr = evolve(SimState(0.0, soliton), 0.5, monitor_every=7, steps=StepControl(c_cfl=0.05, dt_max=0.01))
    mon = tr.monitors
    n = len(mon)
    assert n >= 3
    for col in Monitors.COLUMNS:
        assert len(getattr(mon, col)) == n
    assert np.all(np.diff(mon.t) > 0)
    assert mon.t[-1] == 0.5
    assert mon.as_array().shape == (n, 7)


def test_mass_per_thousand_steps(soliton):
    psi = ComplexField(soliton.grid, 0.95 * soliton.values)
    tr = evolve(SimState(0.0, psi), 10.0, monitor_every=10 ** 9,
                steps=StepControl(adaptive=False, dt_fixed=0.01))
    assert tr.steps == 1000
    assert abs(mass(tr.final) / mass(psi) - 1) < 1e-12


def test_strang_global_order(soliton):
    psi = ComplexField(soliton.grid, 0.95 * soliton.values)
    run = lambda dt: evolve(SimState(0.0, psi), 1.0, monitor_every=10 ** 9,
                            steps=StepControl(adaptive=False, dt_fixed=dt)).final.values
    dts = (0.02, 0.01, 0.005)
    ref = run(dts[-1] / 8)
    errs = [np.sqrt(np.sum(np.abs(run(dt) - ref) ** 2)) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_duhamel_local_error_third_order():
    g = build_grid((np.pi,), 63)
    ctl = Manufactured(g, 5.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        out = strang_step(SimState(0.0, ComplexField(g, ctl.exact(0.0))), dt, ctl, p=5.0)
        errs.append(np.max(np.abs(out.field.values - ctl.exact(dt))))
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((order > 2.7) & (order < 3.3))


def test_manufactured_global_second_order():
    g = build_grid((np.pi,), 63)
    ctl = Manufactured(g, 5.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        tr = evolve(SimState(0.0, ComplexField(g, ctl.exact(0.0))), 0.5, ctl, monitor_every=10 ** 9,
                    steps=StepControl(adaptive=False, dt_fixed=dt), p=5.0)
        errs.append(np.max(np.abs(tr.final.values - ctl.exact(0.5))))
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((order > 1.8) & (order < 2.2))


def test_relaxation_cross_check(soliton):
    psi = ComplexField(soliton.grid, 0.95 * soliton.values)
    out = {}
    for method in ("strang", "relaxation"):
        tr = evolve(SimState(0.0, psi), 1.0, monitor_every=10 ** 9, method=method,
                    steps=StepControl(adaptive=False, dt_fixed=0.005, dt_max=0.005))
        out[method] = tr.final
    # mass is an exact invariant of Crank-Nicolson
    assert abs(mass(out["relaxation"]) / mass(psi) - 1) < 1e-10
    diff = np.max(np.abs(out["strang"].values - out["relaxation"].values))
    assert diff < 1e-3 * np.max(np.abs(psi.values))


def test_relaxation_stepper_direct(soliton):
    st_ = RelaxationStepper(soliton.grid, 0.01)
    s = SimState(0.0, soliton)
    for _ in range(5):
        s = st_.step(s)
    assert s.t == pytest.approx(0.05)
    assert abs(mass(s.field) / mass(soliton) - 1) < 1e-10


def test_adaptive_dt_cubic_scaling():
    g = build_grid((1.0, 1.0), (15, 15))
    big = ComplexField(g, np.full(g.shape, 100.0, dtype=complex))
    bigger = ComplexField(g, np.full(g.shape, 200.0, dtype=complex))
    a = adaptive_dt(SimState(0.0, big), c_cfl=0.1, dt_max=1.0)
    b = adaptive_dt(SimState(0.0, bigger), c_cfl=0.1, dt_max=1.0)
    assert a / b == pytest.approx(4.0, rel=1e-3)
    small = ComplexField(g, np.full(g.shape, 1e-3, dtype=complex))
    assert adaptive_dt(SimState(0.0, small), c_cfl=0.1, dt_max=1e-3) == 1e-3


def test_detect_blowup_rules():
    assert not detect_blowup(10.0, 1.0, 1e-3)
    assert detect_blowup(51.0, 1.0, 1e-3)
    assert detect_blowup(1.0, 1.0, 1e-13)
    assert not detect_blowup(5.0, 0.0, 1e-3)


def test_linear_mode_never_flags():
    g = build_grid((np.pi,), 63)
    tr = evolve(SimState(0.0, sine_mode(g, 1e-3)), 5.0, steps=StepControl(r_max=1.0 + 1e-9))
    assert tr.outcome is Outcome.COMPLETED


def test_dt_underflow_outcome(soliton):
    tr = evolve(SimState(0.0, soliton), 1.0, steps=StepControl(dt_min=0.5, dt_max=0.1))
    assert tr.outcome is Outcome.DT_UNDERFLOW
    assert tr.steps == 0


def test_virial_basic():
    g = build_grid((2.0, 2.0), (63, 63))
    assert virial(ComplexField(g, g.zeros())) == 0.0
    x, y = g.coords
    near = ComplexField(g, np.exp(-40 * ((x - 1.0) ** 2 + (y - 1.0) ** 2)).astype(complex))
    far = ComplexField(g, np.exp(-40 * ((x - 1.5) ** 2 + (y - 1.0) ** 2)).astype(complex))
    assert virial(far) > virial(near)


def test_gn_trivial_and_subcritical(gs2):
    g = build_grid((1.0, 1.0), (31, 31))
    assert gn_energy_bound_check(ComplexField(g, g.zeros()), gs2)
    x, y = g.coords
    f = np.sin(np.pi * x) * np.sin(np.pi * y)
    f = f * np.sqrt(0.5 * gs2.mass_sq / (np.sum(f ** 2) * g.cell_volume))
    field = ComplexField(g, f.astype(complex))
    assert gn_energy_bound_check(field, gs2)
    assert energy(field) > 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), frac=st.floats(0.05, 2.0))
def test_gn_property_2d(gs2, seed, frac):
    g = build_grid((1.0, 1.0), (31, 31))
    rng = np.random.default_rng(seed)
    c = np.zeros(g.shape, dtype=complex)
    c[:6, :6] = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    f = g.to_values(c)
    f *= np.sqrt(frac * gs2.mass_sq / (np.sum(np.abs(f) ** 2) * g.cell_volume))
    assert gn_energy_bound_check(ComplexField(g, f), gs2)


def test_second_differences_exact_on_quadratic():
    t = np.cumsum(np.random.default_rng(0).uniform(0.1, 0.5, 20))
    _, d2 = second_differences(t, 3 * t ** 2 - t + 2)
    np.testing.assert_allclose(d2, 6.0, rtol=1e-9)


def test_fit_blowup_synthetic(soliton):
    T = 0.37
    t = T * (1 - np.logspace(0, -3, 400))
    h = 2.0 / (T - t)
    tr = Trajectory(SimState(t[-1], soliton), Monitors(), Outcome.BLOWUP, h1_series=(tuple(t), tuple(h)))
    fit = fit_blowup(tr)
    assert fit.T_fit == pytest.approx(T, rel=1e-10)
    assert fit.slope == pytest.approx(-1.0, abs=1e-8)


def test_fit_blowup_rejects_growth_free(soliton):
    t = np.linspace(0, 1, 50)
    tr = Trajectory(SimState(1.0, soliton), Monitors(), Outcome.COMPLETED,
                    h1_series=(tuple(t), tuple(np.ones_like(t))))
    with pytest.raises(ValueError):
        fit_blowup(tr)
