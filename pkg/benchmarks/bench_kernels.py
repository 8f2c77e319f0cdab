"""Numba vs numpy timings for the hot kernels, plus an end-to-end evolve.

    python benchmarks/bench_kernels.py [--sizes 4095 65535] [--repeat 20]

The end-to-end part runs the same short blow-up evolution in two
subprocesses, one with NLSCTL_NO_NUMBA=1, so the module-level switch is
exercised exactly as a user would flip it.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from nlsctl import _accel

EVOLVE_SNIPPET = """
import time, numpy as np
from nlsctl import backend_name
from nlsctl.spectral import build_grid
from nlsctl.dynamics import SimState, StepControl, evolve
from nlsctl.ground_state import ground_state_1d
from nlsctl.profile import BlowupSpec, synth_profile
gs = ground_state_1d()
g = build_grid((np.pi,), 4095)
sp = BlowupSpec.from_scale([(np.pi / 2,)], 20.0, a=2.0, r_inner=1.0, r_outer=1.5)
psi = synth_profile(sp, gs, 0.0, g)
evolve(SimState(0.0, psi), 1e-6, steps=StepControl(c_cfl=0.01, dt_max=1e-7))
t0 = time.perf_counter()
tr = evolve(SimState(0.0, psi), 0.5 * sp.T_lambda, monitor_every=10**9, steps=StepControl(c_cfl=0.01, dt_max=1e-4))
print(backend_name(), tr.steps, time.perf_counter() - t0, tr.monitors.h1[-1])
"""


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>8}{'numpy [ms]':>14}{'numba [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for n in sizes:
        psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        w = rng.random(n)
        g0, gh, g1 = (rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(3))
        cases = {
            "phase_rotate": (lambda: _accel.phase_rotate_np(psi, 1e-3, 5.0),
                             lambda: _accel.phase_rotate_nb(psi, 1e-3, 5.0)),
            "rk4_forced": (lambda: _accel.rk4_forced_np(psi, w, g0, gh, g1, 1e-3, 5.0),
                           lambda: _accel.rk4_forced_nb(psi, w, g0, gh, g1, 1e-3, 5.0)),
        }
        for name, (f_np, f_nb) in cases.items():
            t_np = best_of(f_np, repeat)
            t_nb = best_of(f_nb, repeat)
            diff = float(np.max(np.abs(f_np() - f_nb())))
            print(f"{name:<14}{n:>8}{1e3 * t_np:>14.3f}{1e3 * t_nb:>14.3f}{t_np / t_nb:>10.1f}{diff:>12.2e}")
    t_py = best_of(lambda: _accel.shoot_radial_py(2.2062, 2.0, 1e-3, 20.0), 1)
    t_nb = best_of(lambda: _accel.shoot_radial_nb(2.2062, 2.0, 1e-3, 20.0), max(1, repeat // 4))
    print(f"{'shoot_radial':<14}{20000:>8}{1e3 * t_py:>14.3f}{1e3 * t_nb:>14.3f}{t_py / t_nb:>10.1f}")


def bench_evolve():
    print("\nend-to-end evolve (n=4095, half the blow-up window):")
    for flag in ("0", "1"):
        env = dict(os.environ, NLSCTL_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EVOLVE_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, steps, wall, h1 = out.stdout.split()
        print(f"  {backend:<6} steps={steps} wall={float(wall):.3f}s final |grad psi|={float(h1):.12g}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4095, 65535, 255 * 255])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-evolve", action="store_true")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    bench_kernels(args.sizes, args.repeat)
    if not args.no_evolve:
        bench_evolve()


if __name__ == "__main__":
    main()
