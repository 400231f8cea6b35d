"""Compiled kernels against their numpy fallbacks.

Times each kernel on the same inputs under both backends, then a short
end-to-end tightening run on an ellipsoid of revolution with the backend
chosen through WIDTHFLOW_PURE_PYTHON.

    python3 benchmarks/bench_kernels.py [--points N] [--repeat R] [--no-e2e]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from widthflow import _kernels_py, geom

try:
    from widthflow import _kernels
except ImportError:
    _kernels = None

E2E = """
import sys, time
from widthflow import geom, kernels, mcf, sweepout as sw
surf = geom.Ellipsoid(axes=(1.5, 1.0, 0.8))
if sys.argv[1] == "profile":
    surf = mcf.as_flowable(geom.Ellipsoid(axes=(1.2, 1.0, 1.0)))
t0 = time.perf_counter()
rep, _ = sw.width(surf, {"M_slices": 32, "iterations": 5, "patience": 100})
print(kernels.BACKEND, time.perf_counter() - t0, repr(rep.width_original))
"""


def cases(n, rng):
    x = rng.standard_normal((n, 3)) * 2.0
    axes = np.array([1.5, 1.0, 0.8])
    prof = geom.AxisymmetricSurface.ellipsoid(1.0, 1.2)
    phi = rng.uniform(0.0, np.pi, n)
    rho = np.abs(x[:, 0]) + 0.1
    z = x[:, 1]
    ph0 = np.arctan2(rho, z)
    return {
        "ellipsoid_project": lambda m: m.ellipsoid_project(x, axes),
        "profile_eval": lambda m: m.profile_eval(phi, prof._coef, prof._h),
        "profile_project": lambda m: m.profile_project(rho, z, prof._coef, prof._h, ph0),
    }


def kernel_table(n, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'compiled [ms]':>15}{'speedup':>10}")
    for name, fn in cases(n, rng).items():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=repeat)) * 1e3
        if _kernels is None:
            print(f"{name:<20}{py:>12.2f}{'n/a':>15}{'':>10}")
            continue
        cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=repeat)) * 1e3
        print(f"{name:<20}{py:>12.2f}{cy:>15.2f}{py / cy:>9.1f}x")


def end_to_end(surface):
    out = {}
    for label, pure in (("numpy", "1"), ("compiled", "")):
        env = dict(os.environ, WIDTHFLOW_PURE_PYTHON=pure)
        r = subprocess.run([sys.executable, "-c", E2E, surface], env=env, capture_output=True,
                           text=True, check=True)
        backend, secs, W = r.stdout.split()
        out[label] = (backend, float(secs), float(W))
    print(f"\nend-to-end width on the {surface} surface, 32 slices, 5 iterations")
    for label, (backend, secs, W) in out.items():
        print(f"  {label:<9} backend={backend:<9} {secs:8.2f} s   W = {W:.12f}")
    if out["compiled"][0] == "compiled":
        print(f"  speedup {out['numpy'][1] / out['compiled'][1]:.1f}x, "
              f"|dW| = {abs(out['numpy'][2] - out['compiled'][2]):.1e}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--no-e2e", action="store_true")
    args = p.parse_args()
    print(f"{args.points} points, best of {args.repeat}\n")
    kernel_table(args.points, args.repeat)
    if not args.no_e2e:
        end_to_end("ellipsoid")
        end_to_end("profile")


if __name__ == "__main__":
    main()
