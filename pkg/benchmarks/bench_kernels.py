"""Compare the compiled and numpy flow kernels on fixed step budgets.

Usage::

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Both backends advance identical initial states by explicit Euler steps until
max|II| reaches 30x its initial value or the step budget runs out; the script
reports the step count, wall time per step, the speedup and the largest
position difference between the two results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mcflab import _pykernels
from mcflab.geometry import compute_geometry
from mcflab.immersion import circle, dumbbell, ellipse, sphere

try:
    from mcflab import _ckernels
except ImportError:  # extension not built
    _ckernels = None

CASES = {
    "circle-512": (lambda: circle(1.0, 512), _pykernels.CURVE, 1),
    "ellipse-512": (lambda: ellipse(2.0, 1.0, 512), _pykernels.CURVE, 1),
    "sphere-129": (lambda: sphere(1.0, 129), _pykernels.PROFILE, 2),
    "dumbbell-601": (lambda: dumbbell(samples=601), _pykernels.PROFILE, 2),
}
STOP_FACTOR = 30.0


def time_backend(backend, make, kind, m, steps, repeat):
    best = np.inf
    for _ in range(repeat):
        imm = make()
        stop_q = STOP_FACTOR * float(np.sqrt(compute_geometry(imm).norm_II_sq.max()))
        pos = np.ascontiguousarray(imm.positions, dtype=float)
        diag = np.zeros((steps + 1, len(_pykernels.DIAG_COLUMNS)))
        t0 = time.perf_counter()
        n, t, status = backend.advance(kind, pos, imm.spacing[0], 0.2, m, 2, stop_q, steps,
                                       0.0, diag)
        best = min(best, time.perf_counter() - t0)
    return best / max(n, 1), pos, n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--cases", default=",".join(CASES))
    args = ap.parse_args(argv)
    print(f"{'case':<14}{'steps':>8}{'python us/step':>16}{'cython us/step':>16}{'speedup':>10}{'max |dx|':>12}")
    for name in args.cases.split(","):
        make, kind, m = CASES[name]
        tp, pos_p, n = time_backend(_pykernels, make, kind, m, args.steps, args.repeat)
        if _ckernels is None:
            print(f"{name:<14}{n:>8}{tp * 1e6:>16.2f}{'n/a':>16}{'n/a':>10}{'n/a':>12}")
            continue
        tc, pos_c, _ = time_backend(_ckernels, make, kind, m, args.steps, args.repeat)
        diff = float(np.max(np.abs(pos_p - pos_c)))
        print(f"{name:<14}{n:>8}{tp * 1e6:>16.2f}{tc * 1e6:>16.2f}{tp / tc:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
