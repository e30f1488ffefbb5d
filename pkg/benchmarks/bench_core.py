"""Compiled versus pure-Python kernels: GJK overlap batches and the planar
convolution pair.

    python benchmarks/bench_core.py [--n-gjk 20000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from fmt_engine import _backend
from fmt_engine.geometry import Spheroid
from fmt_engine.kinematic import intersects_batch, quat_to_matrix, random_quaternions
from fmt_engine.meshes import icosphere
from fmt_engine.planar_dft import Grid1D, planar_kernels


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return min(ts), out


def gjk_case(body, n, rng):
    RA = quat_to_matrix(random_quaternions(rng, n))
    RB = quat_to_matrix(random_quaternions(rng, n))
    tA = np.zeros((n, 3))
    tB = rng.uniform(-4.5, 4.5, (n, 3))
    return lambda be: intersects_batch(body, RA, tA, body, RB, tB, backend=be)


def conv_case(n_per_R, rng):
    R = 0.5
    grid = Grid1D.for_wall(R, R / n_per_R, 20)
    k = planar_kernels(R, grid)
    W = k.matrix()
    ext = rng.random(grid.n_points + 2 * k.P)
    gext = rng.standard_normal((W.shape[0], grid.n_points + 2 * k.P))

    def run(be):
        core = _backend.get(be)
        return core.convolve_multi(ext, W), core.correlate_multi(gext, W)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-gjk", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        _backend.get("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    cases = [
        (f"gjk spheroid(1,2) x{args.n_gjk}", gjk_case(Spheroid(1.0, 2.0), args.n_gjk, rng)),
        (f"gjk icosphere(2) x{args.n_gjk // 10}", gjk_case(icosphere(2), args.n_gjk // 10, rng)),
        ("convolve+correlate dz=R/100", conv_case(100, rng)),
        ("convolve+correlate dz=R/400", conv_case(400, rng)),
    ]
    print(f"{'case':34s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  agree")
    for name, fn in cases:
        tp, op = best_of(lambda: fn("python"), args.repeat)
        tc, oc = best_of(lambda: fn("cython"), args.repeat)
        if isinstance(op, tuple):
            agree = all(np.allclose(a, b, rtol=1e-12, atol=1e-12) for a, b in zip(op, oc))
        else:
            agree = bool(np.array_equal(op, oc))
        print(f"{name:34s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
