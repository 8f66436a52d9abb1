"""Numba vs numpy timing for the batched factor kernels.

    python benchmarks/bench_kernels.py                 # kernels only
    python benchmarks/bench_kernels.py --end-to-end    # also a full seq03 run per backend

The kernel table needs numba installed; the end-to-end comparison runs each
backend in a fresh interpreter, toggled with MSGRAPH_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np
from scipy.spatial.transform import Rotation

from msgraph import _kernels as K

KERNELS = ("odometry", "marker_obs", "wall_marker", "retract_poses")

E2E = """
import time
from msgraph import NoiseModel, generate, run, template_scene
ds = generate(template_scene("seq03"), NoiseModel(seed=0))
run(ds)                                  # warm-up (and JIT compile)
t = time.perf_counter()
r = run(ds)
print(f"{time.perf_counter() - t:.3f} {r.ate_aligned.rmse:.12f}")
"""


def make_inputs(n, seed=0):
    rng = np.random.default_rng(seed)

    def poses():
        return Rotation.random(n, random_state=rng).as_matrix(), rng.normal(size=(n, 3))

    a, b, c = poses(), poses(), poses()
    sph = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-1.2, 1.2, n), rng.normal(size=n)])
    delta = 0.3 * rng.normal(size=(n, 6))
    return {
        "odometry": (*a, *b, *c),
        "marker_obs": (*a, *b, *c),
        "wall_marker": (sph, *a),
        "retract_poses": (*a, delta),
    }


def best_of(fn, args, repeats):
    fn(*args)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(n, repeats):
    inputs = make_inputs(n)
    print(f"kernel timings, n={n}, best of {repeats} (ms)")
    print(f"{'kernel':<15}{'numpy':>10}{'numba':>10}{'speedup':>10}{'max |diff|':>14}")
    for name in KERNELS:
        args = inputs[name]
        f_np = getattr(K, f"{name}_numpy")
        t_np = best_of(f_np, args, repeats)
        f_nb = getattr(K, f"{name}_numba", None)
        if f_nb is None:
            print(f"{name:<15}{t_np * 1e3:>10.2f}{'-':>10}{'-':>10}{'-':>14}")
            continue
        t_nb = best_of(f_nb, args, repeats)
        diff = max(float(np.abs(np.asarray(x, float) - np.asarray(y, float)).max())
                   for x, y in zip(f_np(*args), f_nb(*args)))
        print(f"{name:<15}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


def bench_end_to_end():
    print("\nend-to-end seq03 run (s)")
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MSGRAPH_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        secs, rmse = out.stdout.split()
        print(f"{label:<8}{float(secs):>8.2f}   ATE {rmse}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("-n", type=int, default=2000, help="factors per batch")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)
    if not K.USE_NUMBA:
        print("numba backend disabled; only numpy timings are shown")
    bench_kernels(args.n, args.repeats)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
