"""Compare the compiled kernels with the numpy/scipy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--pipeline]

Prints the best-of-N wall time per kernel and backend, and the speedup.
With --pipeline the synthetic room is also fitted end to end on each backend.
"""

import argparse
import time

import numpy as np

from pcmm import _kernels, synthetic
from pcmm.bspline import build_knots
from pcmm.evaluation import evaluate
from pcmm.pipeline import run_pipeline


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def use_backend(mod):
    for name in ("nn_sqdist", "any_pair_within", "bspline_basis"):
        setattr(_kernels, name, getattr(mod, name))


def kernel_cases(rng):
    room = synthetic.room(pitch=0.01, sigma=0.005, seed=0)
    query = room[rng.choice(len(room), 60_000, replace=False)] + rng.normal(size=(60_000, 3)) * 0.01
    near_a = rng.random((2000, 3)) * [1.0, 1.0, 0.01]
    near_b = near_a + [1.2, 0, 0]
    knots = build_knots(40)
    u = rng.random(200_000)
    return {
        "nn_sqdist 60k -> 540k": lambda k: k.nn_sqdist(query, room),
        "nn_sqdist 540k -> 60k": lambda k: k.nn_sqdist(room, query),
        "any_pair_within (miss)": lambda k: k.any_pair_within(near_a, near_b, 0.09),
        "any_pair_within (hit)": lambda k: k.any_pair_within(near_a, near_a + [0.05, 0, 0], 0.09),
        "bspline_basis 200k": lambda k: k.bspline_basis(knots, 3, u),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pipeline", action="store_true", help="also time the full room pipeline")
    args = ap.parse_args(argv)

    compiled = _kernels.compiled_backend
    if compiled is None:
        print("compiled kernels are not built; only the fallback can be timed")
    backends = [b for b in (compiled, _kernels.python_backend) if b is not None]
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)

    header = f"{'kernel':28s}" + "".join(f"{b.BACKEND + ' [s]':>14s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, fn in cases.items():
        times = [best_of(lambda: fn(b), args.repeat) for b in backends]
        line = f"{name:28s}" + "".join(f"{t:14.4f}" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:10.1f}x"
        print(line)

    if args.pipeline:
        pts = synthetic.room()
        original = {n: getattr(_kernels, n) for n in ("nn_sqdist", "any_pair_within", "bspline_basis")}
        for b in backends:
            use_backend(b)
            t0 = time.perf_counter()
            model, stats = run_pipeline(pts)
            fit = time.perf_counter() - t0
            t0 = time.perf_counter()
            rep = evaluate(model, pts)
            ev = time.perf_counter() - t0
            print(f"room pipeline [{b.BACKEND}]: fit {fit:.2f}s, evaluate {ev:.2f}s, "
                  f"precision {rep.precision_rmse:.4f}, planes {len(model.planes)}")
        for n, f in original.items():
            setattr(_kernels, n, f)


if __name__ == "__main__":
    main()
