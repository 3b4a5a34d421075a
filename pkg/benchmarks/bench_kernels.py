"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--paths 20000]

Both backends are imported directly, so HTL_PURE_PYTHON has no effect here.
Each row reports the best of ``--repeat`` runs and the speedup of the
compiled version.
"""
import argparse
import time

import numpy as np

from htl import _pykernels as py

try:
    from htl import _ckernels as ck
except ImportError:  # pragma: no cover
    raise SystemExit("the compiled extension is not built; run `pip install -e . --no-build-isolation`")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_paths):
    rng = np.random.default_rng(0)
    a = rng.random(400)
    b = rng.random(400)
    z = rng.random(40000)
    g = 0.5 * rng.random(2000) / 2000
    states = py.splitmix_states(7, n_paths)

    def supremum(mod):
        def go():
            M, Mh = np.zeros(n_paths), np.zeros(n_paths)
            # Pareto(2) - 3 increments, drawdown barrier 200
            mod.walk_supremum_stream(M, Mh, states.copy(), 1, 0.0, 3.0, 200.0)
        return go

    def ladder(mod):
        def go():
            state = np.zeros(n_paths, dtype=np.int8)
            height = np.full(n_paths, np.nan)
            occ = np.zeros(4000)
            mod.walk_ladder_stream(state, height, states.copy(), 1, 0.0, 3.0, 100.0, 200.0, occ, 0.05)
        return go

    return [
        ("direct_convolve 400x400", lambda m: (lambda: m.direct_convolve(a, b))),
        ("renewal_forward 40000 cells, 2000-cell kernel", lambda m: (lambda: m.renewal_forward(z, g))),
        (f"walk_supremum_stream {n_paths} paths", supremum),
        (f"walk_ladder_stream {n_paths} paths", ladder),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--paths", type=int, default=20000)
    args = ap.parse_args(argv)
    print(f"{'kernel':48s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}")
    for name, make in cases(args.paths):
        tc = best_of(make(ck), args.repeat)
        tp = best_of(make(py), args.repeat)
        print(f"{name:48s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
