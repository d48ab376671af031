"""Time each DP kernel on its numba and numpy paths.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Both paths are checked for identical output before timing. The first numba
call (compilation or cache load) is excluded.
"""
import argparse
import statistics
import time

import numpy as np

from islandalign import kernels
from islandalign._jit import NUMBA_AVAILABLE


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(quick):
    rng = np.random.default_rng(0)
    sizes = [(200, 200), (1500, 1500)] if not quick else [(200, 200)]
    for n, m in sizes:
        a, b = rng.integers(0, 300, n), rng.integers(0, 300, m)
        yield f"edit_cost_matrix {n}x{m}", kernels.edit_cost_matrix, (a, b)
        yield f"substring_projection {n}x{m // 10}", kernels.substring_projection, (a, b[: m // 10])
    for f, k in ([(500, 20), (3000, 120)] if not quick else [(500, 20)]):
        emit = rng.normal(size=(f, k))
        yield f"segment_frames {f}f x {k}w", kernels.segment_frames, (emit,)


def same(x, y):
    if isinstance(x, tuple):
        return all(same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small sizes only")
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':<36}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, fn, inputs in cases(args.quick):
        out_jit = fn(*inputs, backend="numba")  # warm-up
        out_np = fn(*inputs, backend="numpy")
        if not same(out_jit, out_np):
            raise SystemExit(f"{name}: backends disagree")
        t_jit = median_time(lambda: fn(*inputs, backend="numba"), args.repeat)
        t_np = median_time(lambda: fn(*inputs, backend="numpy"), args.repeat)
        print(f"{name:<36}{1e3 * t_jit:>10.2f}{1e3 * t_np:>10.2f}{t_np / t_jit:>8.1f}x")


if __name__ == "__main__":
    main()
