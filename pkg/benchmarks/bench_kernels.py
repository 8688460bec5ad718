"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import pemadm._kernels_py as kpy

try:
    import pemadm._core as kc
except ImportError:
    kc = None


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_markov(steps=1_000_000):
    rng = np.random.default_rng(0)
    p = np.array([[0.7, 0.3], [0.2, 0.8]])
    cum = np.ascontiguousarray(np.cumsum(p, axis=1))
    uniforms = rng.random(steps)
    rows = []
    t_py = timeit(lambda: kpy.markov_path(cum, 0, uniforms))
    rows.append(("markov_path 1e6 steps", "python", t_py, 1.0))
    if kc is not None:
        t_cy = timeit(lambda: kc.markov_path(cum, 0, uniforms))
        rows.append(("markov_path 1e6 steps", "cython", t_cy, t_py / t_cy))
    return rows


def bench_rollout(horizon=3000, trials=50):
    rng = np.random.default_rng(1)
    A = np.array([[1.0, 0.01], [0.0, 1.0]])
    B = np.array([[0.0], [0.01]])
    C = np.ascontiguousarray(np.stack([np.diag([0.0, 1.0]), np.eye(2)]))
    D = np.ascontiguousarray(np.stack([np.diag([0.01, 0.05])] * 2))
    E = np.ascontiguousarray(np.stack([0.01 * np.eye(2)] * 2))
    K = np.ascontiguousarray(np.stack([[[0.0, -1.17]], [[-0.91, -1.27]]]))
    r = rng.integers(0, 2, size=horizon + 1).astype(np.int64)
    w = rng.standard_normal((horizon + 1, 2))
    v = np.tile([-1.0, -1.0], (horizon + 1, 1))
    x0 = np.array([-5.0, -4.0])

    def run(impl):
        for _ in range(trials):
            x = np.zeros((horizon + 1, 2))
            y = np.zeros((horizon + 1, 2))
            u = np.zeros((horizon + 1, 1))
            x[0] = x0
            impl.linear_rollout(A, B, C, D, E, K, r, w, v, x, y, u, 1e12)

    label = f"linear_rollout {trials}x{horizon} steps"
    rows = []
    t_py = timeit(lambda: run(kpy), repeats=1)
    rows.append((label, "python", t_py, 1.0))
    if kc is not None:
        t_cy = timeit(lambda: run(kc))
        rows.append((label, "cython", t_cy, t_py / t_cy))
    return rows


def main():
    rows = bench_markov() + bench_rollout()
    width = max(len(r[0]) for r in rows)
    print(f"{'benchmark':<{width}}  backend  seconds    speedup")
    for name, backend, seconds, speedup in rows:
        print(f"{name:<{width}}  {backend:<7}  {seconds:9.4f}  {speedup:6.1f}x")
    if kc is None:
        print("(compiled extension not available; only the fallback was timed)")


if __name__ == "__main__":
    main()
