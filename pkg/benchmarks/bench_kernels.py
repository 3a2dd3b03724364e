#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Times the penalized-least-squares absorption (the optimizer's inner
loop) on benchmark-sized inputs, then a full broken-stick fit under each
backend. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from growthfalter import lmm, simulate
from growthfalter.kernels import pure

try:
    from growthfalter.kernels import _core as compiled
except ImportError:
    compiled = None


def make_stats(m=1000, q=5, p=5, seed=0):
    rng = np.random.default_rng(seed)
    ztz = np.empty((m, q, q))
    ztx = np.empty((m, q, p))
    zty = np.empty((m, q))
    for i in range(m):
        n_i = rng.integers(6, 13)
        z = rng.normal(size=(n_i, q))
        x = z[:, :p] if p <= q else np.column_stack([z, rng.normal(size=(n_i, p - q))])
        y = rng.normal(size=n_i)
        ztz[i] = z.T @ z
        ztx[i] = z.T @ x
        zty[i] = z.T @ y
    lam = np.tril(rng.normal(size=(q, q)))
    np.fill_diagonal(lam, np.abs(np.diag(lam)) + 0.1)
    return np.ascontiguousarray(lam), ztz, ztx, zty


def time_backend(fn, args, repeat=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_pls():
    print("pls_components, m=1000 children, q=5, p=5:")
    args = make_stats()
    t_pure = time_backend(pure.pls_components, args)
    print(f"  pure     {t_pure * 1e3:8.3f} ms/eval")
    if compiled is not None:
        t_comp = time_backend(compiled.pls_components, args)
        print(f"  compiled {t_comp * 1e3:8.3f} ms/eval  ({t_pure / t_comp:.1f}x)")
    else:
        print("  compiled backend not built")


def bench_fit():
    import growthfalter.kernels as kernels

    cfg = simulate.ScenarioConfig(
        n_children=1000, proportion_faltering=0.10, seed=1, n_replications=1
    )
    ds, _ = simulate.generate_population(cfg, 0)
    spec = lmm.ModelSpec(lmm.BROKEN_STICK, cfg.knots)
    print("full broken-stick fit, 1000 children:")
    backends = [("pure", pure)]
    if compiled is not None:
        backends.append(("compiled", compiled))
    for name, backend in backends:
        kernels.pls_components = backend.pls_components
        kernels.ranef_means = backend.ranef_means
        t0 = time.perf_counter()
        result = lmm.fit(ds, spec)
        dt = time.perf_counter() - t0
        print(
            f"  {name:8s} {dt:6.2f} s  ({result.n_evals} deviance evaluations, "
            f"deviance {result.reml_deviance:.4f})"
        )


if __name__ == "__main__":
    bench_pls()
    bench_fit()
