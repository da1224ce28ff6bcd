"""Benchmark the compiled kernel backend against the numpy fallback.

Times the two hot paths: the ACD likelihood-and-gradient evaluation that
dominates classic fitting, and the recurrent forward/backward pass that
dominates hybrid training, at the training batch size and at single-window
prediction size.

Usage: python benchmarks/bench_kernels.py [--reps 30] [--n 50000]
"""

import argparse
import time

import numpy as np

from duracd._kernels import available_backends
from duracd.models import HybridModelSpec, init_model_params, _kernel_args
from duracd.rng import SplitMix64
from duracd.simulate import SimConfig, simulate_acd
from duracd.acd import AcdParams


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_acd(backends, n, reps):
    params = AcdParams(omega=0.1, alphas=[0.2], betas=[0.7])
    series, _ = simulate_acd(SimConfig(params=params, n=n, seed=1))
    dt = series.durations
    rows = {}
    for name, mod in backends.items():
        rows[name] = best_of(
            lambda: mod.acd_nll_grad(0.1, params.alphas, params.betas, dt, 1.0),
            reps)
    return rows


def bench_hybrid(backends, batch, timesteps, reps):
    spec = HybridModelSpec.from_name("lstm_acd", timesteps=timesteps)
    params = init_model_params(spec, SplitMix64(0))
    args = _kernel_args(params)
    rng = SplitMix64(1)
    feats = (rng.exponential(batch * timesteps) + 0.05).reshape(batch, timesteps, 1)
    seeds = np.zeros(batch)
    dy_ext = np.zeros((batch, timesteps))
    dy_ext[:, -1] = 0.01
    rows = {}
    for name, mod in backends.items():
        dh_ext = np.zeros((batch, timesteps, spec.hidden))

        def step(mod=mod, dh_ext=dh_ext):
            cache = mod.hybrid_forward(feats, seeds, *args)
            mod.hybrid_backward(feats, seeds, *args, cache, dh_ext, dy_ext)

        rows[name] = best_of(step, reps)
    return rows


def print_rows(title, rows, per=None):
    print(f"\n{title}")
    base = rows.get("numpy")
    for name in sorted(rows):
        t = rows[name]
        speedup = f"  ({base / t:.2f}x vs numpy)" if base and name != "numpy" else ""
        scale = f" = {t / per * 1e6:.2f} us/window" if per else ""
        print(f"  {name:<8} {t * 1e3:9.3f} ms{scale}{speedup}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--n", type=int, default=50_000,
                    help="observations for the ACD likelihood benchmark")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(sorted(backends))}")
    if "cython" not in backends:
        print("note: compiled extension unavailable, timing the fallback only")

    print_rows(f"ACD(1,1) NLL + gradient, n={args.n}",
               bench_acd(backends, args.n, args.reps))
    print_rows("hybrid forward+backward, batch=300, T=50 (training step)",
               bench_hybrid(backends, 300, 50, args.reps), per=300)
    print_rows("hybrid forward+backward, batch=1, T=50 (single window)",
               bench_hybrid(backends, 1, 50, max(args.reps, 200)))


if __name__ == "__main__":
    main()
