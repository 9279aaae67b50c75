#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallbacks.

Runs each hot kernel on workloads shaped like real fits (sampler sweeps at
T=120, K=8; EM passes; long decodes) and prints per-call times plus the
speedup. Usage: python benchmarks/bench_kernels.py [--repeat 50]
"""

import argparse
import time

import numpy as np

from regimeseg.kernels import _numpy as np_impl

try:
    from regimeseg.kernels import _numba as nb_impl
except ImportError:
    nb_impl = None


def make_instance(rng, T, K):
    log_init = np.log(rng.dirichlet(np.ones(K)))
    log_trans = np.log(rng.dirichlet(np.ones(K), size=K))
    log_obs = rng.normal(scale=2.0, size=(T, K))
    uniforms = rng.random(T)
    return log_init, log_trans, log_obs, uniforms


CASES = [
    ("forward_loglik", "T=120 K=8", lambda m, a: m.forward_loglik(a[0], a[1], a[2]), 120, 8),
    ("forward_backward", "T=120 K=8", lambda m, a: m.forward_backward(a[0], a[1], a[2]), 120, 8),
    ("viterbi_path", "T=500 K=8", lambda m, a: m.viterbi_path(a[0], a[1], a[2]), 500, 8),
    ("ffbs_path", "T=120 K=8", lambda m, a: m.ffbs_path(*a), 120, 8),
    ("ffbs_path", "T=5 K=2", lambda m, a: m.ffbs_path(*a), 5, 2),
]


def timed(fn, repeat):
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18} {'workload':<12} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, workload, call, T, K in CASES:
        inst = make_instance(rng, T, K)
        t_np = timed(lambda: call(np_impl, inst), args.repeat)
        if nb_impl is None:
            print(f"{name:<18} {workload:<12} {t_np * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
            continue
        call(nb_impl, inst)  # compile outside the timed loop
        t_nb = timed(lambda: call(nb_impl, inst), args.repeat)
        print(
            f"{name:<18} {workload:<12} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
            f"{t_np / t_nb:>8.1f}x"
        )


if __name__ == "__main__":
    main()
