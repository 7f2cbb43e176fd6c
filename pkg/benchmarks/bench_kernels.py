"""Compare the numba kernels with their numpy twins.

Checks that both paths agree, then times each kernel on a random batch.

    python benchmarks/bench_kernels.py [--nodes 200000] [--repeat 20] [--p 4]
"""
import argparse
import time

import numpy as np

from carnot_hconv import _kernels


def _inputs(rng, nodes, p, m=2):
    grads = rng.standard_normal((m, nodes))
    a = 1.0 + rng.random(nodes)
    wv = rng.random(nodes)
    xi = rng.standard_normal((nodes, m))
    eta = rng.standard_normal((nodes, m))
    dA = rng.standard_normal((nodes, m))
    return {
        "flux_scalar": (grads, a, p),
        "energy_scalar": (grads, a, wv, p),
        "lagged_weights": (grads, a, p, 1e-3),
        "membership_ratios": (dA, xi - eta, xi, eta, p),
    }


def _best(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--p", type=float, default=4.0, help="growth exponent")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _kernels.numba_kernels is None:
        print("numba path disabled (CARNOT_HCONV_NO_JIT set or numba missing); timing numpy only")
    rng = np.random.default_rng(args.seed)
    inputs = _inputs(rng, args.nodes, args.p)
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, call_args in inputs.items():
        ref = _kernels.numpy_kernels[name](*call_args)
        t_np = _best(_kernels.numpy_kernels[name], call_args, args.repeat)
        if _kernels.numba_kernels is None:
            print(f"{name:<20}{1e3 * t_np:>12.3f}{'-':>12}{'-':>10}{'-':>15}")
            continue
        jit = _kernels.numba_kernels[name]
        got = jit(*call_args)  # compile outside the timed region
        diff = max(
            float(np.max(np.abs(np.asarray(g) - np.asarray(r)) / np.maximum(np.abs(np.asarray(r)), 1e-300)))
            for g, r in zip(got if isinstance(got, tuple) else (got,), ref if isinstance(ref, tuple) else (ref,))
        )
        t_nb = _best(jit, call_args, args.repeat)
        print(f"{name:<20}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>15.2e}")


if __name__ == "__main__":
    main()
