"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py                 # kernel timings
    python benchmarks/bench_kernels.py --end-to-end    # plus one DCMF run per backend

The end-to-end mode re-runs the simulator in a subprocess with
CTXCACHE_DISABLE_NUMBA set, so both backends see identical inputs.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ctxcache import kernels
from ctxcache._accel import HAS_NUMBA


def _inputs(n, rng):
    ages = rng.uniform(0, 600_000, n)
    lams = rng.uniform(1e-6, 1e-4, n)
    scores = rng.uniform(0, 1, n)
    hist = rng.integers(0, 50, n).astype(float)
    recent = np.minimum(hist, rng.integers(0, 10, n)).astype(float)
    return ages, lams, scores, hist, recent


def cases(n, rng):
    ages, lams, scores, hist, recent = _inputs(n, rng)
    cf = kernels.cf_decay_numpy(ages, lams)
    return {
        "cf_decay": ((ages, lams), {}),
        "dst_combine": ((scores, cf, 0.1), {}),
        "thresholds": ((cf, 0.5), {}),
        "sweep": ((ages, lams, scores, 0.1, 0.5, kernels.COMBINE_DST, 0.5, 0.5), {}),
        "poa": ((hist, float(hist.sum()), recent, float(recent.sum()), 0.5), {}),
        "ucb": ((scores, hist, 1000.0), {}),
    }


def best_of(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def bench(sizes, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} {'n':>8} {'numpy us':>11} {'numba us':>11} {'speedup':>8}")
    for n in sizes:
        number = max(1, 200_000 // n)
        for name, (args, _) in cases(n, rng).items():
            f_np = getattr(kernels, f"{name}_numpy")
            t_np = best_of(f_np, args, repeat, number)
            if HAS_NUMBA:
                f_nb = getattr(kernels, f"{name}_numba")
                f_nb(*args)  # compile outside the timed region
                t_nb = best_of(f_nb, args, repeat, number)
                print(f"{name:<12} {n:>8} {t_np * 1e6:>11.1f} {t_nb * 1e6:>11.1f} {t_np / t_nb:>7.2f}x")
            else:
                print(f"{name:<12} {n:>8} {t_np * 1e6:>11.1f} {'n/a':>11} {'':>8}")


_E2E = """
import time
from ctxcache import config, experiment, backend_name
from ctxcache.sim import run
cfg = config.resolve(1)
vcfg, u, tr = experiment.inputs(cfg)
run(tr, u, experiment.run_spec(vcfg, "dcmf", 50, 1))
t = time.perf_counter()
r = run(tr, u, experiment.run_spec(vcfg, "dcmf", 500, 1))
print(backend_name(), round(time.perf_counter() - t, 3), r.metrics["CHR"])
"""


def end_to_end():
    for flag in ("0", "1"):
        env = dict(os.environ, CTXCACHE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True, check=True)
        backend, secs, chr_ = out.stdout.split()
        print(f"end-to-end dcmf run  backend={backend:<6} {float(secs):7.2f} s  CHR={float(chr_):.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="100,1000,10000,100000")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba not installed: timing the numpy path only")
    bench([int(s) for s in args.sizes.split(",")], args.repeat)
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
