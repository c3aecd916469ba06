"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 20]

Both variants are importable regardless of SOLARCAST_NUMBA; the flag only
chooses which one the package calls. The first numba call compiles (or loads
the on-disk cache), so it is excluded.
"""

import argparse
import time

import numpy as np

from solarcast import kernels
from solarcast._accel import HAS_NUMBA


def _time(fn, args, repeat):
    fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        fresh = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
        t0 = time.perf_counter()
        fn(*fresh)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    W, b = rng.normal(size=(32, 32)), rng.normal(size=32)
    X = rng.normal(size=(128, 32))
    dZ = rng.normal(size=(128, 32))
    pred, target = rng.normal(size=2000), rng.normal(size=2000)
    theta, g = rng.normal(size=4096), rng.normal(size=4096)
    m, v = np.zeros(4096), np.zeros(4096)
    t = 1.7e9 + np.arange(100_000) * 16.0
    lats, lons = rng.uniform(-90, 90, 10_000), rng.uniform(-180, 180, 10_000)
    return {
        "dense_forward 128x32x32": ("dense_forward", (W, b, X)),
        "dense_backward 128x32x32": ("dense_backward", (W, X, dZ)),
        "mae n=2000": ("mae", (pred, target)),
        "adam_update n=4096": ("adam_update", (theta, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 3)),
        "sun_angles n=100000": ("sun_angles", (42.56, -83.64, t)),
        "haversine n=10000": ("haversine", (42.56, -83.64, lats, lons)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; only the numpy column is meaningful")
    print(f"{'kernel':<28}{'numba (ms)':>12}{'numpy (ms)':>12}{'speedup':>10}")
    for label, (name, call) in cases(np.random.default_rng(0)).items():
        t_loop = _time(getattr(kernels, f"{name}_loop"), call, args.repeat)
        t_np = _time(getattr(kernels, f"{name}_np"), call, args.repeat)
        print(f"{label:<28}{t_loop * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_loop:>9.2f}x")


if __name__ == "__main__":
    main()
