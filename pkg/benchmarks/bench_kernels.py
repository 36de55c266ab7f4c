"""Compiled vs numpy kernels: timing and output agreement.

    python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 5]
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from crowdmob import kernels


def workloads(scale: float, rng: np.random.Generator):
    n = int(2_000_000 * scale)
    groups = rng.integers(0, 5_000, size=n)
    items = rng.integers(0, 50_000, size=n)

    n_groups = int(200_000 * scale)
    sizes = rng.integers(1, 12, size=n_groups)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    m = int(starts[-1])
    node_idx = rng.integers(0, 8, size=m)
    rssi = rng.integers(-95, -35, size=m).astype(float)
    node_x = rng.uniform(0, 40, 8)
    node_y = rng.uniform(0, 20, 8)

    pts = int(2_000_000 * scale)
    x = rng.uniform(-5, 45, pts)
    y = rng.uniform(-5, 25, pts)
    return {
        "unique_pair_counts": (groups, items),
        "centroid_groups": (starts, node_idx, rssi, node_x, node_y, -40.0, 2.0, 1.0),
        "bin_points": (x, y, 0.0, 0.0, 2.0, 10, 20),
    }


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b) if a.dtype.kind in "iub" else np.allclose(a, b, rtol=1e-12, atol=1e-9)
    return a == b


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        print("compiled backend not built; only the numpy fallback is available", file=sys.stderr)
        return 1
    print(f"{'kernel':<22}{'numpy ms':>12}{'compiled ms':>14}{'speedup':>10}  agree")
    ok = True
    for name, call_args in workloads(args.scale, np.random.default_rng(args.seed)).items():
        py = getattr(kernels.python_backend, name)
        cy = getattr(kernels.compiled_backend, name)
        agree = same(py(*call_args), cy(*call_args))
        ok &= agree
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_py:>12.1f}{t_cy:>14.1f}{t_py / t_cy:>9.1f}x  {agree}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
