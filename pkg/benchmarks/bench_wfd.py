"""Time the compiled and numpy W2 kernels on the workloads the metrics suite issues.

    python benchmarks/bench_wfd.py [--n 200] [--t 256] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from tsgan import _wfd_py

try:
    from tsgan import _wfd_ext
except ImportError:
    _wfd_ext = None


def masses(rng, n, bins):
    m = rng.exponential(size=(n, bins))
    return m / m.sum(axis=1, keepdims=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200, help="spectra per set")
    ap.add_argument("--t", type=int, default=256, help="window length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    bins = args.t // 2 + 1
    x = np.arange(bins) / args.t
    a, b = masses(rng, args.n, bins), masses(rng, args.n, bins)
    workloads = {
        "w2 (single pair)": lambda m: m.w2(a[0], b[0], x),
        f"w2_rows ({args.n} pairs)": lambda m: m.w2_rows(a, b, x),
        f"w2_cross ({args.n}x{args.n})": lambda m: m.w2_cross(a, b, x),
    }
    backends = [("python", _wfd_py)] + ([("compiled", _wfd_ext)] if _wfd_ext else [])
    print(f"T={args.t}, bins={bins}, best of {args.repeat}")
    print(f"{'workload':<28}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for label, fn in workloads.items():
        times = []
        for _, mod in backends:
            number = 1 if "cross" in label else 20
            times.append(min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number)
        row = f"{label:<28}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    if _wfd_ext:
        gap = np.max(np.abs(_wfd_py.w2_cross(a[:20], b[:20], x) - _wfd_ext.w2_cross(a[:20], b[:20], x)))
        print(f"max backend disagreement on 20x20: {gap:.1e}")


if __name__ == "__main__":
    main()
