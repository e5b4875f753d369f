"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs through both backends; outputs are
checked for equality before timings are reported.
"""

import argparse
import json
import sys
import time

import numpy as np

from layoutdiff import _fallback

try:
    from layoutdiff import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    mask = rng.random((64, 64)) < 0.45
    cost = rng.random((200, 200))
    x = rng.standard_normal((8, 32, 32, 16)).astype(np.float32)
    cols = rng.standard_normal((8 * 32 * 32, 9 * 16)).astype(np.float32)
    w = rng.standard_normal((9 * 16, 16)).astype(np.float32)

    def conv_step(mod):
        def run():
            c = mod.im2col3x3(x)
            y = c @ w
            return mod.col2im3x3(np.ascontiguousarray(y @ w.T), 8, 32, 32, 16)
        return run

    return [
        ("label8 64x64", lambda m: (lambda: m.label8(mask.astype(np.uint8))), lambda a, b: np.array_equal(a[0], b[0]) and a[1] == b[1]),
        ("lap_solve 200x200", lambda m: (lambda: m.lap_solve(cost)), lambda a, b: np.array_equal(a, b)),
        ("im2col 8x32x32x16", lambda m: (lambda: m.im2col3x3(x)), np.array_equal),
        ("col2im 8x32x32x16", lambda m: (lambda: m.col2im3x3(cols, 8, 32, 32, 16)), np.array_equal),
        ("conv fwd+bwd", conv_step, np.array_equal),
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rows = []
    print(f"{'kernel':<22}{'cython ms':>12}{'python ms':>12}{'speedup':>10}  equal")
    for name, make, same in cases(np.random.default_rng(args.seed)):
        tc, oc = best_of(make(_kernels), args.repeat)
        tp, op = best_of(make(_fallback), args.repeat)
        eq = bool(same(oc, op))
        rows.append({"kernel": name, "cython_s": tc, "python_s": tp, "speedup": tp / tc, "equal": eq})
        print(f"{name:<22}{tc * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tc:>9.1f}x  {eq}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["equal"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
