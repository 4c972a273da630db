"""Compare the compiled kernels with the pure-Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import json
import random
import timeit

import numpy as np

from sb3repair import kernels
from sb3repair.kernels import pure


def workloads(seed: int = 0) -> dict[str, tuple]:
    rng = random.Random(seed)
    rects = [(rng.randrange(120), rng.randrange(90), rng.randrange(256), rng.randrange(256), rng.randrange(256)) for _ in range(12)]
    a = np.array([[rng.randrange(4) for _ in range(24)] for _ in range(121)], dtype=np.int64)
    b = a.copy()
    b[60:, 3] += 1
    return {
        "splitmix64 x1000": (lambda impl: [impl.splitmix64(s) for s in range(1000)],),
        "rasterize 120x90, 12 sprites": (lambda impl: impl.rasterize(120, 90, rects, 8),),
        "count_mismatches 121x24": (lambda impl: impl.count_mismatches(a, b),),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--json", action="store_true", help="print machine-readable results")
    args = parser.parse_args()

    impls = {"python": pure}
    if kernels.compiled is not None:
        impls["compiled"] = kernels.compiled
    results = []
    for name, (fn,) in workloads().items():
        row = {"kernel": name}
        for label, impl in impls.items():
            assert fn(impl) == fn(pure), name
            row[label + "_us"] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) * 1e6
        if "compiled_us" in row:
            row["speedup"] = row["python_us"] / row["compiled_us"]
        results.append(row)

    if args.json:
        print(json.dumps({"backend": kernels.BACKEND, "results": results}, indent=2))
        return
    print(f"active backend: {kernels.BACKEND}")
    for row in results:
        line = f"{row['kernel']:<30} python {row['python_us']:10.1f} us"
        if "compiled_us" in row:
            line += f"   compiled {row['compiled_us']:9.1f} us   x{row['speedup']:.1f}"
        print(line)


if __name__ == "__main__":
    main()
