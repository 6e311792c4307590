"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from membandit import kernels
from membandit.oracle import TinyPolicy
from membandit.randomness import arm_key


def cases(backend):
    key = arm_key(12345, 3)
    pol = TinyPolicy.random(2, 8, 7)
    pol3 = TinyPolicy.random(3, 6, 7)
    return {
        "bernoulli_block(10^6)": lambda: backend.bernoulli_block(key, 0, 1_000_000, 0.3),
        "bernoulli_sum(10^6)": lambda: backend.bernoulli_sum(key, 0, 1_000_000, 0.3),
        "replay_tables(K=2,T=8)": lambda: backend.replay_tables(pol.table, pol.offsets, 2, 8, 1, 3, True),
        "replay_tables(K=3,T=6)": lambda: backend.replay_tables(pol3.table, pol3.offsets, 3, 6, 1, 3, True),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    found = kernels.backends()
    results = {}
    for name, mod in found.items():
        for label, fn in cases(mod).items():
            results[(label, name)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    labels = list(cases(next(iter(found.values()))))
    print(f"{'kernel':<26}" + "".join(f"{n:>12}" for n in found) + "  speedup")
    for label in labels:
        times = [results[(label, n)] for n in found]
        speed = results[(label, "python")] / results[(label, "compiled")] if "compiled" in found else float("nan")
        print(f"{label:<26}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + f"{speed:>9.1f}x")
    if "compiled" in found:
        a = found["compiled"].bernoulli_block(99, 5, 1000, 0.4)
        b = found["python"].bernoulli_block(99, 5, 1000, 0.4)
        print("backends agree:", bool(np.array_equal(a, b)))


if __name__ == "__main__":
    main()
