"""Time the compiled and pure-Python kernels on identical inputs.

    python benchmarks/bench_kernels.py [--n 127] [--repeat 5]

Prints one line per (kernel, backend) with the best-of-``repeat`` time and
the speedup of the compiled backend, and checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from sfde_lab.kernels import KIND_DELTA, KIND_YOSIDA, available_backends, get_backend


def cases(n, rng):
    h = 1.0 / (n + 1)
    b = rng.standard_normal(n) * 2.0
    x = h * np.arange(1, n + 1)
    smooth = 3.0 * np.sin(2 * np.pi * x) + 1.5 * np.sin(np.pi * x)
    r = np.linspace(-5, 5, 100_001)
    off = np.full(n, -1.0)
    diag = np.full(n, 3.0)
    return {
        "thomas_solve": lambda k: k.thomas_solve(off, diag, off, b),
        "resolvent_power m=0.5 (1e5 pts)": lambda k: k.resolvent_power(0.5, 1e-2, r),
        "implicit_solve delta m=0": lambda k: k.implicit_solve(
            b, b, h, 2e-4, 0.0, KIND_DELTA, 0.0, 1.25e-2, 1e-10, 500),
        "implicit_solve yosida m=0.5": lambda k: k.implicit_solve(
            smooth, smooth, h, 1e-3, 0.0, KIND_YOSIDA, 0.5, 1e-2, 1e-10, 500),
    }


def first(result):
    return np.asarray(result[0] if isinstance(result, tuple) else result)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=127)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args(argv)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}; n = {args.n}")
    for name, fn in cases(args.n, np.random.default_rng(0)).items():
        times, outs = {}, {}
        for be in backends:
            k = get_backend(be)
            outs[be] = first(fn(k))
            times[be] = min(timeit.repeat(lambda: fn(k), number=args.number, repeat=args.repeat)) / args.number
        line = "  ".join(f"{be}: {times[be] * 1e6:10.1f} us" for be in backends)
        if "cython" in times:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            line += f"  speedup x{times['python'] / times['cython']:6.1f}  max |diff| {diff:.1e}"
        print(f"{name:34s} {line}")


if __name__ == "__main__":
    main()
