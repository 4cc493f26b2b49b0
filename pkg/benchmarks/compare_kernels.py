"""Compiled vs pure-Python kernels on identical inputs.

    python benchmarks/compare_kernels.py --n-list 49,196,392 --channels 8

Prints one row per (backend, N) with both median times, the speedup and
whether the output checksums agree.
"""

import argparse
import sys

from ccsmlp import bench, kernels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-list", default="49,196,392,784")
    ap.add_argument("--channels", type=int, default=8)
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument("--backends", default="direct,fft,dense-simplified")
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels unavailable; build with `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = bench.compare_kernels(
        [int(n) for n in args.n_list.split(",")], args.channels, args.batch,
        tuple(args.backends.split(",")), reps=args.reps, seed=args.seed,
    )
    print(f"{'backend':<17}{'N':>6}{'compiled ms':>14}{'python ms':>12}{'speedup':>9}  checksum")
    for backend, n, fast, slow, same in rows:
        print(f"{backend:<17}{n:>6}{fast / 1e6:>14.3f}{slow / 1e6:>12.3f}{slow / fast:>9.1f}  {'equal' if same else 'DIFFER'}")
    return 0 if all(r[4] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
