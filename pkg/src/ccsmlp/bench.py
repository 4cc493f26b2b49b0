"""Wall-clock benchmarks of the token-mixing backends.

Inputs are allocated before timing. Each measurement discards ``warmup`` runs
and reports the median of ``reps`` timed runs (monotonic clock, nanoseconds).
Runs are strictly sequential.
"""

import csv
import math
import time
from dataclasses import astuple, dataclass

import numpy as np

from . import kernels
from .circulant import CcsWeights, ccs_mix
from .numerics import BluesteinPlan, matmul

BENCH_BACKENDS = ("direct", "fft", "dense-simplified")
CSV_VERSION = 1
CSV_HEADER = ["backend", "N", "C", "batch", "reps", "median_ns", "checksum"]


@dataclass(frozen=True)
class BenchRecord:
    backend: str
    N: int
    C: int
    batch: int
    reps: int
    median_ns: int
    checksum: str


def checksum(out):
    return f"{np.abs(out).sum():.6e}"


def time_call(fn, reps=7, warmup=2):
    """Median wall time of ``fn()`` in ns; returns ``(median_ns, last_result)``."""
    if reps < 5 or warmup < 2:
        raise ValueError("need at least 5 timed runs and 2 warmups")
    for _ in range(warmup):
        result = fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        result = fn()
        times.append(time.perf_counter_ns() - t0)
    return int(np.median(times)), result


def _workload(backend, n, channels, batch, groups, include_plan, impl, rng):
    x = rng.standard_normal((batch, n, channels))
    if backend == "dense-simplified":
        w3 = rng.standard_normal((n, n)) / math.sqrt(n)
        rows = np.ascontiguousarray(x.transpose(0, 2, 1).reshape(-1, n))
        return lambda: matmul(rows, w3, impl=impl)
    weights = CcsWeights.init(groups, n, rng)
    if backend == "direct":
        return lambda: ccs_mix(x, weights, "direct", impl)
    if backend == "fft":
        if include_plan:
            return lambda: ccs_mix(x, weights, "fft", impl, plan=BluesteinPlan(n, impl))
        plan = BluesteinPlan(n, impl)
        return lambda: ccs_mix(x, weights, "fft", impl, plan=plan)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BENCH_BACKENDS}")


def run_bench(
    n_list, channels=8, batch=1, backends=BENCH_BACKENDS, groups=None, reps=7,
    warmup=2, include_plan=True, impl=None, seed=0,
):
    """One :class:`BenchRecord` per ``(backend, N)``.

    For a given ``N`` every backend sees the same input tensor, so the direct
    and FFT checksums agree.
    """
    if not n_list:
        raise ValueError("n_list must not be empty")
    if groups is None:
        groups = math.gcd(8, channels)
    impl_mod = kernels.get(impl)
    records = []
    for n in n_list:
        for backend in backends:
            rng = np.random.default_rng([seed, n])
            fn = _workload(backend, n, channels, batch, groups, include_plan, impl_mod.NAME, rng)
            median, out = time_call(fn, reps, warmup)
            records.append(BenchRecord(backend, n, channels, batch, reps, median, checksum(out)))
    return records


def write_csv(records, path, kernels_name=None):
    kernels_name = kernels_name or kernels.IMPLEMENTATION
    with open(path, "w", newline="") as fh:
        fh.write(f"# ccsmlp bench v{CSV_VERSION} kernels={kernels_name}\n")
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(astuple(r))


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [
        BenchRecord(
            r["backend"], int(r["N"]), int(r["C"]), int(r["batch"]),
            int(r["reps"]), int(r["median_ns"]), r["checksum"],
        )
        for r in csv.DictReader(lines)
    ]


def growth_exponent(records, backend):
    """Least-squares slope of log(median time) against log(N)."""
    pts = sorted((r.N, r.median_ns) for r in records if r.backend == backend)
    if len(pts) < 2:
        raise ValueError(f"need at least two sizes for {backend}")
    n, t = np.log(np.array(pts, dtype=float)).T
    return float(np.polyfit(n, t, 1)[0])


def crossover(records, slow="direct", fast="fft"):
    """Smallest measured N at which ``fast`` beats ``slow``, or None."""
    by = {(r.backend, r.N): r.median_ns for r in records}
    for n in sorted({r.N for r in records}):
        if (slow, n) in by and (fast, n) in by and by[fast, n] < by[slow, n]:
            return n
    return None


def complexity_report(records):
    """Fitted exponents, crossover, and whether FFT beats direct at N=196."""
    report = {
        "direct_exponent": growth_exponent(records, "direct"),
        "fft_exponent": growth_exponent(records, "fft"),
        "crossover_N": crossover(records),
    }
    by = {(r.backend, r.N): r.median_ns for r in records}
    if ("direct", 196) in by and ("fft", 196) in by:
        report["fft_faster_at_196"] = by["fft", 196] < by["direct", 196]
    return report


def compare_kernels(n_list, channels=8, batch=1, backends=("direct", "fft"), reps=7, seed=0):
    """Compiled vs pure-Python kernels on identical inputs; rows of (backend, N, compiled_ns, python_ns)."""
    if kernels.compiled is None:
        raise RuntimeError("compiled kernels are not available")
    fast = run_bench(n_list, channels, batch, backends, reps=reps, impl="compiled", seed=seed)
    slow = run_bench(n_list, channels, batch, backends, reps=reps, impl="python", seed=seed)
    return [
        (a.backend, a.N, a.median_ns, b.median_ns, a.checksum == b.checksum)
        for a, b in zip(fast, slow)
    ]
