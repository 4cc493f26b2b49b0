"""Acceptance criteria 1-9, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are written
past pytest's capture so they appear in the normal output.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from ccsmlp import bench as B
from ccsmlp import gradcheck as G
from ccsmlp import model as M
from ccsmlp import numerics as nm
from ccsmlp import training as T
from ccsmlp.circulant import CcsWeights, ccs_mix, circulant_correlate_direct, circulant_correlate_fft


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def within(value, target, rel=0.02):
    return abs(value - target) <= rel * target


def test_1_parameter_tables(verdict):
    cfg = M.PRESETS
    rows = {
        "mixer-b16-ccs": (M.count_params(cfg["mixer-b16-ccs"]), 57e6),
        "resmlp-36-ccs": (M.count_params(cfg["resmlp-36-ccs"]), 43e6),
        "mixer-b16": (M.count_params(cfg["mixer-b16"]), 59e6),
        "resmlp-36": (M.count_params(cfg["resmlp-36"]), 44e6),
    }
    for g, target in ((1, 43e6), (4, 43e6), (8, 43e6), (384, 46e6)):
        rows[f"resmlp-36-ccs G={g}"] = (M.count_params(cfg["resmlp-36-ccs"].with_(groups=g)), target)
    bad = {k: v for k, v in rows.items() if not within(*v)}
    detail = ", ".join(f"{k}={v[0] / 1e6:.2f}M" for k, v in rows.items())
    verdict(1, not bad, f"parameter totals within 2%: {detail}")


def test_2_token_mixing_counts_exact(verdict):
    base = M.PRESETS["resmlp-36-ccs"]
    simplified = M.token_mixing_param_count(base.with_(token_mixer="simplified"))
    ccs = M.token_mixing_param_count(base)
    ccs_arr = M.init_params(base.with_(depth=1), 0)["blocks.0.token.ccs"].size
    ok = simplified == 38416 and ccs == 1568 and ccs_arr == 1568
    verdict(2, ok, f"simplified={simplified} (38416), ccs={ccs} (1568), ccs array size={ccs_arr}")


def test_3_fft_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    oracle = roundtrip = 0.0
    for n in list(range(1, 65)) + [49, 100, 196, 256]:
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        oracle = max(oracle, np.abs(nm.fft(x) - nm.dft_naive(x)).max())
        roundtrip = max(roundtrip, np.abs(nm.ifft(nm.fft(x)) - x).max())
    dt = time.perf_counter() - t0
    ok = oracle <= 1e-10 and roundtrip <= 1e-12 and dt < 10
    verdict(3, ok, f"max |fft-dft|={oracle:.2e} (<=1e-10), roundtrip={roundtrip:.2e} (<=1e-12), {dt:.2f}s")


def test_4_backend_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst, trials = 0.0, 0
    for _ in range(10):
        for n in (4, 7, 49, 196):
            for c in (1, 8, 32):
                u, w = rng.standard_normal((c, n)), rng.standard_normal(n)
                d = circulant_correlate_direct(u, w)
                f = circulant_correlate_fft(u, w)
                worst = max(worst, np.abs(d - f).max() / np.abs(d).max())
                trials += 1
    dt = time.perf_counter() - t0
    verdict(4, worst <= 1e-9 and trials >= 100 and dt < 30,
            f"{trials} trials, max relative diff={worst:.2e} (<=1e-9), {dt:.2f}s")


def test_5_shift_equivariance(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    ccs_err, dense_gap = 0.0, np.inf
    cases = [(n, range(n)) for n in range(1, 17)] + [(196, rng.integers(0, 196, 12))]
    for n, shifts in cases:
        x = rng.standard_normal((2, n, 8))
        w = CcsWeights(rng.standard_normal((4, n)))
        dense = rng.standard_normal((n, n))
        base, dbase = ccs_mix(x, w), np.einsum("bnc,nm->bmc", x, dense)
        for s in shifts:
            xs = np.roll(x, int(s), axis=1)
            ccs_err = max(ccs_err, np.abs(ccs_mix(xs, w) - np.roll(base, int(s), axis=1)).max())
            if n > 1 and s % n:
                viol = np.abs(np.einsum("bnc,nm->bmc", xs, dense) - np.roll(dbase, int(s), axis=1)).max()
                dense_gap = min(dense_gap, viol)
    dt = time.perf_counter() - t0
    ok = ccs_err <= 1e-10 and dense_gap >= 1e-3 and dt < 30
    verdict(5, ok, f"ccs max violation={ccs_err:.2e} (<=1e-10), dense min violation={dense_gap:.3f} (>=1e-3), {dt:.2f}s")


def test_6_gradient_suite(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    fd, dot, names = 0.0, 0.0, []
    for case in G.layer_cases(6):
        fd = max(fd, max(G.fd_check(case, rng).values()))
        dot = max(dot, G.dot_product_check(case, rng))
        names.append(case.name)
    for mixer in M.TOKEN_MIXERS:
        for norm in M.NORMS:
            case, _ = G.tiny_model_case(mixer, norm, seed=6)
            fd = max(fd, max(G.fd_check(case, rng).values()))
            names.append(case.name)
    dt = time.perf_counter() - t0
    ok = fd <= G.FD_RTOL and dot <= G.DOT_RTOL and dt < 120
    verdict(6, ok, f"{len(names)} cases, max fd rel err={fd:.2e} (<=1e-5), max dot-product err={dot:.2e} (<=1e-10), {dt:.1f}s")


def test_7_complexity(verdict):
    t0 = time.perf_counter()
    recs = B.run_bench([196, 392, 784, 1568], channels=8, backends=("direct", "fft"))
    rep = B.complexity_report(recs)
    dt = time.perf_counter() - t0
    ok = abs(rep["direct_exponent"] - 2.0) <= 0.3 and rep["fft_exponent"] <= 1.5 and dt < 300
    holds = "holds" if not rep["fft_faster_at_196"] else "does not hold"
    verdict(7, ok, (
        f"direct exponent={rep['direct_exponent']:.2f} (2.0+-0.3), fft exponent={rep['fft_exponent']:.2f} (<=1.5), "
        f"crossover N={rep['crossover_N']}; no FFT advantage at N=196 {holds} on this host, {dt:.1f}s"
    ))


def test_8_shift_task_training(verdict):
    t0 = time.perf_counter()
    wins, parts = 0, []
    for seed in range(3):
        ds = T.make_shift_task(seed, 16, 3, 4, 512, 512, "none")
        acc = {m: T.train(T.shift_task_config(m), ds, 50, seed=seed).test_acc[-1] for m in ("ccs", "simplified")}
        wins += acc["ccs"] >= 0.90 and acc["ccs"] > acc["simplified"]
        parts.append(f"seed {seed}: ccs={acc['ccs']:.3f} simplified={acc['simplified']:.3f}")
    dt = time.perf_counter() - t0
    verdict(8, wins >= 2 and dt < 600, f"{wins}/3 seeds pass; " + "; ".join(parts) + f"; {dt:.0f}s")


def test_9_imagenet_numbers_excluded(verdict):
    readme = " ".join((Path(__file__).resolve().parents[1] / "README.md").read_text().split())
    ok = "ImageNet" in readme and "not reproduced" in readme
    verdict(9, ok, "ImageNet-1K top-1/top-5 accuracy is out of scope and documented as not reproduced; "
                   "accuracy behaviour is covered by criteria 5 and 8")
