"""Invariant suite behind ``ccsmlp verify``.

Every check returns a :class:`PropertyResult`; the suite passes iff all do.
"""

import io
import json
from dataclasses import dataclass

import numpy as np

from . import gradcheck as G
from . import model as M
from . import numerics as nm
from . import training as T
from . import weights as W
from .circulant import CcsWeights, ccs_mix, ccs_mix_adjoint, materialize_circulant

FFT_LENGTHS = (1, 2, 7, 49, 100, 196, 256)
ORACLE_LENGTHS = tuple(range(1, 65)) + (100, 196, 256)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{status} {self.name} max_err={self.max_error:.3e} tol={self.tolerance:.1e}{extra}"


def _le(name, err, tol, detail=""):
    return PropertyResult(name, bool(err <= tol), float(err), tol, detail)


def _cplx(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def sign_flipped_fft(x):
    """Deliberately wrong transform (exponent sign flipped), for fault injection."""
    x = nm.as_complex(x)
    return nm.ifft(x) * x.shape[-1]


# ---------------------------------------------------------------- numerics


def check_fft_oracle(rng, fft=nm.fft):
    err = max(np.abs(fft(x) - nm.dft_naive(x)).max() for x in (_cplx(rng, n) for n in ORACLE_LENGTHS))
    return _le("fft_matches_dft_naive", err, 1e-10)


def check_fft_roundtrip(rng, fft=nm.fft):
    err = 0.0
    for n in FFT_LENGTHS:
        x = _cplx(rng, n)
        err = max(err, np.abs(nm.ifft(fft(x)) - x).max() / (1 + np.abs(x).max()))
    return _le("fft_roundtrip", err, 1e-12)


def check_fft_linearity(rng, fft=nm.fft):
    err = 0.0
    for n in FFT_LENGTHS:
        x, y = _cplx(rng, n), _cplx(rng, n)
        a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
        err = max(err, np.abs(fft(a * x + b * y) - (a * fft(x) + b * fft(y))).max())
    return _le("fft_linearity", err, 1e-10)


def check_parseval(rng, fft=nm.fft):
    err = 0.0
    for n in FFT_LENGTHS:
        x = _cplx(rng, n)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(fft(x)) ** 2) / n
        err = max(err, abs(lhs - rhs) / lhs)
    return _le("fft_parseval", err, 1e-10)


# ---------------------------------------------------------------- circulant


def check_backend_equivalence(rng):
    worst = 0.0
    for n in (4, 7, 49, 196):
        for c in (1, 8, 32):
            g = c if c < 8 else 8
            x = rng.standard_normal((2, n, c))
            w = CcsWeights(rng.standard_normal((g, n)))
            diff = np.abs(ccs_mix(x, w, "fft") - ccs_mix(x, w, "direct")).max()
            scale = 1 + np.abs(x).max() * np.abs(w.w).max() * n
            worst = max(worst, diff / scale)
    return _le("circulant_backend_equivalence", worst, 1e-9)


def check_shift_equivariance(rng):
    worst = 0.0
    cases = [(n, range(1, n)) for n in (3, 8, 16)]
    cases.append((196, rng.choice(np.arange(1, 196), size=6, replace=False)))
    for n, shifts in cases:
        x = rng.standard_normal((2, n, 4))
        w = CcsWeights(rng.standard_normal((2, n)))
        base = ccs_mix(x, w)
        for s in shifts:
            diff = np.abs(ccs_mix(np.roll(x, s, axis=1), w) - np.roll(base, s, axis=1)).max()
            worst = max(worst, diff)
    return _le("circulant_shift_equivariance", worst, 1e-10)


def check_channel_specificity(rng):
    n, c = 8, 4
    x = np.repeat(rng.standard_normal((1, n, 1)), c, axis=2)
    two = ccs_mix(x, CcsWeights(rng.standard_normal((2, n))))
    one = ccs_mix(x, CcsWeights(rng.standard_normal((1, n))))
    spread_two = np.abs(two[..., 0] - two[..., 1]).max()
    spread_one = np.abs(one - one[..., :1]).max()
    ok = spread_two > 1e-6 and spread_one == 0.0
    return PropertyResult(
        "circulant_channel_specificity", ok, float(spread_one), 0.0,
        f"group_spread={spread_two:.3e}",
    )


def check_ccs_adjoint(rng):
    x = rng.standard_normal((2, 12, 6))
    w = CcsWeights(rng.standard_normal((3, 12)))
    dx = rng.standard_normal(x.shape)
    dw = rng.standard_normal(w.w.shape)
    g = rng.standard_normal(x.shape)
    gx, gw = ccs_mix_adjoint(g, x, w)
    # ccs_mix is bilinear: J(dx, dw) = mix(dx, w) + mix(x, dw)
    lhs = np.sum((ccs_mix(dx, w) + ccs_mix(x, CcsWeights(dw))) * g)
    rhs = np.sum(dx * gx) + np.sum(dw * gw)
    err = abs(lhs - rhs) / max(abs(lhs), 1.0)
    dense = np.abs(gx[0, :, 0] - materialize_circulant(w.w[0]) @ g[0, :, 0]).max()
    return _le("circulant_adjoint", max(err, dense), 1e-10)


def check_ccs_param_count(rng):
    n = CcsWeights.init(8, 196, rng).num_params
    return PropertyResult("ccs_param_count", n == 1568, float(abs(n - 1568)), 0.0, f"count={n}")


# ---------------------------------------------------------------- model


def _small_config(rng, mixer, norm="layernorm", depth=None):
    side = int(rng.integers(1, 4))
    g = int(rng.choice([1, 2, 4]))
    return M.MixerConfig(
        tokens=side * side, depth=int(rng.integers(0, 3)) if depth is None else depth,
        hidden=4 * int(rng.integers(1, 3)), ratio=int(rng.choice([1, 2, 4])), patch=1,
        groups=g, height=side, width=side, token_mixer=mixer, token_mlp_dim=3,
        norm=norm, num_classes=3,
    )


def check_shape_contract(rng):
    bad = 0
    for _ in range(12):
        cfg = _small_config(rng, str(rng.choice(M.TOKEN_MIXERS)), str(rng.choice(M.NORMS)), depth=2)
        params = M.init_params(cfg, rng)
        x = rng.standard_normal((2, cfg.tokens, cfg.hidden))
        for l in range(cfg.depth):
            x = M.block_forward(x, params, l)
            bad += x.shape != (2, cfg.tokens, cfg.hidden)
        bad += M.model_forward(rng.standard_normal((3, cfg.height, cfg.width)), params).shape != (3,)
    return PropertyResult("model_shape_contract", bad == 0, float(bad), 0.0)


def check_zero_weight_identity(rng):
    worst = 0.0
    for mixer in M.TOKEN_MIXERS:
        cfg = _small_config(rng, mixer, "affine", depth=2)
        params = M.init_params(cfg, rng)
        zeros = {}
        for name, a in params.items():
            if ".channel." in name or ".token." in name:
                zeros[name] = np.zeros_like(a)
        params = params.replace(zeros)
        image = rng.standard_normal((3, cfg.height, cfg.width))
        emb = M.patch_embed(image, params["embed.weight"], params["embed.bias"], cfg.patch)
        expect = M.head(M.mean_pool(emb), params["head.weight"], params["head.bias"])
        worst = max(worst, np.abs(M.model_forward(image, params) - expect).max())
    return _le("model_zero_weight_identity", worst, 1e-12)


def check_block_shift(rng):
    n, c = 16, 4
    u = rng.standard_normal((n, c))
    scale, bias = 1 + 0.2 * rng.standard_normal(c), 0.2 * rng.standard_normal(c)
    w = CcsWeights(rng.standard_normal((2, n)))
    w3 = rng.standard_normal((n, n))
    ccs_err, dense_violation = 0.0, 0.0
    for s in range(1, n):
        us = np.roll(u, s, axis=0)
        a = M.token_mixing_ccs(us, w, "affine", scale, bias)
        b = np.roll(M.token_mixing_ccs(u, w, "affine", scale, bias), s, axis=0)
        ccs_err = max(ccs_err, np.abs(a - b).max())
        a = M.token_mixing_simplified(us, w3, "affine", scale, bias)
        b = np.roll(M.token_mixing_simplified(u, w3, "affine", scale, bias), s, axis=0)
        dense_violation = max(dense_violation, np.abs(a - b).max())
    ok = ccs_err <= 1e-10 and dense_violation >= 1e-3
    return PropertyResult(
        "model_block_shift", ok, float(ccs_err), 1e-10,
        f"dense_violation={dense_violation:.3e}",
    )


def check_param_difference(rng):
    bad = 0
    for _ in range(20):
        cfg = _small_config(rng, "ccs")
        simple = cfg.with_(token_mixer="simplified")
        diff = M.count_params(simple) - M.count_params(cfg)
        n, g = cfg.tokens, cfg.groups
        bad += diff != cfg.depth * (n * n - g * n)
        bad += g < n and cfg.depth > 0 and not diff > 0
    return PropertyResult("model_param_difference", bad == 0, float(bad), 0.0)


def check_ccs_g1_matches_simplified(rng):
    worst = 0.0
    for norm in M.NORMS:
        n, c = 9, 4
        u = rng.standard_normal((2, n, c))
        scale, bias = 1 + 0.1 * rng.standard_normal(c), 0.1 * rng.standard_normal(c)
        w = rng.standard_normal(n)
        a = M.token_mixing_ccs(u, CcsWeights(w[None]), norm, scale, bias)
        b = M.token_mixing_simplified(u, materialize_circulant(w), norm, scale, bias)
        worst = max(worst, np.abs(a - b).max())
    return _le("model_ccs_g1_matches_simplified", worst, 1e-10)


# ---------------------------------------------------------------- training


def gradient_checks(rng):
    results = []
    cases = G.layer_cases(int(rng.integers(1 << 31)))
    for mixer in M.TOKEN_MIXERS:
        cases.append(G.tiny_model_case(mixer, seed=int(rng.integers(1 << 31)))[0])
    for case in cases:
        fd = max(G.fd_check(case, rng).values())
        results.append(_le(f"gradient_fd[{case.name}]", fd, G.FD_RTOL))
        if not case.name.startswith("model"):
            results.append(_le(f"gradient_dot[{case.name}]", G.dot_product_check(case, rng), G.DOT_RTOL))
    return results


def check_training_reproducible(rng):
    ds = T.make_shift_task(3, 8, 3, 3, 24, 24, "none")
    cfg = T.shift_task_config("ccs", tokens=8, hidden=8, classes=3)
    a = T.train(cfg, ds, 2, seed=5, batch_size=8)
    b = T.train(cfg, ds, 2, seed=5, batch_size=8)
    same = a.train_loss == b.train_loss and all(
        np.array_equal(a.params[k], b.params[k]) for k in a.params
    )
    return PropertyResult("training_reproducible", same, 0.0 if same else 1.0, 0.0)


def check_shift_witness(rng, epochs=50):
    ds = T.make_shift_task(0, 16, 3, 4, 512, 512, "none")
    acc = {}
    for mixer in ("ccs", "simplified"):
        acc[mixer] = T.train(T.shift_task_config(mixer), ds, epochs, seed=0).test_acc[-1]
    ok = acc["ccs"] >= acc["simplified"]
    return PropertyResult(
        "training_shift_witness", ok, 0.0, 0.0,
        f"ccs_acc={acc['ccs']:.3f} simplified_acc={acc['simplified']:.3f}",
    )


def check_weightfile_roundtrip(rng):
    cfg = _small_config(rng, "ccs", depth=2)
    params = M.init_params(cfg, rng)
    loaded, lossy = W.loads(W.dumps(params))
    exact = not lossy and all(
        loaded[k].tobytes() == params[k].tobytes() for k in params
    )
    return PropertyResult("weightfile_roundtrip", exact, 0.0 if exact else 1.0, 0.0)


def run_suite(seed=0, fault=None, training=True):
    """Run every property; ``fault="fft-sign"`` swaps in a broken FFT for the FFT checks."""
    rng = np.random.default_rng(seed)
    fft = sign_flipped_fft if fault == "fft-sign" else nm.fft
    if fault not in (None, "fft-sign"):
        raise ValueError(f"unknown fault {fault!r}")
    results = [
        check_fft_oracle(rng, fft),
        check_fft_roundtrip(rng, fft),
        check_fft_linearity(rng, fft),
        check_parseval(rng, fft),
        check_backend_equivalence(rng),
        check_shift_equivariance(rng),
        check_channel_specificity(rng),
        check_ccs_adjoint(rng),
        check_ccs_param_count(rng),
        check_shape_contract(rng),
        check_zero_weight_identity(rng),
        check_block_shift(rng),
        check_param_difference(rng),
        check_ccs_g1_matches_simplified(rng),
    ]
    results += gradient_checks(rng)
    results.append(check_training_reproducible(rng))
    if training:
        results.append(check_shift_witness(rng))
    results.append(check_weightfile_roundtrip(rng))
    return results


def report(results, out=None):
    out = out or io.StringIO()
    for r in results:
        print(r.line(), file=out)
    failures = [r.name for r in results if not r.passed]
    print("failures: " + json.dumps(failures), file=out)
    return failures
