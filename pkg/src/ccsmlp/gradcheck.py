"""Finite-difference and adjoint checks for every differentiable layer.

Each :class:`LayerCase` bundles a forward function over named inputs, the
hand-written VJP for it, and a random input set. Two checks are run:

* central differences (step ``1e-5``) of ``<f(inputs), g>`` against the VJP;
* the dot-product test ``<J d, g> == <d, J^T g>``, with ``J d`` taken from a
  sixth-order seven-point stencil that never touches the VJP code.
"""

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import training as T
from .circulant import CcsWeights, ccs_mix, ccs_mix_adjoint

FD_STEP = 1e-5
FD_RTOL = 1e-5
DOT_RTOL = 1e-10


@dataclass
class LayerCase:
    name: str
    forward: object  # inputs dict -> array
    vjp: object  # (inputs dict, upstream gradient) -> dict of gradients
    inputs: dict


def central_difference(fn, x, h=FD_STEP):
    """Gradient of the scalar ``fn(x)`` by central differences, entry by entry."""
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = fn(x)
        x[i] = old - h
        fm = fn(x)
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def stencil_jvp(fn, inputs, direction, h=1e-3):
    """Directional derivative of ``fn`` along ``direction`` (seven-point, sixth-order stencil)."""

    def at(t):
        return fn({k: v + t * direction[k] if k in direction else v for k, v in inputs.items()})

    return (
        at(3 * h) - 9 * at(2 * h) + 45 * at(h) - 45 * at(-h) + 9 * at(-2 * h) - at(-3 * h)
    ) / (60 * h)


def rel_error(analytic, numeric):
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def fd_check(case, rng, wrt=None):
    """Max relative error per input between the VJP and central differences."""
    out = np.asarray(case.forward(case.inputs))
    g = rng.standard_normal(out.shape)
    grads = case.vjp(case.inputs, g)
    errors = {}
    for k in wrt or grads:
        x = case.inputs[k].copy()

        def loss(v, k=k):
            return float(np.sum(np.asarray(case.forward({**case.inputs, k: v})) * g))

        errors[k] = rel_error(grads[k], central_difference(loss, x))
    return errors


def dot_product_check(case, rng):
    """Relative mismatch of ``<J d, g>`` and ``<d, J^T g>`` over all differentiable inputs."""
    out = np.asarray(case.forward(case.inputs))
    g = rng.standard_normal(out.shape)
    grads = case.vjp(case.inputs, g)
    d = {k: rng.standard_normal(np.shape(case.inputs[k])) for k in grads}
    lhs = float(np.sum(stencil_jvp(case.forward, case.inputs, d) * g))
    terms = [np.sum(d[k] * grads[k]) for k in grads]
    rhs = float(np.sum(terms))
    scale = max(sum(abs(t) for t in terms), abs(lhs), 1e-12)
    return abs(lhs - rhs) / scale


# ---------------------------------------------------------------- registry


def _std(rng, *shape, s=1.0):
    return s * rng.standard_normal(shape)


def _norm_case(kind, rng):
    c = 5
    inputs = {"x": _std(rng, 2, 3, c), "scale": 1 + _std(rng, c, s=0.3), "bias": _std(rng, c, s=0.3)}

    def fwd(p):
        return M.apply_norm(kind, p["x"], p["scale"], p["bias"])

    def vjp(p, g):
        gx, gs, gb = T.norm_vjp(kind, p["x"], p["scale"], g)
        return {"x": gx, "scale": gs, "bias": gb}

    return LayerCase(kind, fwd, vjp, inputs)


def _channel_case(norm, rng):
    n, c, r = 3, 4, 2
    inputs = {
        "x": _std(rng, 2, n, c),
        "w1": _std(rng, r * c, c, s=0.5), "b1": _std(rng, r * c, s=0.1),
        "w2": _std(rng, c, r * c, s=0.5), "b2": _std(rng, c, s=0.1),
        "scale": 1 + _std(rng, c, s=0.2), "bias": _std(rng, c, s=0.2),
    }

    def fwd(p):
        return M.channel_mixing(p["x"], p["w1"], p["b1"], p["w2"], p["b2"], norm, p["scale"], p["bias"])

    def vjp(p, g):
        gx, gp = T.channel_mixing_vjp(p["x"], p["w1"], p["b1"], p["w2"], p["b2"], norm, p["scale"], p["bias"], g)
        return {"x": gx, **gp}

    return LayerCase(f"channel_mixing[{norm}]", fwd, vjp, inputs)


def _token_case(mixer, norm, rng):
    n, c, m, groups = 5, 4, 3, 2
    inputs = {"u": _std(rng, 2, n, c), "scale": 1 + _std(rng, c, s=0.2), "bias": _std(rng, c, s=0.2)}
    if mixer == "original":
        inputs["w3"] = _std(rng, n, m, s=0.5)
        inputs["w4"] = _std(rng, m, n, s=0.5)

        def fwd(p):
            return M.token_mixing_original(p["u"], p["w3"], p["w4"], norm, p["scale"], p["bias"])

        def vjp(p, g):
            gu, gp = T.token_mixing_original_vjp(p["u"], p["w3"], p["w4"], norm, p["scale"], p["bias"], g)
            return {"u": gu, **gp}

    elif mixer == "simplified":
        inputs["w3"] = _std(rng, n, n, s=0.5)

        def fwd(p):
            return M.token_mixing_simplified(p["u"], p["w3"], norm, p["scale"], p["bias"])

        def vjp(p, g):
            gu, gp = T.token_mixing_simplified_vjp(p["u"], p["w3"], norm, p["scale"], p["bias"], g)
            return {"u": gu, **gp}

    else:
        inputs["ccs"] = _std(rng, groups, n, s=0.5)

        def fwd(p):
            return M.token_mixing_ccs(p["u"], CcsWeights(p["ccs"]), norm, p["scale"], p["bias"])

        def vjp(p, g):
            gu, gp = T.token_mixing_ccs_vjp(p["u"], p["ccs"], norm, p["scale"], p["bias"], g)
            return {"u": gu, **gp}

    return LayerCase(f"token_mixing_{mixer}[{norm}]", fwd, vjp, inputs)


def layer_cases(seed=0):
    rng = np.random.default_rng(seed)
    cases = []

    p, c = 2, 5
    inputs = {"image": _std(rng, 3, 4, 4), "w0": _std(rng, 3 * p * p, c, s=0.3), "b0": _std(rng, c)}
    cases.append(LayerCase(
        "patch_embed",
        lambda q: M.patch_embed(q["image"], q["w0"], q["b0"], p),
        lambda q, g: dict(zip(("image", "w0", "b0"), T.patch_embed_vjp(q["image"], q["w0"], p, g))),
        inputs,
    ))
    cases.append(_norm_case("layernorm", rng))
    cases.append(_norm_case("affine", rng))
    cases.append(LayerCase(
        "gelu", lambda q: M.gelu(q["x"]), lambda q, g: {"x": T.gelu_vjp(q["x"], g)},
        {"x": _std(rng, 3, 4, s=2.0)},
    ))
    for norm in M.NORMS:
        cases.append(_channel_case(norm, rng))
    for mixer in M.TOKEN_MIXERS:
        for norm in M.NORMS:
            cases.append(_token_case(mixer, norm, rng))

    n, c, groups = 6, 4, 2
    cases.append(LayerCase(
        "ccs_mix",
        lambda q: ccs_mix(q["x"], CcsWeights(q["w"])),
        lambda q, g: dict(zip(("x", "w"), ccs_mix_adjoint(g, q["x"], CcsWeights(q["w"])))),
        {"x": _std(rng, 2, n, c), "w": _std(rng, groups, n)},
    ))

    def head_fwd(q):
        return M.head(M.mean_pool(q["x"]), q["wh"], q["bh"])

    def head_vjp(q, g):
        gp, gw, gb = T.dense_vjp(M.mean_pool(q["x"]), q["wh"], g)
        return {"x": T.mean_pool_vjp(q["x"].shape, gp), "wh": gw, "bh": gb}

    cases.append(LayerCase(
        "head", head_fwd, head_vjp,
        {"x": _std(rng, 2, 4, 5), "wh": _std(rng, 5, 3), "bh": _std(rng, 3)},
    ))

    labels = np.array([0, 2, 1])

    def ce_vjp(q, g):
        _, gl, _ = T.softmax_cross_entropy(q["logits"], labels)
        return {"logits": gl * g}

    cases.append(LayerCase(
        "cross_entropy",
        lambda q: np.array(T.softmax_cross_entropy(q["logits"], labels)[0]),
        ce_vjp,
        {"logits": _std(rng, 3, 4, s=2.0)},
    ))
    return cases


def tiny_model_case(mixer="ccs", norm="layernorm", seed=0):
    """End-to-end case: N=4, L=2, C=4, G=2, 3 classes; inputs are all parameters plus the image."""
    rng = np.random.default_rng(seed)
    cfg = M.MixerConfig(
        tokens=4, depth=2, hidden=4, ratio=2, patch=1, groups=2, height=2, width=2,
        token_mixer=mixer, token_mlp_dim=3, norm=norm, num_classes=3,
    )
    base = M.init_params(cfg, rng)
    arrays = {k: v + 0.3 * rng.standard_normal(v.shape) for k, v in base.items()}
    image = rng.standard_normal((3, 2, 2))
    label = 1

    def fwd(q):
        params = M.ModelParams(cfg, {k: q[k] for k in arrays})
        patches = M.unfold_patches(q["image"], cfg.patch)[None]
        logits = M.forward_tokens(patches, params)
        return np.array(T.softmax_cross_entropy(logits, [label])[0])

    def vjp(q, g):
        params = M.ModelParams(cfg, {k: q[k] for k in arrays})
        _, grads = T.backward(q["image"], label, params)
        return {k: v * g for k, v in grads.items()}

    return LayerCase(f"model[{mixer},{norm}]", fwd, vjp, {**arrays, "image": image}), cfg
