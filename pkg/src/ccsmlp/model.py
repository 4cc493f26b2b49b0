"""MLP backbone with interchangeable token mixers.

Layout conventions: activations are ``(..., N, C)`` with tokens on the
second-to-last axis and channels last, so a leading batch axis is optional
everywhere. Each block applies channel mixing first, then token mixing.

Parameter shapes (row-vector products, ``x @ W``):

* ``embed.weight`` ``3p^2 x C`` and ``embed.bias`` ``C``
* ``blocks.{l}.channel.w1`` ``rC x C`` (applied as ``x @ w1.T``), ``b1``, ``w2`` ``C x rC``, ``b2``
* ``blocks.{l}.token.w3``/``w4`` for the original mixer (``N x M``, ``M x N``),
  ``blocks.{l}.token.w3`` ``N x N`` for the simplified one, ``blocks.{l}.token.ccs`` ``G x N`` for CCS
* ``blocks.{l}.channel_norm`` / ``token_norm`` and ``final_norm``: ``scale`` and ``bias`` of length ``C``
* ``head.weight`` ``C x classes`` and ``head.bias``
"""

from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import erf

from .circulant import CcsWeights, ccs_mix
from .numerics import ConfigurationError, DimensionError, as_tensor, matmul

TOKEN_MIXERS = ("original", "simplified", "ccs")
NORMS = ("layernorm", "affine")
LN_EPS = 1e-6


@dataclass(frozen=True)
class MixerConfig:
    tokens: int
    depth: int
    hidden: int
    ratio: int
    patch: int
    groups: int
    height: int
    width: int
    token_mixer: str = "ccs"
    token_mlp_dim: int = 0
    norm: str = "layernorm"
    num_classes: int = 1000

    def __post_init__(self):
        p = self.patch
        if p < 1 or self.height % p or self.width % p:
            raise ConfigurationError(
                f"patch size {p} does not divide image {self.height}x{self.width}"
            )
        if self.tokens != (self.height // p) * (self.width // p):
            raise ConfigurationError(
                f"tokens={self.tokens} but a {self.height}x{self.width} image "
                f"with patch {p} gives {(self.height // p) * (self.width // p)}"
            )
        if self.depth < 0 or self.hidden < 1 or self.ratio < 1 or self.num_classes < 1:
            raise ConfigurationError(f"invalid sizes in {self}")
        if self.token_mixer not in TOKEN_MIXERS:
            raise ConfigurationError(f"token_mixer must be one of {TOKEN_MIXERS}")
        if self.norm not in NORMS:
            raise ConfigurationError(f"norm must be one of {NORMS}")
        if self.token_mixer == "original" and self.token_mlp_dim < 1:
            raise ConfigurationError("the original token mixer needs token_mlp_dim >= 1")
        if self.token_mixer == "ccs" and (self.groups < 1 or self.hidden % self.groups):
            raise ConfigurationError(f"{self.groups} groups do not divide {self.hidden} channels")

    @property
    def patch_dim(self):
        return 3 * self.patch * self.patch

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def with_(self, **changes):
        return replace(self, **changes)


def _preset(depth, hidden, mixer, norm, groups=8, token_mlp_dim=0):
    return MixerConfig(
        tokens=196, depth=depth, hidden=hidden, ratio=4, patch=16, groups=groups,
        height=224, width=224, token_mixer=mixer, token_mlp_dim=token_mlp_dim,
        norm=norm, num_classes=1000,
    )


PRESETS = {
    "mixer-b16-ccs": _preset(12, 768, "ccs", "layernorm"),
    "resmlp-36-ccs": _preset(36, 384, "ccs", "affine"),
    "mixer-b16": _preset(12, 768, "original", "layernorm", token_mlp_dim=384),
    "resmlp-36": _preset(36, 384, "simplified", "affine"),
}


# ---------------------------------------------------------------- parameters


def param_shapes(config):
    """Ordered ``name -> shape`` map of every learnable array."""
    c, n, p2 = config.hidden, config.tokens, config.patch_dim
    rc = config.ratio * c
    shapes = {"embed.weight": (p2, c), "embed.bias": (c,)}
    for l in range(config.depth):
        pre = f"blocks.{l}."
        shapes[pre + "channel_norm.scale"] = (c,)
        shapes[pre + "channel_norm.bias"] = (c,)
        shapes[pre + "channel.w1"] = (rc, c)
        shapes[pre + "channel.b1"] = (rc,)
        shapes[pre + "channel.w2"] = (c, rc)
        shapes[pre + "channel.b2"] = (c,)
        shapes[pre + "token_norm.scale"] = (c,)
        shapes[pre + "token_norm.bias"] = (c,)
        if config.token_mixer == "original":
            shapes[pre + "token.w3"] = (n, config.token_mlp_dim)
            shapes[pre + "token.w4"] = (config.token_mlp_dim, n)
        elif config.token_mixer == "simplified":
            shapes[pre + "token.w3"] = (n, n)
        else:
            shapes[pre + "token.ccs"] = (config.groups, n)
    shapes["final_norm.scale"] = (c,)
    shapes["final_norm.bias"] = (c,)
    shapes["head.weight"] = (c, config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


def layer_kind(name):
    """Coarse layer type of a parameter name, for parameter breakdowns."""
    part = name.split(".")[2] if name.startswith("blocks.") else name.split(".")[0]
    return {
        "embed": "patch_embed",
        "channel": "channel_mixing",
        "token": "token_mixing",
        "channel_norm": "norm",
        "token_norm": "norm",
        "final_norm": "norm",
        "head": "head",
    }[part]


def count_params(config):
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def param_breakdown(config):
    out = {}
    for name, shape in param_shapes(config).items():
        kind = layer_kind(name)
        out[kind] = out.get(kind, 0) + int(np.prod(shape))
    return out


def token_mixing_param_count(config):
    """Learnable parameters of one token-mixing layer (norm excluded)."""
    n = config.tokens
    if config.token_mixer == "original":
        return 2 * n * config.token_mlp_dim
    if config.token_mixer == "simplified":
        return n * n
    return config.groups * n


class ModelParams:
    """All learnable arrays of one model, keyed by dotted name.

    Lookup also accepts ``(block_index, layer_name)``, e.g. ``params[0, "channel.w1"]``.
    """

    def __init__(self, config, arrays):
        expected = param_shapes(config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise DimensionError(f"parameter names differ: missing {missing}, unexpected {extra}")
        self.config = config
        self.arrays = {}
        for name, shape in expected.items():
            a = as_tensor(arrays[name])
            if a.shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {a.shape}")
            self.arrays[name] = a

    @staticmethod
    def _key(key):
        if isinstance(key, tuple):
            block, name = key
            return f"blocks.{block}.{name}"
        return key

    def __getitem__(self, key):
        return self.arrays[self._key(key)]

    def __contains__(self, key):
        return self._key(key) in self.arrays

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def num_params(self):
        return sum(a.size for a in self.arrays.values())

    def replace(self, arrays):
        return ModelParams(self.config, {**self.arrays, **arrays})

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})


def _trunc_normal(rng, shape, std=0.02):
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_params(config, rng):
    """Truncated-normal dense weights, zero biases, unit norm scales, uniform CCS generators."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    arrays = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".scale"):
            arrays[name] = np.ones(shape)
        elif name.endswith("bias") or name.endswith(".b1") or name.endswith(".b2"):
            arrays[name] = np.zeros(shape)
        elif name.endswith("token.ccs"):
            arrays[name] = CcsWeights.init(shape[0], shape[1], rng).w
        else:
            arrays[name] = _trunc_normal(rng, shape)
    return ModelParams(config, arrays)


def zero_params(config):
    return ModelParams(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})


# ---------------------------------------------------------------- layers


def unfold_patches(image, patch):
    """``(..., 3, H, W)`` -> ``(..., N, 3p^2)``; raster patch order, channel-major inside a patch."""
    image = as_tensor(image)
    *lead, ch, h, w = image.shape
    if h % patch or w % patch:
        raise ConfigurationError(f"patch size {patch} does not divide image {h}x{w}")
    gh, gw = h // patch, w // patch
    x = image.reshape(*lead, ch, gh, patch, gw, patch)
    nd = len(lead)
    # -> (..., gh, gw, ch, p, p)
    axes = list(range(nd)) + [nd + 1, nd + 3, nd, nd + 2, nd + 4]
    return np.ascontiguousarray(x.transpose(axes).reshape(*lead, gh * gw, ch * patch * patch))


def dense(x, w, b):
    return matmul(x, w) + b


def patch_embed(image, w0, b0, patch):
    return dense(unfold_patches(image, patch), w0, b0)


def layer_norm(x, scale, bias, eps=LN_EPS):
    x = as_tensor(x)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return scale * ((x - mu) / np.sqrt(var + eps)) + bias


def affine(x, scale, bias):
    return scale * as_tensor(x) + bias


def apply_norm(kind, x, scale, bias):
    if kind == "layernorm":
        return layer_norm(x, scale, bias)
    if kind == "affine":
        return affine(x, scale, bias)
    raise ConfigurationError(f"unknown norm {kind!r}")


def gelu(x):
    x = as_tensor(x)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def swap_tc(x):
    """Swap the token and channel axes."""
    return np.ascontiguousarray(np.swapaxes(x, -1, -2))


def channel_mixing(x, w1, b1, w2, b2, norm="layernorm", scale=None, bias=None):
    """``x + gelu(norm(x) @ w1.T + b1) @ w2.T + b2``, per token."""
    x = as_tensor(x)
    c = x.shape[-1]
    if w1.shape[1] != c or w2.shape[0] != c or w2.shape[1] != w1.shape[0]:
        raise DimensionError(
            f"channel mixing weights {w1.shape}, {w2.shape} do not fit {c} channels"
        )
    scale = np.ones(c) if scale is None else scale
    bias = np.zeros(c) if bias is None else bias
    h = gelu(dense(apply_norm(norm, x, scale, bias), w1.T, b1))
    return x + dense(h, w2.T, b2)


def _token_norm(u, norm, scale, bias):
    c = u.shape[-1]
    scale = np.ones(c) if scale is None else scale
    bias = np.zeros(c) if bias is None else bias
    return apply_norm(norm, u, scale, bias)


def token_mixing_original(u, w3, w4, norm="layernorm", scale=None, bias=None):
    """``U + gelu(norm(U)^T W3) W4`` mixing along tokens, written for ``N x C`` layout."""
    u = as_tensor(u)
    n = u.shape[-2]
    if w3.shape[0] != n or w4.shape != (w3.shape[1], n):
        raise DimensionError(f"token MLP weights {w3.shape}, {w4.shape} do not fit {n} tokens")
    u_hat = swap_tc(_token_norm(u, norm, scale, bias))
    return u + swap_tc(matmul(gelu(matmul(u_hat, w3)), w4))


def token_mixing_simplified(u, w3, norm="layernorm", scale=None, bias=None):
    """``U + norm(U)^T W3`` mixing along tokens, written for ``N x C`` layout."""
    u = as_tensor(u)
    n = u.shape[-2]
    if w3.shape != (n, n):
        raise DimensionError(f"token mixing matrix {w3.shape} does not fit {n} tokens")
    u_hat = swap_tc(_token_norm(u, norm, scale, bias))
    return u + swap_tc(matmul(u_hat, w3))


def token_mixing_ccs(u, weights, norm="layernorm", scale=None, bias=None, backend="direct"):
    """``U + ccs_mix(norm(U))``."""
    if not isinstance(weights, CcsWeights):
        weights = CcsWeights(weights)
    u = as_tensor(u)
    u_hat = _token_norm(u, norm, scale, bias)
    batched = u_hat[None] if u_hat.ndim == 2 else u_hat.reshape(-1, *u_hat.shape[-2:])
    mixed = ccs_mix(batched, weights, backend).reshape(u.shape)
    return u + mixed


def mean_pool(x):
    return as_tensor(x).mean(axis=-2)


def head(pooled, wh, bh):
    return dense(pooled, wh, bh)


def token_block(u, params, l, backend="direct"):
    """Token-mixing half of block ``l``, dispatching on the configured mixer."""
    cfg = params.config
    ns, nb = params[l, "token_norm.scale"], params[l, "token_norm.bias"]
    if cfg.token_mixer == "original":
        return token_mixing_original(u, params[l, "token.w3"], params[l, "token.w4"], cfg.norm, ns, nb)
    if cfg.token_mixer == "simplified":
        return token_mixing_simplified(u, params[l, "token.w3"], cfg.norm, ns, nb)
    return token_mixing_ccs(u, CcsWeights(params[l, "token.ccs"]), cfg.norm, ns, nb, backend)


def channel_block(x, params, l):
    cfg = params.config
    return channel_mixing(
        x, params[l, "channel.w1"], params[l, "channel.b1"],
        params[l, "channel.w2"], params[l, "channel.b2"],
        cfg.norm, params[l, "channel_norm.scale"], params[l, "channel_norm.bias"],
    )


def block_forward(x, params, l, backend="direct"):
    """One block: channel mixing then token mixing."""
    return token_block(channel_block(x, params, l), params, l, backend)


def forward_tokens(patches, params, backend="direct"):
    """Forward pass from unfolded patches ``(..., N, 3p^2)`` to logits."""
    cfg = params.config
    x = dense(patches, params["embed.weight"], params["embed.bias"])
    for l in range(cfg.depth):
        try:
            x = block_forward(x, params, l, backend)
        except (DimensionError, ConfigurationError) as e:
            raise type(e)(f"block {l}: {e}") from e
    x = apply_norm(cfg.norm, x, params["final_norm.scale"], params["final_norm.bias"])
    return head(mean_pool(x), params["head.weight"], params["head.bias"])


def model_forward(image, params, backend="direct"):
    """Logits for an image ``(3, H, W)`` or a batch ``(B, 3, H, W)``."""
    cfg = params.config
    image = as_tensor(image)
    if image.shape[-3:] != (3, cfg.height, cfg.width):
        raise DimensionError(
            f"expected image (3, {cfg.height}, {cfg.width}), got {image.shape}"
        )
    return forward_tokens(unfold_patches(image, cfg.patch), params, backend)
