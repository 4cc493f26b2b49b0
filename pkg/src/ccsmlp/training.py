"""Hand-written reverse-mode gradients, AdamW and a desk-scale shift task.

Each ``*_vjp`` takes the layer inputs plus the upstream gradient and returns
the input gradient and (where present) parameter gradients. Leading batch
axes are summed for parameter gradients.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import model as M
from .circulant import CcsWeights, ccs_mix_adjoint
from .numerics import ConfigurationError, DimensionError, as_tensor, matmul

SQRT_2PI = math.sqrt(2.0 * math.pi)


class TrainingDiverged(RuntimeError):
    """A forward pass produced a non-finite value."""


# ---------------------------------------------------------------- layer VJPs


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def dense_vjp(x, w, g):
    """Gradients of ``x @ w + b``."""
    gx = matmul(g, w.T)
    gw = matmul(_flat(x).T, _flat(g))
    return gx, gw, _flat(g).sum(axis=0)


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / SQRT_2PI


def gelu_vjp(x, g):
    return g * gelu_grad(x)


def layer_norm_vjp(x, scale, g, eps=M.LN_EPS):
    c = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    sigma = np.sqrt(((x - mu) ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) / sigma
    gscale = _flat(g * xhat).sum(axis=0)
    gbias = _flat(g).sum(axis=0)
    gxhat = g * scale
    gx = (
        c * gxhat
        - gxhat.sum(axis=-1, keepdims=True)
        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
    ) / (c * sigma)
    return gx, gscale, gbias


def affine_vjp(x, scale, g):
    return g * scale, _flat(g * x).sum(axis=0), _flat(g).sum(axis=0)


def norm_vjp(kind, x, scale, g):
    if kind == "layernorm":
        return layer_norm_vjp(x, scale, g)
    return affine_vjp(x, scale, g)


def channel_mixing_vjp(x, w1, b1, w2, b2, norm, scale, bias, g):
    """Returns ``gx`` and a dict with keys w1, b1, w2, b2, scale, bias."""
    n = M.apply_norm(norm, x, scale, bias)
    a = M.dense(n, w1.T, b1)
    h = M.gelu(a)
    gh, gw2t, gb2 = dense_vjp(h, w2.T, g)
    ga = gelu_vjp(a, gh)
    gn, gw1t, gb1 = dense_vjp(n, w1.T, ga)
    gx, gscale, gbias = norm_vjp(norm, x, scale, gn)
    grads = {"w1": gw1t.T, "b1": gb1, "w2": gw2t.T, "b2": gb2, "scale": gscale, "bias": gbias}
    return g + gx, grads


def token_mixing_original_vjp(u, w3, w4, norm, scale, bias, g):
    t = M.swap_tc(M.apply_norm(norm, u, scale, bias))
    a = matmul(t, w3)
    h = M.gelu(a)
    gz = M.swap_tc(g)
    gh = matmul(gz, w4.T)
    gw4 = matmul(_flat(h).T, _flat(gz))
    ga = gelu_vjp(a, gh)
    gt = matmul(ga, w3.T)
    gw3 = matmul(_flat(t).T, _flat(ga))
    gu, gscale, gbias = norm_vjp(norm, u, scale, M.swap_tc(gt))
    return g + gu, {"w3": gw3, "w4": gw4, "scale": gscale, "bias": gbias}


def token_mixing_simplified_vjp(u, w3, norm, scale, bias, g):
    t = M.swap_tc(M.apply_norm(norm, u, scale, bias))
    gz = M.swap_tc(g)
    gt = matmul(gz, w3.T)
    gw3 = matmul(_flat(t).T, _flat(gz))
    gu, gscale, gbias = norm_vjp(norm, u, scale, M.swap_tc(gt))
    return g + gu, {"w3": gw3, "scale": gscale, "bias": gbias}


def token_mixing_ccs_vjp(u, w, norm, scale, bias, g, backend="direct"):
    n = M.apply_norm(norm, u, scale, bias)
    shape = n.shape
    n3 = n.reshape(-1, *shape[-2:])
    gn, gw = ccs_mix_adjoint(g.reshape(n3.shape), n3, CcsWeights(w), backend)
    gu, gscale, gbias = norm_vjp(norm, u, scale, gn.reshape(shape))
    return g + gu, {"ccs": gw, "scale": gscale, "bias": gbias}


def fold_patches(patches, patch, height, width):
    """Adjoint (and inverse) of :func:`model.unfold_patches`."""
    *lead, n, d = patches.shape
    ch = d // (patch * patch)
    gh, gw = height // patch, width // patch
    x = patches.reshape(*lead, gh, gw, ch, patch, patch)
    nd = len(lead)
    # (..., gh, gw, ch, p, p) -> (..., ch, gh, p, gw, p)
    axes = list(range(nd)) + [nd + 2, nd, nd + 3, nd + 1, nd + 4]
    return np.ascontiguousarray(x.transpose(axes).reshape(*lead, ch, height, width))


def patch_embed_vjp(image, w0, patch, g):
    """Gradients of :func:`model.patch_embed` w.r.t. image, weight and bias."""
    patches = M.unfold_patches(image, patch)
    gp, gw, gb = dense_vjp(patches, w0, g)
    return fold_patches(gp, patch, image.shape[-2], image.shape[-1]), gw, gb


def mean_pool_vjp(x_shape, g):
    n = x_shape[-2]
    return np.broadcast_to(g[..., None, :] / n, x_shape).copy()


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    b = logits.shape[0]
    rows = np.arange(b)
    per_sample = -logp[rows, labels]
    g = np.exp(logp)
    g[rows, labels] -= 1.0
    return per_sample.mean(), g / b, per_sample


# ---------------------------------------------------------------- full model


def _check_finite(name, x):
    if not np.all(np.isfinite(x)):
        raise TrainingDiverged(f"non-finite values in {name} output")


def forward_with_cache(patches, params, backend="direct", check=False):
    """Forward pass keeping every block input for the backward sweep."""
    cfg = params.config
    cache = {"patches": patches}
    x = M.dense(patches, params["embed.weight"], params["embed.bias"])
    if check:
        _check_finite("patch_embed", x)
    cache["block_in"] = []
    cache["token_in"] = []
    for l in range(cfg.depth):
        cache["block_in"].append(x)
        u = M.channel_block(x, params, l)
        if check:
            _check_finite(f"block {l} channel_mixing", u)
        cache["token_in"].append(u)
        x = M.token_block(u, params, l, backend)
        if check:
            _check_finite(f"block {l} token_mixing", x)
    cache["final_in"] = x
    f = M.apply_norm(cfg.norm, x, params["final_norm.scale"], params["final_norm.bias"])
    pooled = M.mean_pool(f)
    cache["pooled"] = pooled
    logits = M.head(pooled, params["head.weight"], params["head.bias"])
    if check:
        _check_finite("head", logits)
    return logits, cache


def backward_from_cache(glogits, cache, params, backend="direct"):
    cfg = params.config
    grads = {}
    gpooled, grads["head.weight"], grads["head.bias"] = dense_vjp(
        cache["pooled"], params["head.weight"], glogits
    )
    x = cache["final_in"]
    gf = mean_pool_vjp(x.shape, gpooled)
    g, grads["final_norm.scale"], grads["final_norm.bias"] = norm_vjp(
        cfg.norm, x, params["final_norm.scale"], gf
    )
    for l in reversed(range(cfg.depth)):
        pre = f"blocks.{l}."
        u = cache["token_in"][l]
        ns, nb = params[l, "token_norm.scale"], params[l, "token_norm.bias"]
        if cfg.token_mixer == "original":
            g, tg = token_mixing_original_vjp(u, params[l, "token.w3"], params[l, "token.w4"], cfg.norm, ns, nb, g)
        elif cfg.token_mixer == "simplified":
            g, tg = token_mixing_simplified_vjp(u, params[l, "token.w3"], cfg.norm, ns, nb, g)
        else:
            g, tg = token_mixing_ccs_vjp(u, params[l, "token.ccs"], cfg.norm, ns, nb, g, backend)
        grads[pre + "token_norm.scale"] = tg.pop("scale")
        grads[pre + "token_norm.bias"] = tg.pop("bias")
        for k, v in tg.items():
            grads[pre + "token." + k] = v
        x = cache["block_in"][l]
        g, cg = channel_mixing_vjp(
            x, params[l, "channel.w1"], params[l, "channel.b1"],
            params[l, "channel.w2"], params[l, "channel.b2"],
            cfg.norm, params[l, "channel_norm.scale"], params[l, "channel_norm.bias"], g,
        )
        grads[pre + "channel_norm.scale"] = cg.pop("scale")
        grads[pre + "channel_norm.bias"] = cg.pop("bias")
        for k, v in cg.items():
            grads[pre + "channel." + k] = v
    _, grads["embed.weight"], grads["embed.bias"] = dense_vjp(
        cache["patches"], params["embed.weight"], g
    )
    return grads


def _as_patches(inputs, config):
    inputs = as_tensor(inputs)
    if inputs.shape[-3:] == (3, config.height, config.width):
        return M.unfold_patches(inputs, config.patch)
    if inputs.shape[-2:] == (config.tokens, config.patch_dim):
        return inputs
    raise DimensionError(
        f"input of shape {inputs.shape} is neither an image (3, {config.height}, "
        f"{config.width}) nor patches ({config.tokens}, {config.patch_dim})"
    )


def loss_and_grads(inputs, labels, params, backend="direct"):
    """Mean cross-entropy over a batch and the gradient of every parameter.

    ``inputs`` are images ``(B, 3, H, W)`` or unfolded patches ``(B, N, 3p^2)``.
    Returns ``(loss, grads, per_sample_losses, logits)``.
    """
    patches = _as_patches(inputs, params.config)
    if patches.ndim == 2:
        patches = patches[None]
    logits, cache = forward_with_cache(patches, params, backend)
    loss, glogits, per_sample = softmax_cross_entropy(logits, labels)
    return loss, backward_from_cache(glogits, cache, params, backend), per_sample, logits


def backward(image, label, params, backend="direct"):
    """Loss and exact gradients for one labelled input."""
    loss, grads, _, _ = loss_and_grads(image, [label], params, backend)
    return loss, grads


def locate_nonfinite(patches, params, backend="direct"):
    """Name of the first layer whose output is non-finite, or None."""
    try:
        forward_with_cache(patches, params, backend, check=True)
    except TrainingDiverged as e:
        return str(e)
    return None


# ---------------------------------------------------------------- optimizer


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, grads, state, lr=None):
    """One decoupled-weight-decay Adam update; returns ``(params, state)``.

    Decay applies to matrices only (biases, norm parameters and 1-D arrays are
    not decayed). Parameters without a gradient are left untouched.
    """
    lr = state.lr if lr is None else lr
    t = state.step + 1
    m, v = dict(state.m), dict(state.v)
    new = {}
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m_prev = m.get(name, np.zeros_like(p))
        v_prev = v.get(name, np.zeros_like(p))
        m[name] = state.beta1 * m_prev + (1.0 - state.beta1) * g
        v[name] = state.beta2 * v_prev + (1.0 - state.beta2) * g * g
        m_hat = m[name] / (1.0 - state.beta1**t)
        v_hat = v[name] / (1.0 - state.beta2**t)
        decay = state.weight_decay if p.ndim >= 2 else 0.0
        new[name] = p * (1.0 - lr * decay) - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptimizerState(
        state.lr, state.beta1, state.beta2, state.eps, state.weight_decay, t, m, v
    )
    return params.replace(new), new_state


def cosine_lr(step, total, peak, floor, warmup):
    if warmup and step < warmup:
        return peak * (step + 1) / warmup
    span = max(1, total - warmup)
    progress = min(1.0, (step - warmup) / span)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------- shift task


@dataclass
class SynthDataset:
    tokens: np.ndarray  # (count, N, C_in)
    labels: np.ndarray
    offsets: np.ndarray
    motifs: np.ndarray  # (classes, k, C_in)
    seed: int
    shift_policy: str

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self):
        return list(zip(self.tokens, self.labels))


SHIFT_POLICIES = ("none", "uniform")


def _place(motifs, labels, offsets, n, noise, rng):
    count = len(labels)
    k, c_in = motifs.shape[1:]
    tokens = noise * rng.standard_normal((count, n, c_in))
    pos = (offsets[:, None] + np.arange(k)[None, :]) % n
    tokens[np.arange(count)[:, None], pos] = motifs[labels]
    return tokens


def make_shift_task(
    seed, tokens, channels_in, classes, train_count, test_count,
    shift_policy="none", motif_len=3, noise=0.1, test_shift="uniform",
):
    """Train/test sets where each class is one ordering of shared motif tokens.

    Every class uses the same ``motif_len`` atom vectors, only their order
    differs, so the token multiset carries no label information and a
    classifier has to relate neighbouring tokens. The motif is written at a
    circular offset into Gaussian noise tokens. Train offsets are 0 under
    ``shift_policy="none"`` and uniform otherwise; test offsets are uniform
    unless ``test_shift`` is an integer.
    """
    if classes < 2:
        raise ConfigurationError("need at least two classes")
    if shift_policy not in SHIFT_POLICIES:
        raise ConfigurationError(f"shift_policy must be one of {SHIFT_POLICIES}")
    if tokens <= motif_len or channels_in < 1 or train_count < 1 or test_count < 1:
        raise ConfigurationError("degenerate task sizes")
    orders = list(itertools.permutations(range(motif_len)))
    if classes > len(orders):
        raise ConfigurationError(f"at most {len(orders)} classes for motif length {motif_len}")
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((motif_len, channels_in))
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    picks = rng.permutation(len(orders))[:classes]
    motifs = np.stack([atoms[list(orders[i])] for i in picks])

    def build(count, policy, fixed):
        labels = rng.integers(0, classes, size=count)
        if fixed is not None:
            offsets = np.full(count, int(fixed) % tokens)
        elif policy == "none":
            offsets = np.zeros(count, dtype=np.int64)
        else:
            offsets = rng.integers(0, tokens, size=count)
        x = _place(motifs, labels, offsets, tokens, noise, rng)
        return SynthDataset(x, labels, offsets, motifs, seed, policy)

    train = build(train_count, shift_policy, None)
    test = build(test_count, "uniform", None if test_shift == "uniform" else test_shift)
    return train, test


def shift_task_config(mixer, tokens=16, hidden=16, depth=2, groups=4, classes=4, norm="layernorm"):
    """Tiny backbone for the shift task: 1 x N strip images, 1-pixel patches."""
    return M.MixerConfig(
        tokens=tokens, depth=depth, hidden=hidden, ratio=2, patch=1, groups=groups,
        height=1, width=tokens, token_mixer=mixer,
        token_mlp_dim=tokens if mixer == "original" else 0,
        norm=norm, num_classes=classes,
    )


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: M.ModelParams
    train_loss: list
    test_acc: list


def predict(params, tokens, backend="direct", batch=256):
    out = []
    for i in range(0, len(tokens), batch):
        out.append(M.forward_tokens(tokens[i : i + batch], params, backend).argmax(axis=-1))
    return np.concatenate(out)


def accuracy(params, dataset, backend="direct"):
    return float((predict(params, dataset.tokens, backend) == dataset.labels).mean())


def train(
    config, datasets, epochs, lr=1e-3, seed=0, batch_size=32, weight_decay=0.05,
    warmup_frac=0.05, min_lr_ratio=0.01, backend="direct", params=None, log=None,
):
    """AdamW with linear warmup then cosine decay from ``lr`` to ``lr * min_lr_ratio``.

    ``datasets`` is a ``(train, test)`` pair whose tokens are unfolded patches
    of ``config``. Deterministic for a given seed. The per-epoch train loss is
    the mean per-sample loss seen during that epoch, accumulated in sample order.
    """
    train_set, test_set = datasets
    if train_set.tokens.shape[1:] != (config.tokens, config.patch_dim):
        raise DimensionError(
            f"dataset tokens {train_set.tokens.shape[1:]} do not match "
            f"config ({config.tokens}, {config.patch_dim})"
        )
    rng = np.random.default_rng(seed)
    if params is None:
        params = M.init_params(config, rng)
    state = OptimizerState(lr=lr, weight_decay=weight_decay)
    count = len(train_set)
    steps_per_epoch = math.ceil(count / batch_size)
    total = epochs * steps_per_epoch
    warmup = int(warmup_frac * total)
    losses, accs = [], []
    for epoch in range(epochs):
        order = rng.permutation(count)
        sample_loss = np.zeros(count)
        for s in range(steps_per_epoch):
            idx = order[s * batch_size : (s + 1) * batch_size]
            loss, grads, per_sample, _ = loss_and_grads(
                train_set.tokens[idx], train_set.labels[idx], params, backend
            )
            if not np.isfinite(loss):
                where = locate_nonfinite(train_set.tokens[idx], params, backend)
                raise TrainingDiverged(
                    f"epoch {epoch} step {s}: loss is {loss}; {where or 'non-finite loss'}"
                )
            sample_loss[idx] = per_sample
            step_lr = cosine_lr(state.step, total, lr, lr * min_lr_ratio, warmup)
            params, state = adamw_step(params, grads, state, lr=step_lr)
        losses.append(float(sample_loss.mean()))
        accs.append(accuracy(params, test_set, backend))
        if log is not None:
            log(epoch, losses[-1], accs[-1])
    return TrainResult(params, losses, accs)
