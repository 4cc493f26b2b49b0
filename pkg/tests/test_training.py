import math

import numpy as np
import pytest

from ccsmlp import gradcheck as G
from ccsmlp import model as M
from ccsmlp import training as T
from ccsmlp.numerics import ConfigurationError


def test_cross_entropy_uniform_logits():
    loss, grad, per = T.softmax_cross_entropy(np.zeros((2, 4)), [1, 3])
    assert loss == pytest.approx(math.log(4), rel=1e-15)
    np.testing.assert_allclose(per, [math.log(4)] * 2)
    expect = np.full((2, 4), 0.25)
    expect[0, 1] -= 1
    expect[1, 3] -= 1
    np.testing.assert_allclose(grad, expect / 2)


def test_cross_entropy_is_shift_stable():
    loss, _, _ = T.softmax_cross_entropy(np.array([[1000.0, 0.0]]), [0])
    assert loss == 0.0


@pytest.mark.parametrize("case", G.layer_cases(7), ids=lambda c: c.name)
def test_layer_finite_differences(case):
    errs = G.fd_check(case, np.random.default_rng(0))
    assert max(errs.values()) < G.FD_RTOL, errs


@pytest.mark.parametrize("case", G.layer_cases(8), ids=lambda c: c.name)
def test_layer_dot_product(case):
    assert G.dot_product_check(case, np.random.default_rng(1)) < G.DOT_RTOL


@pytest.mark.parametrize("mixer", M.TOKEN_MIXERS)
def test_tiny_model_gradients(mixer):
    case, _ = G.tiny_model_case(mixer, "layernorm", seed=3)
    assert max(G.fd_check(case, np.random.default_rng(2)).values()) < G.FD_RTOL


def test_adamw_first_step():
    cfg = T.shift_task_config("ccs", tokens=4, hidden=4, depth=0, groups=2, classes=2)
    params = M.init_params(cfg, 0)
    grads = {"embed.weight": np.full((3, 4), 0.5), "embed.bias": np.full(4, -2.0)}
    state = T.OptimizerState(lr=0.1, weight_decay=0.05)
    new, state = T.adamw_step(params, grads, state)
    # first bias-corrected step is lr * g / (|g| + eps); decay only on the matrix
    step = 0.1 * 0.5 / (0.5 + 1e-8)
    np.testing.assert_allclose(new["embed.weight"], params["embed.weight"] * (1 - 0.1 * 0.05) - step, rtol=1e-14)
    np.testing.assert_allclose(new["embed.bias"], params["embed.bias"] + 0.1 * 2 / (2 + 1e-8), rtol=1e-14)
    np.testing.assert_array_equal(new["head.weight"], params["head.weight"])
    assert state.step == 1


def test_cosine_schedule():
    assert T.cosine_lr(0, 100, 1.0, 0.01, 10) == pytest.approx(0.1)
    assert T.cosine_lr(10, 100, 1.0, 0.01, 10) == pytest.approx(1.0)
    assert T.cosine_lr(55, 100, 1.0, 0.01, 10) == pytest.approx(0.505)
    assert T.cosine_lr(100, 100, 1.0, 0.01, 10) == pytest.approx(0.01)


def test_shift_task_structure():
    train, test = T.make_shift_task(0, 8, 3, 4, 64, 64, "none", noise=0.0)
    assert train.tokens.shape == (64, 8, 3)
    assert np.all(train.offsets == 0)
    assert len(set(test.offsets.tolist())) > 1
    # every class is a reordering of the same atoms
    ref = np.sort(train.motifs[0], axis=0)
    for m in train.motifs[1:]:
        np.testing.assert_array_equal(np.sort(m, axis=0), ref)
    # noise-free shifted samples are exact rolls of the motif placement
    i = int(np.argmax(test.offsets > 0))
    base = np.zeros((8, 3))
    base[:3] = test.motifs[test.labels[i]]
    np.testing.assert_array_equal(test.tokens[i], np.roll(base, test.offsets[i], axis=0))


def test_shift_task_errors():
    with pytest.raises(ConfigurationError):
        T.make_shift_task(0, 8, 3, 7, 8, 8)
    with pytest.raises(ConfigurationError):
        T.make_shift_task(0, 8, 3, 2, 8, 8, shift_policy="random")


def small_run(**kw):
    ds = T.make_shift_task(1, 8, 3, 3, 32, 16, "none")
    cfg = T.shift_task_config("ccs", tokens=8, hidden=8, classes=3)
    return T.train(cfg, ds, 3, batch_size=8, **kw)


def test_training_is_bitwise_reproducible():
    a, b = small_run(seed=4), small_run(seed=4)
    assert a.train_loss == b.train_loss and a.test_acc == b.test_acc
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert small_run(seed=5).train_loss != a.train_loss


def test_zero_lr_gives_flat_curve():
    r = small_run(lr=0.0)
    assert len(set(r.train_loss)) == 1


def test_nan_parameters_abort():
    cfg = T.shift_task_config("ccs", tokens=8, hidden=8, classes=3)
    params = M.init_params(cfg, 0)
    bad = params.replace({"blocks.1.token.ccs": np.full((4, 8), np.nan)})
    ds = T.make_shift_task(1, 8, 3, 3, 8, 8)
    with pytest.raises(T.TrainingDiverged, match="block 1"):
        T.train(cfg, ds, 1, params=bad)


def test_loss_decreases():
    r = small_run(lr=1e-2)
    assert r.train_loss[-1] < r.train_loss[0]


def test_motifs_separable_by_exhaustive_offset_matching():
    n = 12
    _, test = T.make_shift_task(2, n, 3, 6, 8, 96, noise=0.0)
    k = test.motifs.shape[1]
    templates = {}
    for cls, motif in enumerate(test.motifs):
        for off in range(n):
            t = np.zeros((n, 3))
            t[(off + np.arange(k)) % n] = motif
            templates[cls, off] = t
    hits = 0
    for x, y in zip(test.tokens, test.labels):
        best = min(templates, key=lambda key: np.abs(templates[key] - x).sum())
        hits += best[0] == y
    assert hits == len(test.labels)
