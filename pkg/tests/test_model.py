"""Model-level tests: forward contracts, checkpoints, joint-loss gradients."""

import numpy as np
import pytest

from blocktower.learn.model import (
    FACTOR_DIM,
    LogRegModel,
    FallMaskNet,
    build_model,
    init_weights,
    load_checkpoint,
    save_checkpoint,
    trunk_features,
)
from blocktower.learn.train import LossConfig, joint_loss, zero_grads

RNG = np.random.default_rng(77)


def random_batch(n=2, hw=8, dtype=np.float64, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 3, hw, hw)).astype(dtype)
    y = rng.integers(0, 2, n).astype(bool)
    masks = rng.integers(0, 5, (n, 4, hw, hw)).astype(np.uint8)
    return x, y, masks


def test_zero_weights_give_chance_outputs():
    model = FallMaskNet(input_hw=56)
    x = RNG.random((3, 3, 56, 56)).astype(np.float32)
    fall, mask_logits = model.forward(x)
    probs = 1.0 / (1.0 + np.exp(-fall))
    assert np.allclose(probs, 0.5)
    for logits in mask_logits:
        assert np.allclose(logits, 0.0)
        # uniform softmax: every class at 0.2
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        assert np.allclose(p, 0.2)


def test_softmax_normalized_with_random_weights():
    model = FallMaskNet(input_hw=56)
    init_weights(model, 9)
    x = RNG.random((2, 3, 56, 56)).astype(np.float32)
    _, mask_logits = model.forward(x)
    for logits in mask_logits:
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-5)
        assert p.min() >= 0


def test_forward_deterministic_and_permutation_invariant():
    model = FallMaskNet(input_hw=56)
    init_weights(model, 4)
    x = RNG.random((5, 3, 56, 56)).astype(np.float32)
    f1, m1 = model.forward(x)
    f2, m2 = model.forward(x)
    assert f1.tobytes() == f2.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(m1, m2))
    perm = np.array([3, 0, 4, 1, 2])
    fp, mp = model.forward(x[perm])
    # float32 GEMM reductions differ at the last ulp across memory layouts
    assert np.allclose(fp, f1[perm], rtol=1e-5, atol=1e-6)
    assert all(np.allclose(a[perm], b, rtol=1e-5, atol=1e-6) for a, b in zip(m1, mp))


def test_input_size_not_multiple_of_8_rejected():
    with pytest.raises(ValueError):
        FallMaskNet(input_hw=50)
    with pytest.raises(ValueError):
        LogRegModel(input_hw=9)


def test_trunk_shape_invariant():
    model = FallMaskNet(input_hw=56)
    x = np.zeros((1, 3, 56, 56), dtype=np.float32)
    feat = model._trunk(x)
    assert feat.shape == (1, 64, 7, 7)
    assert trunk_features(model, x).shape == (1, 64)


def test_he_init_statistics():
    model = FallMaskNet(input_hw=56)
    init_weights(model, 123)
    w = model.conv3.w  # fan_in = 32*9 = 288
    assert w.std() == pytest.approx(np.sqrt(2.0 / 288), rel=0.05)
    assert abs(w.mean()) < 0.01
    assert not model.conv1.b.any()


def test_init_deterministic():
    a = FallMaskNet(input_hw=56)
    b = FallMaskNet(input_hw=56)
    init_weights(a, 5)
    init_weights(b, 5)
    assert all(
        wa.tobytes() == wb.tobytes()
        for (wa, _), (wb, _) in zip(a.parameters(), b.parameters())
    )


@pytest.mark.parametrize("kind,hw", [("mini", 16), ("logreg", 16),
                                     ("logreg-factored", 16)])
def test_checkpoint_roundtrip_bit_identical(tmp_path, kind, hw):
    model = build_model(kind, input_hw=hw)
    init_weights(model, 31)
    x = RNG.random((2, 3, hw, hw)).astype(np.float32)
    fall_before, masks_before = model.forward(x)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    fall_after, masks_after = loaded.forward(x)
    assert fall_before.tobytes() == fall_after.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(masks_before, masks_after))


def test_checkpoint_magic_and_rejects_garbage(tmp_path):
    model = build_model("mini", input_hw=16)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    assert open(path, "rb").read(4) == b"MPHN"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(open(path, "rb").read()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(trunc)


def test_shared_heads_emit_identical_masks_and_roundtrip(tmp_path):
    model = FallMaskNet(input_hw=16, share_heads=True)
    init_weights(model, 8)
    x = RNG.random((2, 3, 16, 16)).astype(np.float32)
    _, masks = model.forward(x)
    assert all(np.array_equal(masks[0], m) for m in masks[1:])
    path = tmp_path / "s.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.share_heads
    assert len(loaded.parameters()) == len(model.parameters())


def test_factored_mask_head_parameter_counts():
    # 56x56: factored 9408*128 + 128*62720 beats dense 9408*62720
    pixels = 3 * 56 * 56
    out = 5 * 56 * 56 * 4
    assert pixels * FACTOR_DIM + FACTOR_DIM * out < pixels * out
    small_factored = LogRegModel(input_hw=16, factored=True)
    small_dense = LogRegModel(input_hw=16, factored=False)

    def mask_params(m):
        layers = [m.mask2] if m.mask1 is None else [m.mask1, m.mask2]
        return sum(w.size for layer in layers for w, _ in layer.parameters())

    assert mask_params(small_factored) != mask_params(small_dense)
    assert small_factored.kind == "logreg-factored"
    assert small_dense.kind == "logreg"


# -- joint loss and full-model gradient checks -------------------------------


def model_loss(model, x, y, masks, loss_cfg):
    fall_logits, mask_logits = model.forward(x)
    return joint_loss(fall_logits, mask_logits, y, masks, loss_cfg)


def relu_pattern(model):
    """Activation masks recorded by the most recent forward pass."""
    if not isinstance(model, FallMaskNet):
        return []
    relus = [model.relu1, model.relu2, model.relu3]
    for head in model.heads:
        relus += [head["reluA"], head["reluB"]]
    return [r._mask.copy() for r in relus]


def fd_gradient_check(model, x, y, masks, cfg, n_checks=20, h=1e-3, seed=1):
    """Central-difference oracle over randomly drawn parameters.

    The oracle requires the loss to be differentiable on [w-h, w+h]; a
    perturbation that flips a ReLU activation pattern invalidates it, so
    such draws are redrawn (the backward pass is checked at machine
    precision against small-h differences elsewhere).
    """
    loss, dfall, dmasks = model_loss(model, x, y, masks, cfg)
    assert np.isfinite(loss)
    base_pattern = relu_pattern(model)
    zero_grads(model)
    model.backward(dfall, dmasks)

    rng = np.random.default_rng(seed)
    params = model.parameters()
    checked = 0
    attempts = 0
    while checked < n_checks:
        attempts += 1
        assert attempts < 40 * n_checks, "too many kink-crossing redraws"
        w, g = params[rng.integers(0, len(params))]
        c = tuple(rng.integers(0, s) for s in w.shape)
        orig = w[c]
        w[c] = orig + h
        lp = model_loss(model, x, y, masks, cfg)[0]
        pat_p = relu_pattern(model)
        w[c] = orig - h
        lm = model_loss(model, x, y, masks, cfg)[0]
        pat_m = relu_pattern(model)
        w[c] = orig
        stable = all(
            np.array_equal(a, b) and np.array_equal(a, c0)
            for a, b, c0 in zip(pat_p, pat_m, base_pattern)
        )
        if not stable:
            continue
        fd = (lp - lm) / (2 * h)
        rel = abs(g[c] - fd) / max(abs(g[c]), abs(fd), 1e-12)
        assert rel < 1e-4, f"param {c}: analytic {g[c]}, fd {fd}, rel {rel}"
        checked += 1


@pytest.mark.parametrize("builder", [
    lambda: FallMaskNet(input_hw=8, dtype=np.float64),
    lambda: FallMaskNet(input_hw=8, share_heads=True, dtype=np.float64),
    lambda: LogRegModel(input_hw=8, factored=True, dtype=np.float64),
    lambda: LogRegModel(input_hw=8, factored=False, dtype=np.float64),
])
def test_full_model_gradient_check(builder):
    model = builder()
    init_weights(model, 21)
    x, y, masks = random_batch()
    fd_gradient_check(model, x, y, masks, LossConfig(lambda_mask=0.7))


def test_lambda_zero_kills_mask_gradients():
    model = FallMaskNet(input_hw=8, dtype=np.float64)
    init_weights(model, 2)
    x, y, masks = random_batch()
    loss, dfall, dmasks = model_loss(model, x, y, masks, LossConfig(lambda_mask=0.0))
    zero_grads(model)
    model.backward(dfall, dmasks)
    for head in model.heads:
        for name in ("convA", "convB", "convC"):
            for _, g in head[name].parameters():
                assert not g.any()
    assert model.conv1.dw.any()  # fall loss still reaches the trunk


def test_perfect_predictions_near_zero_loss():
    n, hw = 2, 8
    y = np.array([True, False])
    masks = np.zeros((n, 4, hw, hw), dtype=np.uint8)
    big = 18.0  # sigmoid/softmax saturate past 1 - 1e-7
    fall_logits = np.where(y, big, -big).astype(np.float64)
    mask_logits = [np.zeros((n, 5, hw, hw)) for _ in range(4)]
    for t in range(4):
        mask_logits[t][:, 0] = big
    loss, _, _ = joint_loss(fall_logits, mask_logits, y, masks, LossConfig())
    assert loss < 1e-5


def test_both_loss_terms_gradient_check_in_isolation():
    # fall-only and mask-only configurations both pass finite differences
    rng = np.random.default_rng(5)
    n, hw = 3, 8
    y = rng.integers(0, 2, n).astype(bool)
    masks = rng.integers(0, 5, (n, 4, hw, hw)).astype(np.uint8)
    fall_logits = rng.standard_normal(n)
    mask_logits = [rng.standard_normal((n, 5, hw, hw)) for _ in range(4)]
    for cfg in (LossConfig(lambda_mask=0.0), LossConfig(lambda_mask=1.0)):
        _, dfall, dmasks = joint_loss(fall_logits, mask_logits, y, masks, cfg)
        h = 1e-3
        for i in range(n):
            zp = fall_logits.copy()
            zp[i] += h
            zm = fall_logits.copy()
            zm[i] -= h
            fd = (joint_loss(zp, mask_logits, y, masks, cfg)[0]
                  - joint_loss(zm, mask_logits, y, masks, cfg)[0]) / (2 * h)
            assert abs(dfall[i] - fd) / max(abs(fd), 1e-12) < 1e-4
        c = (1, 2, 3, 4)
        mp = [m.copy() for m in mask_logits]
        mp[2][c] += h
        mm = [m.copy() for m in mask_logits]
        mm[2][c] -= h
        fd = (joint_loss(fall_logits, mp, y, masks, cfg)[0]
              - joint_loss(fall_logits, mm, y, masks, cfg)[0]) / (2 * h)
        if cfg.lambda_mask == 0.0:
            assert dmasks[2][c] == 0.0 and abs(fd) < 1e-12
        else:
            assert abs(dmasks[2][c] - fd) / max(abs(fd), 1e-12) < 1e-4
