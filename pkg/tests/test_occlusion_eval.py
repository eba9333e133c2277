"""Occlusion heatmap and dataset-level evaluation tests."""

import json

import numpy as np
import pytest

from blocktower.evalmetrics import (
    OCCLUSION_GRAY,
    evaluate,
    export_heatmap_pgm,
    fall_probabilities,
    occlusion_heatmap,
    transfer_protocol,
)
from blocktower.learn.model import FallMaskNet, init_weights
from blocktower.learn.train import LossConfig, TrainConfig

from test_train import synthetic_examples


@pytest.fixture(scope="module")
def model16():
    model = FallMaskNet(input_hw=16)
    init_weights(model, 77)
    return model


def test_occlusion_uniform_gray_is_noop(model16):
    image = np.full((3, 16, 16), OCCLUSION_GRAY, dtype=np.float32)
    hm = occlusion_heatmap(model16, image)
    assert hm.shape == (14, 14)
    assert np.allclose(hm, 0.0, atol=1e-6)


def test_occlusion_shape_for_any_input(model16):
    model56 = FallMaskNet(input_hw=56)
    init_weights(model56, 3)
    image = np.random.default_rng(0).random((3, 56, 56)).astype(np.float32)
    assert occlusion_heatmap(model56, image).shape == (14, 14)


def test_occlusion_matches_independent_single_cell(model16):
    rng = np.random.default_rng(4)
    image = rng.random((3, 16, 16)).astype(np.float32)
    hm = occlusion_heatmap(model16, image)
    base = fall_probabilities(model16, image[None])[0]
    h = w = 16
    sigma = 0.2 * w
    for (j, i) in [(0, 0), (7, 3), (13, 13), (5, 11)]:
        cy = (j + 0.5) * h / 14
        cx = (i + 0.5) * w / 14
        r2 = ((np.arange(w) + 0.5)[None, :] - cx) ** 2 + ((np.arange(h) + 0.5)[:, None] - cy) ** 2
        alpha = np.exp(-r2 / (2 * sigma * sigma)).astype(np.float32)
        occ = (1 - alpha) * image + alpha * np.float32(OCCLUSION_GRAY)
        p = fall_probabilities(model16, occ[None])[0]
        assert hm[j, i] == pytest.approx(p - base, abs=1e-7)


def test_occlusion_deterministic(model16):
    image = np.random.default_rng(9).random((3, 16, 16)).astype(np.float32)
    a = occlusion_heatmap(model16, image)
    b = occlusion_heatmap(model16, image)
    assert a.tobytes() == b.tobytes()


def test_heatmap_pgm_export_roundtrip(tmp_path, model16):
    image = np.random.default_rng(2).random((3, 16, 16)).astype(np.float32)
    hm = occlusion_heatmap(model16, image)
    prefix = str(tmp_path / "heat")
    export_heatmap_pgm(hm, prefix)
    from blocktower.imageio import read_pgm

    pix, maxval = read_pgm(prefix + ".pgm")
    assert maxval == 255
    side = json.loads(open(prefix + ".json").read())
    recovered = side["min"] + (side["max"] - side["min"]) * pix / 255.0
    span = max(side["max"] - side["min"], 1e-12)
    assert np.abs(recovered - hm).max() <= span / 255.0 + 1e-12


# -- evaluate ------------------------------------------------------------------


def test_evaluate_report_fields():
    examples = synthetic_examples(n=40, hw=16)
    model = FallMaskNet(input_hw=16)
    init_weights(model, 5)
    report = evaluate(model, examples)
    d = report.to_dict()
    assert d["n_examples"] == 40
    assert 0.0 <= d["accuracy"] <= 1.0
    assert d["accuracy_ci"] == pytest.approx(
        np.sqrt(d["accuracy"] * (1 - d["accuracy"]) / 40))
    assert set(d["per_size"]) == {2, 3, 4}
    conf = d["confusion"]
    assert conf["tp"] + conf["fp"] + conf["tn"] + conf["fn"] == 40
    assert (conf["tp"] + conf["tn"]) / 40 == pytest.approx(d["accuracy"])
    assert d["miou"] is not None and d["ll_per_px"] <= 0.0
    assert d["roc"]["points"][0] == [0.0, 0.0]
    assert d["roc"]["points"][-1] == [1.0, 1.0]


def test_evaluate_skips_mask_metrics_without_masks():
    import dataclasses

    examples = synthetic_examples(n=10, hw=16)
    examples = [dataclasses.replace(e, masks=None) for e in examples]
    model = FallMaskNet(input_hw=16)
    report = evaluate(model, examples)
    assert report.miou is None and report.ll_per_px is None


def test_transfer_protocol_flags_held_out_sizes():
    train_ex = synthetic_examples(n=36, hw=16, seed=1)
    test_ex = synthetic_examples(n=18, hw=16, seed=2)
    cfg = TrainConfig(lr_grid=(0.05,), epochs=2, batch_size=8, seed=4)
    out = transfer_protocol(train_ex, test_ex, (2, 3), cfg, LossConfig(),
                            model_kind="logreg-factored")
    assert out["held_out_sizes"] == (4,)
    assert out["reports"][4].held_out
    assert not out["reports"][2].held_out
    assert not out["reports"][3].held_out
    for size, rep in out["reports"].items():
        assert rep.per_size[size]["held_out"] == (size == 4)


def test_transfer_protocol_full_training_no_flags():
    train_ex = synthetic_examples(n=24, hw=16, seed=1)
    test_ex = synthetic_examples(n=12, hw=16, seed=2)
    cfg = TrainConfig(lr_grid=(0.05,), epochs=1, batch_size=8, seed=4)
    out = transfer_protocol(train_ex, test_ex, (2, 3, 4), cfg, LossConfig(),
                            model_kind="logreg-factored")
    assert out["held_out_sizes"] == ()
    assert not any(r.held_out for r in out["reports"].values())


def test_transfer_protocol_rejects_bad_sizes():
    with pytest.raises(ValueError):
        transfer_protocol([], [], (), TrainConfig(), LossConfig())
    with pytest.raises(ValueError):
        transfer_protocol([], [], (5,), TrainConfig(), LossConfig())
