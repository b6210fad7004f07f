"""Smoke tests for the vtseg Python module.

Requires the built extension on PYTHONPATH, e.g.

    PYTHONPATH=build python3 -m pytest tests/python -q

ctest wires this up automatically when the module target exists. Arrays are
indexed (z, y, x); geometry keywords (dims, spacing, origin) are (x, y, z).
"""

import numpy as np
import pytest

vtseg = pytest.importorskip("vtseg")


def airway(dims=(24, 24, 16), seed=5, noise_sigma=0.0):
    return vtseg.make_airway_phantom(dims=dims, seed=seed, noise_sigma=noise_sigma)


def test_version_string():
    major, minor, patch = vtseg.__version__.split(".")
    assert all(part.isdigit() for part in (major, minor, patch))


def test_phantom_shapes_dtypes_determinism():
    img, lbl = airway()
    assert img.shape == (16, 24, 24) and img.dtype == np.float32
    assert lbl.shape == (16, 24, 24) and lbl.dtype == np.uint8
    assert set(np.unique(lbl)) <= {0, 1} and lbl.sum() > 0
    img2, lbl2 = airway()
    assert np.array_equal(img, img2) and np.array_equal(lbl, lbl2)
    img3, _ = airway(seed=6)
    assert not np.array_equal(img, img3)


def test_dice_and_hausdorff():
    _, lbl = airway()
    assert vtseg.dice(lbl, lbl) == 1.0
    shifted = np.roll(lbl, 2, axis=1)
    assert vtseg.dice(lbl, shifted) < 1.0
    fast = vtseg.hausdorff(lbl, shifted)
    assert fast == vtseg.hausdorff(lbl, shifted, mode="naive")
    assert fast > 0.0
    # Anisotropic spacing scales the distance.
    assert vtseg.hausdorff(lbl, shifted, spacing=(1, 2, 1)) >= fast


def test_hausdorff_empty_mask_raises():
    empty = np.zeros((4, 4, 4), dtype=np.uint8)
    with pytest.raises(RuntimeError):
        vtseg.hausdorff(empty, empty)


def test_ssim_identity_and_mask_dispatch():
    img, lbl = airway(noise_sigma=0.02)
    assert vtseg.ssim3d(img, img) == pytest.approx(1.0)
    # Integer inputs are treated as masks on the full luminance range, so a
    # mask compared with itself is also a perfect match.
    assert vtseg.ssim3d(lbl, lbl) == pytest.approx(1.0)
    assert vtseg.ssim3d(lbl, np.roll(lbl, 3, axis=2)) < 1.0


def test_evaluate_record():
    _, lbl = airway()
    rec = vtseg.evaluate(np.roll(lbl, 1, axis=0), lbl, volume_id="v1", task_label="airway")
    assert rec["volume_id"] == "v1" and rec["task_label"] == "airway"
    assert 0.0 < rec["dice"] < 1.0 and rec["hd_defined"] and rec["hd"] > 0.0
    assert rec["hd_units"] == "voxel" and 0.0 < rec["ssim"] <= 1.0
    # An empty prediction leaves the distance undefined instead of raising.
    rec = vtseg.evaluate(np.zeros_like(lbl), lbl)
    assert rec["dice"] == 0.0 and not rec["hd_defined"]


def test_diffusion_conserves_sum_within_extrema():
    rng = np.random.default_rng(42)
    img = rng.uniform(-40.0, 300.0, size=(10, 12, 9)).astype(np.float32)
    out = vtseg.diffuse_gad(img, iterations=5)
    assert abs(out.sum(dtype=np.float64) - img.sum(dtype=np.float64)) <= 1e-6 * abs(
        img.sum(dtype=np.float64)
    )
    assert out.min() >= img.min() and out.max() <= img.max()


def test_preprocess_ct_shape_and_range():
    rng = np.random.default_rng(7)
    hu = rng.uniform(-1200.0, 1400.0, size=(12, 20, 20)).astype(np.float32)
    out = vtseg.preprocess_ct(hu, target_dims=(16, 16, 8))
    assert out.shape == (8, 16, 16)
    assert out.min() >= 0.0 and out.max() <= 255.0


def test_preprocess_mri_crop_and_resample():
    img, _ = airway(dims=(20, 20, 12), noise_sigma=0.05)
    out = vtseg.preprocess_mri(img, crop_fraction=0.5, target_dims=(10, 10, 6))
    assert out.shape == (6, 10, 10)
    assert out.min() >= 0.0 and out.max() <= 255.0


def test_staple_recovery_and_unanimity():
    _, truth = airway(dims=(32, 32, 24), seed=3)
    raters = vtseg.simulate_raters(
        truth, [(0.95, 0.99), (0.90, 0.97), (0.80, 0.99)], seed=7
    )
    assert len(raters) == 3
    fused = vtseg.staple(raters)
    assert fused["converged"]
    assert fused["probability"].shape == truth.shape
    assert vtseg.dice(fused["consensus"], truth) > 0.9
    for est, true in zip(fused["sensitivity"], (0.95, 0.90, 0.80)):
        assert abs(est - true) < 0.1
    # Unanimous raters are a fixed point: the consensus is the common mask.
    unanimous = vtseg.staple([truth, truth, truth])
    assert np.array_equal(unanimous["consensus"], truth)
    assert unanimous["iterations"] <= 5


def test_augment_expands_each_pair():
    img, lbl = airway(dims=(12, 12, 8))
    out = vtseg.augment([("s0", img, lbl)], seed=11)
    assert [item[0] for item in out] == ["s0", "s0_noise", "s0_flip", "s0_rot"]
    orig_id, orig_img, orig_lbl = out[0]
    assert np.array_equal(orig_img, img) and np.array_equal(orig_lbl, lbl)
    for _, aug_img, aug_lbl in out:
        assert aug_img.shape == img.shape and aug_lbl.shape == lbl.shape


def test_net_train_predict_checkpoint_roundtrip(tmp_path):
    img, lbl = airway(dims=(16, 16, 16), seed=9)
    net = vtseg.Net(kind="unet3d", input_dims=(16, 16, 16), channel_widths=(4, 8), seed=1)
    assert net.kind == "unet3d" and net.step == 0
    assert net.layer_count > 0 and net.parameter_count > 0

    history = net.train([(img, lbl)], learning_rate=1e-3, epochs=3, steps_per_epoch=10, seed=3)
    assert len(history) == 30 and net.step == 30
    assert history[-1] < history[0]

    pred = net.predict(img)
    assert pred.shape == img.shape and pred.dtype == np.uint8

    path = tmp_path / "net.vtck"
    net.save(str(path))
    restored = vtseg.Net.load(str(path))
    assert restored.step == 30
    assert np.array_equal(restored.predict(img), pred)

    # Identical seeds end to end give identical trained behaviour.
    twin = vtseg.Net(kind="unet3d", input_dims=(16, 16, 16), channel_widths=(4, 8), seed=1)
    twin_history = twin.train(
        [(img, lbl)], learning_rate=1e-3, epochs=3, steps_per_epoch=10, seed=3
    )
    assert twin_history == history
    assert np.array_equal(twin.predict(img), pred)


def test_freeze_prefix_marks_layers():
    net = vtseg.Net(kind="unet3d", input_dims=(16, 16, 16), channel_widths=(4, 8), seed=2)
    net.freeze_prefix(2)
    for param in net.parameters:
        assert param["frozen"] == (param["layer"] < 2)


def test_gradients_match_finite_differences():
    img, lbl = airway(dims=(8, 8, 8), seed=13)
    net = vtseg.Net(kind="unet3d", input_dims=(8, 8, 8), channel_widths=(4, 8), seed=4)
    assert vtseg.grad_check(net, img, lbl) < 1e-4


def test_nrrd_roundtrip(tmp_path):
    img, lbl = airway(dims=(10, 12, 8), noise_sigma=0.03)
    img_path, lbl_path = str(tmp_path / "img.nrrd"), str(tmp_path / "lbl.nrrd")
    vtseg.write_nrrd(img, img_path, spacing=(0.5, 0.5, 1.25), origin=(-1.0, 2.0, 0.0))
    vtseg.write_nrrd(lbl, lbl_path, encoding="gzip")

    back_img, info = vtseg.read_nrrd(img_path)
    assert np.array_equal(back_img, img) and not info["is_label"]
    assert tuple(info["spacing"]) == (0.5, 0.5, 1.25)
    assert tuple(info["origin"]) == (-1.0, 2.0, 0.0)

    back_lbl, info = vtseg.read_nrrd(lbl_path)
    assert np.array_equal(back_lbl, lbl) and info["is_label"]


def test_invalid_arguments_raise_value_error():
    with pytest.raises(ValueError):
        vtseg.Net(kind="perceptron", input_dims=(8, 8, 8))
    with pytest.raises(ValueError):
        vtseg.hausdorff(
            np.ones((4, 4, 4), np.uint8), np.ones((4, 4, 4), np.uint8), mode="psychic"
        )
    img, lbl = airway(dims=(8, 8, 8))
    with pytest.raises(ValueError):
        vtseg.augment([("x", img, lbl)], flip_axis="diagonal")
