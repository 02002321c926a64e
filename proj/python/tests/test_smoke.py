import math

import numpy as np
import pytest

import uags


def single_splat(opacity=0.8, color=(0.2, 0.6, 0.9)):
    sh0 = (np.asarray(color) - 0.5) / 0.28209479177387814
    return uags.GaussianModel.from_arrays(
        positions=np.array([[0.0, 0.0, 3.0]]),
        rotations=np.array([[1.0, 0.0, 0.0, 0.0]]),
        log_scales=np.log(np.full((1, 3), 0.3)),
        opacity_logits=np.array([math.log(opacity / (1 - opacity))]),
        features=sh0.reshape(1, 3),
    )


def camera(t=0.0):
    return uags.Camera(40.0, 40.0, 16.0, 12.0, np.eye(4), 32, 24, t)


def test_render_matches_oracle():
    model = single_splat()
    fast = uags.render(model, camera(), ["color", "depth"], precision=uags.Precision.float64,
                       thresholds=False)
    slow = uags.render_oracle(model, camera(), ["color", "depth"])
    assert fast.color.shape == (24, 32, 3)
    assert fast.depth.shape == (24, 32)
    np.testing.assert_allclose(fast.color, slow.color, atol=1e-10)
    np.testing.assert_allclose(fast.depth, slow.depth, atol=1e-10)


def test_alpha_plus_transmittance():
    out = uags.render(single_splat(), camera(), ["color"], thresholds=False)
    np.testing.assert_allclose(out.alpha + out.transmittance, 1.0, atol=1e-6)
    # Center pixel sits under the splat peak.
    assert out.alpha[12, 16] == pytest.approx(0.8, abs=0.02)


def test_uncertainty_mapping():
    p = uags.UncertaintyParams.for_view_count(4)
    assert uags.contribution_to_uncertainty(0.25, p) == pytest.approx(0.5)
    model = single_splat()
    uags.refresh_uncertainty(model, [camera()], p)
    assert model.contributions[0] > 0.25
    assert model.uncertainties[0] < 0.5


def test_metrics():
    rng = np.random.default_rng(3)
    a = rng.random((20, 20, 3))
    assert uags.psnr(a, a) == pytest.approx(99.0)
    assert uags.ssim(a, a) == pytest.approx(1.0)
    mask = np.zeros((20, 20), dtype=bool)
    assert uags.psnr(a, a * 0.5, mask) is None


def test_bad_input_raises():
    with pytest.raises(ValueError):
        uags.render(single_splat(), camera(), ["normals"])
    with pytest.raises(ValueError):
        uags.GaussianModel.from_arrays(np.zeros((2, 3)), np.zeros((1, 4)), np.zeros((1, 3)),
                                       np.zeros(1), np.zeros((1, 3)))


def test_short_training_run(tmp_path):
    scene = uags.synth_scene("ellipsoid", seed=2, frames=4, width=32, height=24)
    assert len(scene) == 4
    config = '{"iterations": 30, "ua_start": 30, "warmup": 5, "densify": {"until": 0}}'
    ckpt = uags.train(scene, config, tmp_path)
    assert ckpt.iteration == 30
    assert (tmp_path / "checkpoint.uags").exists()
    summary = uags.evaluate(ckpt, scene, "train")
    assert summary["mean_psnr"] > 10
    assert summary["csv"].startswith("frame_id,psnr,mpsnr,ssim,mssim")
