import json

import numpy as np
import pytest

import psnerf


def test_metric_identities():
    rng = np.random.default_rng(0)
    img = rng.random((16, 16, 3)).astype(np.float32)
    mask = np.ones((16, 16), dtype=np.float32)
    normals = np.zeros((16, 16, 3), dtype=np.float32)
    normals[..., 2] = 1.0
    assert psnerf.normal_mae(normals, normals, mask, mask) == 0.0
    assert psnerf.scale_invariant_psnr(img, img, mask) == 99.0
    assert psnerf.scale_invariant_psnr(2.0 * img, img, mask) == 99.0
    assert psnerf.ssim(img, img) == pytest.approx(1.0, abs=1e-9)


def test_pfm_roundtrip(tmp_path):
    img = np.random.default_rng(1).random((8, 12, 3)).astype(np.float32)
    path = tmp_path / "img.pfm"
    psnerf.write_pfm(path, img)
    back = psnerf.read_pfm(path)
    np.testing.assert_array_equal(back, img)


def test_config_rejects_unknown_keys():
    cfg = json.loads(psnerf.default_config())
    cfg["no_such_key"] = 1
    with pytest.raises(ValueError):
        psnerf.run_command("synth", json.dumps(cfg))


def test_synth_and_chamfer(tmp_path):
    cfg = json.loads(psnerf.default_config())
    cfg["dataset"] = str(tmp_path / "data")
    cfg["output"] = str(tmp_path / "out")
    cfg["seed"] = 7
    cfg["synth"] = {
        "shape": "sphere",
        "n_views": 2,
        "n_lights": 3,
        "n_holdout_lights": 1,
        "resolution": 24,
    }
    psnerf.run_command("synth", json.dumps(cfg))

    # synth writes the generated dataset under the output directory
    data = tmp_path / "out"
    lights = json.loads((data / "gt" / "lights.json").read_text())
    dataset_lights = [l for l in lights["lights"] if not l["holdout"]]
    assert len(dataset_lights) == 2 * 3

    normal = psnerf.read_pfm(data / "gt" / "view_00" / "normal.pfm")
    assert normal.shape == (24, 24, 3)

    gt_mesh = data / "gt" / "mesh.obj"
    assert psnerf.chamfer(gt_mesh, gt_mesh, n_samples=2000, seed=3) < 5.0


def test_stage1_requires_dataset(tmp_path):
    cfg = json.loads(psnerf.default_config())
    cfg["dataset"] = str(tmp_path / "missing")
    cfg["output"] = str(tmp_path / "out")
    with pytest.raises((FileNotFoundError, ValueError)):
        psnerf.run_command("stage1", json.dumps(cfg))
