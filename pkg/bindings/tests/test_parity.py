"""Parity of the bound operations with the CLI on seeded fixtures.

50 fixtures total: 10 unit-construction pipelines, 10 negative-set runs,
25 loss evaluations, and 5 pre-training runs. Features and indices must
be bit-exact; loss values and gradients within 1e-12.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from lidarcontrast.cli import main as cli_main
from lidarcontrast.formats import read_cloud, read_featmap, read_ground_mask
from lidarcontrast_bindings import (
    bound_build_units,
    bound_infonce,
    bound_negative_sets,
    bound_run_pretrain,
    __version__,
)

SMALL_SCENE = {
    "extent_m": 14.0,
    "n_vehicles": 2,
    "n_pedestrians": 1,
    "n_walls": 1,
}


def write_config(path, seed, steps=4):
    doc = {"scene": dict(SMALL_SCENE, seed=seed), "train": {"steps": steps, "seed": seed}}
    path.write_text(json.dumps(doc))
    return str(path), doc


def run_units_pipeline(root, seed):
    cfg, doc = write_config(root / "config.json", seed)
    synth, ground, units = root / "synth", root / "ground", root / "units"
    assert cli_main(["synth", "--config", cfg, "--out", str(synth)]) == 0
    assert cli_main(["ground", "--config", cfg, "--cloud", str(synth / "cloud.bin"), "--out", str(ground)]) == 0
    featmaps = sorted(synth.glob("featmap_*.bin"))
    argv = [
        "units", "--config", cfg, "--cloud", str(synth / "cloud.bin"),
        "--mask", str(ground / "ground_mask.bin"), "--calib", str(synth / "calib.json"),
        "--featmaps", *[str(p) for p in featmaps], "--out", str(units),
    ]
    assert cli_main(argv) == 0
    return synth, ground, units, featmaps, doc


@pytest.mark.parametrize("seed", range(10))
def test_build_units_parity(tmp_path, seed):
    synth, ground, units_dir, featmap_paths, doc = run_units_pipeline(tmp_path, seed)
    cli_units = json.loads((units_dir / "units.json").read_text())["units"]

    cloud = read_cloud(synth / "cloud.bin")
    points = np.column_stack([cloud.points, cloud.intensities])
    mask = read_ground_mask(ground / "ground_mask.bin").astype(np.int32)
    calib_json = (synth / "calib.json").read_text()
    fmaps = [(read_featmap(p).data, read_featmap(p).scale) for p in featmap_paths]

    bound_units = bound_build_units(points, mask, calib_json, fmaps, json.dumps(doc))
    assert len(bound_units) == len(cli_units)
    for a, b in zip(bound_units, cli_units):
        assert a["member_points"] == b["member_points"]
        assert a["origin_units"] == b["origin_units"]
        assert a["cluster_id"] == b["cluster_id"]
        assert a["point_stats"] == b["point_stats"]  # bit-exact through JSON
        assert a["image_feature"] == b["image_feature"]


@pytest.mark.parametrize("seed", range(10))
def test_negative_sets_parity(tmp_path, seed):
    rng = np.random.default_rng([seed, 1])
    b = int(rng.integers(4, 12))
    feats = rng.normal(size=(b, 6))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    units_doc = {
        "count": b,
        "units": [
            {
                "member_points": [i],
                "origin_units": 1,
                "cluster_id": None,
                "point_stats": [0.0] * 10,
                "image_feature": [float(x) for x in feats[i]],
            }
            for i in range(b)
        ],
    }
    units_path = tmp_path / "units.json"
    units_path.write_text(json.dumps(units_doc))
    L = int(rng.integers(1, b))
    out = tmp_path / "pairs"
    assert cli_main(["pairs", "--units", str(units_path), "--L", str(L), "--out", str(out)]) == 0
    cli_sets = json.loads((out / "pairs.json").read_text())["sets"]

    from lidarcontrast.objective import similarity_matrix

    got = bound_negative_sets(similarity_matrix(feats), L)
    assert got == cli_sets


@pytest.mark.parametrize("seed", range(25))
def test_infonce_parity(tmp_path, seed):
    rng = np.random.default_rng([seed, 2])
    b = int(rng.integers(2, 9))
    d = int(rng.integers(2, 8))
    p = rng.normal(size=(b, d))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    im = rng.normal(size=(b, d))
    im /= np.linalg.norm(im, axis=1, keepdims=True)
    sets = [sorted(set(rng.integers(0, b, size=rng.integers(0, b)).tolist()) - {i}) for i in range(b)]
    tau = float(rng.choice([0.07, 0.2, 1.0]))

    for name, mat in (("p.json", p), ("i.json", im)):
        (tmp_path / name).write_text(
            json.dumps({"rows": b, "dim": d, "data": [float(x) for x in mat.ravel()]})
        )
    (tmp_path / "sets.json").write_text(json.dumps({"L": max(1, b // 2), "sets": sets}))
    out = tmp_path / "loss"
    argv = [
        "loss", "--point-feats", str(tmp_path / "p.json"), "--image-feats", str(tmp_path / "i.json"),
        "--sets", str(tmp_path / "sets.json"), "--tau", str(tau), "--out", str(out),
    ]
    assert cli_main(argv) == 0
    cli_out = json.loads((out / "loss.json").read_text())

    # feed the bound op the same JSON-round-tripped matrices the CLI read
    p_rt = np.array(json.loads((tmp_path / "p.json").read_text())["data"]).reshape(b, d)
    i_rt = np.array(json.loads((tmp_path / "i.json").read_text())["data"]).reshape(b, d)
    value, grad_p, grad_i = bound_infonce(p_rt, i_rt, sets, tau)
    assert abs(value - cli_out["value"]) <= 1e-12
    np.testing.assert_allclose(grad_p, np.array(cli_out["grad_point"]), rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad_i, np.array(cli_out["grad_image"]), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_run_pretrain_parity(tmp_path, seed):
    cfg, doc = write_config(tmp_path / "config.json", seed, steps=3)
    out = tmp_path / "run"
    assert cli_main(["pretrain", "--config", cfg, "--out", str(out)]) == 0
    cli_records = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
    cli_summary = json.loads((out / "summary.json").read_text())

    got = bound_run_pretrain(json.dumps(doc))
    assert got["records"] == cli_records
    assert got["summary"] == cli_summary


def test_error_parity_insufficient_space(tmp_path):
    # a cloud behind every camera must raise the CLI's exit-1 message
    from lidarcontrast.scene import make_cameras
    from lidarcontrast.formats import write_calib

    write_calib(make_cameras(1), tmp_path / "calib.json")
    points = np.tile([0.0, 0.0, -5.0, 0.0], (10, 1))
    fmap = (np.zeros((120, 160, 2)), 4)
    with pytest.raises(ValueError, match="insufficient sampling space"):
        bound_build_units(points, np.zeros(10, dtype=np.int32), (tmp_path / "calib.json").read_text(), [fmap], "")


def test_forced_loss_value():
    row = np.array([[1.0, 0.0], [1.0, 0.0]])
    value, _, _ = bound_infonce(row, row.copy(), [[1], [0]], 0.07)
    assert abs(value - 0.6931471805599453) <= 1e-12


def test_boundary_validation():
    with pytest.raises(ValueError, match="points"):
        bound_build_units(np.zeros((3, 3)), np.zeros(3, dtype=np.int32), "[]", [], "")
    with pytest.raises(ValueError, match="ground_mask"):
        bound_build_units(np.zeros((3, 4)), np.zeros(2, dtype=np.int32), "[]", [], "")
    with pytest.raises(ValueError, match="dimensions"):
        bound_negative_sets(np.zeros(4), 1)


def test_inputs_never_mutated():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(3, 4))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    im = p.copy()
    snap_p, snap_i = p.copy(), im.copy()
    bound_infonce(p, im, [[1], [0], [0]], 0.2)
    np.testing.assert_array_equal(p, snap_p)
    np.testing.assert_array_equal(im, snap_i)


def test_version_mirrors_core():
    import lidarcontrast

    assert __version__ == lidarcontrast.__version__
