"""In-memory bindings for the lidarcontrast pipeline.

Exposes unit construction, similarity-balanced negative sampling, the
InfoNCE loss with gradients, and the pre-training loop over plain numpy
arrays and JSON strings, so external training loops can consume the
pipeline without file IO. Inputs are validated at the boundary (dtype,
shape, contiguity) and are never mutated: contiguous float64/int32 arrays
are used zero-copy, everything else is copied. Outputs are numerically
identical to the CLI on the same data.
"""

from __future__ import annotations

import json

import numpy as np

from lidarcontrast import __version__ as _core_version
from lidarcontrast.config import run_config_from_dict
from lidarcontrast.camera import FeatureMap
from lidarcontrast.formats import calibs_from_doc, unitset_to_dict
from lidarcontrast.geom import PointCloud
from lidarcontrast.objective import NegativeSets, infonce, negative_sets
from lidarcontrast.train import run_pretrain
from lidarcontrast.units import build_units

__version__ = _core_version

__all__ = [
    "bound_build_units",
    "bound_negative_sets",
    "bound_infonce",
    "bound_run_pretrain",
    "__version__",
]


def _require_array(value, name, ndim, dtype=np.float64):
    """Boundary validation: shape/dtype checked, contiguous row-major
    layout guaranteed (zero-copy when the input already complies)."""
    arr = np.asarray(value)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got {arr.ndim}")
    if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=dtype)


def _parse_config(config_json: str):
    doc = json.loads(config_json) if config_json else {}
    return run_config_from_dict(doc)


def bound_build_units(points, ground_mask, calib_json: str, featmaps, config_json: str = ""):
    """Build contrastive units from in-memory inputs.

    points: (N, 4) array of x, y, z, intensity. ground_mask: (N,) 0/1 or
    bool. calib_json: the calibration document as a string. featmaps: list
    of (array (H, W, C), scale) pairs, one fused map per camera.
    config_json: full run-config document; the units section applies.

    Returns the same unit records the CLI writes to units.json.
    """
    pts = _require_array(points, "points", 2)
    if pts.shape[1] != 4:
        raise ValueError("points must have shape (N, 4)")
    mask = _require_array(ground_mask, "ground_mask", 1, dtype=np.int32)
    if mask.shape[0] != pts.shape[0]:
        raise ValueError("ground_mask length must match the point count")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("ground_mask entries must be 0 or 1")
    calibs = calibs_from_doc(json.loads(calib_json))
    maps = []
    for i, (data, scale) in enumerate(featmaps):
        arr = _require_array(data, f"featmaps[{i}]", 3)
        maps.append(FeatureMap(arr.shape[0], arr.shape[1], arr.shape[2], int(scale), arr))
    cfg = _parse_config(config_json)
    cloud = PointCloud(pts[:, :3].copy(), pts[:, 3].copy())
    units = build_units(cloud, mask.astype(bool), calibs, maps, cfg.units)
    return unitset_to_dict(units)["units"]


def bound_negative_sets(sim, L: int):
    """Similarity-balanced negative sets from a square similarity matrix."""
    mat = _require_array(sim, "sim", 2)
    return [s.tolist() for s in negative_sets(mat, int(L)).sets]


def bound_infonce(point_feats, image_feats, sets, tau: float):
    """Bidirectional InfoNCE; returns (value, grad_point, grad_image)."""
    p = _require_array(point_feats, "point_feats", 2)
    im = _require_array(image_feats, "image_feats", 2)
    neg = NegativeSets([np.asarray(s, dtype=np.intp) for s in sets], max(1, len(sets)))
    out = infonce(p, im, neg, float(tau))
    return out.value, out.grad_point, out.grad_image


def bound_run_pretrain(config_json: str = ""):
    """Run the pre-training loop; returns {"records": [...], "summary": {...}}
    with the same values the CLI writes to trace.jsonl and summary.json."""
    cfg = _parse_config(config_json)
    trace = run_pretrain(cfg.train)
    records = [
        {
            "step": i + 1,
            "loss": rec.loss,
            "contrastive_accuracy": rec.contrastive_accuracy,
            "alignment_score": rec.alignment_score,
        }
        for i, rec in enumerate(trace.records)
    ]
    summary = {
        "mode": cfg.train.mode,
        "steps": cfg.train.steps,
        "seed": cfg.train.seed,
        "initial": {k: v for k, v in records[0].items() if k != "step"},
        "final": {k: v for k, v in records[-1].items() if k != "step"},
    }
    return {"records": records, "summary": summary}
