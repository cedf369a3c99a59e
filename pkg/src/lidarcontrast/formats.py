"""On-disk formats: raw little-endian binaries for bulk tensors, JSON for
structured data. All writes are atomic (temp file + rename) and all
formats round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .camera import CameraCalibration, FeatureMap
from .geom import PointCloud
from .units import UnitSet

CLOUD_RECORD_BYTES = 16  # x, y, z, intensity as little-endian f32
FEATMAP_MAGIC = b"FMAP"
FEATMAP_VERSION = 1


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_cloud(cloud: PointCloud, path):
    """KITTI-style records: little-endian f32 (x, y, z, intensity)."""
    rec = np.empty((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.points
    rec[:, 3] = cloud.intensities
    atomic_write_bytes(path, rec.tobytes())


def read_cloud(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % CLOUD_RECORD_BYTES:
        raise ValueError("truncated record")
    rec = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    if rec.size and not np.isfinite(rec).all():
        raise ValueError("non-finite values in cloud file")
    return PointCloud(rec[:, :3].astype(np.float64), rec[:, 3].astype(np.float64))


def write_featmap(fmap: FeatureMap, path):
    header = FEATMAP_MAGIC + struct.pack(
        "<5I", FEATMAP_VERSION, fmap.height, fmap.width, fmap.channels, fmap.scale
    )
    atomic_write_bytes(path, header + fmap.data.astype("<f4").tobytes())


def read_featmap(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:4] != FEATMAP_MAGIC:
        raise ValueError("bad feature map magic")
    version, height, width, channels, scale = struct.unpack("<5I", raw[4:24])
    if version != FEATMAP_VERSION:
        raise ValueError(f"unsupported feature map version {version}")
    expected = height * width * channels * 4
    if len(raw) - 24 != expected:
        raise ValueError("payload size mismatch")
    data = np.frombuffer(raw, dtype="<f4", offset=24).astype(np.float64)
    return FeatureMap(height, width, channels, scale, data.reshape(height, width, channels))


def write_labels(labels: np.ndarray, path):
    atomic_write_bytes(path, np.asarray(labels, dtype=np.uint8).tobytes())


def read_labels(path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype=np.uint8).astype(np.intp)


def write_ground_mask(mask: np.ndarray, path):
    """One byte per point: 1 for ground, 0 otherwise."""
    atomic_write_bytes(path, np.asarray(mask, dtype=bool).astype(np.uint8).tobytes())


def read_ground_mask(path) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if ((raw != 0) & (raw != 1)).any():
        raise ValueError("ground mask bytes must be 0 or 1")
    return raw.astype(bool)


def write_calib(calibs: list[CameraCalibration], path):
    doc = [
        {
            "intrinsics": [float(x) for x in c.intrinsics.ravel()],
            "extrinsics": [float(x) for x in c.extrinsics.ravel()],
            "width": c.image_width,
            "height": c.image_height,
        }
        for c in calibs
    ]
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def read_calib(path) -> list[CameraCalibration]:
    return calibs_from_doc(json.loads(Path(path).read_text()))


def calibs_from_doc(doc) -> list[CameraCalibration]:
    if not isinstance(doc, list):
        raise ValueError("calibration file must hold a JSON array")
    calibs = []
    for i, entry in enumerate(doc):
        missing = {"intrinsics", "extrinsics", "width", "height"} - set(entry)
        if missing:
            raise ValueError(f"camera {i} missing keys: {sorted(missing)}")
        intr = np.asarray(entry["intrinsics"], dtype=np.float64)
        extr = np.asarray(entry["extrinsics"], dtype=np.float64)
        if intr.shape != (9,) or extr.shape != (16,):
            raise ValueError(f"camera {i}: intrinsics must be 9 values, extrinsics 16")
        calibs.append(
            CameraCalibration(
                intr.reshape(3, 3), extr.reshape(4, 4), int(entry["width"]), int(entry["height"])
            )
        )
    return calibs


def unitset_to_dict(units: UnitSet) -> dict:
    return {
        "count": len(units),
        "units": [
            {
                "member_points": [int(i) for i in u.member_points],
                "origin_units": int(u.origin_units),
                "cluster_id": None if u.cluster_id is None else int(u.cluster_id),
                "point_stats": [float(x) for x in u.point_stats],
                "image_feature": [float(x) for x in u.image_feature],
            }
            for u in units.units
        ],
    }


def write_json(doc, path):
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
