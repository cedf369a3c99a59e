"""Run configuration: one JSON document with sections for the scene,
ground segmenter, unit construction, feature rendering, and trainer.

Unknown keys are rejected anywhere in the document, and every omitted key
falls back to the library default, so an empty document is a valid config.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .geom import ClusterFilterConfig, GroundSegConfig
from .scene import FeatureRenderConfig, SceneSpec
from .train import TrainConfig
from .units import UnitConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    ground: GroundSegConfig = field(default_factory=GroundSegConfig)
    units: UnitConfig = field(default_factory=UnitConfig)
    features: FeatureRenderConfig = field(default_factory=FeatureRenderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        # the trainer always sees the shared sections
        self.train = dataclasses.replace(
            self.train,
            units=self.units,
            scene=self.scene,
            ground=self.ground,
            features=self.features,
        )


_SECTION_FIELDS = {
    "scene": ("extent_m", "n_vehicles", "n_pedestrians", "n_walls", "points_per_m2", "noise_sigma_m", "n_cameras", "seed"),
    "ground": ("num_segments", "bin_length_m", "max_slope", "dist_threshold_m", "max_start_height_m"),
    "units": ("n_initial", "context_mode", "k", "pillar_side_m", "cluster_radius_m", "filter", "seed"),
    "features": ("embed_dim", "noise_sigma", "scales", "seed"),
    "train": ("mode", "steps", "learning_rate", "tau", "L", "freeze_image_head", "seed"),
}
_FILTER_FIELDS = ("min_points", "max_extent_m", "max_aspect")


def _check_keys(section: str, doc: dict, allowed):
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{section}' must be a JSON object")
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")


def _build(section: str, cls, doc: dict, **overrides):
    _check_keys(section, doc, _SECTION_FIELDS[section])
    kwargs = dict(doc)
    kwargs.update(overrides)
    if "scales" in kwargs and isinstance(kwargs["scales"], list):
        kwargs["scales"] = tuple(kwargs["scales"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' config: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_SECTION_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    units_doc = dict(doc.get("units", {}))
    _check_keys("units", units_doc, _SECTION_FIELDS["units"])
    filt_doc = units_doc.pop("filter", {})
    _check_keys("units.filter", filt_doc, _FILTER_FIELDS)
    try:
        filt = ClusterFilterConfig(**filt_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'units.filter' config: {exc}") from exc

    return RunConfig(
        scene=_build("scene", SceneSpec, doc.get("scene", {})),
        ground=_build("ground", GroundSegConfig, doc.get("ground", {})),
        units=_build("units", UnitConfig, units_doc, filter=filt),
        features=_build("features", FeatureRenderConfig, doc.get("features", {})),
        train=_build("train", TrainConfig, doc.get("train", {})),
    )


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return run_config_from_dict(doc)


def run_config_to_dict(cfg: RunConfig) -> dict:
    """Full config echo with every effective value, for the manifest."""

    def section(obj, names):
        out = {}
        for name in names:
            value = getattr(obj, name)
            if isinstance(value, ClusterFilterConfig):
                value = {n: getattr(value, n) for n in _FILTER_FIELDS}
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    return {
        "scene": section(cfg.scene, _SECTION_FIELDS["scene"]),
        "ground": section(cfg.ground, _SECTION_FIELDS["ground"]),
        "units": section(cfg.units, _SECTION_FIELDS["units"]),
        "features": section(cfg.features, _SECTION_FIELDS["features"]),
        "train": section(cfg.train, _SECTION_FIELDS["train"]),
    }
