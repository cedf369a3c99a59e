"""Command-line pipeline: synth, ground, units, pairs, loss, pretrain,
report.

Every subcommand accepts --config and --seed, writes its outputs plus a
manifest.json (content hashes of all inputs/outputs) into --out, and is a
pure function of (inputs, config, seed) apart from the manifest timestamp.
Exit codes: 0 success, 1 validation error, 2 runtime error. The UNITS_LOG
environment variable (quiet | info | debug) controls diagnostics.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, formats
from .config import ConfigError, load_run_config, run_config_to_dict
from .objective import NegativeSets, infonce, negative_sets, similarity_matrix, uniform_negative_sets
from .scene import generate_scene
from .train import RunTrace, run_pretrain
from .geom import segment_ground
from .units import build_units

log = logging.getLogger("lidarcontrast")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage problems are validation errors
        raise ConfigError(message)


def _setup_logging():
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("UNITS_LOG", "info").lower()
    if name not in level:
        raise ConfigError("UNITS_LOG must be one of quiet, info, debug")
    logging.basicConfig(stream=sys.stderr, level=level[name], format="%(levelname)s %(message)s")


def _write_manifest(out_dir: Path, command: str, seed, cfg, inputs: list[Path], outputs: list[Path]):
    manifest = {
        "version": "1",
        "tool": f"lidarcontrast {__version__}",
        "created_at": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "seed": seed,
        "config": run_config_to_dict(cfg),
        "inputs": {str(p): formats.sha256_file(p) for p in inputs},
        "outputs": {str(p): formats.sha256_file(p) for p in outputs},
    }
    formats.write_json(manifest, out_dir / "manifest.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_feature_matrix(path) -> np.ndarray:
    doc = formats.read_json(path)
    for key in ("rows", "dim", "data"):
        if key not in doc:
            raise ConfigError(f"feature matrix file missing '{key}'")
    mat = np.asarray(doc["data"], dtype=np.float64).reshape(doc["rows"], doc["dim"])
    if not np.isfinite(mat).all():
        raise ValueError("non-finite feature matrix")
    return mat


def _load_sets(path) -> NegativeSets:
    doc = formats.read_json(path)
    if "sets" not in doc or "L" not in doc:
        raise ConfigError("negative-sets file must hold 'L' and 'sets'")
    return NegativeSets([np.asarray(s, dtype=np.intp) for s in doc["sets"]], int(doc["L"]))


def cmd_synth(args, cfg) -> int:
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else cfg.scene.seed
    scene = generate_scene(cfg.scene, seed=seed, features=cfg.features)
    log.info("synthesized %d points, %d objects", len(scene.cloud), len(scene.objects))
    formats.write_cloud(scene.cloud, out / "cloud.bin")
    formats.write_labels(scene.labels, out / "labels.bin")
    formats.write_calib(scene.calibs, out / "calib.json")
    paths = [out / "cloud.bin", out / "labels.bin", out / "calib.json"]
    for i, fmap in enumerate(scene.feature_maps):
        p = out / f"featmap_{i:02d}.bin"
        formats.write_featmap(fmap, p)
        paths.append(p)
    _write_manifest(out, "synth", seed, cfg, [], paths)
    return EXIT_OK


def cmd_ground(args, cfg) -> int:
    out = _out_dir(args)
    cloud = formats.read_cloud(args.cloud)
    mask = segment_ground(cloud, cfg.ground)
    log.info("ground: %d of %d points", int(mask.sum()), len(cloud))
    formats.write_ground_mask(mask, out / "ground_mask.bin")
    _write_manifest(out, "ground", args.seed, cfg, [Path(args.cloud)], [out / "ground_mask.bin"])
    return EXIT_OK


def cmd_units(args, cfg) -> int:
    out = _out_dir(args)
    cloud = formats.read_cloud(args.cloud)
    mask = formats.read_ground_mask(args.mask)
    if mask.shape[0] != len(cloud):
        raise ValueError("ground mask length does not match the cloud")
    calibs = formats.read_calib(args.calib)
    maps = [formats.read_featmap(p) for p in args.featmaps]
    if len(maps) != len(calibs):
        raise ValueError("need one fused feature map per camera")
    units = build_units(cloud, mask, calibs, maps, cfg.units)
    log.info("built %d units from %d initial", len(units), cfg.units.n_initial)
    formats.write_json(formats.unitset_to_dict(units), out / "units.json")
    inputs = [Path(args.cloud), Path(args.mask), Path(args.calib)] + [Path(p) for p in args.featmaps]
    _write_manifest(out, "units", args.seed, cfg, inputs, [out / "units.json"])
    return EXIT_OK


def cmd_pairs(args, cfg) -> int:
    out = _out_dir(args)
    doc = formats.read_json(args.units)
    units = doc.get("units", [])
    if len(units) < 2:
        raise ValueError("need at least 2 units to form negative pairs")
    image_feats = np.asarray([u["image_feature"] for u in units], dtype=np.float64)
    b = len(units)
    n_neg = args.L if args.L is not None else (cfg.train.L or max(1, b // 2))
    sets = negative_sets(similarity_matrix(image_feats), n_neg)
    result = {"L": n_neg, "sets": [[int(j) for j in s] for s in sets.sets]}

    if args.labels:
        labels = formats.read_labels(args.labels)
        unit_cls = np.array(
            [np.bincount(labels[np.asarray(u["member_points"])]).argmax() for u in units]
        )
        seed = args.seed if args.seed is not None else 0
        uniform = uniform_negative_sets(b, n_neg, np.random.default_rng([seed, 17]))

        def same_class_fraction(neg: NegativeSets) -> float:
            flags = [unit_cls[s] == unit_cls[i] for i, s in enumerate(neg.sets) if s.size]
            return float(np.concatenate(flags).mean()) if flags else 0.0

        result["report"] = {
            "same_class_fraction_balanced": same_class_fraction(sets),
            "same_class_fraction_uniform": same_class_fraction(uniform),
        }
        log.info(
            "same-class negatives: balanced %.3f vs uniform %.3f",
            result["report"]["same_class_fraction_balanced"],
            result["report"]["same_class_fraction_uniform"],
        )

    formats.write_json(result, out / "pairs.json")
    inputs = [Path(args.units)] + ([Path(args.labels)] if args.labels else [])
    _write_manifest(out, "pairs", args.seed, cfg, inputs, [out / "pairs.json"])
    return EXIT_OK


def cmd_loss(args, cfg) -> int:
    out = _out_dir(args)
    point_feats = _load_feature_matrix(args.point_feats)
    image_feats = _load_feature_matrix(args.image_feats)
    for name, mat in (("point", point_feats), ("image", image_feats)):
        norms = np.linalg.norm(mat, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError(f"{name} feature rows must be unit length")
    sets = _load_sets(args.sets)
    tau = args.tau if args.tau is not None else cfg.train.tau
    result = infonce(point_feats, image_feats, sets, tau)
    print(f"{result.value:.6f}")
    formats.write_json(
        {
            "value": result.value,
            "tau": tau,
            "grad_point": [[float(x) for x in row] for row in result.grad_point],
            "grad_image": [[float(x) for x in row] for row in result.grad_image],
        },
        out / "loss.json",
    )
    inputs = [Path(args.point_feats), Path(args.image_feats), Path(args.sets)]
    _write_manifest(out, "loss", args.seed, cfg, inputs, [out / "loss.json"])
    return EXIT_OK


def trace_to_jsonl(trace: RunTrace) -> str:
    lines = []
    for i, rec in enumerate(trace.records):
        lines.append(
            json.dumps(
                {
                    "step": i + 1,
                    "loss": rec.loss,
                    "contrastive_accuracy": rec.contrastive_accuracy,
                    "alignment_score": rec.alignment_score,
                }
            )
        )
    return "\n".join(lines) + "\n"


def cmd_pretrain(args, cfg) -> int:
    out = _out_dir(args)
    train_cfg = cfg.train
    if args.mode is not None:
        train_cfg = dataclasses.replace(train_cfg, mode=args.mode)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    trace = run_pretrain(train_cfg)
    formats.atomic_write_text(out / "trace.jsonl", trace_to_jsonl(trace))
    first, last = trace.records[0], trace.records[-1]
    summary = {
        "mode": train_cfg.mode,
        "steps": train_cfg.steps,
        "seed": train_cfg.seed,
        "initial": dataclasses.asdict(first),
        "final": dataclasses.asdict(last),
    }
    formats.write_json(summary, out / "summary.json")
    log.info(
        "pretrain %s: loss %.4f -> %.4f, accuracy %.3f -> %.3f",
        train_cfg.mode, first.loss, last.loss, first.contrastive_accuracy, last.contrastive_accuracy,
    )
    _write_manifest(out, "pretrain", train_cfg.seed, cfg, [], [out / "trace.jsonl", out / "summary.json"])
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    out = _out_dir(args)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["run", "step", "loss", "contrastive_accuracy", "alignment_score"])
    for path in args.traces:
        run = Path(path).stem
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            writer.writerow(
                [run, rec["step"], rec["loss"], rec["contrastive_accuracy"], rec["alignment_score"]]
            )
    formats.atomic_write_text(out / "report.csv", buf.getvalue())
    _write_manifest(out, "report", args.seed, cfg, [Path(p) for p in args.traces], [out / "report.csv"])
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="lidarcontrast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic scene")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ground", help="segment ground returns")
    common(p)
    p.add_argument("--cloud", required=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("units", help="build contrastive units")
    common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--featmaps", nargs="+", required=True)
    p.set_defaults(func=cmd_units)

    p = sub.add_parser("pairs", help="similarity-balanced negative sets")
    common(p)
    p.add_argument("--units", required=True)
    p.add_argument("--labels", default=None, help="per-point class labels for the report")
    p.add_argument("--L", type=int, default=None)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("loss", help="bidirectional InfoNCE value and gradients")
    common(p)
    p.add_argument("--point-feats", required=True)
    p.add_argument("--image-feats", required=True)
    p.add_argument("--sets", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("pretrain", help="run the pre-training loop")
    common(p)
    p.add_argument("--mode", choices=("single", "cross", "multi"), default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("report", help="merge run traces into a CSV")
    common(p)
    p.add_argument("--traces", nargs="+", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        cfg = load_run_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
