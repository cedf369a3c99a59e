#!/usr/bin/env python3
"""Ablations at desk scale: context aggregation (k nearest neighbors vs
pillar) and image feature levels (fine, coarse, fused), each evaluated by
a short cross-modal pre-training run on identical scenes and seeds."""

import argparse
import dataclasses

from lidarcontrast.train import TrainConfig, run_pretrain


def run(cfg: TrainConfig) -> str:
    trace = run_pretrain(cfg)
    r = trace.records
    return (
        f"loss {r[0].loss:7.4f} -> {r[-1].loss:7.4f}   "
        f"acc {r[0].contrastive_accuracy:5.3f} -> {r[-1].contrastive_accuracy:5.3f}   "
        f"align {r[-1].alignment_score:6.3f}"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    base = TrainConfig(steps=args.steps, seed=args.seed)

    print("== context aggregation ==")
    for mode in ("knn", "pillar"):
        units = dataclasses.replace(base.units, context_mode=mode)
        cfg = dataclasses.replace(base, units=units)
        print(f"  {mode:7s} {run(cfg)}")

    print("== image feature levels ==")
    for label, scales in (("fine 1/4", (4,)), ("coarse 1/8", (8,)), ("fused 1/4+1/8", (4, 8))):
        feats = dataclasses.replace(base.features, scales=scales)
        cfg = dataclasses.replace(base, features=feats)
        print(f"  {label:14s} {run(cfg)}")


if __name__ == "__main__":
    main()
