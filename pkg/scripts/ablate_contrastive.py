#!/usr/bin/env python3
"""Contrastive-term ablation over several seeds: trains twice per seed (with
and without the contrastive weight) and prints held-out retrieval mAP for
each arm.

Example:
    python3 scripts/ablate_contrastive.py --seeds 5 --epochs 6
"""

import argparse

from cobra import data, evaluation, training
from cobra.losses import LossWeights
from cobra.training import TrainConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classes", type=int, default=5)
    ap.add_argument("--d-image", type=int, default=16)
    ap.add_argument("--d-text", type=int, default=12)
    ap.add_argument("--pairs-per-class", type=int, default=30)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lambda-c", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    spec = data.SyntheticSpec(
        classes=args.classes,
        d_image=args.d_image,
        d_text=args.d_text,
        pairs_per_class=args.pairs_per_class,
        sigma=args.sigma,
    )
    paired = data.generate_synthetic(spec)

    wins = 0
    for seed in range(args.seeds):
        train_set, test_set = data.split(paired, [0.8, 0.2], seed=seed)

        def run(lambda_c: float) -> float:
            cfg = TrainConfig(
                epochs=args.epochs,
                batch=args.batch,
                seed=seed,
                weights=LossWeights(1.0, 1.0, 1.0, lambda_c),
            )
            result = training.train(train_set, test_set, cfg, echo=False)
            return evaluation.retrieval_report(result.model, test_set).map_avg

        with_c = run(args.lambda_c)
        without_c = run(0.0)
        wins += with_c >= without_c
        print(f"seed={seed} map_with_c={with_c:.5f} map_without_c={without_c:.5f}")
    print(f"wins={wins}/{args.seeds}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
