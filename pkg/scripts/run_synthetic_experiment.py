#!/usr/bin/env python3
"""Full synthetic pipeline in one run: generate data, train the joint
embedding model, train the fusion classifier, and report retrieval mAP plus
classification accuracy on the held-out split.

Example:
    python3 scripts/run_synthetic_experiment.py --epochs 15 --out /tmp/cobra_run
"""

import argparse
import sys
import time
from pathlib import Path

from cobra import data, evaluation, training
from cobra.losses import LossWeights
from cobra.training import HeadConfig, TrainConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--d-image", type=int, default=64)
    ap.add_argument("--d-text", type=int, default=32)
    ap.add_argument("--pairs-per-class", type=int, default=200)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--separation", type=float, default=4.0)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--eta", type=float, default=0.01)
    ap.add_argument("--lambda-c", type=float, default=0.1)
    ap.add_argument("--contrastive", choices=["nce", "setform"], default="nce")
    ap.add_argument("--head-epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="directory for checkpoints (optional)")
    args = ap.parse_args()

    spec = data.SyntheticSpec(
        classes=args.classes,
        d_image=args.d_image,
        d_text=args.d_text,
        pairs_per_class=args.pairs_per_class,
        sigma=args.sigma,
        separation=args.separation,
        seed=args.seed,
    )
    paired = data.generate_synthetic(spec)
    train_set, val_set, test_set = data.split(paired, [0.8, 0.1, 0.1], seed=args.seed)
    print(
        f"data: {paired.n_pairs} pairs, {spec.classes} classes, "
        f"splits {train_set.n_pairs}/{val_set.n_pairs}/{test_set.n_pairs}",
        file=sys.stderr,
    )

    cfg = TrainConfig(
        eta=args.eta,
        epochs=args.epochs,
        batch=args.batch,
        weights=LossWeights(lambda_c=args.lambda_c),
        contrastive_variant=args.contrastive,
        seed=args.seed,
    )
    out_dir = Path(args.out) if args.out else None
    t0 = time.perf_counter()
    result = training.train(train_set, val_set, cfg, out_dir=out_dir)
    print(f"trained {args.epochs} epochs in {time.perf_counter() - t0:.1f}s", file=sys.stderr)

    report = evaluation.retrieval_report(result.model, test_set)
    for line in report.record_lines():
        print(line)

    head = training.train_classifier(
        result.model, train_set, head_config=HeadConfig(epochs=args.head_epochs, seed=args.seed)
    )
    acc = evaluation.classification_accuracy(head, result.model, test_set, test_set.labels)
    print(f"accuracy={acc:.5f} n={test_set.n_pairs}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
