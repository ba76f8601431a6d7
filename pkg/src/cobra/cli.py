"""Command-line surface: synth, train, eval-retrieval, eval-classify, embed,
gradcheck.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 I/O error,
4 numeric halt. Machine-readable records go to stdout, progress to stderr.
Flag values override config-file values override built-in defaults; the
effective training config is echoed to the run log.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

from . import checkpoint, data, evaluation, gradcheck, training
from .errors import CobraError, NumericError
from .losses import LossWeights

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

# config-file keys mirroring TrainConfig plus CLI-level knobs
TRAIN_KEYS = {
    "eta": float,
    "epochs": int,
    "batch": int,
    "iters_per_epoch": int,
    "lambda_r": float,
    "lambda_s": float,
    "lambda_m": float,
    "lambda_c": float,
    "negatives": int,
    "contrastive": str,
    "score_mode": str,
    "nce_form": str,
    "temperature": float,
    "reduction": str,
    "seed": int,
    "checkpoint_every": int,
    "val_fraction": float,
}


def _progress(msg: str):
    print(msg, file=sys.stderr)


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise CobraError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in TRAIN_KEYS:
            raise CobraError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = TRAIN_KEYS[key](value.strip())
    return out


def effective_train_settings(args) -> dict:
    """defaults <- config file <- explicit flags."""
    settings = {
        "eta": 0.01,
        "epochs": 200,
        "batch": 128,
        "iters_per_epoch": None,
        "lambda_r": 1.0,
        "lambda_s": 1.0,
        "lambda_m": 1.0,
        "lambda_c": 0.1,
        "negatives": 10,
        "contrastive": "nce",
        "score_mode": "exp",
        "nce_form": "log",
        "temperature": 1.0,
        "reduction": "mean",
        "seed": 0,
        "checkpoint_every": 0,
        "val_fraction": 0.1,
    }
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in settings:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _train_config(settings: dict) -> training.TrainConfig:
    return training.TrainConfig(
        eta=settings["eta"],
        epochs=settings["epochs"],
        batch=settings["batch"],
        iters_per_epoch=settings["iters_per_epoch"],
        weights=LossWeights(
            lambda_r=settings["lambda_r"],
            lambda_s=settings["lambda_s"],
            lambda_m=settings["lambda_m"],
            lambda_c=settings["lambda_c"],
        ),
        n_negatives=settings["negatives"],
        contrastive_variant=settings["contrastive"],
        score_mode=settings["score_mode"],
        nce_form=settings["nce_form"],
        temperature=settings["temperature"],
        seed=settings["seed"],
        checkpoint_every=settings["checkpoint_every"],
        reduction=settings["reduction"],
    )


def cmd_synth(args) -> int:
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
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def emit(name: str, ds: data.PairedDataset):
        img, txt = f"{name}_image.txt", f"{name}_text.txt"
        data.write_feature_file(ds.image, out / img)
        data.write_feature_file(ds.text, out / txt)
        data.write_manifest(out / f"{name}.manifest", img, txt, name)

    if args.split:
        fractions = [float(f) for f in args.split.split(",")]
        names = ("train", "val", "test")[: len(fractions)]
        for name, ds in zip(names, data.split(paired, fractions, args.seed)):
            emit(name, ds)
    else:
        emit("data", paired)
    print(
        f"synth classes={spec.classes} pairs={paired.n_pairs} "
        f"dI={spec.d_image} dT={spec.d_text}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    settings = effective_train_settings(args)
    config = _train_config(settings)
    train_pair = data.load_paired(args.manifest)
    if args.val_manifest:
        val_pair = data.load_paired(args.val_manifest)
    else:
        frac = settings["val_fraction"]
        train_pair, val_pair = data.split(
            train_pair, [1.0 - frac, frac], settings["seed"]
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _progress(
        f"training on {train_pair.n_pairs} pairs "
        f"(val {val_pair.n_pairs}), {config.epochs} epochs"
    )
    with (out / "run.log").open("w", encoding="utf-8") as log:
        for key in sorted(settings):
            log.write(f"config {key}={settings[key]}\n")
        training.train(train_pair, val_pair, config, out_dir=out, log_stream=log)
    _progress(f"wrote {out / 'final.ckpt'} and {out / 'best.ckpt'}")
    return EXIT_OK


def cmd_eval_retrieval(args) -> int:
    model = checkpoint.load_checkpoint(args.checkpoint)
    paired = data.load_paired(args.manifest)
    report = evaluation.retrieval_report(
        model, paired, zero_relevant=args.zero_relevant, map_at=args.map_at
    )
    for line in report.record_lines():
        print(line)
    return EXIT_OK


def cmd_eval_classify(args) -> int:
    model = checkpoint.load_checkpoint(args.checkpoint)
    head = checkpoint.load_head(args.head_checkpoint)
    paired = data.load_paired(args.manifest)
    acc = evaluation.classification_accuracy(head, model, paired, paired.labels)
    print(f"accuracy={acc:.5f} n={paired.n_pairs}")
    return EXIT_OK


def cmd_embed(args) -> int:
    model = checkpoint.load_checkpoint(args.checkpoint)
    paired = data.load_paired(args.manifest)
    img_path, txt_path = evaluation.export_embeddings(model, paired, args.out)
    _progress(f"wrote {img_path} and {txt_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_gradcheck(seed=args.seed, corrupt=args.corrupt)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"check={r.name} max_rel_err={r.max_rel_err:.3e} status={status}")
        ok = ok and r.passed
    if not ok:
        failing = [r.name for r in results if not r.passed]
        _progress(f"gradient check failed: {', '.join(failing)}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cobra", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic paired dataset")
    sp.add_argument("--classes", type=int, default=10)
    sp.add_argument("--d-image", type=int, default=64)
    sp.add_argument("--d-text", type=int, default=32)
    sp.add_argument("--pairs-per-class", type=int, default=200)
    sp.add_argument("--sigma", type=float, default=0.1)
    sp.add_argument("--separation", type=float, default=4.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument(
        "--split", default=None, help="comma fractions, e.g. 0.8,0.1,0.1"
    )
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train the joint-embedding model")
    tp.add_argument("--manifest", required=True)
    tp.add_argument("--val-manifest", default=None)
    tp.add_argument("--out", required=True)
    tp.add_argument("--config", default=None, help="key=value config file")
    tp.add_argument("--eta", type=float)
    tp.add_argument("--epochs", type=int)
    tp.add_argument("--batch", type=int, dest="batch")
    tp.add_argument("--iters-per-epoch", type=int, dest="iters_per_epoch")
    tp.add_argument("--lambda-r", type=float, dest="lambda_r")
    tp.add_argument("--lambda-s", type=float, dest="lambda_s")
    tp.add_argument("--lambda-m", type=float, dest="lambda_m")
    tp.add_argument("--lambda-c", type=float, dest="lambda_c")
    tp.add_argument("--negatives", type=int)
    tp.add_argument("--contrastive", choices=["setform", "nce"])
    tp.add_argument("--score-mode", choices=["exp", "literal"], dest="score_mode")
    tp.add_argument("--nce-form", choices=["log", "literal"], dest="nce_form")
    tp.add_argument("--temperature", type=float)
    tp.add_argument("--reduction", choices=["mean", "sum"])
    tp.add_argument("--seed", type=int)
    tp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    tp.add_argument("--val-fraction", type=float, dest="val_fraction")
    tp.set_defaults(func=cmd_train)

    rp = sub.add_parser("eval-retrieval", help="cross-modal retrieval mAP")
    rp.add_argument("--manifest", required=True)
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--map-at", type=int, default=None, dest="map_at")
    rp.add_argument(
        "--zero-relevant", choices=["exclude", "zero"], default="exclude"
    )
    rp.set_defaults(func=cmd_eval_retrieval)

    cp = sub.add_parser("eval-classify", help="bi-modal classification accuracy")
    cp.add_argument("--manifest", required=True)
    cp.add_argument("--checkpoint", required=True)
    cp.add_argument("--head-checkpoint", required=True, dest="head_checkpoint")
    cp.set_defaults(func=cmd_eval_classify)

    ep = sub.add_parser("embed", help="export joint embeddings")
    ep.add_argument("--manifest", required=True)
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_embed)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    gp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as e:
        _progress(f"numeric halt: {e}")
        return EXIT_NUMERIC
    except CobraError as e:
        _progress(f"error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        _progress(f"I/O error: {e}")
        return EXIT_IO


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
