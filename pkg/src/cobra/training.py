"""Minibatch SGD training of the joint-embedding model, epoch reporting,
best-on-validation checkpointing, and second-stage classifier training.

When the cross-modal weight is positive, one index list is shared by both
modalities so every sampled row is a genuine pair; with the weight at zero
the two modalities are sampled independently.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses, model as model_mod
from .checkpoint import save_checkpoint
from .data import PairedDataset
from .errors import ConfigError, NumericError
from .losses import LossBreakdown, LossWeights
from .model import ClassifierHead, CobraModel, LossGrads
from .nn import RngStreams, sgd_step


@dataclass
class TrainConfig:
    eta: float = 0.01
    epochs: int = 200
    batch: int = 128
    iters_per_epoch: int | None = None  # default: ceil(n_pairs / batch)
    weights: LossWeights = field(default_factory=LossWeights)
    n_negatives: int = 10
    contrastive_variant: str = "nce"  # nce | setform
    score_mode: str = "exp"  # exp | literal (setform)
    nce_form: str = "log"  # log | literal
    temperature: float = 1.0
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 disables periodic checkpoints
    reduction: str = "mean"

    def __post_init__(self):
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.epochs < 1 or self.batch < 1:
            raise ConfigError("epochs and batch must be >= 1")


@dataclass
class EpochReport:
    epoch: int
    l_r: float
    l_m: float
    l_s: float
    l_c: float
    total: float
    skipped_anchors: int
    clamped_scores: int
    val_total: float
    seconds: float

    def record(self) -> str:
        return (
            f"epoch={self.epoch} l_r={self.l_r:.6g} l_m={self.l_m:.6g} "
            f"l_s={self.l_s:.6g} l_c={self.l_c:.6g} total={self.total:.6g} "
            f"skipped={self.skipped_anchors} secs={self.seconds:.6g}"
        )


@dataclass
class TrainState:
    model: CobraModel
    config: TrainConfig
    streams: RngStreams
    epoch: int = 0
    best_val: float = np.inf
    best_path: str | None = None


@dataclass
class TrainResult:
    model: CobraModel
    reports: list[EpochReport]
    best_path: str | None


def sample_minibatch(paired: PairedDataset, b: int, rng: np.random.Generator):
    """Uniform pair indices without replacement within the batch.

    Returns (x_image, y_image, x_text, y_text, idx); the same index list
    feeds both modalities so cross-modal pairing holds.
    """
    if b > paired.n_pairs:
        print(
            f"warning: batch {b} > {paired.n_pairs} pairs, clipping",
            file=sys.stderr,
        )
        b = paired.n_pairs
    idx = rng.choice(paired.n_pairs, size=b, replace=False)
    return (
        paired.image.features[idx],
        paired.image.labels[idx],
        paired.text.features[idx],
        paired.text.labels[idx],
        idx,
    )


def _compute_losses(
    cache,
    y_image,
    y_text,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> LossBreakdown:
    return losses.total_loss(
        cache,
        y_image,
        y_text,
        cfg.weights,
        rng,
        n_negatives=cfg.n_negatives,
        contrastive_variant=cfg.contrastive_variant,
        score_mode=cfg.score_mode,
        nce_form=cfg.nce_form,
        temperature=cfg.temperature,
        reduction=cfg.reduction,
    )


def train_step(state: TrainState, minibatch) -> LossBreakdown:
    """Forward, loss assembly, backward, SGD update. Halts on non-finite loss."""
    x_i, y_i, x_t, y_t, _ = minibatch
    cfg = state.config
    dtype = state.model.dtype
    cache = model_mod.forward_full(
        state.model, x_i.astype(dtype), x_t.astype(dtype), mode="train"
    )
    bd = _compute_losses(cache, y_i, y_t, cfg, state.streams.get("negatives"))
    if not np.isfinite(bd.total):
        raise NumericError(
            f"non-finite total loss at epoch {state.epoch} "
            f"(l_r={bd.l_r} l_m={bd.l_m} l_s={bd.l_s} l_c={bd.l_c})"
        )
    grads = LossGrads(
        d_o_image=bd.d_o_image.astype(dtype),
        d_o_text=bd.d_o_text.astype(dtype),
        d_xhat_image=bd.d_xhat_image.astype(dtype),
        d_xhat_text=bd.d_xhat_text.astype(dtype),
    )
    model_mod.backward_full(state.model, cache, grads)
    sgd_step(state.model.params(), cfg.eta)
    return bd


def validation_loss(
    model: CobraModel, paired: PairedDataset, cfg: TrainConfig, rng
) -> float:
    dtype = model.dtype
    cache = model_mod.forward_full(
        model,
        paired.image.features.astype(dtype),
        paired.text.features.astype(dtype),
        mode="eval",
    )
    bd = losses.total_loss(
        cache,
        paired.image.labels,
        paired.text.labels,
        cfg.weights,
        rng,
        n_negatives=cfg.n_negatives,
        contrastive_variant=cfg.contrastive_variant,
        score_mode=cfg.score_mode,
        nce_form=cfg.nce_form,
        temperature=cfg.temperature,
        reduction=cfg.reduction,
    )
    return bd.total


def train(
    train_pair: PairedDataset,
    val_pair: PairedDataset,
    config: TrainConfig,
    out_dir=None,
    log_stream=None,
    echo=True,
) -> TrainResult:
    """Runs the full training loop; writes best.ckpt / final.ckpt when
    out_dir is given and emits one epoch record per epoch."""
    if train_pair.num_classes != val_pair.num_classes:
        raise ConfigError("train and validation class counts differ")
    if (
        train_pair.image.dim != val_pair.image.dim
        or train_pair.text.dim != val_pair.text.dim
    ):
        raise ConfigError("train and validation feature dims differ")

    streams = RngStreams(config.seed)
    m = model_mod.init_model(
        train_pair.image.dim,
        train_pair.text.dim,
        train_pair.num_classes,
        seed=config.seed,
    )
    state = TrainState(model=m, config=config, streams=streams)
    iters = config.iters_per_epoch or -(-train_pair.n_pairs // config.batch)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    reports: list[EpochReport] = []
    mb_rng = streams.get("minibatch")
    for epoch in range(1, config.epochs + 1):
        state.epoch = epoch
        t0 = time.perf_counter()
        sums = np.zeros(5)
        skipped = clamped = 0
        for _ in range(iters):
            mb = sample_minibatch(train_pair, config.batch, mb_rng)
            bd = train_step(state, mb)
            sums += (bd.l_r, bd.l_m, bd.l_s, bd.l_c, bd.total)
            skipped += bd.skipped_anchors
            clamped += bd.clamped_scores
        val_rng = streams.derive(4, epoch)
        val_total = validation_loss(state.model, val_pair, config, val_rng)
        report = EpochReport(
            epoch=epoch,
            l_r=sums[0] / iters,
            l_m=sums[1] / iters,
            l_s=sums[2] / iters,
            l_c=sums[3] / iters,
            total=sums[4] / iters,
            skipped_anchors=skipped,
            clamped_scores=clamped,
            val_total=val_total,
            seconds=time.perf_counter() - t0,
        )
        reports.append(report)
        line = report.record()
        if echo:
            print(line)
        if log_stream is not None:
            log_stream.write(line + "\n")
            log_stream.flush()

        if val_total < state.best_val and out_dir is not None:
            state.best_val = val_total
            state.best_path = str(out_dir / "best.ckpt")
            save_checkpoint(state.model, state.best_path)
        if (
            out_dir is not None
            and config.checkpoint_every
            and epoch % config.checkpoint_every == 0
        ):
            save_checkpoint(state.model, out_dir / f"epoch{epoch:04d}.ckpt")

    if out_dir is not None:
        save_checkpoint(state.model, out_dir / "final.ckpt")
        if state.best_path is None:
            state.best_path = str(out_dir / "final.ckpt")
    return TrainResult(model=state.model, reports=reports, best_path=state.best_path)


@dataclass
class HeadConfig:
    eta: float = 0.05
    epochs: int = 100
    batch: int = 128
    seed: int = 0


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy with softmax; returns (loss, d_logits)."""
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = np.finfo(p.dtype).tiny
    loss = -float(np.mean(np.log(p[np.arange(n), labels] + eps)))
    d = p.copy()
    d[np.arange(n), labels] -= 1.0
    return loss, d / n


def train_classifier(
    frozen_model: CobraModel,
    paired: PairedDataset,
    task_labels=None,
    head_config: HeadConfig | None = None,
) -> ClassifierHead:
    """Trains the fusion head on frozen joint embeddings (two-stage)."""
    cfg = head_config or HeadConfig()
    labels = (
        paired.labels if task_labels is None else np.asarray(task_labels, dtype=np.int64)
    )
    if labels.shape[0] != paired.n_pairs:
        raise ConfigError(f"{labels.shape[0]} task labels for {paired.n_pairs} pairs")
    num_task_classes = int(labels.max()) + 1

    dtype = frozen_model.dtype
    cache = model_mod.forward_full(
        frozen_model,
        paired.image.features.astype(dtype),
        paired.text.features.astype(dtype),
        mode="eval",
    )
    o_image, o_text = cache.image.o, cache.text.o

    head = model_mod.init_head(
        frozen_model.joint_dim, num_task_classes, seed=cfg.seed, dtype=dtype
    )
    streams = RngStreams(cfg.seed)
    mb_rng = streams.get("minibatch")
    drop_rng = streams.get("dropout")
    b = min(cfg.batch, paired.n_pairs)
    iters = -(-paired.n_pairs // b)
    for _ in range(cfg.epochs):
        for _ in range(iters):
            idx = mb_rng.choice(paired.n_pairs, size=b, replace=False)
            hc = model_mod.classify_cached(
                head, o_text[idx], o_image[idx], mode="train", rng=drop_rng
            )
            _, d_logits = softmax_cross_entropy(hc.output, labels[idx])
            for p in head.params():
                p.zero_grad()
            model_mod.classify_backward(head, hc, d_logits.astype(dtype))
            sgd_step(head.params(), cfg.eta)
    return head
