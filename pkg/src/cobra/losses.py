"""The four training objectives and their gradients.

Reconstruction, cross-modal alignment and supervised (one-hot regression)
losses are squared-error sums; the contrastive term comes in two variants:

* ``setform`` -- softmax contrast of an anchor against one positive and N
  negatives. The printed score is a raw dot product, which is ill-defined
  inside a log ratio for nonpositive scores, so the default ``exp`` score
  mode exponentiates with a temperature (the standard InfoNCE form); the
  ``literal`` mode keeps raw dot products and clamps them below at 1e-12.
* ``nce`` -- noise contrastive estimation with a uniform noise distribution
  over the minibatch pool. The joint density of a candidate given the anchor
  is softmax(anchor . candidate / temperature) over all other rows of the
  minibatch. Default is the log-likelihood form; ``literal`` drops the logs.

With ``reduction="mean"`` each squared-error component is divided by the
minibatch size so the loss weights are batch-size independent; ``sum`` keeps
the raw sums. The contrastive term is always a mean over drawn sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LabelError, NumericError, PairingError, ShapeError

CLAMP_FLOOR = 1e-12


@dataclass
class LossWeights:
    lambda_r: float = 1.0
    lambda_s: float = 1.0
    lambda_m: float = 1.0
    lambda_c: float = 0.1

    def __post_init__(self):
        vals = (self.lambda_r, self.lambda_s, self.lambda_m, self.lambda_c)
        if any(v < 0 for v in vals):
            raise ConfigError(f"loss weights must be nonnegative, got {vals}")
        if all(v == 0 for v in vals):
            raise ConfigError("at least one loss weight must be positive")


Ref = tuple[str, int]  # (modality, row index within that modality's batch)


@dataclass
class ContrastiveSet:
    anchor: Ref
    positive: Ref
    negatives: list[Ref]


@dataclass
class NoiseModel:
    n_noise: int
    noise_density: float

    def __post_init__(self):
        if self.n_noise < 1:
            raise ConfigError(f"n_noise must be >= 1, got {self.n_noise}")
        if self.noise_density <= 0:
            raise ConfigError(f"noise_density must be positive, got {self.noise_density}")


@dataclass
class LossBreakdown:
    l_r: float = 0.0
    l_m: float = 0.0
    l_s: float = 0.0
    l_c: float = 0.0
    total: float = 0.0
    d_o_image: np.ndarray | None = None
    d_o_text: np.ndarray | None = None
    d_xhat_image: np.ndarray | None = None
    d_xhat_text: np.ndarray | None = None
    skipped_anchors: int = 0
    clamped_scores: int = 0


def _scale(reduction: str, n: int) -> float:
    if reduction == "mean":
        return 1.0 / n
    if reduction == "sum":
        return 1.0
    raise ConfigError(f"reduction must be mean|sum, got {reduction!r}")


def recon_loss(x_hat_image, x_image, x_hat_text, x_text, reduction="sum"):
    """Sum of squared reconstruction errors over both modalities.

    Returns (value, grad_xhat_image, grad_xhat_text).
    """
    if x_hat_image.shape != x_image.shape or x_hat_text.shape != x_text.shape:
        raise ShapeError(
            f"recon_loss: shapes {x_hat_image.shape}/{x_image.shape} and "
            f"{x_hat_text.shape}/{x_text.shape} must match per modality"
        )
    s = _scale(reduction, x_image.shape[0] + x_text.shape[0])
    r_i = x_hat_image - x_image
    r_t = x_hat_text - x_text
    value = s * (float(np.sum(r_i * r_i)) + float(np.sum(r_t * r_t)))
    return value, 2.0 * s * r_i, 2.0 * s * r_t


def cross_modal_loss(o_text, o_image, reduction="sum"):
    """Squared distance between index-aligned joint projections.

    Returns (value, grad_o_text, grad_o_image).
    """
    if o_text.shape != o_image.shape:
        raise PairingError(
            f"cross_modal_loss: {o_text.shape} vs {o_image.shape}; rows must be "
            "index-aligned pairs"
        )
    s = _scale(reduction, o_text.shape[0])
    r = o_text - o_image
    return s * float(np.sum(r * r)), 2.0 * s * r, -2.0 * s * r


def supervised_loss(o, labels, num_classes, reduction="sum"):
    """Squared distance from each projection to its one-hot label.

    Returns (value, grad_o). Call once per modality and sum.
    """
    labels = np.asarray(labels)
    if o.shape[1] != num_classes:
        raise ConfigError(
            f"supervised_loss: joint dim {o.shape[1]} != num_classes {num_classes}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    if labels.shape[0] != o.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {o.shape[0]} rows")
    y = np.zeros_like(o)
    y[np.arange(o.shape[0]), labels] = 1.0
    s = _scale(reduction, o.shape[0])
    r = o - y
    return s * float(np.sum(r * r)), 2.0 * s * r


def sample_contrastive_sets(
    labels_image,
    labels_text,
    n_negatives: int,
    rng: np.random.Generator,
    sets_per_batch: int | None = None,
) -> tuple[list[ContrastiveSet], int]:
    """Draws anchor/positive/negative sets from one minibatch.

    Every row is an anchor candidate (default one set per eligible anchor).
    The positive shares the anchor's modality and class; negatives come from
    any modality with a different class, with replacement when fewer than
    n_negatives distinct candidates exist. Anchors without any in-batch
    positive are skipped and counted. Returns (sets, skipped_count).
    """
    if n_negatives < 1:
        raise ConfigError(f"n_negatives must be >= 1, got {n_negatives}")
    rows: list[tuple[Ref, int]] = [
        (("image", i), int(c)) for i, c in enumerate(np.asarray(labels_image))
    ] + [(("text", i), int(c)) for i, c in enumerate(np.asarray(labels_text))]

    anchors = list(range(len(rows)))
    if sets_per_batch is not None and sets_per_batch < len(anchors):
        anchors = list(rng.choice(len(rows), size=sets_per_batch, replace=False))

    sets: list[ContrastiveSet] = []
    skipped = 0
    for a_idx in anchors:
        (a_ref, a_cls) = rows[a_idx]
        positives = [
            r
            for j, (r, c) in enumerate(rows)
            if j != a_idx and c == a_cls and r[0] == a_ref[0]
        ]
        negatives_pool = [r for (r, c) in rows if c != a_cls]
        if not positives or not negatives_pool:
            skipped += 1
            continue
        pos = positives[rng.integers(len(positives))]
        replace = len(negatives_pool) < n_negatives
        picks = rng.choice(len(negatives_pool), size=n_negatives, replace=replace)
        negs = [negatives_pool[k] for k in picks]
        sets.append(ContrastiveSet(anchor=a_ref, positive=pos, negatives=negs))
    return sets, skipped


def _gather(o_image, o_text, ref: Ref) -> np.ndarray:
    return (o_image if ref[0] == "image" else o_text)[ref[1]]


class _GradSink:
    """Accumulates per-row joint-space gradients for both modalities."""

    def __init__(self, o_image, o_text):
        self.d_image = np.zeros_like(o_image)
        self.d_text = np.zeros_like(o_text)

    def add(self, ref: Ref, g: np.ndarray):
        (self.d_image if ref[0] == "image" else self.d_text)[ref[1]] += g


def contrastive_loss_setform(
    sets: list[ContrastiveSet],
    o_image,
    o_text,
    score_mode: str = "exp",
    temperature: float = 1.0,
):
    """Set-based contrastive loss, mean over sets.

    Returns (value, grad_o_image, grad_o_text, clamp_count).
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if score_mode not in ("exp", "literal"):
        raise ConfigError(f"score_mode must be exp|literal, got {score_mode!r}")
    sink = _GradSink(o_image, o_text)
    if not sets:
        return 0.0, sink.d_image, sink.d_text, 0

    total = 0.0
    clamped = 0
    inv_n = 1.0 / len(sets)
    for cs in sets:
        a = _gather(o_image, o_text, cs.anchor)
        others = [cs.positive] + cs.negatives
        vecs = np.stack([_gather(o_image, o_text, r) for r in others])
        dots = vecs @ a / temperature

        if score_mode == "exp":
            # -log softmax weight of the positive among {p, n_1..n_N}
            m = dots.max()
            e = np.exp(dots - m)
            q = e / e.sum()
            total += inv_n * float(np.log(e.sum()) + m - dots[0])
            d_dots = q.copy()
            d_dots[0] -= 1.0
            d_dots *= inv_n
        else:
            raw = vecs @ a
            clamped += int(np.sum(raw < CLAMP_FLOOR))
            u = np.maximum(raw, CLAMP_FLOOR)
            denom = u.sum()
            total += inv_n * float(np.log(denom) - np.log(u[0]))
            d_u = np.full_like(u, 1.0 / denom)
            d_u[0] -= 1.0 / u[0]
            d_u[raw < CLAMP_FLOOR] = 0.0
            d_dots = d_u * inv_n * temperature  # undo the 1/tau below

        scale = 1.0 / temperature
        sink.add(cs.anchor, scale * (d_dots @ vecs))
        for d, r in zip(d_dots, others):
            sink.add(r, scale * d * a)
    return total, sink.d_image, sink.d_text, clamped


def nce_posterior(score_joint: float, noise: NoiseModel) -> float:
    """Probability that a sample came from the joint rather than the noise
    distribution: p_J / (p_J + N * p_N)."""
    if score_joint <= 0:
        raise NumericError(f"joint density must be positive, got {score_joint}")
    return score_joint / (score_joint + noise.n_noise * noise.noise_density)


def nce_loss(
    sets: list[ContrastiveSet],
    o_image,
    o_text,
    noise: NoiseModel | None = None,
    form: str = "log",
    temperature: float = 1.0,
):
    """NCE objective over the drawn sets, mean over anchors.

    p_J(s|a) is softmax(a.s / temperature) over every minibatch row except
    the anchor; p_N is uniform over that same pool. The ``log`` form is the
    standard NCE log-likelihood; ``literal`` sums the posteriors directly.
    Returns (value, grad_o_image, grad_o_text).
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if form not in ("log", "literal"):
        raise ConfigError(f"form must be log|literal, got {form!r}")
    sink = _GradSink(o_image, o_text)
    if not sets:
        return 0.0, sink.d_image, sink.d_text

    combined = np.concatenate([o_image, o_text], axis=0)
    n_image = o_image.shape[0]

    def gidx(ref: Ref) -> int:
        return ref[1] if ref[0] == "image" else n_image + ref[1]

    pool_size = combined.shape[0] - 1  # every row but the anchor
    total = 0.0
    inv_n = 1.0 / len(sets)
    for cs in sets:
        a_i = gidx(cs.anchor)
        a = combined[a_i]
        pool = np.delete(np.arange(combined.shape[0]), a_i)
        n_noise = len(cs.negatives)
        nm = noise or NoiseModel(n_noise=n_noise, noise_density=1.0 / pool_size)

        scores = combined[pool] @ a / temperature
        m = scores.max()
        e = np.exp(scores - m)
        pi = e / e.sum()  # p_J(s|a) over the pool

        pos_in_pool = {g: k for k, g in enumerate(pool)}
        base = nm.n_noise * nm.noise_density
        h = pi / (pi + base)  # posterior per pool row

        d_pi = np.zeros_like(pi)
        k_pos = pos_in_pool[gidx(cs.positive)]
        # d h / d pi = h (1 - h) / pi = base / (pi + base)^2; the latter form
        # stays finite when pi underflows to 0
        if form == "log":
            loss = -np.log(h[k_pos])
            d_pi[k_pos] += -base / (pi[k_pos] * (pi[k_pos] + base))
            for neg in cs.negatives:
                k = pos_in_pool[gidx(neg)]
                loss += -np.log1p(-h[k])
                d_pi[k] += 1.0 / (pi[k] + base)
        else:
            loss = -h[k_pos]
            d_pi[k_pos] += -base / (pi[k_pos] + base) ** 2
            for neg in cs.negatives:
                k = pos_in_pool[gidx(neg)]
                loss += -(1.0 - h[k])
                d_pi[k] += base / (pi[k] + base) ** 2
        total += inv_n * float(loss)

        # softmax backward: d/ds_t = pi_t * (d_pi_t - sum_s d_pi_s pi_s)
        d_scores = pi * (d_pi - float(d_pi @ pi))
        d_scores *= inv_n / temperature
        d_a = d_scores @ combined[pool]
        d_pool = np.outer(d_scores, a)

        d_combined = np.zeros_like(combined)
        d_combined[pool] += d_pool
        d_combined[a_i] += d_a
        sink.d_image += d_combined[:n_image]
        sink.d_text += d_combined[n_image:]
    return total, sink.d_image, sink.d_text


def total_loss(
    cache,
    labels_image,
    labels_text,
    weights: LossWeights,
    rng: np.random.Generator,
    n_negatives: int = 10,
    contrastive_variant: str = "nce",
    score_mode: str = "exp",
    nce_form: str = "log",
    temperature: float = 1.0,
    reduction: str = "mean",
    paired: bool = True,
) -> LossBreakdown:
    """Assembles the weighted objective and its upstream gradients from a
    ForwardCache. Component gradients targeting the same tensor are summed
    with their weights applied."""
    img, txt = cache.image, cache.text
    bd = LossBreakdown(
        d_o_image=np.zeros_like(img.o),
        d_o_text=np.zeros_like(txt.o),
        d_xhat_image=np.zeros_like(img.x_hat),
        d_xhat_text=np.zeros_like(txt.x_hat),
    )

    bd.l_r, g_xi, g_xt = recon_loss(img.x_hat, img.x, txt.x_hat, txt.x, reduction)
    bd.d_xhat_image += weights.lambda_r * g_xi
    bd.d_xhat_text += weights.lambda_r * g_xt

    if weights.lambda_m > 0:
        if not paired:
            raise ConfigError("cross-modal loss requires paired minibatches")
        bd.l_m, g_ot, g_oi = cross_modal_loss(txt.o, img.o, reduction)
        bd.d_o_text += weights.lambda_m * g_ot
        bd.d_o_image += weights.lambda_m * g_oi

    c = img.o.shape[1]
    l_s_i, g_si = supervised_loss(img.o, labels_image, c, reduction)
    l_s_t, g_st = supervised_loss(txt.o, labels_text, c, reduction)
    bd.l_s = l_s_i + l_s_t
    bd.d_o_image += weights.lambda_s * g_si
    bd.d_o_text += weights.lambda_s * g_st

    if weights.lambda_c > 0:
        sets, bd.skipped_anchors = sample_contrastive_sets(
            labels_image, labels_text, n_negatives, rng
        )
        if contrastive_variant == "setform":
            bd.l_c, g_ci, g_ct, bd.clamped_scores = contrastive_loss_setform(
                sets, img.o, txt.o, score_mode, temperature
            )
        elif contrastive_variant == "nce":
            bd.l_c, g_ci, g_ct = nce_loss(
                sets, img.o, txt.o, form=nce_form, temperature=temperature
            )
        else:
            raise ConfigError(
                f"contrastive_variant must be setform|nce, got {contrastive_variant!r}"
            )
        bd.d_o_image += weights.lambda_c * g_ci
        bd.d_o_text += weights.lambda_c * g_ct

    bd.total = (
        weights.lambda_r * bd.l_r
        + weights.lambda_s * bd.l_s
        + weights.lambda_m * bd.l_m
        + weights.lambda_c * bd.l_c
    )
    return bd
