"""Finite-difference verification of every analytic gradient path.

All checks run in float64 on toy instances (dims <= 8, batch <= 4); the
pass threshold is max relative error < 1e-4 with epsilon = 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, model as model_mod
from .losses import LossWeights
from .model import LossGrads
from .nn import Param, affine_backward, affine_forward, finite_diff_grad, max_rel_err
from .training import softmax_cross_entropy

THRESHOLD = 1e-4
EPSILON = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < THRESHOLD


def _toy_setup(seed: int):
    rng = np.random.default_rng(seed)
    model = model_mod.init_model(
        5, 4, 3, seed=seed, dtype=np.float64, hidden_dim=6, latent_dim=7
    )
    # zero biases put pre-activations exactly on the ReLU kink for samples
    # whose hidden row is fully clipped; nudge params off the kink
    for p in model.params():
        p.value += rng.normal(scale=0.05, size=p.value.shape)
    x_i = rng.normal(size=(4, 5))
    x_t = rng.normal(size=(4, 4))
    y = np.array([0, 1, 2, 0])
    return model, x_i, x_t, y


def _component_weights(component: str) -> LossWeights:
    kw = dict(lambda_r=0.0, lambda_s=0.0, lambda_m=0.0, lambda_c=0.0)
    kw[f"lambda_{component}"] = 1.0
    return LossWeights(**kw)


def _check_model_loss(
    name: str,
    weights: LossWeights,
    seed: int,
    corrupt: str | None,
    contrastive_variant: str = "nce",
    score_mode: str = "exp",
    nce_form: str = "log",
) -> CheckResult:
    model, x_i, x_t, y = _toy_setup(seed)

    def breakdown():
        cache = model_mod.forward_full(model, x_i, x_t, mode="eval")
        # fixed-seed sampling keeps the objective a pure function of params
        bd = losses.total_loss(
            cache,
            y,
            y,
            weights,
            np.random.default_rng(12345),
            n_negatives=3,
            contrastive_variant=contrastive_variant,
            score_mode=score_mode,
            nce_form=nce_form,
        )
        return cache, bd

    cache, bd = breakdown()
    model_mod.backward_full(
        model,
        cache,
        LossGrads(bd.d_o_image, bd.d_o_text, bd.d_xhat_image, bd.d_xhat_text),
    )
    analytic = {p.name: p.grad.copy() for p in model.params()}
    if corrupt is not None and corrupt in analytic:
        analytic[corrupt] = analytic[corrupt] + 1.0

    numeric = finite_diff_grad(
        lambda: breakdown()[1].total, model.params(), epsilon=EPSILON
    )
    err = max(max_rel_err(analytic[n], numeric[n]) for n in numeric)
    return CheckResult(name=name, max_rel_err=err)


def _check_affine(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    w = Param("affine.w", rng.normal(size=(5, 3)))
    b = Param("affine.b", rng.normal(size=(1, 3)))
    x = rng.normal(size=(4, 5))
    upstream = rng.normal(size=(4, 3))

    _, gw, gb = affine_backward(x, w.value, upstream)
    analytic = {"affine.w": gw, "affine.b": gb}
    numeric = finite_diff_grad(
        lambda: float(np.sum(affine_forward(x, w.value, b.value) * upstream)),
        [w, b],
        epsilon=EPSILON,
    )
    err = max(max_rel_err(analytic[n], numeric[n]) for n in numeric)
    return CheckResult(name="layer_affine", max_rel_err=err)


def _check_head(seed: int, corrupt: str | None) -> CheckResult:
    rng = np.random.default_rng(seed)
    head = model_mod.init_head(3, 3, seed=seed, dtype=np.float64, hidden=(5, 4, 3))
    for p in head.params():
        p.value += rng.normal(scale=0.05, size=p.value.shape)
    o_t = rng.normal(size=(4, 3))
    o_i = rng.normal(size=(4, 3))
    y = np.array([0, 1, 2, 1])

    def loss():
        hc = model_mod.classify_cached(head, o_t, o_i, mode="eval")
        return softmax_cross_entropy(hc.output, y)

    value, d_logits = loss()
    for p in head.params():
        p.zero_grad()
    hc = model_mod.classify_cached(head, o_t, o_i, mode="eval")
    model_mod.classify_backward(head, hc, d_logits)
    analytic = {p.name: p.grad.copy() for p in head.params()}
    if corrupt is not None and corrupt in analytic:
        analytic[corrupt] = analytic[corrupt] + 1.0
    numeric = finite_diff_grad(lambda: loss()[0], head.params(), epsilon=EPSILON)
    err = max(max_rel_err(analytic[n], numeric[n]) for n in numeric)
    return CheckResult(name="classifier_cross_entropy", max_rel_err=err)


def run_gradcheck(seed: int = 0, corrupt: str | None = None) -> list[CheckResult]:
    """Every loss component plus the layer primitives and classifier head.

    `corrupt` names a param whose analytic gradient is deliberately broken;
    test hook for the failure path.
    """
    results = [_check_affine(seed)]
    for comp in ("r", "m", "s"):
        results.append(
            _check_model_loss(f"loss_{comp}", _component_weights(comp), seed, corrupt)
        )
    results.append(
        _check_model_loss(
            "loss_c_setform_exp",
            _component_weights("c"),
            seed,
            corrupt,
            contrastive_variant="setform",
            score_mode="exp",
        )
    )
    results.append(
        _check_model_loss(
            "loss_c_nce_log",
            _component_weights("c"),
            seed,
            corrupt,
            contrastive_variant="nce",
            nce_form="log",
        )
    )
    results.append(
        _check_model_loss(
            "loss_total",
            LossWeights(lambda_r=1.0, lambda_s=1.0, lambda_m=1.0, lambda_c=0.1),
            seed,
            corrupt,
        )
    )
    results.append(_check_head(seed, corrupt))
    return results
