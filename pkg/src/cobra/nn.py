"""Minimal dense numeric engine: layer primitives, parameters, SGD, gradient oracle.

Matrices are 2-D numpy arrays. float32 is the training default; gradient
checking requires float64 (finite differences are unreliable in 32-bit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


@dataclass
class Param:
    """A named weight matrix with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError(
                f"param {self.name}: grad shape {self.grad.shape} "
                f"!= value shape {self.value.shape}"
            )

    def zero_grad(self):
        self.grad[...] = 0.0


class RngStreams:
    """Seeded PCG64 generators, one independent stream per purpose.

    Streams are derived from the seed via numpy SeedSequence spawn keys, so
    e.g. changing how negatives are sampled never perturbs initialization.
    """

    PURPOSES = ("init", "minibatch", "dropout", "negatives")

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens = {
            name: np.random.default_rng(
                np.random.SeedSequence(entropy=self.seed, spawn_key=(i,))
            )
            for i, name in enumerate(self.PURPOSES)
        }

    def get(self, purpose: str) -> np.random.Generator:
        return self._gens[purpose]

    def derive(self, purpose_index: int, step: int) -> np.random.Generator:
        """A fresh generator keyed off (seed, purpose, step); stateless helper
        for reproducible per-epoch draws (e.g. validation-loss sampling)."""
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(purpose_index, step))
        )


def _check_2d(name: str, a: np.ndarray):
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape} do not conform")
    return a @ b


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w + b, bias row broadcast over the batch."""
    if x.shape[1] != w.shape[0] or b.shape != (1, w.shape[1]):
        raise ShapeError(
            f"affine_forward: x {x.shape}, w {w.shape}, b {b.shape} do not conform"
        )
    return x @ w + b


def affine_backward(x: np.ndarray, w: np.ndarray, upstream: np.ndarray):
    """Returns (grad_x, grad_w, grad_b) for y = x @ w + b."""
    if upstream.shape != (x.shape[0], w.shape[1]):
        raise ShapeError(
            f"affine_backward: upstream {upstream.shape} != output shape "
            f"({x.shape[0]}, {w.shape[1]})"
        )
    return upstream @ w.T, x.T @ upstream, upstream.sum(axis=0, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    return np.where(x > 0.0, upstream, 0.0)


def dropout(x: np.ndarray, p: float, mode: str, rng: np.random.Generator):
    """Inverted dropout: survivors scaled by 1/(1-p); eval is the identity.

    Returns (y, mask); the backward pass is upstream * mask.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"dropout mode must be train|eval, got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * mask, mask


def sgd_step(params: Iterable[Param], eta: float):
    """In-place value <- value - eta * grad over every param."""
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient in param {p.name!r}")
        p.value -= eta * p.grad


def finite_diff_grad(
    f: Callable[[], float], params: Iterable[Param], epsilon: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a deterministic scalar function.

    f() must depend on the params only through their current values; use
    float64 params for meaningful results.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    grads = {}
    for p in params:
        g = np.zeros_like(p.value)
        flat_v = p.value.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + epsilon
            hi = f()
            flat_v[i] = orig - epsilon
            lo = f()
            flat_v[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * epsilon)
        grads[p.name] = g
    return grads


def glorot_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max |a-n| / max(|a|, |n|, floor) over entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
