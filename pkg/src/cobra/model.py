"""The COBRA network: per-modality autoencoder + joint-space projection,
plus the bi-modal fusion classifier head.

Encoder:    FC(d, 1024) ReLU -> FC(1024, 1024) ReLU -> FC(1024, 512) identity
Decoder:    FC(512, 1024) ReLU -> FC(1024, 1024) ReLU -> FC(1024, d) identity
Projection: FC(512, Z) identity, one head per modality (optionally shared)
Classifier: Concat -> FC(2Z, 512) ReLU Drop(.5) -> FC(512, 128) ReLU Drop(.5)
            -> FC(128, 64) ReLU Drop(.2) -> FC(64, C_task)

The joint dimension Z equals the class count C: the supervised objective
regresses projections onto one-hot labels, which fixes the width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import CobraError, ParameterError, ShapeError
from .nn import Param

LATENT_DIM = 512
HIDDEN_DIM = 1024


class ContractError(CobraError, ValueError):
    """A required gradient component or cache entry is missing."""


Layer = tuple[Param, Param]  # (weight, bias)


@dataclass
class ModalityPipeline:
    modality: str  # "image" | "text"
    input_dim: int
    encoder: list[Layer]
    decoder: list[Layer]
    projection: list[Layer]  # single affine layer

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1][0].value.shape[1]

    def params(self) -> list[Param]:
        out = []
        for w, b in self.encoder + self.decoder + self.projection:
            out.extend((w, b))
        return out


@dataclass
class CobraModel:
    image: ModalityPipeline
    text: ModalityPipeline
    joint_dim: int
    num_classes: int

    def pipeline(self, modality: str) -> ModalityPipeline:
        if modality == "image":
            return self.image
        if modality == "text":
            return self.text
        raise ParameterError(f"unknown modality {modality!r}")

    def params(self) -> list[Param]:
        seen: dict[int, Param] = {}
        for p in self.image.params() + self.text.params():
            seen.setdefault(id(p), p)  # shared-projection models alias params
        return list(seen.values())

    @property
    def dtype(self):
        return self.image.encoder[0][0].value.dtype


@dataclass
class ClassifierHead:
    layers: list[Layer]
    dropout_p: tuple[float, ...] = (0.5, 0.5, 0.2)

    def params(self) -> list[Param]:
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].value.shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].value.shape[1]


@dataclass
class MlpCache:
    """Per-layer inputs and pre-activations of one MLP forward pass."""

    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    output: np.ndarray
    masks: list[np.ndarray | None] = field(default_factory=list)


@dataclass
class PipelineCache:
    x: np.ndarray
    enc: MlpCache
    z: np.ndarray
    proj: MlpCache
    o: np.ndarray
    dec: MlpCache
    x_hat: np.ndarray


@dataclass
class ForwardCache:
    image: PipelineCache
    text: PipelineCache


@dataclass
class LossGrads:
    """Upstream gradients entering backward_full; d_z flows through both the
    decoder and projection branches internally and is summed."""

    d_o_image: np.ndarray
    d_o_text: np.ndarray
    d_xhat_image: np.ndarray
    d_xhat_text: np.ndarray


def _mlp_forward(
    x: np.ndarray,
    layers: list[Layer],
    relu_until: int,
    dropout_p: tuple[float, ...] = (),
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> MlpCache:
    """Forward through affine layers; ReLU (and optional dropout) after the
    first `relu_until` layers, identity on the rest."""
    inputs, pres, masks = [], [], []
    h = x
    for i, (w, b) in enumerate(layers):
        inputs.append(h)
        pre = nn.affine_forward(h, w.value, b.value)
        pres.append(pre)
        if i < relu_until:
            h = nn.relu(pre)
            if i < len(dropout_p) and dropout_p[i] > 0.0:
                h, mask = nn.dropout(h, dropout_p[i], mode, rng)
                masks.append(mask)
            else:
                masks.append(None)
        else:
            h = pre
            masks.append(None)
    return MlpCache(inputs=inputs, pres=pres, output=h, masks=masks)


def _mlp_backward(
    cache: MlpCache, layers: list[Layer], relu_until: int, d_out: np.ndarray
) -> np.ndarray:
    """Accumulates param grads, returns gradient w.r.t. the MLP input."""
    d = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, b = layers[i]
        if i < relu_until:
            if cache.masks[i] is not None:
                d = d * cache.masks[i]
            d = nn.relu_backward(cache.pres[i], d)
        d, gw, gb = nn.affine_backward(cache.inputs[i], w.value, d)
        w.grad += gw
        b.grad += gb
    return d


def encode(pipeline: ModalityPipeline, x: np.ndarray) -> np.ndarray:
    """Latent code z = f(x); batch x d_j -> batch x 512."""
    if x.shape[1] != pipeline.input_dim:
        raise ShapeError(
            f"{pipeline.modality} encode: input width {x.shape[1]} != {pipeline.input_dim}"
        )
    return _mlp_forward(x, pipeline.encoder, relu_until=2).output


def decode(pipeline: ModalityPipeline, z: np.ndarray) -> np.ndarray:
    """Reconstruction x_hat = g(z); batch x 512 -> batch x d_j."""
    if z.shape[1] != pipeline.latent_dim:
        raise ShapeError(f"decode: latent width {z.shape[1]} != {pipeline.latent_dim}")
    return _mlp_forward(z, pipeline.decoder, relu_until=2).output


def project(pipeline: ModalityPipeline, z: np.ndarray) -> np.ndarray:
    """Joint-space projection O = z @ W + b; batch x 512 -> batch x Z."""
    if z.shape[1] != pipeline.latent_dim:
        raise ShapeError(f"project: latent width {z.shape[1]} != {pipeline.latent_dim}")
    return _mlp_forward(z, pipeline.projection, relu_until=0).output


def classify(
    head: ClassifierHead,
    o_text: np.ndarray,
    o_image: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Fusion-classifier logits from the two joint embeddings."""
    return classify_cached(head, o_text, o_image, mode, rng).output


def classify_cached(
    head: ClassifierHead,
    o_text: np.ndarray,
    o_image: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> MlpCache:
    if o_text.shape[0] != o_image.shape[0]:
        raise ShapeError(
            f"classify: row counts differ ({o_text.shape[0]} text vs "
            f"{o_image.shape[0]} image)"
        )
    x = np.concatenate([o_text, o_image], axis=1)
    if x.shape[1] != head.input_dim:
        raise ShapeError(
            f"classify: concat width {x.shape[1]} != head input {head.input_dim}"
        )
    return _mlp_forward(
        x, head.layers, relu_until=3, dropout_p=head.dropout_p, mode=mode, rng=rng
    )


def classify_backward(head: ClassifierHead, cache: MlpCache, d_logits: np.ndarray):
    """Accumulates head grads; returns (d_o_text, d_o_image)."""
    d_x = _mlp_backward(cache, head.layers, relu_until=3, d_out=d_logits)
    z = d_x.shape[1] // 2
    return d_x[:, :z], d_x[:, z:]


def forward_full(
    model: CobraModel, x_image: np.ndarray, x_text: np.ndarray, mode: str = "eval"
) -> ForwardCache:
    """One minibatch through both pipelines, keeping all intermediates."""

    def run(pipeline: ModalityPipeline, x: np.ndarray) -> PipelineCache:
        if x.shape[1] != pipeline.input_dim:
            raise ShapeError(
                f"{pipeline.modality} input width {x.shape[1]} != {pipeline.input_dim}"
            )
        enc = _mlp_forward(x, pipeline.encoder, relu_until=2)
        z = enc.output
        proj = _mlp_forward(z, pipeline.projection, relu_until=0)
        dec = _mlp_forward(z, pipeline.decoder, relu_until=2)
        return PipelineCache(
            x=x, enc=enc, z=z, proj=proj, o=proj.output, dec=dec, x_hat=dec.output
        )

    return ForwardCache(image=run(model.image, x_image), text=run(model.text, x_text))


def zero_grads(model: CobraModel):
    for p in model.params():
        p.zero_grad()


def backward_full(model: CobraModel, cache: ForwardCache, grads: LossGrads):
    """Populates every pipeline Param.grad from the loss gradients.

    Grads are zeroed first; d_z sums the decoder and projection branches.
    """
    for name in ("d_o_image", "d_o_text", "d_xhat_image", "d_xhat_text"):
        if getattr(grads, name) is None:
            raise ContractError(f"backward_full: missing gradient component {name}")
    zero_grads(model)
    for pipeline, pc, d_o, d_xhat in (
        (model.image, cache.image, grads.d_o_image, grads.d_xhat_image),
        (model.text, cache.text, grads.d_o_text, grads.d_xhat_text),
    ):
        if d_o.shape != pc.o.shape or d_xhat.shape != pc.x_hat.shape:
            raise ShapeError(
                f"{pipeline.modality} backward: grad shapes {d_o.shape}/{d_xhat.shape} "
                f"!= forward shapes {pc.o.shape}/{pc.x_hat.shape}"
            )
        d_z = _mlp_backward(pc.proj, pipeline.projection, relu_until=0, d_out=d_o)
        d_z = d_z + _mlp_backward(pc.dec, pipeline.decoder, relu_until=2, d_out=d_xhat)
        _mlp_backward(pc.enc, pipeline.encoder, relu_until=2, d_out=d_z)


def _init_layers(
    prefix: str, dims: list[int], rng: np.random.Generator, dtype
) -> list[Layer]:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = Param(f"{prefix}{i}.w", nn.glorot_uniform(rng, fan_in, fan_out, dtype))
        b = Param(f"{prefix}{i}.b", np.zeros((1, fan_out), dtype=dtype))
        layers.append((w, b))
    return layers


def init_model(
    d_image: int,
    d_text: int,
    num_classes: int,
    seed: int,
    dtype=np.float32,
    shared_projection: bool = False,
    hidden_dim: int = HIDDEN_DIM,
    latent_dim: int = LATENT_DIM,
) -> CobraModel:
    """Fresh model with Z = num_classes; deterministic for a fixed seed.

    hidden_dim / latent_dim are overridable only to make toy instances
    small enough for finite-difference checking.
    """
    for name, v in (("d_image", d_image), ("d_text", d_text), ("num_classes", num_classes)):
        if v < 1:
            raise ParameterError(f"{name} must be >= 1, got {v}")
    rng = _init_stream(seed)

    def build(modality: str, d: int) -> ModalityPipeline:
        enc = _init_layers(f"{modality}.enc", [d, hidden_dim, hidden_dim, latent_dim], rng, dtype)
        dec = _init_layers(f"{modality}.dec", [latent_dim, hidden_dim, hidden_dim, d], rng, dtype)
        proj = _init_layers(f"{modality}.proj", [latent_dim, num_classes], rng, dtype)
        return ModalityPipeline(modality, d, enc, dec, proj)

    image = build("image", d_image)
    text = build("text", d_text)
    if shared_projection:
        text.projection = image.projection
    return CobraModel(image=image, text=text, joint_dim=num_classes, num_classes=num_classes)


def init_head(
    joint_dim: int,
    num_task_classes: int,
    seed: int,
    dtype=np.float32,
    hidden: tuple[int, int, int] = (512, 128, 64),
) -> ClassifierHead:
    if joint_dim < 1 or num_task_classes < 1:
        raise ParameterError("joint_dim and num_task_classes must be >= 1")
    rng = _init_stream(seed)
    layers = _init_layers(
        "head.fc", [2 * joint_dim, *hidden, num_task_classes], rng, dtype
    )
    return ClassifierHead(layers=layers)


def _init_stream(seed: int) -> np.random.Generator:
    """The dedicated init stream for a seed (stream 0 of RngStreams)."""
    from .nn import RngStreams

    return RngStreams(seed).get("init")
