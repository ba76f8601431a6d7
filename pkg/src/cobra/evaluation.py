"""Cross-modal retrieval scoring (AP / mAP), classification accuracy, and
joint-embedding export.

Retrieval ranks the gallery by cosine similarity over the joint embeddings,
ties broken by ascending gallery index; an item is relevant iff it shares
the query's class. AP is computed over the full ranked list. Queries with no
relevant gallery item have undefined AP and are excluded from the mean (and
counted), unless ``zero_relevant="zero"`` scores them as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as model_mod
from .data import FeatureDataset, PairedDataset, write_feature_file
from .errors import ConfigError
from .model import ClassifierHead, CobraModel

DIRECTIONS = ("ITT", "TTI")


@dataclass
class RetrievalFragment:
    direction: str
    map_value: float
    ap_per_query: list[float]
    n_queries: int
    n_excluded: int


@dataclass
class RetrievalReport:
    map_itt: float
    map_tti: float
    map_avg: float
    fragments: dict[str, RetrievalFragment] = field(default_factory=dict)

    def record_lines(self) -> list[str]:
        lines = []
        for d in DIRECTIONS:
            f = self.fragments[d]
            lines.append(
                f"direction={d} map={f.map_value:.5f} "
                f"queries={f.n_queries} excluded={f.n_excluded}"
            )
        lines.append(f"map_avg={self.map_avg:.5f}")
        return lines


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); defined as 0 when either norm is zero."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def similarity_matrix(queries: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities; zero-norm rows map to 0 similarity."""
    qn = np.linalg.norm(queries, axis=1, keepdims=True)
    gn = np.linalg.norm(gallery, axis=1, keepdims=True)
    q = np.divide(queries, qn, out=np.zeros_like(queries), where=qn > 0)
    g = np.divide(gallery, gn, out=np.zeros_like(gallery), where=gn > 0)
    return q @ g.T


def rank_gallery(sims: np.ndarray) -> np.ndarray:
    """Indices by descending similarity, ties broken by ascending index."""
    return np.argsort(-sims, kind="stable")


def average_precision(relevance) -> float:
    """Mean of precision-at-k over the relevant positions of a ranked list."""
    rel = np.asarray(relevance, dtype=np.float64)
    n_rel = rel.sum()
    if n_rel == 0:
        raise ConfigError("average_precision needs at least one relevant item")
    cum = np.cumsum(rel)
    precision_at = cum / np.arange(1, rel.size + 1)
    return float(np.sum(precision_at * rel) / n_rel)


def embed_dataset(model: CobraModel, ds: FeatureDataset) -> np.ndarray:
    pipeline = model.pipeline(ds.modality)
    x = ds.features.astype(model.dtype)
    return model_mod.project(pipeline, model_mod.encode(pipeline, x))


def mean_average_precision(
    model: CobraModel,
    query_set: FeatureDataset,
    gallery_set: FeatureDataset,
    direction: str,
    zero_relevant: str = "exclude",
    map_at: int | None = None,
) -> RetrievalFragment:
    """mAP of one retrieval direction over encode-then-project embeddings.

    map_at truncates each ranked list to its top k before scoring; queries
    with no relevant item in the (possibly truncated) list follow the
    zero_relevant convention.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if gallery_set.n == 0:
        raise ConfigError("empty gallery")
    q_emb = embed_dataset(model, query_set)
    g_emb = embed_dataset(model, gallery_set)
    sims = similarity_matrix(q_emb, g_emb)

    aps: list[float] = []
    excluded = 0
    for qi in range(query_set.n):
        order = rank_gallery(sims[qi])
        rel = (gallery_set.labels[order] == query_set.labels[qi]).astype(np.float64)
        if map_at is not None:
            rel = rel[:map_at]
        if rel.sum() == 0:
            if zero_relevant == "zero":
                aps.append(0.0)
            else:
                excluded += 1
            continue
        aps.append(average_precision(rel))
    map_value = float(np.mean(aps)) if aps else 0.0
    return RetrievalFragment(
        direction=direction,
        map_value=map_value,
        ap_per_query=aps,
        n_queries=len(aps),
        n_excluded=excluded,
    )


def retrieval_report(
    model: CobraModel,
    paired: PairedDataset,
    zero_relevant: str = "exclude",
    map_at: int | None = None,
) -> RetrievalReport:
    """Both directions: ITT queries images against the text gallery, TTI the
    reverse; map_avg is their mean."""
    itt = mean_average_precision(
        model, paired.image, paired.text, "ITT", zero_relevant, map_at
    )
    tti = mean_average_precision(
        model, paired.text, paired.image, "TTI", zero_relevant, map_at
    )
    return RetrievalReport(
        map_itt=itt.map_value,
        map_tti=tti.map_value,
        map_avg=(itt.map_value + tti.map_value) / 2.0,
        fragments={"ITT": itt, "TTI": tti},
    )


def classification_accuracy(
    head: ClassifierHead, model: CobraModel, paired: PairedDataset, labels
) -> float:
    """Fraction of argmax(logits) == label; argmax ties go to the lowest
    class index (numpy argmax convention)."""
    labels = np.asarray(labels)
    if paired.n_pairs == 0:
        raise ConfigError("empty evaluation set")
    if labels.shape[0] != paired.n_pairs:
        raise ConfigError(f"{labels.shape[0]} labels for {paired.n_pairs} pairs")
    o_image = embed_dataset(model, paired.image)
    o_text = embed_dataset(model, paired.text)
    logits = model_mod.classify(head, o_text, o_image, mode="eval")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def export_embeddings(model: CobraModel, paired: PairedDataset, out_dir):
    """Writes both modalities' joint embeddings as feature files; returns
    (image_path, text_path)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ds in (paired.image, paired.text):
        emb = embed_dataset(model, ds).astype(np.float32)
        out = FeatureDataset(ds.modality, emb, ds.labels, ds.num_classes)
        path = out_dir / f"embeddings_{ds.modality}.txt"
        write_feature_file(out, path)
        paths.append(path)
    return tuple(paths)
