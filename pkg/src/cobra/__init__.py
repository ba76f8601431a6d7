"""Bi-modal contrastive representation learning toolkit.

Trains per-modality autoencoders whose latent codes are projected into a
shared class-discriminative joint space, optimized with reconstruction,
cross-modal, supervised and contrastive objectives, and evaluates the
result on cross-modal retrieval (mAP) and bi-modal classification.
"""

from .data import FeatureDataset, PairedDataset, SyntheticSpec, generate_synthetic
from .losses import LossWeights
from .model import CobraModel, init_head, init_model
from .training import HeadConfig, TrainConfig, train, train_classifier

__all__ = [
    "FeatureDataset",
    "PairedDataset",
    "SyntheticSpec",
    "generate_synthetic",
    "LossWeights",
    "CobraModel",
    "init_model",
    "init_head",
    "TrainConfig",
    "HeadConfig",
    "train",
    "train_classifier",
]

__version__ = "0.1.0"
