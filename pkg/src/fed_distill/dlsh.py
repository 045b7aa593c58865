"""DL-SH: one-round distillation under statistical heterogeneity.

Each client trains its model on private data, then trains a binary
"embed" classifier (same body, 2-node head) that separates its private
samples (label 0) from public distillation samples (label 1). The class-0
probability on a public sample estimates how much that sample resembles the
client's data. The server softmaxes those scores across clients to get
per-sample weights, sums the weighted client soft logits into Y_g, and
distills a global model from ``(X_dist, Y_g)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fed_distill.data import LabeledDataset, UnlabeledDataset
from fed_distill.errors import InputError
from fed_distill.nn import (
    ModelSpec,
    Tensor,
    TrainConfig,
    TrainedModel,
    forward,
    init_model,
    replace_head,
    soft_train,
    softmax_t,
    train,
)

logger = logging.getLogger(__name__)

CLIENT_DATA_LABEL = 0
PUBLIC_DATA_LABEL = 1


@dataclass(frozen=True, eq=False)
class ClientUploadSH:
    """What one client sends: soft logits over X_dist and raw confidence scores."""

    client_index: int
    logits: Tensor
    confidence: Tensor

    def __post_init__(self) -> None:
        """Check that both tensors cover the same samples."""
        if self.logits.ndim != 2 or self.confidence.ndim != 1:
            raise InputError("logits must be 2-D and confidence 1-D")
        if len(self.logits) != len(self.confidence):
            raise InputError(
                f"client {self.client_index}: {len(self.logits)} logit rows vs {len(self.confidence)} scores"
            )
        if not np.isfinite(self.confidence).all():
            raise InputError(f"client {self.client_index}: confidence scores must be finite")

    @property
    def scalars(self) -> int:
        """Number of scalars this upload transfers."""
        return int(self.logits.size + self.confidence.size)


@dataclass(frozen=True, eq=False)
class ConfidenceMatrix:
    """Per-sample client weights, shape ``(|X_dist|, n_clients)``; rows sum to 1."""

    weights: Tensor

    def __post_init__(self) -> None:
        """Enforce the row normalization."""
        w = self.weights
        if w.ndim != 2:
            raise InputError("confidence weights must be 2-D")
        if (w < 0).any() or (w > 1).any():
            raise InputError("confidence weights must lie in [0, 1]")
        if not np.allclose(w.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise InputError("confidence rows must sum to 1")


@dataclass(frozen=True, eq=False)
class GlobalDistillSet:
    """The server's distillation set ``D_g = (X_dist, Y_g)``."""

    x_dist: UnlabeledDataset
    y_g: Tensor

    def __post_init__(self) -> None:
        """Check row counts."""
        if len(self.y_g) != len(self.x_dist):
            raise InputError(f"{len(self.x_dist)} samples but {len(self.y_g)} target rows")


def client_local_train(client_data: LabeledDataset, spec: ModelSpec, cfg: TrainConfig) -> TrainedModel:
    """Train a client model M_i from scratch on its private data."""
    if len(client_data) == 0:
        raise InputError("client data is empty")
    if client_data.labels.max() >= spec.output_dim:
        raise InputError(
            f"client labels reach {client_data.labels.max()} but the head has {spec.output_dim} nodes"
        )
    return train(init_model(spec, cfg.seed), client_data, cfg)


def balance_public_block(
    x_dist: UnlabeledDataset, n_client: int, balance_ratio: int, seed: int
) -> UnlabeledDataset:
    """Subsample the public block to ``min(|X_dist|, balance_ratio * n_client)`` rows."""
    if balance_ratio < 1:
        raise InputError(f"balance_ratio must be >= 1, got {balance_ratio}")
    keep = min(len(x_dist), balance_ratio * n_client)
    if keep == len(x_dist):
        return x_dist
    idx = np.sort(np.random.default_rng(seed).choice(len(x_dist), size=keep, replace=False))
    return UnlabeledDataset(x_dist.features[idx], x_dist.feature_shape)


def build_embed_dataset(client_x: Tensor, x_dist: UnlabeledDataset) -> LabeledDataset:
    """Concatenate private (label 0) then public (label 1) samples."""
    if client_x.ndim != 2 or len(client_x) == 0:
        raise InputError("client features must be a non-empty 2-D array")
    if client_x.shape[1] != x_dist.features.shape[1]:
        raise InputError(
            f"client features have {client_x.shape[1]} dims, public ones {x_dist.features.shape[1]}"
        )
    features = np.concatenate([client_x, x_dist.features], axis=0)
    labels = np.concatenate([
        np.full(len(client_x), CLIENT_DATA_LABEL, dtype=np.int64),
        np.full(len(x_dist), PUBLIC_DATA_LABEL, dtype=np.int64),
    ])
    return LabeledDataset(features, labels, 2, x_dist.feature_shape)


def train_binary_classifier(client_model: TrainedModel, embed: LabeledDataset, cfg: TrainConfig) -> TrainedModel:
    """Replace the head of M_i with 2 nodes and train it as the embed classifier C_i."""
    if embed.classes_present() != {CLIENT_DATA_LABEL, PUBLIC_DATA_LABEL}:
        raise InputError("the embed dataset must contain both client and public samples")
    return train(replace_head(client_model, 2, cfg.seed), embed, cfg)


def raw_confidence(classifier: TrainedModel, x_dist: UnlabeledDataset) -> Tensor:
    """Return C_i(x): the classifier's probability that x is client data."""
    if classifier.spec.output_dim != 2:
        raise InputError(f"expected a 2-node classifier, got {classifier.spec.output_dim} nodes")
    return softmax_t(forward(classifier, x_dist.features))[:, CLIENT_DATA_LABEL]


def normalize_confidence(raw: Sequence[Tensor], temperature: float) -> ConfidenceMatrix:
    """Softmax the raw scores across clients, per sample."""
    if not raw:
        raise InputError("no client confidence scores given")
    lengths = {len(r) for r in raw}
    if len(lengths) != 1:
        raise InputError(f"clients report different |X_dist|: {sorted(lengths)}")
    scores = np.stack([np.asarray(r, dtype=np.float64) for r in raw], axis=1)
    return ConfidenceMatrix(softmax_t(scores, temperature))


def aggregate_weighted(
    uploads: Sequence[ClientUploadSH], conf: ConfidenceMatrix, x_dist: UnlabeledDataset
) -> GlobalDistillSet:
    """Compute ``Y_g(x) = sum_i conf(x, i) * logits_i(x)`` in upload order."""
    if not uploads:
        raise InputError("no uploads to aggregate")
    n, width = uploads[0].logits.shape
    if conf.weights.shape != (n, len(uploads)):
        raise InputError(
            f"confidence matrix {conf.weights.shape} does not match {len(uploads)} uploads of {n} rows"
        )
    y_g = np.zeros((n, width))
    for column, upload in enumerate(uploads):
        if upload.logits.shape != (n, width):
            raise InputError(
                f"client {upload.client_index}: logits {upload.logits.shape} != {(n, width)}"
            )
        y_g += conf.weights[:, column, None] * upload.logits
    return GlobalDistillSet(x_dist, y_g)


def server_distill(global_spec: ModelSpec, dset: GlobalDistillSet, cfg: TrainConfig) -> TrainedModel:
    """Train the global model once on ``(X_dist, Y_g)`` with renormalized target rows."""
    if dset.y_g.shape[1] != global_spec.output_dim:
        raise InputError(
            f"Y_g rows have {dset.y_g.shape[1]} entries but the global head has {global_spec.output_dim}"
        )
    model = soft_train(init_model(global_spec, cfg.seed), dset.x_dist.features, dset.y_g, cfg)
    logger.info("global model distilled, final loss %.4f", model.train_loss_history[-1])
    return model
