"""I-DL-MH: the server returns per-client incentive targets after distillation.

For every row of the server's logits over X_dist, the row maximum is
moved to the client class whose value is nearest to it (the top class
itself when the client holds it), all other entries are zeroed, and the
row is column-selected into the client's local label space. The client
distills once from ``(X_dist, targets)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from fed_distill.dlmh import MaskDict
from fed_distill.errors import InputError, InternalError
from fed_distill.nn import Tensor, TrainConfig, TrainedModel, soft_train

IncentiveTarget = Literal["soft", "hard"]


@dataclass(frozen=True, eq=False)
class IncentivePackage:
    """Downlink payload for one client, already in its local label space."""

    client_index: int
    targets: Tensor

    @property
    def scalars(self) -> int:
        """Scalars transferred to the client."""
        return int(self.targets.size)


def transform_logits_for_client(server_logits: Tensor, client_classes: Sequence[int]) -> Tensor:
    """Move each row's maximum onto the nearest class the client holds.

    Ties between client classes resolve to the lowest class index.
    """
    d = np.asarray(sorted(client_classes), dtype=np.int64)
    if d.size == 0:
        raise InputError("the client class list is empty")
    if d[0] < 0 or d[-1] >= server_logits.shape[1]:
        raise InputError(f"client classes {d.tolist()} out of range for {server_logits.shape[1]} classes")
    row_max = server_logits.max(axis=1)
    gaps = row_max[:, None] - server_logits[:, d]
    chosen = d[np.argmin(gaps, axis=1)]
    out = np.zeros_like(server_logits, dtype=np.float64)
    out[np.arange(len(out)), chosen] = row_max
    return out


def remap_to_client_space(
    transformed: Tensor, schema: MaskDict, mode: IncentiveTarget = "soft", client_index: int = 0
) -> IncentivePackage:
    """Column-select the client's classes; ``hard`` mode emits one-hot rows."""
    outside = np.ones(transformed.shape[1], dtype=bool)
    outside[schema.class_list] = False
    if np.any(transformed[:, outside] != 0):
        raise InternalError("transformed logits carry values outside the client's classes")
    local = transformed[:, schema.class_list]
    if mode == "hard":
        local = np.eye(schema.size)[np.argmax(local, axis=1)]
    elif mode != "soft":
        raise InputError(f"unknown incentive target mode {mode!r}")
    return IncentivePackage(client_index, local)


def client_incentive_distill(
    client_model: TrainedModel, pkg: IncentivePackage, x_dist: Tensor, cfg: TrainConfig
) -> TrainedModel:
    """Distill the client model once from its incentive package."""
    if pkg.targets.shape[1] != client_model.spec.output_dim:
        raise InputError(
            f"package width {pkg.targets.shape[1]} != client head size {client_model.spec.output_dim}"
        )
    return soft_train(client_model, x_dist, pkg.targets, cfg)
