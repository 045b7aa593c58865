"""DL-MH: distillation with heterogeneous client models and label heads.

A client holding classes ``d = {0, 3, 4, 7}`` trains a 4-node head on
local labels 0..3. Its mask dict records ``{0: 0, 1: 3, 2: 4, 3: 7}``; the
server uses it to scatter the narrow logits back into the global label
space, with zeros at every class the client does not hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from fed_distill.data import LabeledDataset, UnlabeledDataset, restrict_classes
from fed_distill.dlsh import ConfidenceMatrix, GlobalDistillSet
from fed_distill.errors import InputError
from fed_distill.nn import Tensor, TrainedModel, predict


@dataclass(frozen=True)
class MaskDict:
    """Bijection local label -> global label, in ascending local order."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        """Require local labels 0..k-1 and strictly increasing global labels."""
        if not self.pairs:
            raise InputError("a mask dict needs at least one class")
        locals_ = [loc for loc, _ in self.pairs]
        globals_ = [glo for _, glo in self.pairs]
        if locals_ != list(range(len(self.pairs))):
            raise InputError(f"local labels must be 0..{len(self.pairs) - 1}, got {locals_}")
        if any(b <= a for a, b in zip(globals_, globals_[1:])) or globals_[0] < 0:
            raise InputError(f"global labels must be nonnegative and strictly increasing, got {globals_}")

    @property
    def class_list(self) -> list[int]:
        """The sorted global classes the client holds (``d``)."""
        return [glo for _, glo in self.pairs]

    @property
    def size(self) -> int:
        """Number of classes the client holds."""
        return len(self.pairs)

    def local_of(self, global_label: int) -> int:
        """Map a global label to the client's local label."""
        for loc, glo in self.pairs:
            if glo == global_label:
                return loc
        raise InputError(f"label {global_label} is not in the mask dict {self.class_list}")

    def to_wire(self) -> list[tuple[int, int]]:
        """Ordered ``(local, global)`` pairs as sent to the server."""
        return list(self.pairs)


@dataclass(frozen=True, eq=False)
class ClientUploadMH:
    """Narrow soft logits, raw confidence and the mapping schema of one client."""

    client_index: int
    logits: Tensor
    confidence: Tensor
    schema: MaskDict

    def __post_init__(self) -> None:
        """Check the logit width against the schema."""
        if self.logits.ndim != 2 or self.logits.shape[1] != self.schema.size:
            raise InputError(
                f"client {self.client_index}: logits {self.logits.shape} vs schema of {self.schema.size} classes"
            )
        if len(self.confidence) != len(self.logits):
            raise InputError(f"client {self.client_index}: confidence length differs from logit rows")

    @property
    def scalars(self) -> int:
        """Scalars transferred: logits, confidence and one per mask entry."""
        return int(self.logits.size + self.confidence.size + self.schema.size)


def build_mask_dict(labels_present: Iterable[int]) -> MaskDict:
    """Assign local labels 0..k-1 to the sorted global classes."""
    classes = sorted({int(c) for c in labels_present})
    if not classes:
        raise InputError("cannot build a mask dict from an empty class set")
    return MaskDict(tuple(enumerate(classes)))


def remap_local_labels(data: LabeledDataset, schema: MaskDict) -> LabeledDataset:
    """Rewrite global labels into the client's local label space."""
    lookup = np.full(max(data.n_classes, max(schema.class_list) + 1), -1, dtype=np.int64)
    for loc, glo in schema.to_wire():
        lookup[glo] = loc
    local = lookup[data.labels]
    if (local < 0).any():
        # raises InputError naming the first unmapped label
        schema.local_of(int(data.labels[np.argmax(local < 0)]))
    return LabeledDataset(data.features, local, schema.size, data.feature_shape)


def unmask_logits(upload: ClientUploadMH, n_global_classes: int) -> Tensor:
    """Scatter narrow logits into global width, zero everywhere else."""
    if max(upload.schema.class_list) >= n_global_classes:
        raise InputError(
            f"schema {upload.schema.class_list} exceeds {n_global_classes} global classes"
        )
    out = np.zeros((len(upload.logits), n_global_classes))
    out[:, upload.schema.class_list] = upload.logits
    return out


def aggregate_holders_only(
    uploads: Sequence[ClientUploadMH],
    conf: ConfidenceMatrix,
    n_global_classes: int,
    x_dist: UnlabeledDataset,
) -> GlobalDistillSet:
    """Weight each class only over the clients that hold it.

    ``Y_g(x, g) = sum_{i holds g} w_i(x) theta_i(x, g) / sum_{i holds g} w_i(x)``;
    classes held by nobody stay zero.
    """
    if not uploads:
        raise InputError("no uploads to aggregate")
    n = len(uploads[0].logits)
    if conf.weights.shape != (n, len(uploads)):
        raise InputError(f"confidence matrix {conf.weights.shape} does not match {len(uploads)} uploads")
    numerator = np.zeros((n, n_global_classes))
    denominator = np.zeros((n, n_global_classes))
    for column, upload in enumerate(uploads):
        w = conf.weights[:, column, None]
        numerator += w * unmask_logits(upload, n_global_classes)
        holds = np.zeros(n_global_classes)
        holds[upload.schema.class_list] = 1.0
        denominator += w * holds
    y_g = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)
    return GlobalDistillSet(x_dist, y_g)


def accuracy_global_labels(model: TrainedModel, schema: MaskDict, test: LabeledDataset) -> float:
    """Accuracy of a narrow-head model on globally labeled data."""
    if len(test) == 0:
        raise InputError("cannot evaluate on an empty test set")
    predicted = np.asarray(schema.class_list)[predict(model, test.features)]
    return float(np.mean(predicted == test.labels))


def accuracy_own_classes(model: TrainedModel, schema: MaskDict, test: LabeledDataset) -> Optional[float]:
    """Accuracy restricted to test samples of the client's own classes.

    ``None`` when the test set holds no sample of those classes.
    """
    own = restrict_classes(test, schema.class_list)
    if len(own) == 0:
        return None
    return accuracy_global_labels(model, schema, own)
