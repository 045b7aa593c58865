"""Dataset ingestion, the train/distillation split and the client partitioners.

Sources are IDX binary files (MNIST-style) and a seeded Gaussian-blob
generator. Client data is drawn per a class-probability vector p_i for one
of four schemes:

* ``IID``   - every client has equal probability on every class.
* ``NIID1`` - client i holds two consecutive classes.
* ``NIID2`` - every client shares the first half of the classes and holds
  one unique class from the second half.
* ``NIID3`` - each client holds ``c - 1`` classes such that every class is
  held by exactly two clients of a cycle of ``c`` (``c(c-1)/2`` classes).
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import numpy.typing as npt

from fed_distill.errors import FormatError, InputError
from fed_distill.nn import Tensor
from fed_distill.seeding import derive_seed

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SchemeKind = Literal["IID", "NIID1", "NIID2", "NIID3"]
SCHEME_KINDS: tuple[str, ...] = ("IID", "NIID1", "NIID2", "NIID3")

Labels = npt.NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features (flat ``n x d`` rows) with class labels.

    ``feature_shape`` records the per-sample layout, e.g. ``(1, 28, 28)``
    for images or ``(d,)`` for vectors.
    """

    features: Tensor
    labels: Labels
    n_classes: int
    feature_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate row counts and label range."""
        if self.features.ndim != 2 or self.features.shape[1] != math.prod(self.feature_shape):
            raise InputError(
                f"features of shape {self.features.shape} do not match feature_shape {self.feature_shape}"
            )
        if len(self.labels) != len(self.features):
            raise InputError(f"{len(self.features)} rows but {len(self.labels)} labels")
        if self.n_classes < 1:
            raise InputError("n_classes must be >= 1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InputError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: npt.ArrayLike) -> LabeledDataset:
        """Select rows by index."""
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes, self.feature_shape)

    def classes_present(self) -> set[int]:
        """Return the set of labels that occur at least once."""
        return {int(c) for c in np.unique(self.labels)}


@dataclass(frozen=True, eq=False)
class UnlabeledDataset:
    """Public, unlabeled samples used as the distillation transfer set."""

    features: Tensor
    feature_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        """Require at least one sample."""
        if self.features.ndim != 2 or len(self.features) < 1:
            raise InputError("an unlabeled dataset needs at least one sample")
        if self.features.shape[1] != math.prod(self.feature_shape):
            raise InputError(
                f"features of shape {self.features.shape} do not match feature_shape {self.feature_shape}"
            )

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class PartitionScheme:
    """How client datasets are drawn from the training pool."""

    kind: SchemeKind
    n_clients: int
    n_classes: int
    samples_per_client: int = 600

    def __post_init__(self) -> None:
        """Validate counts and the scheme's class-count requirements."""
        if self.kind not in SCHEME_KINDS:
            raise InputError(f"unknown scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.n_clients < 1:
            raise InputError("n_clients must be >= 1")
        if self.samples_per_client < 1:
            raise InputError("samples_per_client must be >= 1")
        if self.n_classes < 1:
            raise InputError("n_classes must be >= 1")
        if self.kind != "IID" and self.n_classes < 2:
            raise InputError(f"{self.kind} needs at least 2 classes")
        if self.kind == "NIID3":
            _niid3_cycle(self.n_classes)


@dataclass(frozen=True, eq=False)
class ClassProbabilityVector:
    """A client's class probabilities p_i."""

    probs: Tensor

    def support(self) -> list[int]:
        """Return the classes with nonzero probability."""
        return [int(c) for c in np.flatnonzero(self.probs > 0)]


def _niid3_cycle(n_classes: int) -> int:
    c = (1 + math.isqrt(1 + 8 * n_classes)) // 2
    if c * (c - 1) // 2 != n_classes:
        raise InputError(
            f"NIID3 needs a class count of the form c(c-1)/2 (e.g. 10 for 5 clients), got {n_classes}"
        )
    return c


def class_probability_vector(scheme: PartitionScheme, client_index: int) -> ClassProbabilityVector:
    """Return p_i for ``client_index``; indices past one cycle wrap around."""
    if not 0 <= client_index < scheme.n_clients:
        raise InputError(f"client_index {client_index} out of range for {scheme.n_clients} clients")
    n = scheme.n_classes
    probs = np.zeros(n)
    if scheme.kind == "IID":
        probs[:] = 1.0 / n
    elif scheme.kind == "NIID1":
        k = client_index % (n // 2)
        probs[[2 * k, 2 * k + 1]] = 0.5
    elif scheme.kind == "NIID2":
        shared = n // 2
        unique = shared + client_index % (n - shared)
        probs[:shared] = 1.0 / (shared + 1)
        probs[unique] = 1.0 / (shared + 1)
    else:
        cycle = _niid3_cycle(n)
        k = client_index % cycle
        held = [cls for cls, pair in enumerate(combinations(range(cycle), 2)) if k in pair]
        probs[held] = 1.0 / len(held)
    return ClassProbabilityVector(probs)


def draw_classes(probs: Tensor, count: int, rng: np.random.Generator) -> Labels:
    """Draw ``count`` class indices from a class-probability vector."""
    return rng.choice(len(probs), size=count, p=probs).astype(np.int64)


def partition(pool: LabeledDataset, scheme: PartitionScheme, seed: int) -> list[LabeledDataset]:
    """Draw every client's dataset with replacement per its class probabilities."""
    if scheme.n_classes != pool.n_classes:
        raise InputError(
            f"scheme has {scheme.n_classes} classes but the pool has {pool.n_classes}"
        )
    by_class = [np.flatnonzero(pool.labels == c) for c in range(pool.n_classes)]
    clients: list[LabeledDataset] = []
    for i in range(scheme.n_clients):
        p = class_probability_vector(scheme, i)
        for c in p.support():
            if len(by_class[c]) == 0:
                raise InputError(f"client {i} needs class {c}, which is absent from the pool")
        rng = np.random.default_rng(derive_seed(seed, "partition", i))
        drawn = draw_classes(p.probs, scheme.samples_per_client, rng)
        chosen = np.empty(scheme.samples_per_client, dtype=np.int64)
        for c in np.unique(drawn):
            slots = np.flatnonzero(drawn == c)
            members = by_class[c]
            chosen[slots] = members[rng.integers(0, len(members), size=len(slots))]
        clients.append(pool.subset(chosen))
        logger.debug("client %d: %d samples over classes %s", i, len(chosen), p.support())
    return clients


def split_holdout(
    full: LabeledDataset, fraction: float, seed: int, *, stratify: bool = False
) -> tuple[LabeledDataset, LabeledDataset]:
    """Split rows into ``(rest, held)`` with ``|held| = round(fraction * n)``.

    With ``stratify`` the fraction is taken per class instead, and every class
    with at least two samples keeps one or more rows on each side.
    """
    if not 0 < fraction < 1:
        raise InputError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(full)
    rng = np.random.default_rng(seed)
    if stratify:
        held_parts = []
        for cls in np.unique(full.labels):
            members = rng.permutation(np.flatnonzero(full.labels == cls))
            if len(members) >= 2:
                take = min(max(int(round(fraction * len(members))), 1), len(members) - 1)
                held_parts.append(members[:take])
        held_rows = np.sort(np.concatenate(held_parts)) if held_parts else np.empty(0, dtype=np.int64)
        if len(held_rows) == 0:
            raise InputError(f"no class has two samples to stratify over ({n} samples)")
        rest_rows = np.setdiff1d(np.arange(n), held_rows)
        return full.subset(rest_rows), full.subset(held_rows)
    n_held = int(round(fraction * n))
    if n_held < 1 or n_held >= n:
        raise InputError(f"fraction {fraction} of {n} samples leaves an empty side")
    order = rng.permutation(n)
    return full.subset(np.sort(order[n_held:])), full.subset(np.sort(order[:n_held]))


def split_distillation(
    full: LabeledDataset, dist_fraction: float, seed: int
) -> tuple[LabeledDataset, UnlabeledDataset]:
    """Split off the public distillation set; its labels are discarded."""
    train_pool, held = split_holdout(full, dist_fraction, seed)
    return train_pool, UnlabeledDataset(held.features, held.feature_shape)


def synth_blobs(
    n_classes: int, n_per_class: int, feature_dim: int, spread: float, seed: int
) -> LabeledDataset:
    """Generate isotropic Gaussian blobs around seeded random class centers."""
    if n_classes < 1 or n_per_class < 1 or feature_dim < 1:
        raise InputError("n_classes, n_per_class and feature_dim must be >= 1")
    if not spread > 0:
        raise InputError(f"spread must be > 0, got {spread}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(n_classes, feature_dim))
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    features = centers[labels] + rng.normal(0.0, spread, size=(len(labels), feature_dim))
    order = rng.permutation(len(labels))
    return LabeledDataset(features[order], labels[order], n_classes, (feature_dim,))


def _read_header(path: Path, blob: bytes, magic: int, n_dims: int) -> tuple[int, ...]:
    need = 4 * (1 + n_dims)
    if len(blob) < need:
        raise FormatError(str(path), len(blob), f"truncated header, expected {need} bytes")
    (found,) = struct.unpack_from(">I", blob, 0)
    if found != magic:
        raise FormatError(str(path), 0, f"bad magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack_from(f">{n_dims}I", blob, 4)


def _read_file(path: Path) -> bytes:
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    return path.read_bytes()


def load_idx(images_path: str | Path, labels_path: str | Path, n_classes: int = 10) -> LabeledDataset:
    """Load an IDX image/label file pair; pixels are scaled to ``[0, 1]``."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    images = _read_file(images_path)
    count, rows, cols = _read_header(images_path, images, IDX_IMAGE_MAGIC, 3)
    body = count * rows * cols
    if len(images) < 16 + body:
        raise FormatError(str(images_path), len(images), f"truncated pixel data, expected {16 + body} bytes")
    labels_blob = _read_file(labels_path)
    (n_labels,) = _read_header(labels_path, labels_blob, IDX_LABEL_MAGIC, 1)
    if n_labels != count:
        raise FormatError(str(labels_path), 4, f"{n_labels} labels for {count} images")
    if len(labels_blob) < 8 + n_labels:
        raise FormatError(str(labels_path), len(labels_blob), f"truncated labels, expected {8 + n_labels} bytes")
    pixels = np.frombuffer(images, dtype=np.uint8, count=body, offset=16)
    labels = np.frombuffer(labels_blob, dtype=np.uint8, count=n_labels, offset=8).astype(np.int64)
    if n_labels and labels.max() >= n_classes:
        offset = 8 + int(np.argmax(labels >= n_classes))
        raise FormatError(str(labels_path), offset, f"label {labels.max()} >= n_classes {n_classes}")
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    logger.info("loaded %d IDX images of %dx%d from %s", count, rows, cols, images_path)
    return LabeledDataset(features, labels, n_classes, (1, rows, cols))


_CONTAINER_HEADER = struct.Struct("<III")


def save_synthetic(dataset: LabeledDataset, path: str | Path) -> None:
    """Persist a flat dataset as ``{n, feature_dim, n_classes}`` + float32 features + uint32 labels."""
    n, dim = dataset.features.shape
    payload = (
        _CONTAINER_HEADER.pack(n, dim, dataset.n_classes)
        + dataset.features.astype("<f4").tobytes()
        + dataset.labels.astype("<u4").tobytes()
    )
    Path(path).write_bytes(payload)


def load_synthetic(path: str | Path) -> LabeledDataset:
    """Read a container written by ``save_synthetic``."""
    path = Path(path)
    blob = _read_file(path)
    if len(blob) < _CONTAINER_HEADER.size:
        raise FormatError(str(path), len(blob), "truncated header")
    n, dim, n_classes = _CONTAINER_HEADER.unpack_from(blob, 0)
    expected = _CONTAINER_HEADER.size + 4 * n * dim + 4 * n
    if len(blob) < expected:
        raise FormatError(str(path), len(blob), f"truncated body, expected {expected} bytes")
    offset = _CONTAINER_HEADER.size
    features = np.frombuffer(blob, dtype="<f4", count=n * dim, offset=offset).astype(np.float64)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=offset + 4 * n * dim).astype(np.int64)
    return LabeledDataset(features.reshape(n, dim), labels, n_classes, (dim,))


def restrict_classes(data: LabeledDataset, classes: Sequence[int]) -> LabeledDataset:
    """Keep only rows whose label is in ``classes``."""
    mask = np.isin(data.labels, np.asarray(list(classes), dtype=np.int64))
    return data.subset(np.flatnonzero(mask))
