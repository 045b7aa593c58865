"""Minimal neural-network engine used by every protocol.

Dense and small valid-padding convolutional layers, ReLU/tanh activations,
a flatten layer, manual backpropagation and plain mini-batch SGD on a
softmax cross-entropy objective. Everything runs in float64 numpy so that
training is bit-reproducible for a fixed seed.

Models are immutable values: training returns a new ``TrainedModel``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

from fed_distill.errors import InputError, NumericError

if TYPE_CHECKING:
    from fed_distill.data import LabeledDataset

logger = logging.getLogger(__name__)

Tensor = npt.NDArray[np.float64]
Params = tuple[tuple[Tensor, ...], ...]

LayerKind = Literal["dense", "conv", "activation", "flatten"]
PRESETS = ("deep", "shallow", "tiny")

# Rows evaluated per forward chunk; keeps conv windows small in memory.
_EVAL_CHUNK = 512


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model.

    ``size`` is the number of output units for ``dense`` and the number of
    output channels for ``conv``. ``activation`` is ``relu`` or ``tanh``.
    """

    kind: LayerKind
    size: int = 0
    kernel: int = 3
    activation: str = "relu"


def dense(size: int) -> LayerSpec:
    """Build a dense layer spec."""
    return LayerSpec("dense", size=size)


def conv(channels: int, kernel: int = 3) -> LayerSpec:
    """Build a valid-padding, stride-1 convolution spec."""
    return LayerSpec("conv", size=channels, kernel=kernel)


def relu() -> LayerSpec:
    """Build a ReLU activation spec."""
    return LayerSpec("activation", activation="relu")


def flatten() -> LayerSpec:
    """Build a flatten spec."""
    return LayerSpec("flatten")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of a model: an input shape and an ordered layer list.

    The last layer must be ``dense``; its size is the model's output_dim.
    """

    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        """Validate layer compatibility by running shape inference."""
        if not self.layers:
            raise InputError("a model needs at least one layer")
        if self.layers[-1].kind != "dense":
            raise InputError("the last layer must be dense (the output head)")
        if self.layers[-1].size < 1:
            raise InputError("output_dim must be >= 1")
        self.shapes()

    @property
    def output_dim(self) -> int:
        """Number of target nodes of the head."""
        return self.layers[-1].size

    @property
    def input_dim(self) -> int:
        """Flat number of input features."""
        return math.prod(self.input_shape)

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """Return ``(input_shape, output_shape)`` for every layer."""
        out: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        shape = tuple(self.input_shape)
        for pos, layer in enumerate(self.layers):
            if layer.kind == "dense":
                if len(shape) != 1:
                    raise InputError(
                        f"layer {pos}: dense needs a flat input, got {shape}; add a flatten layer"
                    )
                if layer.size < 1:
                    raise InputError(f"layer {pos}: dense size must be >= 1")
                new: tuple[int, ...] = (layer.size,)
            elif layer.kind == "conv":
                if len(shape) != 3:
                    raise InputError(f"layer {pos}: conv needs (C, H, W) input, got {shape}")
                c, h, w = shape
                k = layer.kernel
                if layer.size < 1 or k < 1 or h < k or w < k:
                    raise InputError(f"layer {pos}: conv {layer.size}x{k}x{k} does not fit {shape}")
                new = (layer.size, h - k + 1, w - k + 1)
            elif layer.kind == "activation":
                if layer.activation not in ("relu", "tanh"):
                    raise InputError(f"layer {pos}: unknown activation {layer.activation!r}")
                new = shape
            elif layer.kind == "flatten":
                new = (math.prod(shape),)
            else:
                raise InputError(f"layer {pos}: unknown layer kind {layer.kind!r}")
            out.append((shape, new))
            shape = new
        return out

    def param_shapes(self) -> list[tuple[tuple[int, ...], ...]]:
        """Return the parameter shapes of every layer (empty for stateless layers)."""
        result: list[tuple[tuple[int, ...], ...]] = []
        for layer, (in_shape, _) in zip(self.layers, self.shapes()):
            if layer.kind == "dense":
                result.append(((in_shape[0], layer.size), (layer.size,)))
            elif layer.kind == "conv":
                k = layer.kernel
                result.append(((layer.size, in_shape[0], k, k), (layer.size,)))
            else:
                result.append(())
        return result

    def param_count(self) -> int:
        """Total number of trainable scalars."""
        return sum(math.prod(s) for shapes in self.param_shapes() for s in shapes)

    def with_output_dim(self, output_dim: int) -> ModelSpec:
        """Return the same architecture with a resized head."""
        head = replace(self.layers[-1], size=output_dim)
        return ModelSpec(self.input_shape, (*self.layers[:-1], head))


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyper-parameters for one training stage."""

    epochs: int = 1
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        """Reject non-positive epochs, learning rates and batch sizes."""
        if self.epochs < 1:
            raise InputError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class TrainedModel:
    """A model spec together with its parameters and loss history."""

    spec: ModelSpec
    params: Params
    train_loss_history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        """Check that parameter shapes match the ModelSpec."""
        expected = self.spec.param_shapes()
        if len(self.params) != len(expected):
            raise InputError(
                f"expected parameters for {len(expected)} layers, got {len(self.params)}"
            )
        for pos, (got, want) in enumerate(zip(self.params, expected)):
            if tuple(p.shape for p in got) != want:
                raise InputError(
                    f"layer {pos}: parameter shapes {[p.shape for p in got]} != {list(want)}"
                )


def init_model(spec: ModelSpec, seed: int) -> TrainedModel:
    """Initialize weights uniformly in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases start at zero."""
    rng = np.random.default_rng(seed)
    params: list[tuple[Tensor, ...]] = []
    for shapes in spec.param_shapes():
        if not shapes:
            params.append(())
            continue
        w_shape, b_shape = shapes
        fan_in = math.prod(w_shape[1:]) if len(w_shape) == 4 else w_shape[0]
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=w_shape)
        params.append((w, np.zeros(b_shape)))
    return TrainedModel(spec, tuple(params))


def preset_spec(
    name: str,
    input_shape: Sequence[int],
    output_dim: int,
    *,
    hidden: int = 32,
    channels: int = 4,
) -> ModelSpec:
    """Build one of the named desk-scale architectures.

    ``deep`` is two conv blocks and two dense layers, ``shallow`` one conv
    block and one dense layer, ``tiny`` a single dense hidden layer. For
    flat (non-image) inputs every conv block becomes a dense block of width
    ``hidden`` so the relative capacity ordering is preserved.
    """
    shape = tuple(input_shape)
    image = len(shape) == 3
    layers: list[LayerSpec]
    if name == "deep":
        if image:
            layers = [conv(channels), relu(), conv(2 * channels), relu(), flatten(),
                      dense(hidden), relu(), dense(output_dim)]
        else:
            layers = [dense(hidden), relu(), dense(hidden), relu(),
                      dense(hidden), relu(), dense(output_dim)]
    elif name == "shallow":
        if image:
            layers = [conv(channels), relu(), flatten(), dense(output_dim)]
        else:
            layers = [dense(hidden), relu(), dense(output_dim)]
    elif name == "tiny":
        width = max(hidden // 4, 2)
        layers = ([flatten()] if image else []) + [dense(width), relu(), dense(output_dim)]
    else:
        raise InputError(f"unknown model preset {name!r}; expected one of {PRESETS}")
    return ModelSpec(shape, tuple(layers))


def softmax_t(values: npt.ArrayLike, temperature: float = 1.0) -> Tensor:
    """Temperature softmax along the last axis, with max-subtraction."""
    if not temperature > 0:
        raise InputError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(values, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: Tensor) -> Tensor:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _as_batch(spec: ModelSpec, batch: npt.ArrayLike) -> Tensor:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim >= 1 and x.shape[1:] == spec.input_shape:
        return x
    if x.ndim == 2 and x.shape[1] == spec.input_dim:
        return x.reshape((x.shape[0], *spec.input_shape))
    raise InputError(
        f"batch features {x.shape[1:]} do not match model input {spec.input_shape}"
    )


def _layer_forward(layer: LayerSpec, params: tuple[Tensor, ...], x: Tensor) -> tuple[Tensor, object]:
    if layer.kind == "dense":
        w, b = params
        return x @ w + b, x
    if layer.kind == "conv":
        w, b = params
        k = layer.kernel
        windows = sliding_window_view(x, (k, k), axis=(2, 3))
        y = np.einsum("nchwij,fcij->nfhw", windows, w, optimize=True)
        return y + b[None, :, None, None], windows
    if layer.kind == "activation":
        if layer.activation == "relu":
            return np.maximum(x, 0.0), x
        y = np.tanh(x)
        return y, y
    return x.reshape(x.shape[0], -1), x.shape


def _layer_backward(
    layer: LayerSpec, params: tuple[Tensor, ...], cache: object, dy: Tensor
) -> tuple[Tensor, tuple[Tensor, ...]]:
    if layer.kind == "dense":
        w, _ = params
        x = cache
        assert isinstance(x, np.ndarray)
        return dy @ w.T, (x.T @ dy, dy.sum(axis=0))
    if layer.kind == "conv":
        w, _ = params
        windows = cache
        assert isinstance(windows, np.ndarray)
        k = layer.kernel
        dw = np.einsum("nchwij,nfhw->fcij", windows, dy, optimize=True)
        db = dy.sum(axis=(0, 2, 3))
        padded = np.pad(dy, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        dy_windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        dx = np.einsum("nfhwij,fcij->nchw", dy_windows, w[:, :, ::-1, ::-1], optimize=True)
        return dx, (dw, db)
    if layer.kind == "activation":
        assert isinstance(cache, np.ndarray)
        if layer.activation == "relu":
            return dy * (cache > 0), ()
        return dy * (1.0 - cache**2), ()
    assert isinstance(cache, tuple)
    return dy.reshape(cache), ()


def _run(spec: ModelSpec, params: Params, x: Tensor) -> tuple[Tensor, list[object]]:
    caches: list[object] = []
    for layer, p in zip(spec.layers, params):
        x, cache = _layer_forward(layer, p, x)
        caches.append(cache)
    return x, caches


def forward(model: TrainedModel, batch: npt.ArrayLike) -> Tensor:
    """Return raw (pre-softmax) logits of shape ``(n, output_dim)``."""
    x = _as_batch(model.spec, batch)
    chunks = [
        _run(model.spec, model.params, x[start : start + _EVAL_CHUNK])[0]
        for start in range(0, len(x), _EVAL_CHUNK)
    ]
    if not chunks:
        return np.zeros((0, model.spec.output_dim))
    logits = np.concatenate(chunks, axis=0)
    if not np.isfinite(logits).all():
        raise NumericError("forward pass produced non-finite logits")
    return logits


def predict(model: TrainedModel, batch: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Return argmax class indices; ties go to the lowest index."""
    return np.argmax(forward(model, batch), axis=1)


def loss_and_gradients(
    model: TrainedModel, batch: npt.ArrayLike, targets: npt.ArrayLike
) -> tuple[float, Params]:
    """Mean cross-entropy of ``softmax(logits)`` against target rows and its gradients."""
    x = _as_batch(model.spec, batch)
    t = np.asarray(targets, dtype=np.float64)
    return _loss_and_gradients(model.spec, model.params, x, t)


def _loss_and_gradients(spec: ModelSpec, params: Params, x: Tensor, t: Tensor) -> tuple[float, Params]:
    n = x.shape[0]
    logits, caches = _run(spec, params, x)
    log_p = _log_softmax(logits)
    loss = float(-(t * log_p).sum() / n)
    dy = (np.exp(log_p) * t.sum(axis=1, keepdims=True) - t) / n
    grads: list[tuple[Tensor, ...]] = []
    for layer, p, cache in zip(reversed(spec.layers), reversed(params), reversed(caches)):
        dy, g = _layer_backward(layer, p, cache, dy)
        grads.append(g)
    return loss, tuple(reversed(grads))


def _fit(model: TrainedModel, x: Tensor, targets: Tensor, cfg: TrainConfig) -> TrainedModel:
    n = x.shape[0]
    if n == 0:
        raise InputError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    params = model.params
    history = list(model.train_loss_history)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_gradients(model.spec, params, x[idx], targets[idx])
            total += loss * len(idx)
            params = tuple(
                tuple(p - cfg.learning_rate * g for p, g in zip(layer_p, layer_g))
                for layer_p, layer_g in zip(params, grads)
            )
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise NumericError("training loss is not finite", epoch=epoch)
        history.append(epoch_loss)
        logger.debug("epoch %d/%d loss=%.6f", epoch, cfg.epochs, epoch_loss)
    return TrainedModel(model.spec, params, tuple(history))


def train(model: TrainedModel, data: LabeledDataset, cfg: TrainConfig) -> TrainedModel:
    """Train on hard labels with mini-batch SGD for ``cfg.epochs`` epochs."""
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    k = model.spec.output_dim
    if data.labels.min() < 0 or data.labels.max() >= k:
        raise InputError(f"labels must lie in [0, {k}), got range "
                         f"[{data.labels.min()}, {data.labels.max()}]")
    x = _as_batch(model.spec, data.features)
    targets = np.eye(k)[data.labels]
    return _fit(model, x, targets, cfg)


def soft_train(
    model: TrainedModel, inputs: npt.ArrayLike, soft_targets: npt.ArrayLike, cfg: TrainConfig
) -> TrainedModel:
    """Distill: minimize cross-entropy of ``softmax(logits)`` against target distributions.

    Target rows are renormalized to sum to one.
    """
    x = _as_batch(model.spec, inputs)
    t = np.asarray(soft_targets, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] != model.spec.output_dim:
        raise InputError(
            f"soft target rows must have length {model.spec.output_dim}, got shape {t.shape}"
        )
    if t.shape[0] != x.shape[0]:
        raise InputError(f"{x.shape[0]} inputs but {t.shape[0]} target rows")
    if (t < 0).any() or not np.isfinite(t).all():
        raise InputError("soft targets must be finite and nonnegative")
    mass = t.sum(axis=1, keepdims=True)
    if (mass <= 0).any():
        raise InputError("every soft target row needs positive mass")
    return _fit(model, x, t / mass, cfg)


def replace_head(model: TrainedModel, new_output_dim: int, seed: int) -> TrainedModel:
    """Swap the output layer for a freshly initialized one with ``new_output_dim`` nodes."""
    if new_output_dim < 1:
        raise InputError(f"new_output_dim must be >= 1, got {new_output_dim}")
    spec = model.spec.with_output_dim(new_output_dim)
    head = init_model(spec, seed).params[-1]
    return TrainedModel(spec, (*model.params[:-1], head))


def accuracy(model: TrainedModel, test: LabeledDataset) -> float:
    """Fraction of samples whose argmax logit equals the label."""
    if len(test) == 0:
        raise InputError("cannot evaluate on an empty test set")
    if test.labels.max() >= model.spec.output_dim:
        raise InputError(
            f"test labels exceed the model's {model.spec.output_dim} outputs"
        )
    return float(np.mean(predict(model, test.features) == test.labels))
