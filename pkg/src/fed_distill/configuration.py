"""Define the configurable parameters of an experiment."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from langchain_core.runnables import ensure_config
from langgraph.config import get_config

from fed_distill.data import SCHEME_KINDS, PartitionScheme
from fed_distill.errors import ConfigError, InputError
from fed_distill.nn import PRESETS, ModelSpec, TrainConfig, preset_spec
from fed_distill.seeding import derive_seed

PROTOCOLS = ("dlsh", "dlmh", "idlmh", "fedavg")
AGGREGATE_MODES = ("zero_fill", "holders_only")
INCENTIVE_TARGETS = ("soft", "hard")
INCENTIVE_SOURCES = ("global", "aggregate")
STAGES = ("local", "embed", "global", "incentive")
REQUIRED_KEYS = ("protocol", "dataset.source", "scheme.kind")
_COMMENT = re.compile(r"(?:^|\s)#.*$")


def _key(path: str, description: str, **extra: Any) -> dict[str, Any]:
    return {"key": path, "description": description, **extra}


@dataclass(kw_only=True)
class Configuration:
    """The configuration of one experiment run."""

    protocol: str = field(
        default="dlsh",
        metadata=_key("protocol", "Which protocol to run: dlsh, dlmh, idlmh or fedavg."),
    )

    dataset_source: str = field(
        default="synth",
        metadata=_key("dataset.source", "Where samples come from: 'idx' files or 'synth' blobs."),
    )
    dataset_images_path: str = field(
        default="", metadata=_key("dataset.images_path", "IDX training images file.")
    )
    dataset_labels_path: str = field(
        default="", metadata=_key("dataset.labels_path", "IDX training labels file.")
    )
    dataset_test_images_path: str = field(
        default="",
        metadata=_key("dataset.test_images_path",
                      "IDX test images; when empty a seeded holdout is used instead."),
    )
    dataset_test_labels_path: str = field(
        default="", metadata=_key("dataset.test_labels_path", "IDX test labels.")
    )
    dataset_synth_path: str = field(
        default="",
        metadata=_key("dataset.synth_path",
                      "Saved synthetic container to load instead of generating blobs."),
    )
    dataset_max_samples: int = field(
        default=0,
        metadata=_key("dataset.max_samples",
                      "Keep only a seeded subset of this many training samples (0 keeps all)."),
    )
    dataset_n_classes: int = field(
        default=10, metadata=_key("dataset.n_classes", "Number of classes.")
    )
    dataset_n_per_class: int = field(
        default=300, metadata=_key("dataset.n_per_class", "Synthetic samples per class.")
    )
    dataset_feature_dim: int = field(
        default=16, metadata=_key("dataset.feature_dim", "Synthetic feature dimension.")
    )
    dataset_spread: float = field(
        default=0.5, metadata=_key("dataset.spread", "Standard deviation of each synthetic blob.")
    )
    dataset_test_fraction: float = field(
        default=0.1, metadata=_key("dataset.test_fraction", "Holdout fraction when no test files are given.")
    )
    dist_fraction: float = field(
        default=0.2,
        metadata=_key("dist_fraction", "Fraction of the training data used as public distillation data."),
    )

    scheme_kind: str = field(
        default="NIID1", metadata=_key("scheme.kind", "Client data scheme: IID, NIID1, NIID2 or NIID3.")
    )
    scheme_n_clients: int = field(default=5, metadata=_key("scheme.n_clients", "Number of clients M."))
    scheme_samples_per_client: int = field(
        default=600, metadata=_key("scheme.samples_per_client", "Samples each client draws.")
    )

    client_spec: str = field(
        default="tiny", metadata=_key("client.spec", "Model preset shared by all clients.")
    )
    client_specs: tuple[str, ...] = field(
        default=(),
        metadata=_key("client.specs", "Per-client model presets (comma separated); overrides client.spec.",
                      item=str),
    )
    global_spec: str = field(
        default="deep", metadata=_key("global.spec", "Model preset of the global model.")
    )
    model_hidden: int = field(default=32, metadata=_key("model.hidden", "Hidden width of the presets."))
    model_channels: int = field(default=4, metadata=_key("model.channels", "Conv channels of the presets."))

    local_epochs: int = field(default=20, metadata=_key("local.epochs", "Local epochs E."))
    local_learning_rate: float = field(default=0.01, metadata=_key("local.learning_rate", "Local learning rate."))
    local_batch_size: int = field(default=32, metadata=_key("local.batch_size", "Local batch size B."))
    embed_epochs: int = field(default=10, metadata=_key("embed.epochs", "Binary classifier epochs E_embed."))
    embed_learning_rate: float = field(default=0.01, metadata=_key("embed.learning_rate", "Classifier learning rate."))
    embed_batch_size: int = field(default=32, metadata=_key("embed.batch_size", "Classifier batch size."))
    embed_balance_ratio: int = field(
        default=4,
        metadata=_key("embed.balance_ratio", "Public block is capped at this multiple of the client's samples."),
    )
    global_epochs: int = field(default=30, metadata=_key("global.epochs", "Global distillation epochs E_g."))
    global_learning_rate: float = field(default=0.01, metadata=_key("global.learning_rate", "Global learning rate."))
    global_batch_size: int = field(default=32, metadata=_key("global.batch_size", "Global batch size."))
    incentive_epochs: int = field(default=10, metadata=_key("incentive.epochs", "Incentive distillation epochs."))
    incentive_learning_rate: float = field(
        default=0.01, metadata=_key("incentive.learning_rate", "Incentive learning rate.")
    )
    incentive_batch_size: int = field(default=32, metadata=_key("incentive.batch_size", "Incentive batch size."))

    temperature: float = field(
        default=1.0, metadata=_key("temperature", "Temperature T of the cross-client confidence softmax.")
    )
    logit_temperature: float = field(
        default=1.0, metadata=_key("logit_temperature", "Temperature of the soft logits clients upload.")
    )
    aggregate_mode: str = field(
        default="zero_fill", metadata=_key("aggregate_mode", "DL-MH aggregation: zero_fill or holders_only.")
    )
    incentive_target: str = field(
        default="soft", metadata=_key("incentive.target", "Incentive package rows: soft or hard (one-hot).")
    )
    incentive_source: str = field(
        default="global",
        metadata=_key("incentive.source", "Incentive targets from the global model or the aggregate Y_g."),
    )
    incentive_clients: tuple[int, ...] = field(
        default=(),
        metadata=_key("incentive.clients", "Clients that opt in to the incentive (empty means all).", item=int),
    )
    fedavg_rounds: int = field(default=10, metadata=_key("fedavg.rounds", "FedAvg communication rounds R."))
    report_upper_bound: bool = field(
        default=False,
        metadata=_key("report.upper_bound", "Also train a global model on X_dist with its true labels."),
    )
    master_seed: int = field(default=0, metadata=_key("master_seed", "Root of every derived seed."))

    def __post_init__(self) -> None:
        """Validate cross-field invariants, naming the offending key."""
        _choice("protocol", self.protocol, PROTOCOLS)
        _choice("dataset.source", self.dataset_source, ("idx", "synth"))
        _choice("scheme.kind", self.scheme_kind, SCHEME_KINDS)
        _choice("aggregate_mode", self.aggregate_mode, AGGREGATE_MODES)
        _choice("incentive.target", self.incentive_target, INCENTIVE_TARGETS)
        _choice("incentive.source", self.incentive_source, INCENTIVE_SOURCES)
        _choice("client.spec", self.client_spec, PRESETS)
        _choice("global.spec", self.global_spec, PRESETS)
        for name in self.client_specs:
            _choice("client.specs", name, PRESETS)
        if self.dataset_source == "idx":
            if not self.dataset_images_path or not self.dataset_labels_path:
                raise ConfigError("dataset.images_path", "idx datasets need images_path and labels_path")
            if bool(self.dataset_test_images_path) != bool(self.dataset_test_labels_path):
                raise ConfigError("dataset.test_images_path", "give both test files or neither")
        if self.client_specs and len(self.client_specs) != self.scheme_n_clients:
            raise ConfigError(
                "client.specs", f"{len(self.client_specs)} specs for {self.scheme_n_clients} clients"
            )
        if self.protocol == "fedavg" and len(set(self.client_specs)) > 1:
            raise ConfigError("client.specs", "fedavg requires one shared client model spec")
        if not self.temperature > 0:
            raise ConfigError("temperature", "must be > 0")
        if not self.logit_temperature > 0:
            raise ConfigError("logit_temperature", "must be > 0")
        if not 0 < self.dist_fraction < 1:
            raise ConfigError("dist_fraction", "must lie in (0, 1)")
        if not 0 < self.dataset_test_fraction < 1:
            raise ConfigError("dataset.test_fraction", "must lie in (0, 1)")
        if self.fedavg_rounds < 1:
            raise ConfigError("fedavg.rounds", "must be >= 1")
        if self.embed_balance_ratio < 1:
            raise ConfigError("embed.balance_ratio", "must be >= 1")
        if any(not 0 <= c < self.scheme_n_clients for c in self.incentive_clients):
            raise ConfigError("incentive.clients", f"client indices must lie in [0, {self.scheme_n_clients})")
        try:
            self.scheme(self.dataset_n_classes)
        except InputError as exc:
            raise ConfigError("scheme", str(exc)) from exc
        for stage in STAGES:
            try:
                self.train_config(stage, 0)
            except InputError as exc:
                raise ConfigError(stage, str(exc)) from exc

    def scheme(self, n_classes: Optional[int] = None) -> PartitionScheme:
        """Build the partition scheme for a dataset with ``n_classes`` classes."""
        return PartitionScheme(
            kind=self.scheme_kind,  # type: ignore[arg-type]
            n_clients=self.scheme_n_clients,
            n_classes=n_classes or self.dataset_n_classes,
            samples_per_client=self.scheme_samples_per_client,
        )

    def train_config(self, stage: str, seed: int) -> TrainConfig:
        """Return the SGD settings of ``stage`` (local, embed, global or incentive)."""
        return TrainConfig(
            epochs=getattr(self, f"{stage}_epochs"),
            learning_rate=getattr(self, f"{stage}_learning_rate"),
            batch_size=getattr(self, f"{stage}_batch_size"),
            seed=seed,
        )

    def client_preset(self, client_index: int) -> str:
        """Model preset name of one client."""
        return self.client_specs[client_index] if self.client_specs else self.client_spec

    def model_spec(self, preset: str, input_shape: tuple[int, ...], output_dim: int) -> ModelSpec:
        """Instantiate a preset with this run's widths."""
        return preset_spec(preset, input_shape, output_dim,
                           hidden=self.model_hidden, channels=self.model_channels)

    def seed(self, role: str, *index: int | str) -> int:
        """Derive a seed from the master seed."""
        return derive_seed(self.master_seed, role, *index)

    def incentive_opted_in(self, client_index: int) -> bool:
        """Whether a client receives an incentive package."""
        return not self.incentive_clients or client_index in self.incentive_clients

    def run_id(self) -> str:
        """A stable identifier: a hash of the serialized configuration."""
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:12]

    def as_configurable(self) -> dict[str, Any]:
        """Return the field values for a graph's ``configurable`` mapping."""
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}

    @classmethod
    def from_context(cls) -> Configuration:
        """Create a Configuration instance from the running graph's config."""
        try:
            config = get_config()
        except RuntimeError:
            config = None
        config = ensure_config(config)
        configurable = config.get("configurable") or {}
        _fields = {f.name for f in fields(cls) if f.init}
        return cls(**{k: v for k, v in configurable.items() if k in _fields})


def _choice(key: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(key, f"{value!r} is not one of {allowed}")


def _fields_by_key() -> dict[str, Any]:
    return {f.metadata["key"]: f for f in fields(Configuration)}


def _convert(key: str, raw: str, default: Any, item: Any) -> Any:
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(f"expected true or false, got {raw!r}")
            return raw.lower() == "true"
        if isinstance(default, tuple):
            return tuple(item(part.strip()) for part in raw.split(",") if part.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


def parse_config(text: str) -> Configuration:
    """Parse ``key = value`` lines (dotted keys, ``#`` comments) into a Configuration."""
    by_key = _fields_by_key()
    values: dict[str, Any] = {}
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _COMMENT.sub("", line).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in by_key:
            raise ConfigError(key, "unknown key")
        if key in seen:
            raise ConfigError(key, "given twice")
        seen.add(key)
        f = by_key[key]
        values[f.name] = _convert(key, raw, f.default, f.metadata.get("item", str))
    for key in REQUIRED_KEYS:
        if key not in seen:
            raise ConfigError(key, "missing required key")
    return Configuration(**values)


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: Configuration) -> str:
    """Render every key of ``config``; ``parse_config`` inverts it."""
    return "".join(
        f"{f.metadata['key']} = {_render(getattr(config, f.name))}\n" for f in fields(config)
    )
