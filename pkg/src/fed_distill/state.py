"""Define the state structures shared by the protocol graphs."""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, TypedDict

from typing_extensions import Annotated

from fed_distill.data import LabeledDataset, UnlabeledDataset
from fed_distill.dlmh import MaskDict
from fed_distill.dlsh import GlobalDistillSet
from fed_distill.metrics import Message, MetricsRecord
from fed_distill.nn import Tensor, TrainedModel


def merge_dicts(left: Dict[Any, Any], right: Dict[Any, Any]) -> Dict[Any, Any]:
    """Reducer: later writes win per key."""
    return {**left, **right}


@dataclass(frozen=True)
class LocalUpdate:
    """A client's model after one FedAvg round of local training."""

    round: int
    client_index: int
    model: TrainedModel
    n_samples: int


@dataclass
class InputState:
    """The narrow input of every protocol graph."""

    run_id: str = field(default="")
    """Identifier stamped on every metrics record."""


def latest_round(left: List[LocalUpdate], right: List[LocalUpdate]) -> List[LocalUpdate]:
    """Reducer: keep only the updates of the most recent FedAvg round."""
    merged = [*left, *right]
    if not merged:
        return merged
    newest = max(u.round for u in merged)
    return [u for u in merged if u.round == newest]


@dataclass
class State(InputState):
    """The complete state of a protocol run."""

    n_classes: int = field(default=0)
    feature_shape: tuple[int, ...] = field(default=())

    client_datasets: List[LabeledDataset] = field(default_factory=list)
    """Per-client private training data, in client order."""

    x_dist: Optional[UnlabeledDataset] = field(default=None)
    """Public distillation set shared by all clients and the server."""

    dist_labeled: Optional[LabeledDataset] = field(default=None)
    """X_dist with its true labels; only kept for the labelled upper bound."""

    test_set: Optional[LabeledDataset] = field(default=None)

    uploads: Annotated[List[Any], operator.add] = field(default_factory=list)
    """One ClientUploadSH / ClientUploadMH per client; arrival order is not meaningful."""

    client_models: Annotated[Dict[int, TrainedModel], merge_dicts] = field(default_factory=dict)
    schemas: Annotated[Dict[int, MaskDict], merge_dicts] = field(default_factory=dict)

    distill_set: Optional[GlobalDistillSet] = field(default=None)
    global_model: Optional[TrainedModel] = field(default=None)
    server_logits: Optional[Tensor] = field(default=None)
    """Server-side soft logits over X_dist that incentive packages are cut from."""

    fedavg_round: int = field(default=0)
    """Number of completed FedAvg rounds."""

    local_updates: Annotated[List[LocalUpdate], latest_round] = field(default_factory=list)
    """Client models of the current FedAvg round only."""

    transcript: Annotated[List[Message], operator.add] = field(default_factory=list)
    """Every simulated transfer, used to cross-check the cost accountant."""

    metrics: Annotated[List[MetricsRecord], operator.add] = field(default_factory=list)
    seeds: Annotated[Dict[str, int], merge_dicts] = field(default_factory=dict)


class ClientTask(TypedDict):
    """Payload of one fanned-out client update."""

    task_client: int
    task_data: LabeledDataset
    task_x_dist: UnlabeledDataset
    task_test: LabeledDataset


class IncentiveTask(TypedDict):
    """Payload of one fanned-out incentive distillation."""

    incentive_client: int
    incentive_model: TrainedModel
    incentive_schema: MaskDict
    incentive_logits: Tensor
    incentive_x_dist: UnlabeledDataset
    incentive_test: LabeledDataset
    incentive_global: TrainedModel


class FedAvgTask(TypedDict):
    """Payload of one client's local training in a FedAvg round."""

    fedavg_client: int
    fedavg_task_round: int
    fedavg_global: TrainedModel
    fedavg_data: LabeledDataset
    fedavg_test: LabeledDataset
