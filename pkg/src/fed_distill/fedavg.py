"""FedAvg baseline: sample-count-weighted parameter averaging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fed_distill.errors import InputError
from fed_distill.nn import ModelSpec, TrainedModel
from fed_distill.seeding import derive_seed


@dataclass(frozen=True)
class FedAvgConfig:
    """Rounds, local epochs and the one spec shared by every client."""

    rounds: int
    local_epochs: int
    n_clients: int
    spec: ModelSpec

    def __post_init__(self) -> None:
        """Validate counts."""
        if self.rounds < 1 or self.local_epochs < 1 or self.n_clients < 1:
            raise InputError("rounds, local_epochs and n_clients must all be >= 1")


def _same_params(a: TrainedModel, b: TrainedModel) -> bool:
    return all(
        np.array_equal(p, q) for layer_a, layer_b in zip(a.params, b.params) for p, q in zip(layer_a, layer_b)
    )


def fedavg_aggregate(models: Sequence[TrainedModel], sample_counts: Sequence[int]) -> TrainedModel:
    """Average parameters with weights ``n_i / sum(n)``."""
    if not models or len(models) != len(sample_counts):
        raise InputError("need one sample count per model and at least one model")
    if any(c <= 0 for c in sample_counts):
        raise InputError("sample counts must be positive")
    spec = models[0].spec
    if any(m.spec != spec for m in models[1:]):
        raise InputError("FedAvg requires every client to share one model spec")
    if all(_same_params(models[0], m) for m in models[1:]):
        return TrainedModel(spec, models[0].params)
    total = float(sum(sample_counts))
    averaged = []
    for layer_index, layer in enumerate(models[0].params):
        sums = [np.zeros_like(p) for p in layer]
        for model, count in zip(models, sample_counts):
            for acc, p in zip(sums, model.params[layer_index]):
                acc += (count / total) * p
        averaged.append(tuple(sums))
    return TrainedModel(spec, tuple(averaged))


def client_round_seed(master_seed: int, round_index: int, client_index: int) -> int:
    """Seed of one client's local training in one round."""
    return derive_seed(master_seed, "fedavg-local", round_index, client_index)
