"""Communication-cost accountant, in scalars transferred.

* generic (hidden-feature exchange): ``(h + ls + lc) * |D| * R * M``
* FedAvg: ``(params_server + params_client) * R * M``
* DL-SH: ``(|X_dist| * width + |w|) * M``
* DL-MH: ``(|X_dist| * width + |w| + |mask|) * M``
* I-DL-MH increment (downlink only): ``|X_dist| * width * M``
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from fed_distill.errors import InputError

SWEEP_HEADER = ("classes", "fedavg", "dlsh", "dlmh")


def _check_nonnegative(**operands: int) -> None:
    for name, value in operands.items():
        if value < 0:
            raise InputError(f"{name} must be >= 0, got {value}")


def cost_generic(
    hidden_features: int, logits_server: int, logits_client: int, dataset_size: int, rounds: int, m: int
) -> int:
    """Cost of exchanging hidden features and logits every round."""
    _check_nonnegative(hidden_features=hidden_features, logits_server=logits_server,
                       logits_client=logits_client, dataset_size=dataset_size, rounds=rounds, m=m)
    return (hidden_features + logits_server + logits_client) * dataset_size * rounds * m


def cost_fedavg(model_params_server: int, model_params_client: int, rounds: int, m: int) -> int:
    """Cost of R rounds of model download and upload for M clients."""
    _check_nonnegative(model_params_server=model_params_server,
                       model_params_client=model_params_client, rounds=rounds, m=m)
    return (model_params_server + model_params_client) * rounds * m


def cost_dlsh(x_dist_size: int, logit_width: int, conf_size: int, m: int) -> int:
    """Cost of one DL-SH upload (logits plus confidence) per client."""
    _check_nonnegative(x_dist_size=x_dist_size, logit_width=logit_width, conf_size=conf_size, m=m)
    return (x_dist_size * logit_width + conf_size) * m


def cost_dlmh(x_dist_size: int, logit_width: int, conf_size: int, mask_size: int, m: int) -> int:
    """Cost of one DL-MH upload (narrow logits, confidence, mask dict) per client."""
    _check_nonnegative(x_dist_size=x_dist_size, logit_width=logit_width,
                       conf_size=conf_size, mask_size=mask_size, m=m)
    return (x_dist_size * logit_width + conf_size + mask_size) * m


def cost_idlmh_incremental(x_dist_size: int, client_logit_width: int, m: int) -> int:
    """Extra downlink of the incentive packages; no confidence or mask traffic."""
    _check_nonnegative(x_dist_size=x_dist_size, client_logit_width=client_logit_width, m=m)
    return x_dist_size * client_logit_width * m


_FORMULAS: dict[str, Callable[..., int]] = {
    "generic": cost_generic,
    "fedavg": cost_fedavg,
    "dlsh": cost_dlsh,
    "dlmh": cost_dlmh,
    "idlmh": cost_idlmh_incremental,
}


@dataclass(frozen=True)
class CommCostReport:
    """A protocol's total together with the operands it was computed from."""

    protocol: str
    operands: Mapping[str, int] = field(default_factory=dict)
    total: int = 0

    @classmethod
    def compute(cls, protocol: str, **operands: int) -> CommCostReport:
        """Evaluate the protocol's formula on keyword operands."""
        if protocol not in _FORMULAS:
            raise InputError(f"unknown protocol {protocol!r}; expected one of {sorted(_FORMULAS)}")
        return cls(protocol, dict(operands), _FORMULAS[protocol](**operands))

    def recompute(self) -> int:
        """Re-evaluate the total from the stored operands."""
        return _FORMULAS[self.protocol](**self.operands)


def cost_sweep(
    class_counts: Sequence[int],
    *,
    x_dist_size: int,
    logit_width: int,
    conf_size: int,
    model_params: int,
    rounds: int,
    m: int,
) -> list[tuple[int, int, int, int]]:
    """Tabulate fedavg / dlsh / dlmh costs per client class count.

    DL-MH uses the class count as both its logit width and its mask size;
    the other two do not depend on it.
    """
    if not class_counts:
        raise InputError("class_counts must be non-empty")
    fedavg = cost_fedavg(model_params, model_params, rounds, m)
    dlsh = cost_dlsh(x_dist_size, logit_width, conf_size, m)
    return [
        (k, fedavg, dlsh, cost_dlmh(x_dist_size, k, conf_size, k, m))
        for k in class_counts
    ]


def sweep_to_csv(rows: Sequence[tuple[int, int, int, int]]) -> str:
    """Render sweep rows with the ``classes,fedavg,dlsh,dlmh`` header."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    writer.writerows(rows)
    return buffer.getvalue()
