"""Federated distillation simulator.

DL-SH, DL-MH and I-DL-MH one-round distillation protocols, a FedAvg
baseline and a communication-cost accountant, each protocol compiled to a
LangGraph graph.
"""

from fed_distill.configuration import Configuration, parse_config, serialize_config
from fed_distill.graph import (
    dlmh_graph,
    dlsh_graph,
    fedavg_graph,
    idlmh_graph,
    run_dlmh,
    run_dlsh,
    run_fedavg,
    run_idlmh,
)
from fed_distill.metrics import RunResult

__all__ = [
    "Configuration",
    "RunResult",
    "dlmh_graph",
    "dlsh_graph",
    "fedavg_graph",
    "idlmh_graph",
    "parse_config",
    "run_dlmh",
    "run_dlsh",
    "run_fedavg",
    "run_idlmh",
    "serialize_config",
]
