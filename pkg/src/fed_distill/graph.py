"""Protocol pipelines as LangGraph state graphs.

Each protocol compiles to a graph over ``State``. Client-side work is fanned
out with ``Send`` (one task per client, seeded independently of scheduling),
server-side steps run sequentially, and every simulated transfer is appended
to the transcript.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import replace
from typing import Any, Callable, Dict, List, Literal, Optional, TypeVar, Union

import numpy as np
from langgraph.graph import StateGraph
from langgraph.types import Send

from fed_distill.commcost import CommCostReport
from fed_distill.configuration import Configuration
from fed_distill.data import (
    LabeledDataset,
    load_idx,
    load_synthetic,
    partition,
    restrict_classes,
    split_distillation,
    split_holdout,
    synth_blobs,
)
from fed_distill.dlmh import (
    ClientUploadMH,
    accuracy_global_labels,
    accuracy_own_classes,
    aggregate_holders_only,
    build_mask_dict,
    remap_local_labels,
    unmask_logits,
)
from fed_distill.dlsh import (
    ClientUploadSH,
    aggregate_weighted,
    balance_public_block,
    build_embed_dataset,
    client_local_train,
    normalize_confidence,
    raw_confidence,
    server_distill,
    train_binary_classifier,
)
from fed_distill.errors import FedDistillError, StageError
from fed_distill.fedavg import FedAvgConfig, client_round_seed, fedavg_aggregate
from fed_distill.idlmh import (
    client_incentive_distill,
    remap_to_client_space,
    transform_logits_for_client,
)
from fed_distill.metrics import Message, MetricsRecord, RunResult, client_entity, ordered
from fed_distill.nn import TrainedModel, accuracy, forward, init_model, softmax_t, train
from fed_distill.seeding import seed_key
from fed_distill.state import (
    ClientTask,
    FedAvgTask,
    IncentiveTask,
    InputState,
    LocalUpdate,
    State,
)

logger = logging.getLogger(__name__)

SERVER = "server"
GLOBAL = "global"

F = TypeVar("F", bound=Callable[..., Any])


def tagged(stage: str) -> Callable[[F], F]:
    """Re-raise any failure inside a node as a ``StageError`` carrying ``stage``."""

    def wrap(fn: F) -> F:
        @functools.wraps(fn)
        def node(*args: Any, **kwargs: Any) -> Any:
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (FedDistillError, OSError, ValueError, ArithmeticError) as exc:
                raise StageError(stage, exc) from exc

        return node  # type: ignore[return-value]

    return wrap


def _record(cfg: Configuration, stage: str, entity: str, metric: str, value: float, seed: int) -> MetricsRecord:
    return MetricsRecord(
        run_id=cfg.run_id(), protocol=cfg.protocol, stage=stage,
        entity=entity, metric=metric, value=float(value), seed=seed,
    )


def _records(
    cfg: Configuration, stage: str, entity: str, values: Dict[str, Optional[float]], seed: int
) -> List[MetricsRecord]:
    """Record every defined value; undefined ones are logged and skipped."""
    records = []
    for metric, value in values.items():
        if value is None:
            logger.warning("%s: %s undefined for %s (no test samples of its classes)", stage, metric, entity)
            continue
        records.append(_record(cfg, stage, entity, metric, value, seed))
    return records


# Shared nodes


def _load_dataset(cfg: Configuration) -> tuple[LabeledDataset, LabeledDataset]:
    """Return ``(full training data, test set)``."""
    if cfg.dataset_source == "idx":
        full = load_idx(cfg.dataset_images_path, cfg.dataset_labels_path, cfg.dataset_n_classes)
        if cfg.dataset_max_samples and cfg.dataset_max_samples < len(full):
            rng = np.random.default_rng(cfg.seed("subsample"))
            full = full.subset(np.sort(rng.choice(len(full), cfg.dataset_max_samples, replace=False)))
        if cfg.dataset_test_images_path:
            test = load_idx(cfg.dataset_test_images_path, cfg.dataset_test_labels_path, cfg.dataset_n_classes)
            return full, test
    elif cfg.dataset_synth_path:
        full = load_synthetic(cfg.dataset_synth_path)
    else:
        full = synth_blobs(cfg.dataset_n_classes, cfg.dataset_n_per_class, cfg.dataset_feature_dim,
                           cfg.dataset_spread, cfg.seed("synth"))
    return split_holdout(full, cfg.dataset_test_fraction, cfg.seed("test-split"), stratify=True)


@tagged("prepare")
def prepare(state: State) -> Dict[str, Any]:
    """Load data, hold out the test and distillation sets, partition the clients."""
    cfg = Configuration.from_context()
    full, test = _load_dataset(cfg)
    dist_seed = cfg.seed("dist-split")
    pool, x_dist = split_distillation(full, cfg.dist_fraction, dist_seed)
    dist_labeled = split_holdout(full, cfg.dist_fraction, dist_seed)[1] if cfg.report_upper_bound else None
    partition_seed = cfg.seed("partition")
    clients = partition(pool, cfg.scheme(full.n_classes), partition_seed)
    logger.info(
        "%s: %d train-pool / %d distillation / %d test samples, %d clients",
        cfg.protocol, len(pool), len(x_dist), len(test), len(clients),
    )
    metrics = [
        _record(cfg, "prepare", client_entity(i), "classes_held", len(d.classes_present()), partition_seed)
        for i, d in enumerate(clients)
    ]
    metrics.append(_record(cfg, "prepare", GLOBAL, "x_dist_size", len(x_dist), dist_seed))
    return {
        "n_classes": full.n_classes,
        "feature_shape": full.feature_shape,
        "client_datasets": clients,
        "x_dist": x_dist,
        "dist_labeled": dist_labeled,
        "test_set": test,
        "metrics": metrics,
        "seeds": {
            seed_key("partition"): partition_seed,
            seed_key("dist-split"): dist_seed,
            seed_key("test-split"): cfg.seed("test-split"),
            seed_key("synth"): cfg.seed("synth"),
        },
    }


def dispatch_clients(state: State) -> List[Send]:
    """Fan out one client update per client."""
    assert state.x_dist is not None and state.test_set is not None
    return [
        Send("client_update", ClientTask(task_client=i, task_data=d, task_x_dist=state.x_dist,
                                         task_test=state.test_set))
        for i, d in enumerate(state.client_datasets)
    ]


def _train_client(cfg: Configuration, i: int, data: LabeledDataset, x_dist: Any) -> tuple[TrainedModel, Any, Any, Dict[str, int]]:
    """Local training, embed classifier, confidence and soft logits of one client."""
    spec = cfg.model_spec(cfg.client_preset(i), x_dist.feature_shape, data.n_classes)
    seeds = {
        seed_key("local", i): cfg.seed("local", i),
        seed_key("embed-balance", i): cfg.seed("embed-balance", i),
        seed_key("embed", i): cfg.seed("embed", i),
    }
    model = client_local_train(data, spec, cfg.train_config("local", seeds[seed_key("local", i)]))
    public = balance_public_block(x_dist, len(data), cfg.embed_balance_ratio, seeds[seed_key("embed-balance", i)])
    embed = build_embed_dataset(data.features, public)
    classifier = train_binary_classifier(model, embed, cfg.train_config("embed", seeds[seed_key("embed", i)]))
    confidence = raw_confidence(classifier, x_dist)
    logits = softmax_t(forward(model, x_dist.features), cfg.logit_temperature)
    return model, logits, confidence, seeds


# DL-SH / DL-MH client and server nodes


@tagged("client_train")
def dlsh_client_update(task: ClientTask) -> Dict[str, Any]:
    """Train one DL-SH client and upload its soft logits and confidence."""
    cfg = Configuration.from_context()
    i, test = task["task_client"], task["task_test"]
    model, logits, confidence, seeds = _train_client(cfg, i, task["task_data"], task["task_x_dist"])
    upload = ClientUploadSH(i, logits, confidence)
    acc = accuracy(model, test)
    logger.info("client %d: accuracy %.3f", i, acc)
    entity = client_entity(i)
    return {
        "uploads": [upload],
        "client_models": {i: model},
        "transcript": [Message(entity, SERVER, "upload", upload.scalars)],
        "metrics": [_record(cfg, "client_train", entity, "accuracy", acc, seeds[seed_key("local", i)])],
        "seeds": seeds,
    }


@tagged("client_train")
def dlmh_client_update(task: ClientTask) -> Dict[str, Any]:
    """Mask, train and upload one DL-MH client with a head sized to its classes."""
    cfg = Configuration.from_context()
    i, data, test = task["task_client"], task["task_data"], task["task_test"]
    schema = build_mask_dict(data.classes_present())
    local = remap_local_labels(data, schema)
    model, logits, confidence, seeds = _train_client(cfg, i, local, task["task_x_dist"])
    upload = ClientUploadMH(i, logits, confidence, schema)
    acc = accuracy_global_labels(model, schema, test)
    own = accuracy_own_classes(model, schema, test)
    logger.info("client %d: classes %s, accuracy %.3f (own classes %s)", i, schema.class_list, acc, own)
    entity = client_entity(i)
    seed = seeds[seed_key("local", i)]
    return {
        "uploads": [upload],
        "client_models": {i: model},
        "schemas": {i: schema},
        "transcript": [Message(entity, SERVER, "upload", upload.scalars)],
        "metrics": [
            *_records(cfg, "client_train", entity, {"accuracy": acc, "accuracy_ownclasses": own}, seed),
            _record(cfg, "upload", entity, "logit_width", schema.size, seed),
        ],
        "seeds": seeds,
    }


@tagged("aggregate")
def dlsh_aggregate(state: State) -> Dict[str, Any]:
    """Normalize confidence across clients and build Y_g."""
    cfg = Configuration.from_context()
    assert state.x_dist is not None
    uploads = sorted(state.uploads, key=lambda u: u.client_index)
    conf = normalize_confidence([u.confidence for u in uploads], cfg.temperature)
    dset = aggregate_weighted(uploads, conf, state.x_dist)
    return {
        "distill_set": dset,
        "metrics": [_record(cfg, "aggregate", GLOBAL, "mean_max_weight",
                            float(conf.weights.max(axis=1).mean()), cfg.master_seed)],
    }


@tagged("aggregate")
def dlmh_aggregate(state: State) -> Dict[str, Any]:
    """Unmask every upload into the global label space, then aggregate."""
    cfg = Configuration.from_context()
    assert state.x_dist is not None
    uploads = sorted(state.uploads, key=lambda u: u.client_index)
    conf = normalize_confidence([u.confidence for u in uploads], cfg.temperature)
    if cfg.aggregate_mode == "holders_only":
        dset = aggregate_holders_only(uploads, conf, state.n_classes, state.x_dist)
    else:
        unmasked = [
            ClientUploadSH(u.client_index, unmask_logits(u, state.n_classes), u.confidence)
            for u in uploads
        ]
        dset = aggregate_weighted(unmasked, conf, state.x_dist)
    return {
        "distill_set": dset,
        "metrics": [_record(cfg, "aggregate", GLOBAL, "mean_max_weight",
                            float(conf.weights.max(axis=1).mean()), cfg.master_seed)],
    }


@tagged("distill")
def distill(state: State) -> Dict[str, Any]:
    """Distill the global model once from ``(X_dist, Y_g)``."""
    cfg = Configuration.from_context()
    assert state.distill_set is not None and state.test_set is not None
    spec = cfg.model_spec(cfg.global_spec, state.feature_shape, state.n_classes)
    seed = cfg.seed("global")
    global_model = server_distill(spec, state.distill_set, cfg.train_config("global", seed))
    acc = accuracy(global_model, state.test_set)
    logger.info("global model accuracy %.3f", acc)
    metrics = [_record(cfg, "distill", GLOBAL, "accuracy", acc, seed)]
    seeds = {seed_key("global"): seed}
    if cfg.report_upper_bound and state.dist_labeled is not None:
        upper_seed = cfg.seed("upper-bound")
        upper = train(init_model(spec, upper_seed), state.dist_labeled, cfg.train_config("global", upper_seed))
        metrics.append(_record(cfg, "distill", GLOBAL, "accuracy_upper_bound",
                               accuracy(upper, state.test_set), upper_seed))
        seeds[seed_key("upper-bound")] = upper_seed
    return {"global_model": global_model, "metrics": metrics, "seeds": seeds}


# I-DL-MH incentive nodes


@tagged("incentive")
def compute_server_logits(state: State) -> Dict[str, Any]:
    """Produce the server-side logits that incentive packages are cut from."""
    cfg = Configuration.from_context()
    assert state.x_dist is not None
    if cfg.incentive_source == "aggregate":
        assert state.distill_set is not None
        y = state.distill_set.y_g
        logits = y / y.sum(axis=1, keepdims=True)
    else:
        assert state.global_model is not None
        logits = softmax_t(forward(state.global_model, state.x_dist.features), cfg.logit_temperature)
    return {"server_logits": logits}


def dispatch_incentives(state: State) -> Union[List[Send], Literal["report"]]:
    """Fan out one incentive task per opted-in client."""
    cfg = Configuration.from_context()
    assert state.x_dist is not None and state.test_set is not None
    assert state.server_logits is not None and state.global_model is not None
    sends = [
        Send("incentive", IncentiveTask(
            incentive_client=i,
            incentive_model=state.client_models[i],
            incentive_schema=state.schemas[i],
            incentive_logits=state.server_logits,
            incentive_x_dist=state.x_dist,
            incentive_test=state.test_set,
            incentive_global=state.global_model,
        ))
        for i in sorted(state.client_models)
        if cfg.incentive_opted_in(i)
    ]
    return sends or "report"


@tagged("incentive")
def incentive(task: IncentiveTask) -> Dict[str, Any]:
    """Transform, remap and ship the package; the client distills once."""
    cfg = Configuration.from_context()
    i = task["incentive_client"]
    schema, model, test = task["incentive_schema"], task["incentive_model"], task["incentive_test"]
    transformed = transform_logits_for_client(task["incentive_logits"], schema.class_list)
    pkg = remap_to_client_space(transformed, schema, cfg.incentive_target, i)  # type: ignore[arg-type]
    seed = cfg.seed("incentive", i)
    updated = client_incentive_distill(model, pkg, task["incentive_x_dist"].features,
                                       cfg.train_config("incentive", seed))
    entity = client_entity(i)
    pre, post = accuracy_global_labels(model, schema, test), accuracy_global_labels(updated, schema, test)
    own_pre, own_post = accuracy_own_classes(model, schema, test), accuracy_own_classes(updated, schema, test)
    own_test = restrict_classes(test, schema.class_list)
    global_own = accuracy(task["incentive_global"], own_test) if len(own_test) else None
    logger.info("client %d incentive: accuracy %.3f -> %.3f (own classes %s -> %s)",
                i, pre, post, own_pre, own_post)
    values: Dict[str, Optional[float]] = {
        "accuracy_pre_incentive": pre,
        "accuracy_post_incentive": post,
        "accuracy_ownclasses_pre_incentive": own_pre,
        "accuracy_ownclasses_post_incentive": own_post,
        "accuracy_full": post,
        "accuracy_ownclasses": own_post,
        "global_accuracy_ownclasses": global_own,
    }
    return {
        "client_models": {i: updated},
        "transcript": [Message(SERVER, entity, "incentive", pkg.scalars)],
        "metrics": _records(cfg, "incentive", entity, values, seed),
        "seeds": {seed_key("incentive", i): seed},
    }


# FedAvg nodes


@tagged("fedavg_round")
def fedavg_init(state: State) -> Dict[str, Any]:
    """Initialize the shared global model."""
    cfg = Configuration.from_context()
    setup = FedAvgConfig(
        rounds=cfg.fedavg_rounds,
        local_epochs=cfg.local_epochs,
        n_clients=len(state.client_datasets),
        spec=cfg.model_spec(cfg.client_preset(0), state.feature_shape, state.n_classes),
    )
    seed = cfg.seed("fedavg-init")
    logger.info("fedavg: %d rounds, %d clients, %d parameters", setup.rounds, setup.n_clients,
                setup.spec.param_count())
    return {"global_model": init_model(setup.spec, seed), "fedavg_round": 0,
            "seeds": {seed_key("fedavg-init"): seed}}


def dispatch_fedavg(state: State) -> Union[List[Send], Literal["report"]]:
    """Start the next round, or finish after ``fedavg.rounds`` rounds."""
    cfg = Configuration.from_context()
    if state.fedavg_round >= cfg.fedavg_rounds:
        return "report"
    assert state.global_model is not None and state.test_set is not None
    return [
        Send("fedavg_local", FedAvgTask(
            fedavg_client=i,
            fedavg_task_round=state.fedavg_round + 1,
            fedavg_global=state.global_model,
            fedavg_data=d,
            fedavg_test=state.test_set,
        ))
        for i, d in enumerate(state.client_datasets)
    ]


@tagged("fedavg_round")
def fedavg_local(task: FedAvgTask) -> Dict[str, Any]:
    """Download the global model and train it locally."""
    cfg = Configuration.from_context()
    i, r, glob = task["fedavg_client"], task["fedavg_task_round"], task["fedavg_global"]
    seed = client_round_seed(cfg.master_seed, r, i)
    start = TrainedModel(glob.spec, glob.params)
    model = train(start, task["fedavg_data"], cfg.train_config("local", seed))
    entity = client_entity(i)
    n_params = glob.spec.param_count()
    return {
        "local_updates": [LocalUpdate(r, i, model, len(task["fedavg_data"]))],
        "transcript": [
            Message(SERVER, entity, "model_down", n_params, r),
            Message(entity, SERVER, "model_up", n_params, r),
        ],
        "metrics": [_record(cfg, "fedavg_round", entity, "accuracy", accuracy(model, task["fedavg_test"]), seed)],
        "seeds": {seed_key("fedavg-local", r, i): seed},
    }


@tagged("fedavg_round")
def fedavg_merge(state: State) -> Dict[str, Any]:
    """Average this round's client models into the new global model."""
    cfg = Configuration.from_context()
    assert state.global_model is not None and state.test_set is not None
    r = state.fedavg_round + 1
    updates = sorted((u for u in state.local_updates if u.round == r), key=lambda u: u.client_index)
    merged = fedavg_aggregate([u.model for u in updates], [u.n_samples for u in updates])
    acc = accuracy(merged, state.test_set)
    n_params = merged.spec.param_count()
    cost = CommCostReport.compute("fedavg", model_params_server=n_params, model_params_client=n_params,
                                  rounds=r, m=len(updates))
    logger.info("fedavg round %d: global accuracy %.3f", r, acc)
    return {
        "global_model": merged,
        "fedavg_round": r,
        "metrics": [
            _record(cfg, "fedavg_round", GLOBAL, "accuracy", acc, cfg.master_seed),
            _record(cfg, "fedavg_round", GLOBAL, "comm_cost", cost.total, cfg.master_seed),
        ],
    }


# Report


def _communication_metrics(cfg: Configuration, state: State) -> List[MetricsRecord]:
    assert state.x_dist is not None
    n_dist = len(state.x_dist)
    m = len(state.client_datasets)
    if cfg.protocol == "fedavg":
        assert state.global_model is not None
        n_params = state.global_model.spec.param_count()
        costs = [CommCostReport.compute("fedavg", model_params_server=n_params, model_params_client=n_params,
                                        rounds=cfg.fedavg_rounds, m=m)]
        incremental: List[CommCostReport] = []
    elif cfg.protocol == "dlsh":
        costs = [CommCostReport.compute("dlsh", x_dist_size=n_dist, logit_width=state.n_classes,
                                        conf_size=n_dist, m=m)]
        incremental = []
    else:
        costs = [
            CommCostReport.compute("dlmh", x_dist_size=n_dist, logit_width=s.size, conf_size=n_dist,
                                   mask_size=s.size, m=1)
            for _, s in sorted(state.schemas.items())
        ]
        incremental = [
            CommCostReport.compute("idlmh", x_dist_size=n_dist, client_logit_width=s.size, m=1)
            for i, s in sorted(state.schemas.items())
            if cfg.protocol == "idlmh" and cfg.incentive_opted_in(i)
        ]
    up = [msg for msg in state.transcript if msg.receiver == SERVER]
    down = [msg for msg in state.transcript if msg.sender == SERVER]
    seed = cfg.master_seed
    records = [
        _record(cfg, "report", GLOBAL, "comm_cost", sum(c.total for c in costs), seed),
        _record(cfg, "report", GLOBAL, "transcript_scalars", sum(msg.scalars for msg in state.transcript), seed),
    ]
    if cfg.protocol == "idlmh":
        records += [
            _record(cfg, "report", GLOBAL, "comm_cost_incremental", sum(c.total for c in incremental), seed),
            _record(cfg, "report", GLOBAL, "transcript_scalars_down",
                    sum(msg.scalars for msg in down), seed),
        ]
    for i in range(m):
        entity = client_entity(i)
        records += [
            _record(cfg, "report", entity, "messages_up", sum(msg.sender == entity for msg in up), seed),
            _record(cfg, "report", entity, "messages_down", sum(msg.receiver == entity for msg in down), seed),
        ]
    return records


@tagged("report")
def report(state: State) -> Dict[str, Any]:
    """Summarize accuracy averages and communication cost."""
    cfg = Configuration.from_context()
    stage = "fedavg_round" if cfg.protocol == "fedavg" else "client_train"
    latest: Dict[str, float] = {}
    for r in state.metrics:
        if r.stage == stage and r.metric == "accuracy" and r.entity != GLOBAL:
            latest[r.entity] = r.value
    records = [
        _record(cfg, "report", GLOBAL, "clients_avg", float(np.mean(list(latest.values()))), cfg.master_seed)
    ]
    if cfg.protocol == "idlmh":
        post = [r.value for r in state.metrics if r.metric == "accuracy_post_incentive"]
        if post:
            records.append(_record(cfg, "report", GLOBAL, "clients_avg_post_incentive",
                                        float(np.mean(post)), cfg.master_seed))
    records += _communication_metrics(cfg, state)
    return {"metrics": records}


# Graph assembly


def _distillation_graph(protocol: str) -> Any:
    builder = StateGraph(State, input=InputState, config_schema=Configuration)
    mh = protocol != "dlsh"
    builder.add_node("prepare", prepare)
    builder.add_node("client_update", dlmh_client_update if mh else dlsh_client_update)
    builder.add_node("aggregate", dlmh_aggregate if mh else dlsh_aggregate)
    builder.add_node("distill", distill)
    builder.add_node("report", report)

    builder.add_edge("__start__", "prepare")
    builder.add_conditional_edges("prepare", dispatch_clients, ["client_update"])
    builder.add_edge("client_update", "aggregate")
    builder.add_edge("aggregate", "distill")

    if protocol == "idlmh":
        builder.add_node("server_logits", compute_server_logits)
        builder.add_node("incentive", incentive)
        builder.add_edge("distill", "server_logits")
        builder.add_conditional_edges("server_logits", dispatch_incentives, ["incentive", "report"])
        builder.add_edge("incentive", "report")
    else:
        builder.add_edge("distill", "report")

    builder.add_edge("report", "__end__")
    return builder.compile(name=protocol.upper())


def _fedavg_graph() -> Any:
    builder = StateGraph(State, input=InputState, config_schema=Configuration)
    builder.add_node("prepare", prepare)
    builder.add_node("fedavg_init", fedavg_init)
    builder.add_node("fedavg_local", fedavg_local)
    builder.add_node("fedavg_aggregate", fedavg_merge)
    builder.add_node("report", report)

    builder.add_edge("__start__", "prepare")
    builder.add_edge("prepare", "fedavg_init")
    builder.add_conditional_edges("fedavg_init", dispatch_fedavg, ["fedavg_local", "report"])
    builder.add_edge("fedavg_local", "fedavg_aggregate")
    # Cycle: every merge either starts the next round or ends the run.
    builder.add_conditional_edges("fedavg_aggregate", dispatch_fedavg, ["fedavg_local", "report"])
    builder.add_edge("report", "__end__")
    return builder.compile(name="FEDAVG")


dlsh_graph = _distillation_graph("dlsh")
dlmh_graph = _distillation_graph("dlmh")
idlmh_graph = _distillation_graph("idlmh")
fedavg_graph = _fedavg_graph()

GRAPHS = {"dlsh": dlsh_graph, "dlmh": dlmh_graph, "idlmh": idlmh_graph, "fedavg": fedavg_graph}


def _invoke(protocol: str, config: Configuration) -> RunResult:
    config = replace(config, protocol=protocol)
    run_id = config.run_id()
    out = GRAPHS[protocol].invoke(
        {"run_id": run_id},
        {"configurable": config.as_configurable(), "recursion_limit": 2 * config.fedavg_rounds + 20},
    )
    return RunResult(
        run_id=run_id,
        protocol=protocol,
        records=ordered(out["metrics"]),
        transcript=list(out["transcript"]),
        seeds=dict(sorted(out["seeds"].items())),
        state=out,
    )


def run_dlsh(config: Configuration) -> RunResult:
    """Run DL-SH end to end."""
    return _invoke("dlsh", config)


def run_dlmh(config: Configuration) -> RunResult:
    """Run DL-MH end to end."""
    return _invoke("dlmh", config)


def run_idlmh(config: Configuration) -> RunResult:
    """Run DL-MH followed by one incentive distillation per opted-in client."""
    return _invoke("idlmh", config)


def run_fedavg(config: Configuration) -> RunResult:
    """Run ``fedavg.rounds`` rounds of FedAvg."""
    return _invoke("fedavg", config)


RUNNERS = {"dlsh": run_dlsh, "dlmh": run_dlmh, "idlmh": run_idlmh, "fedavg": run_fedavg}
