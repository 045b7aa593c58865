import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fed_distill.commcost import cost_idlmh_incremental
from fed_distill.data import LabeledDataset
from fed_distill.dlmh import build_mask_dict, remap_local_labels
from fed_distill.errors import InputError, InternalError
from fed_distill.idlmh import (
    IncentivePackage,
    client_incentive_distill,
    remap_to_client_space,
    transform_logits_for_client,
)
from fed_distill.nn import ModelSpec, TrainConfig, accuracy, dense, init_model, relu, train


def test_transform_moves_max_to_nearest_held_class() -> None:
    out = transform_logits_for_client(np.array([[0.1, 0.5, 0.2, 0.9]]), [0, 2])
    assert out.tolist() == [[0.0, 0.0, 0.9, 0.0]]


def test_transform_keeps_max_on_held_class() -> None:
    out = transform_logits_for_client(np.array([[0.1, 0.7, 0.2]]), [1, 2])
    assert out.tolist() == [[0.0, 0.7, 0.0]]


def test_transform_ties_go_to_lowest_class() -> None:
    out = transform_logits_for_client(np.array([[0.3, 0.9, 0.3, 0.3]]), [3, 0, 2])
    assert out.tolist() == [[0.9, 0.0, 0.0, 0.0]]


def test_transform_validates_classes() -> None:
    with pytest.raises(InputError):
        transform_logits_for_client(np.zeros((1, 3)), [])
    with pytest.raises(InputError):
        transform_logits_for_client(np.zeros((1, 3)), [3])


@settings(max_examples=1000)
@given(st.data())
def test_transform_emits_one_value_per_row(data: st.DataObject) -> None:
    n_classes = data.draw(st.integers(2, 10))
    classes = sorted(data.draw(st.sets(st.integers(0, n_classes - 1), min_size=1)))
    rows = data.draw(st.integers(1, 6))
    logits = np.random.default_rng(data.draw(st.integers(0, 2**32))).random((rows, n_classes)) + 0.01
    out = transform_logits_for_client(logits, classes)
    nonzero_rows, nonzero_cols = np.nonzero(out)
    assert nonzero_rows.tolist() == list(range(rows))
    assert set(nonzero_cols.tolist()) <= set(classes)
    assert np.array_equal(out.max(axis=1), logits.max(axis=1))


def test_remap_soft_and_hard() -> None:
    schema = build_mask_dict([1, 3])
    transformed = np.array([[0.0, 0.8, 0.0, 0.0], [0.0, 0.0, 0.0, 0.6]])
    soft = remap_to_client_space(transformed, schema, "soft", client_index=4)
    assert soft.client_index == 4
    assert soft.targets.tolist() == [[0.8, 0.0], [0.0, 0.6]]
    hard = remap_to_client_space(transformed, schema, "hard")
    assert hard.targets.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_remap_rejects_values_outside_schema() -> None:
    with pytest.raises(InternalError):
        remap_to_client_space(np.array([[0.5, 0.0, 0.0]]), build_mask_dict([1, 2]))


def test_package_size_matches_incremental_cost() -> None:
    pkg = IncentivePackage(0, np.zeros((40, 2)))
    assert pkg.scalars == cost_idlmh_incremental(40, 2, 1) == 80


def test_incentive_distillation_moves_client_toward_targets() -> None:
    rng = np.random.default_rng(0)
    centers = np.array([[2.0, 0.0], [0.0, 2.0]])
    labels = rng.integers(0, 2, size=60)
    x = centers[labels] + rng.normal(0, 0.2, size=(60, 2))
    schema = build_mask_dict([4, 9])
    data = LabeledDataset(x, np.array([4, 9])[labels], 10, (2,))
    local = remap_local_labels(data, schema)
    spec = ModelSpec((2,), (dense(6), relu(), dense(2)))
    # Client starts out trained on flipped labels.
    flipped = LabeledDataset(x, 1 - local.labels, 2, (2,))
    client = train(init_model(spec, 0), flipped, TrainConfig(epochs=5, learning_rate=0.1, seed=1))
    pkg = IncentivePackage(0, np.eye(2)[local.labels])
    updated = client_incentive_distill(client, pkg, x, TrainConfig(epochs=40, learning_rate=0.1, batch_size=10, seed=2))
    assert accuracy(updated, local) > accuracy(client, local)
    assert accuracy(updated, local) > 0.9


def test_incentive_width_must_match_head() -> None:
    client = init_model(ModelSpec((2,), (dense(3),)), 0)
    with pytest.raises(InputError):
        client_incentive_distill(client, IncentivePackage(0, np.ones((4, 2))), np.zeros((4, 2)), TrainConfig())
