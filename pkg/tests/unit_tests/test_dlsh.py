import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fed_distill.data import LabeledDataset, UnlabeledDataset
from fed_distill.dlsh import (
    ClientUploadSH,
    ConfidenceMatrix,
    GlobalDistillSet,
    aggregate_weighted,
    balance_public_block,
    build_embed_dataset,
    client_local_train,
    normalize_confidence,
    raw_confidence,
    server_distill,
    train_binary_classifier,
)
from fed_distill.errors import InputError
from fed_distill.nn import ModelSpec, TrainConfig, accuracy, dense, relu


def _x(n: int, d: int = 2) -> UnlabeledDataset:
    return UnlabeledDataset(np.zeros((n, d)), (d,))


def _loop_oracle(uploads: list[ClientUploadSH], weights: np.ndarray) -> np.ndarray:
    n, width = uploads[0].logits.shape
    out = np.zeros((n, width))
    for x in range(n):
        for c in range(width):
            acc = 0.0
            for i, upload in enumerate(uploads):
                acc += weights[x, i] * upload.logits[x, c]
            out[x, c] = acc
    return out


def test_build_embed_dataset_order() -> None:
    embed = build_embed_dataset(np.ones((5, 2)), _x(7))
    assert len(embed) == 12
    assert embed.labels.tolist() == [0] * 5 + [1] * 7
    assert np.array_equal(embed.features[:5], np.ones((5, 2)))


def test_build_embed_dataset_rejects_dimension_mismatch() -> None:
    with pytest.raises(InputError):
        build_embed_dataset(np.ones((5, 3)), _x(7))


def test_balance_public_block() -> None:
    x = UnlabeledDataset(np.arange(40, dtype=np.float64)[:, None], (1,))
    small = balance_public_block(x, 5, 4, seed=1)
    assert len(small) == 20
    assert set(small.features[:, 0]) <= set(range(40))
    assert balance_public_block(x, 50, 4, seed=1) is x


def test_identical_scores_split_evenly() -> None:
    raw = np.random.default_rng(0).random(6)
    conf = normalize_confidence([raw, raw.copy()], temperature=1.0)
    np.testing.assert_allclose(conf.weights, 0.5, atol=1e-15)


@settings(max_examples=1000)
@given(
    st.integers(1, 6).flatmap(
        lambda m: st.lists(hnp.arrays(np.float64, 5, elements=st.floats(0, 1)), min_size=m, max_size=m)
    ),
    st.floats(0.05, 10.0),
)
def test_confidence_rows_sum_to_one(raw: list[np.ndarray], temperature: float) -> None:
    conf = normalize_confidence(raw, temperature)
    assert conf.weights.shape == (5, len(raw))
    assert np.all(np.abs(conf.weights.sum(axis=1) - 1.0) <= 1e-9)


@pytest.mark.parametrize("temperature", [0.1, 0.5, 1.0, 3.0, 10.0])
def test_dominant_client_takes_all(temperature: float) -> None:
    # a lead of 20 on the scaled scores s / T
    raw = [np.array([20.0 * temperature, 0.0]), np.array([0.0, 0.0]), np.array([0.0, 0.0])]
    conf = normalize_confidence(raw, temperature)
    assert conf.weights[0, 0] > 1 - 1e-8
    uploads = [
        ClientUploadSH(i, np.array([[float(i), 1.0], [0.0, 0.0]]), np.zeros(2)) for i in range(3)
    ]
    y = aggregate_weighted(uploads, conf, _x(2)).y_g
    np.testing.assert_allclose(y[0], uploads[0].logits[0], atol=1e-7)


def test_temperature_divides_raw_scores() -> None:
    conf = normalize_confidence([np.array([1.0]), np.array([0.0])], temperature=2.0)
    np.testing.assert_allclose(conf.weights[0], [1 / (1 + np.exp(-0.5)), 1 / (1 + np.exp(0.5))], rtol=1e-12)


def test_confidence_matrix_validation() -> None:
    with pytest.raises(InputError):
        ConfidenceMatrix(np.array([[0.5, 0.6]]))
    with pytest.raises(InputError):
        ConfidenceMatrix(np.array([0.5, 0.5]))
    with pytest.raises(InputError):
        normalize_confidence([np.zeros(3), np.zeros(4)], 1.0)


def test_single_client_identity() -> None:
    logits = np.random.default_rng(1).random((4, 3))
    conf = normalize_confidence([np.random.default_rng(2).random(4)], 1.0)
    y = aggregate_weighted([ClientUploadSH(0, logits, np.zeros(4))], conf, _x(4)).y_g
    assert np.array_equal(y, logits)


def test_symmetric_pair() -> None:
    uploads = [
        ClientUploadSH(0, np.array([[1.0, 0.0]]), np.zeros(1)),
        ClientUploadSH(1, np.array([[0.0, 1.0]]), np.zeros(1)),
    ]
    y = aggregate_weighted(uploads, ConfidenceMatrix(np.array([[0.5, 0.5]])), _x(1)).y_g
    assert y.tolist() == [[0.5, 0.5]]


@pytest.mark.parametrize("seed", range(50))
def test_aggregate_matches_loop_oracle(seed: int) -> None:
    rng = np.random.default_rng(seed)
    m, n, width = (int(v) for v in rng.integers(1, 6, size=3))
    uploads = [ClientUploadSH(i, rng.random((n, width)), rng.random(n)) for i in range(m)]
    conf = normalize_confidence([u.confidence for u in uploads], float(rng.uniform(0.1, 3.0)))
    y = aggregate_weighted(uploads, conf, _x(n)).y_g
    assert np.array_equal(y, _loop_oracle(uploads, conf.weights))


def test_aggregate_is_linear_and_order_free() -> None:
    rng = np.random.default_rng(3)
    uploads = [ClientUploadSH(i, rng.random((6, 4)), rng.random(6)) for i in range(3)]
    conf = normalize_confidence([u.confidence for u in uploads], 1.0)
    base = aggregate_weighted(uploads, conf, _x(6)).y_g

    scaled = [ClientUploadSH(u.client_index, 2.5 * u.logits, u.confidence) for u in uploads]
    np.testing.assert_allclose(aggregate_weighted(scaled, conf, _x(6)).y_g, 2.5 * base, rtol=1e-12)

    order = [2, 0, 1]
    permuted = ConfidenceMatrix(conf.weights[:, order])
    reordered = aggregate_weighted([uploads[i] for i in order], permuted, _x(6)).y_g
    np.testing.assert_allclose(reordered, base, rtol=1e-12)


def test_aggregate_rejects_shape_mismatch() -> None:
    uploads = [ClientUploadSH(0, np.zeros((3, 2)), np.zeros(3))]
    with pytest.raises(InputError):
        aggregate_weighted(uploads, ConfidenceMatrix(np.full((3, 2), 0.5)), _x(3))
    with pytest.raises(InputError):
        aggregate_weighted([], ConfidenceMatrix(np.ones((3, 1))), _x(3))


def test_upload_scalars() -> None:
    upload = ClientUploadSH(0, np.zeros((40, 10)), np.zeros(40))
    assert upload.scalars == 440


def test_empty_client_data() -> None:
    empty = LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 2, (2,))
    with pytest.raises(InputError):
        client_local_train(empty, ModelSpec((2,), (dense(2),)), TrainConfig())


def test_separable_classifier_is_confident() -> None:
    rng = np.random.default_rng(0)
    point = np.full((1, 4), 6.0)
    client = LabeledDataset(np.repeat(point, 40, axis=0), np.zeros(40, dtype=np.int64), 1, (4,))
    public = UnlabeledDataset(rng.normal(0.0, 1.0, size=(40, 4)), (4,))
    spec = ModelSpec((4,), (dense(8), relu(), dense(2)))
    model = client_local_train(client, spec.with_output_dim(1), TrainConfig(seed=1))
    embed = build_embed_dataset(client.features, public)
    classifier = train_binary_classifier(model, embed, TrainConfig(epochs=30, learning_rate=0.05, batch_size=8, seed=2))
    assert accuracy(classifier, embed) > 0.95
    assert raw_confidence(classifier, UnlabeledDataset(point, (4,)))[0] > 0.9


def test_server_distill_learns_argmax_of_targets() -> None:
    rng = np.random.default_rng(5)
    centers = np.array([[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]])
    labels = rng.integers(0, 3, size=90)
    x = centers[labels] + rng.normal(0, 0.3, size=(90, 2))
    y_g = 0.2 + 0.6 * np.eye(3)[labels]
    spec = ModelSpec((2,), (dense(8), relu(), dense(3)))
    model = server_distill(spec, GlobalDistillSet(UnlabeledDataset(x, (2,)), y_g), TrainConfig(epochs=40, learning_rate=0.1, batch_size=10))
    test = LabeledDataset(x, labels.astype(np.int64), 3, (2,))
    assert accuracy(model, test) > 0.9
    with pytest.raises(InputError):
        server_distill(spec.with_output_dim(4), GlobalDistillSet(UnlabeledDataset(x, (2,)), y_g), TrainConfig())
