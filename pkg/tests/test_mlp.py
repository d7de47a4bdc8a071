import numpy as np
import pytest

from sparx_illc.errors import ActivationDomainError, ConfigError, DimensionError, ValidationError
from sparx_illc.mlp import (
    Activation,
    LayerCounter,
    Mlp,
    activation_apply,
    activation_inverse,
    build_mlp,
    forward_collect,
    forward_hidden,
    load_model,
    model_hash,
    predict,
    save_model,
)


def build_random_mlp(sizes=(3, 5, 4, 1), seed=0, activation="relu") -> Mlp:
    """指定形状のランダム MLP (バイアスも非ゼロ) を作るヘルパー"""
    rng = np.random.default_rng(seed)
    weights = [rng.normal(size=(o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(scale=0.1, size=o) for o in sizes[1:]]
    return build_mlp(weights, biases, activation=activation)


@pytest.mark.parametrize(
    "kind, x, expected",
    [
        ("relu", -1.5, 0.0),
        ("relu", 2.0, 2.0),
        ("sigmoid", 0.0, 0.5),
        ("tanh", 0.0, 0.0),
        ("identity", -3.0, -3.0),
    ],
    ids=["relu-neg", "relu-pos", "sigmoid-zero", "tanh-zero", "identity"],
)
def test_activation_apply_scalars(kind, x, expected):
    assert activation_apply(kind, x) == pytest.approx(expected)


def test_sigmoid_does_not_overflow():
    out = activation_apply("sigmoid", np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(0.0) and out[1] == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
def test_activation_inverse_round_trip(kind):
    h = np.linspace(-3, 3, 13)
    assert np.allclose(activation_inverse(kind, activation_apply(kind, h)), h)


def test_relu_pseudo_inverse():
    assert activation_inverse("relu", 2.0) == 2.0
    assert activation_inverse("relu", 0.0) == 0.0


@pytest.mark.parametrize("kind, y", [("sigmoid", 1.0), ("sigmoid", 0.0), ("tanh", -1.0)])
def test_activation_inverse_domain_error(kind, y):
    with pytest.raises(ActivationDomainError):
        activation_inverse(kind, y)


def test_unknown_activation_is_config_error():
    with pytest.raises(ConfigError, match="未対応"):
        activation_apply("softplus", 1.0)


def test_mlp_rejects_bad_shapes():
    with pytest.raises(DimensionError, match="weights\\[0\\]"):
        Mlp((2, 3, 1), (np.zeros((2, 3)), np.zeros((1, 3))), (np.zeros(3), np.zeros(1)))


def test_mlp_requires_hidden_layer():
    with pytest.raises(ConfigError, match="depth"):
        Mlp((2, 1), (np.zeros((1, 2)),), (np.zeros(1),))


def test_mlp_rejects_relu_output():
    with pytest.raises(ConfigError, match="出力層"):
        build_mlp([np.ones((2, 2)), np.ones((1, 2))], [np.zeros(2), np.zeros(1)], output_activation="relu")


def test_mlp_parameters_are_read_only():
    model = build_random_mlp()
    with pytest.raises(ValueError):
        model.weights[0][0, 0] = 1.0


def test_forward_matches_hand_computation():
    model = build_mlp([[[2.0]], [[-1.0]]], [[0.5], [0.25]], output_activation="identity")
    stack = forward_collect(model, np.array([[1.0], [-1.0]]))
    # h1 = 2x + 0.5 → relu → -o1 + 0.25
    assert np.allclose(stack.hidden(1).ravel(), [2.5, 0.0])
    assert np.allclose(stack.output.ravel(), [-2.25, 0.25])


def test_forward_accepts_single_sample():
    model = build_random_mlp()
    assert predict(model, np.zeros(3)).shape == (1, 1)


def test_layer_counter_counts_layers():
    model = build_random_mlp(sizes=(3, 4, 4, 4, 1))
    counter = LayerCounter()
    forward_collect(model, np.zeros((5, 3)), counter)
    assert counter.count == model.depth + 1
    forward_hidden(model, np.zeros((5, 3)), counter)
    assert counter.count == 2 * model.depth + 1


def test_forward_hidden_is_prefix_of_forward_collect():
    model = build_random_mlp()
    X = np.random.default_rng(1).normal(size=(7, 3))
    full = forward_collect(model, X)
    hidden = forward_hidden(model, X)
    for l in range(1, model.depth + 1):
        assert np.array_equal(full.hidden(l), hidden.hidden(l))


@pytest.mark.parametrize(
    "X, error",
    [
        (np.zeros((2, 4)), DimensionError),
        (np.array([[0.0, np.nan, 1.0]]), ValidationError),
    ],
    ids=["wrong-dim", "nan"],
)
def test_forward_validates_inputs(X, error):
    with pytest.raises(error):
        forward_collect(build_random_mlp(), X)


def test_save_load_is_bit_exact(tmp_path):
    model = build_random_mlp(seed=3)
    path = save_model(model, tmp_path / "m.json")
    loaded = load_model(path)
    assert loaded.same_parameters(model)
    assert model_hash(loaded) == model_hash(model)


def test_model_hash_detects_parameter_change():
    model = build_random_mlp(seed=3)
    weights = [np.array(w) for w in model.weights]
    weights[1][0, 0] += 1e-12
    other = build_mlp(weights, model.biases, model.activation)
    assert model_hash(other) != model_hash(model)


def test_layer_helpers():
    model = build_random_mlp(sizes=(3, 5, 4, 1))
    assert model.depth == 2
    assert model.layer_activation(2) is Activation.SIGMOID
    assert model.incoming(1, 0).shape == (3,)
    assert model.outgoing(1, 0).shape == (4,)


def test_forward_is_row_wise():
    model = build_random_mlp(sizes=(3, 6, 5, 1), seed=3)
    X = np.random.default_rng(4).normal(size=(9, 3))
    full = forward_collect(model, X)
    for r in range(X.shape[0]):
        single = forward_collect(model, X[r])
        for layer in range(model.depth + 2):
            np.testing.assert_allclose(single.post[layer][0], full.post[layer][r], rtol=0, atol=1e-12)


def test_predict_batch_of_three_matches_single_calls():
    model = build_random_mlp(seed=5)
    X = np.random.default_rng(6).normal(size=(3, 3))
    out = predict(model, X)
    assert out.shape == (3, 1)
    for r in range(3):
        np.testing.assert_allclose(predict(model, X[r]), out[r : r + 1], rtol=0, atol=1e-12)


def test_predict_hand_values():
    identity = build_mlp([[[1.0]], [[1.0]]], [[0.0], [0.0]])
    assert predict(identity, np.array([[0.0]])).tolist() == [[0.5]]
    # ReLU の前活性が全部負 → 隠れ層は 0、バイアス 0 なので sigmoid(0)
    negative = build_mlp([[[-1.0, -1.0], [-2.0, -0.5]], [[3.0, -4.0]]], [[0.0, 0.0], [0.0]])
    assert predict(negative, np.array([[1.0, 2.0], [0.5, 0.5]])).ravel().tolist() == [0.5, 0.5]
