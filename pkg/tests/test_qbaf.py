"""
QBAF の抽出・順方向セマンティクス・書き出しのテスト。
"""

import numpy as np
import pytest

from sparx_illc.compression.clustered import compress_illc
from sparx_illc.errors import ConfigError, DimensionError, QbafError
from sparx_illc.mlp import build_mlp, forward_collect
from sparx_illc.qbaf import (
    Argument,
    Edge,
    Polarity,
    Qbaf,
    export_qbaf,
    qbaf_forward,
    qbaf_from_json,
    qbaf_to_dot,
    strengths_by_id,
    to_qbaf,
)
from tests.test_mlp import build_random_mlp


def build_fan_in(weights=(0.1, -0.2, 0.3, -0.4)) -> Qbaf:
    """入力 4 個から 1 個の論証へ辺が入る QBAF"""
    arguments = [Argument(f"L0_{i}", 0, i, f"x{i}", 0.0) for i in range(len(weights))]
    arguments.append(Argument("L1_0", 1, 0, "out0", 0.5, bias=0.0))
    edges = [Edge(f"L0_{i}", "L1_0", w, Polarity.of(w)) for i, w in enumerate(weights)]
    return Qbaf(arguments, edges)


@pytest.mark.parametrize(
    "weight, expected",
    [(-0.3, Polarity.ATTACK), (1e-12, Polarity.SUPPORT), (2.0, Polarity.SUPPORT)],
    ids=["negative", "tiny-positive", "positive"],
)
def test_polarity_of(weight, expected):
    assert Polarity.of(weight) is expected


def test_polarity_of_zero_is_an_error():
    with pytest.raises(QbafError, match="0"):
        Polarity.of(0.0)


def test_to_qbaf_structure_and_scores():
    W0 = np.array([[0.0, 1.5], [-2.0, 0.5]])
    model = build_mlp([W0, np.array([[1.0, -1.0]])], [np.array([2.0, -1.0]), np.array([0.0])])
    qbaf = to_qbaf(model, x=np.array([0.3, -0.7]), feature_names=["radius", "texture"], output_names=["malignant"])

    assert qbaf.layer_sizes == [2, 2, 1]
    # 重み 0 の辺は持たない
    assert len(qbaf.edges) == 5
    assert {(e.source, e.target) for e in qbaf.attacks()} == {("L0_0", "L1_1"), ("L1_1", "L2_0")}
    assert qbaf.argument("L0_1").name == "texture"
    assert qbaf.argument("L0_0").base_score == 0.3
    assert qbaf.argument("L1_0").base_score == 2.0
    assert qbaf.argument("L1_1").base_score == 0.0
    assert qbaf.argument("L1_1").bias == -1.0
    assert qbaf.argument("L2_0").name == "malignant"
    assert qbaf.argument("L2_0").base_score == pytest.approx(0.5)
    assert qbaf.argument("L1_0").name == "h1.0"


def test_input_arguments_default_to_zero_base_score():
    qbaf = to_qbaf(build_random_mlp())
    assert [a.base_score for a in qbaf.layer(0)] == [0.0, 0.0, 0.0]
    assert all(a.bias is None for a in qbaf.layer(0))


def test_forward_semantics_match_original_network():
    model = build_random_mlp(sizes=(4, 6, 5, 1), seed=3)
    X = np.random.default_rng(0).normal(size=(100, 4))
    qbaf = to_qbaf(model)
    strengths = qbaf_forward(qbaf, X)
    stack = forward_collect(model, X)
    assert len(strengths) == len(stack.post)
    for got, expected in zip(strengths, stack.post):
        assert np.allclose(got, expected, rtol=0.0, atol=1e-12)


def test_forward_semantics_match_clustered_network():
    model = build_random_mlp(sizes=(4, 10, 10, 1), seed=4)
    X = np.random.default_rng(1).normal(size=(100, 4))
    mu = compress_illc(model, X, gamma=0.3, seed=0)
    qbaf = to_qbaf(mu)
    assert qbaf.layer_sizes == [4, 3, 3, 1]
    assert qbaf.argument("L1_2").name == "C1.2"
    assert np.allclose(qbaf_forward(qbaf, X)[-1], forward_collect(mu.model, X).output, rtol=0.0, atol=1e-12)


def test_negative_relu_bias_is_preserved():
    model = build_mlp([np.array([[1.0]]), np.array([[1.0]])], [np.array([-0.5]), np.array([0.0])])
    qbaf = to_qbaf(model)
    assert qbaf.argument("L1_0").base_score == 0.0
    strengths = strengths_by_id(qbaf, qbaf_forward(qbaf, np.array([2.0])))
    assert strengths["L1_0"] == pytest.approx(1.5)


def test_forward_from_base_scores_without_bias():
    model = build_random_mlp(sizes=(3, 4, 1), seed=5, activation="tanh")
    payload = to_qbaf(model).to_dict()
    for a in payload["arguments"]:
        a["bias"] = None
    stripped = Qbaf.from_dict(payload)
    X = np.random.default_rng(2).normal(size=(20, 3))
    assert np.allclose(qbaf_forward(stripped, X)[-1], forward_collect(model, X).output, atol=1e-9)


def test_forward_rejects_wrong_input_length():
    with pytest.raises(DimensionError, match="入力"):
        qbaf_forward(to_qbaf(build_random_mlp()), np.zeros(5))


def test_to_qbaf_rejects_wrong_names():
    with pytest.raises(DimensionError, match="feature_names"):
        to_qbaf(build_random_mlp(), feature_names=["a"])


@pytest.mark.parametrize(
    "edges, message",
    [
        ([Edge("L0_0", "L9_0", 1.0, Polarity.SUPPORT)], "存在しない"),
        ([Edge("L0_0", "L2_0", 1.0, Polarity.SUPPORT)], "隣接層"),
    ],
    ids=["dangling", "skip-layer"],
)
def test_qbaf_rejects_bad_edges(edges, message):
    arguments = [Argument("L0_0", 0, 0, "x0", 0.0), Argument("L1_0", 1, 0, "h", 0.0, 0.0),
                 Argument("L2_0", 2, 0, "o", 0.5, 0.0)]
    with pytest.raises(QbafError, match=message):
        Qbaf(arguments, edges)


def test_edge_rejects_inconsistent_polarity():
    with pytest.raises(QbafError, match="矛盾"):
        Edge("L0_0", "L1_0", 0.5, Polarity.ATTACK)


def test_json_round_trip():
    model = build_random_mlp(sizes=(3, 4, 2, 1), seed=6)
    qbaf = to_qbaf(model, x=np.array([0.1, 0.2, 0.3]))
    restored = qbaf_from_json(export_qbaf(qbaf, format="json"))
    assert restored == qbaf
    assert restored.edges[0].polarity is qbaf.edges[0].polarity


def test_from_json_rejects_garbage():
    with pytest.raises(QbafError, match="JSON"):
        qbaf_from_json("{not json")


def test_dot_export_colors_and_nodes():
    qbaf = build_fan_in()
    dot = qbaf_to_dot(qbaf)
    assert len(dot.get_nodes()) == 5
    assert len(dot.get_edges()) == 4
    text = export_qbaf(qbaf, format="dot")
    assert text.startswith("digraph")
    assert "color=red" in text and "color=green" in text


def test_dot_export_single_argument():
    qbaf = Qbaf([Argument("L0_0", 0, 0, "x0", 0.0)], [])
    dot = qbaf_to_dot(qbaf)
    assert len(dot.get_nodes()) == 1
    assert len(dot.get_edges()) == 0


def test_prune_quantile_keeps_strong_edges():
    dot = qbaf_to_dot(build_fan_in(), prune_quantile=0.5)
    assert len(dot.get_edges()) == 2
    with pytest.raises(ConfigError, match="prune_quantile"):
        qbaf_to_dot(build_fan_in(), prune_quantile=1.5)


def test_export_rejects_unknown_format():
    with pytest.raises(ConfigError, match="format"):
        export_qbaf(build_fan_in(), format="svg")
