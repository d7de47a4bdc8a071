"""
qbaf.py

(クラスタ化) MLP から QBAF (Quantitative Bipolar Argumentation Framework) を取り出す。

- ニューロン (クラスタニューロン) 1 個 = 論証 1 個
- 基礎スコア β(a) = φ(bias(a))。出力空間に置く
- 負の重みの辺 = attack、正の重み = support、重み 0 の辺は持たない
- 順方向の強さ o_a = φ(Σ w(b,a)·o_b + bias(a)) は元の MLP の後活性と一致する
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pydot

from sparx_illc.compression.clustered import ClusteredMlp
from sparx_illc.errors import ConfigError, DimensionError, QbafError
from sparx_illc.mlp import Activation, Mlp, activation_apply, activation_inverse, layer_preactivation

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ("dot", "json")


class Polarity(str, Enum):
    ATTACK = "attack"
    SUPPORT = "support"

    @classmethod
    def of(cls, weight: float) -> "Polarity":
        if weight < 0:
            return cls.ATTACK
        if weight > 0:
            return cls.SUPPORT
        raise QbafError("重み 0 の辺は attack / support のどちらにも分類できません。")


@dataclass(frozen=True)
class Argument:
    """
    Parameters
    ----------
    id : str
        "L{layer}_{index}"
    layer : int
        0 = 入力、d+1 = 出力
    index : int
        層内の番号
    name : str
        表示名
    base_score : float
        β(a)
    bias : float, optional
        前活性に足すバイアス。入力論証は None
    """

    id: str
    layer: int
    index: int
    name: str
    base_score: float
    bias: Optional[float] = None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    weight: float
    polarity: Polarity

    def __post_init__(self) -> None:
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if Polarity.of(self.weight) is not self.polarity:
            raise QbafError(f"辺 {self.source}->{self.target}: 重み {self.weight} と極性 {self.polarity.value} が矛盾します。")


@dataclass(frozen=True, eq=False)
class Qbaf:
    arguments: Tuple[Argument, ...]
    edges: Tuple[Edge, ...]
    activation: Activation = Activation.RELU
    output_activation: Activation = Activation.SIGMOID

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", tuple(self.arguments))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "activation", Activation.parse(self.activation))
        object.__setattr__(self, "output_activation", Activation.parse(self.output_activation))
        by_id = {}
        for a in self.arguments:
            if a.id in by_id:
                raise QbafError(f"論証 ID が重複しています: {a.id}")
            by_id[a.id] = a
        if not by_id:
            raise QbafError("論証が 1 つもありません。")
        for e in self.edges:
            if e.source not in by_id or e.target not in by_id:
                raise QbafError(f"存在しない論証を指す辺です: {e.source} -> {e.target}")
            if by_id[e.target].layer != by_id[e.source].layer + 1:
                raise QbafError(f"辺 {e.source} -> {e.target} が隣接層を結んでいません。")
        object.__setattr__(self, "_by_id", by_id)

    # ──────────── 参照 ────────────
    def argument(self, arg_id: str) -> Argument:
        return self._by_id[arg_id]

    @property
    def n_layers(self) -> int:
        return max(a.layer for a in self.arguments) + 1

    def layer(self, l: int) -> List[Argument]:
        return sorted((a for a in self.arguments if a.layer == l), key=lambda a: a.index)

    @property
    def layer_sizes(self) -> List[int]:
        return [len(self.layer(l)) for l in range(self.n_layers)]

    def attacks(self) -> List[Edge]:
        return [e for e in self.edges if e.polarity is Polarity.ATTACK]

    def supports(self) -> List[Edge]:
        return [e for e in self.edges if e.polarity is Polarity.SUPPORT]

    def layer_activation(self, l: int) -> Activation:
        return self.output_activation if l == self.n_layers - 1 else self.activation

    # ──────────── 直列化 ────────────
    def to_dict(self) -> dict:
        return {
            "activation": self.activation.value,
            "output_activation": self.output_activation.value,
            "arguments": [
                {"id": a.id, "layer": a.layer, "index": a.index, "name": a.name,
                 "base_score": a.base_score, "bias": a.bias}
                for a in self.arguments
            ],
            "edges": [
                {"from": e.source, "to": e.target, "weight": e.weight, "polarity": e.polarity.value}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Qbaf":
        try:
            arguments = [
                Argument(id=a["id"], layer=int(a["layer"]), index=int(a["index"]), name=a["name"],
                         base_score=float(a["base_score"]),
                         bias=None if a.get("bias") is None else float(a["bias"]))
                for a in payload["arguments"]
            ]
            edges = [
                Edge(source=e["from"], target=e["to"], weight=float(e["weight"]), polarity=e["polarity"])
                for e in payload["edges"]
            ]
        except (KeyError, TypeError) as e:
            raise QbafError(f"QBAF JSON の形式が不正です: {e}") from e
        return cls(arguments, edges, payload.get("activation", "relu"),
                   payload.get("output_activation", "sigmoid"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Qbaf):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# ──────────────────────────────
# 抽出
# ──────────────────────────────
def _arg_id(layer: int, index: int) -> str:
    return f"L{layer}_{index}"


def _default_name(layer: int, index: int, depth: int, clustered: bool) -> str:
    if layer == 0:
        return f"x{index}"
    if layer == depth + 1:
        return f"out{index}"
    return f"{'C' if clustered else 'h'}{layer}.{index}"


def to_qbaf(
    model: Union[Mlp, ClusteredMlp],
    x: Optional[np.ndarray] = None,
    feature_names: Optional[Sequence[str]] = None,
    output_names: Optional[Sequence[str]] = None,
) -> Qbaf:
    """
    Parameters
    ----------
    model : Mlp or ClusteredMlp
    x : np.ndarray, optional
        入力論証の基礎スコアに使う具体的な入力。省略時は 0
    feature_names, output_names : sequence of str, optional
        入力・出力論証の表示名
    """
    clustered = isinstance(model, ClusteredMlp)
    mlp = model.model if clustered else model
    if x is not None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != mlp.input_dim:
            raise DimensionError(f"入力の長さ {x.shape[0]} がモデルの入力次元 {mlp.input_dim} と一致しません。")
    if feature_names is not None and len(feature_names) != mlp.input_dim:
        raise DimensionError("feature_names の数が入力次元と一致しません。")
    if output_names is not None and len(output_names) != mlp.output_dim:
        raise DimensionError("output_names の数が出力次元と一致しません。")

    arguments: List[Argument] = []
    for i in range(mlp.input_dim):
        name = feature_names[i] if feature_names is not None else _default_name(0, i, mlp.depth, clustered)
        arguments.append(Argument(_arg_id(0, i), 0, i, name, float(x[i]) if x is not None else 0.0))

    edges: List[Edge] = []
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        layer = l + 1
        act = mlp.layer_activation(l)
        for j in range(W.shape[0]):
            if layer == mlp.depth + 1 and output_names is not None:
                name = output_names[j]
            else:
                name = _default_name(layer, j, mlp.depth, clustered)
            arguments.append(
                Argument(_arg_id(layer, j), layer, j, name,
                         base_score=float(activation_apply(act, b[j])), bias=float(b[j]))
            )
            for i in np.flatnonzero(W[j]):
                w = float(W[j, i])
                edges.append(Edge(_arg_id(l, int(i)), _arg_id(layer, j), w, Polarity.of(w)))

    qbaf = Qbaf(tuple(arguments), tuple(edges), mlp.activation, mlp.output_activation)
    logger.debug(
        f"QBAF: {len(arguments)} arguments, {len(qbaf.attacks())} attacks, {len(qbaf.supports())} supports"
    )
    return qbaf


# ──────────────────────────────
# 順方向セマンティクス
# ──────────────────────────────
def _bias_term(qbaf: Qbaf, a: Argument) -> float:
    if a.bias is not None:
        return a.bias
    return float(activation_inverse(qbaf.layer_activation(a.layer), a.base_score))


def qbaf_forward(qbaf: Qbaf, input_values: np.ndarray) -> List[np.ndarray]:
    """
    h_a = Σ_b w(b,a)·o_b + φ^{-1}(β(a)), o_a = φ(h_a) を層順に評価する。

    バイアスを保持している論証では φ^{-1}(β(a)) の代わりにそのバイアスを使う
    (ReLU で負のバイアスを持つニューロンでも厳密に一致させるため)。

    Parameters
    ----------
    input_values : np.ndarray
        (|V_0|,) または (N, |V_0|)

    Returns
    -------
    list[np.ndarray]
        strengths[l][..., i] が論証 L{l}_{i} の強さ
    """
    sizes = qbaf.layer_sizes
    X = np.asarray(input_values, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != sizes[0]:
        raise DimensionError(f"入力の長さ {X.shape[1]} が入力論証の数 {sizes[0]} と一致しません。")

    # 重み 0 の辺は持たないので 0 埋めの行列に戻して評価する
    matrices = [np.zeros((sizes[l + 1], sizes[l])) for l in range(len(sizes) - 1)]
    for e in qbaf.edges:
        src, dst = qbaf.argument(e.source), qbaf.argument(e.target)
        matrices[src.layer][dst.index, src.index] = e.weight
    biases = [np.array([_bias_term(qbaf, a) for a in qbaf.layer(l + 1)]) for l in range(len(sizes) - 1)]

    strengths = [X]
    cur = X
    for l, (W, b) in enumerate(zip(matrices, biases)):
        cur = activation_apply(qbaf.layer_activation(l + 1), layer_preactivation(cur, W, b))
        strengths.append(cur)
    return [s[0] for s in strengths] if single else strengths


def strengths_by_id(qbaf: Qbaf, strengths: List[np.ndarray]) -> Dict[str, float]:
    """単一入力の qbaf_forward の結果を {論証 ID: 強さ} に変換する"""
    return {a.id: float(strengths[a.layer][a.index]) for a in qbaf.arguments}


# ──────────────────────────────
# 書き出し
# ──────────────────────────────
def _display_edges(qbaf: Qbaf, prune_quantile: Optional[float]) -> List[Edge]:
    if prune_quantile is None or not qbaf.edges:
        return list(qbaf.edges)
    if not 0.0 <= prune_quantile <= 1.0:
        raise ConfigError(f"prune_quantile は [0, 1] の範囲で指定してください: {prune_quantile}")
    magnitudes = np.abs([e.weight for e in qbaf.edges])
    threshold = float(np.quantile(magnitudes, prune_quantile))
    kept = [e for e in qbaf.edges if abs(e.weight) >= threshold]
    logger.debug(f"prune_quantile={prune_quantile}: kept {len(kept)}/{len(qbaf.edges)} edges")
    return kept


def qbaf_to_dot(qbaf: Qbaf, prune_quantile: Optional[float] = None) -> pydot.Dot:
    dot = pydot.Dot(graph_type="digraph", rankdir="LR")
    for a in qbaf.arguments:
        dot.add_node(pydot.Node(a.id, label=f'"{a.name}\\nβ={a.base_score:.4f}"'))
    edges = _display_edges(qbaf, prune_quantile)
    max_w = max((abs(e.weight) for e in edges), default=1.0)
    for e in edges:
        dot.add_edge(
            pydot.Edge(
                e.source,
                e.target,
                label=f'"{e.weight:.4f}"',
                color="red" if e.polarity is Polarity.ATTACK else "green",
                penwidth=f"{0.5 + 2.5 * abs(e.weight) / max_w:.2f}",
            )
        )
    return dot


def export_qbaf(qbaf: Qbaf, format: str = "dot", prune_quantile: Optional[float] = None) -> str:
    """
    Parameters
    ----------
    format : str
        "dot" (Graphviz) または "json" (qbaf_from_json で読み戻せる)
    prune_quantile : float, optional
        DOT 表示用。|重み| がこの分位点未満の辺を省く
    """
    if format == "dot":
        return qbaf_to_dot(qbaf, prune_quantile).to_string()
    if format == "json":
        return json.dumps(qbaf.to_dict(), indent=2, ensure_ascii=False)
    raise ConfigError(f"format は {EXPORT_FORMATS} のいずれかです: {format!r}")


def qbaf_from_json(text: str) -> Qbaf:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise QbafError(f"QBAF JSON を解析できません: {e}") from e
    return Qbaf.from_dict(payload)
