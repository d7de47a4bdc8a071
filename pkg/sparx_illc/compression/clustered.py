"""
clustered.py

クラスタ化 MLP μ の構築。

- compress_oneshot : 元モデルの活性 (1 回の順伝播) で全層をクラスタリングする従来法
- compress_illc    : 層 l を圧縮した直後の活性を層 l+1 のクラスタリングに使う
                     Iterative Layer-by-Layer Compression

どちらもマージ規則は同じ (入る重み・バイアスは平均、出る重みは和) で、
違いはクラスタリングに渡す活性だけ。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from sparx_illc.cluster import LayerClustering, cluster_layer
from sparx_illc.compression.aggregation import (
    local_multipliers,
    merge_incoming,
    merge_outgoing,
)
from sparx_illc.errors import ConfigError
from sparx_illc.mlp import (
    LayerCounter,
    Mlp,
    activation_apply,
    check_inputs,
    forward_hidden,
    layer_preactivation,
    load_model,
    model_hash,
    save_model,
)
from sparx_illc.utils.io import read_json, sidecar_path, write_json
from sparx_illc.utils.kernel import locality_weights, median_pairwise_distance

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = "clustering"


class CompressionMethod(str, Enum):
    ILLC = "illc"
    ONESHOT = "oneshot"


class AggregationMode(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass
class LocalAnchor:
    x: np.ndarray
    sigma: float
    index: Optional[int] = None

    def to_dict(self) -> dict:
        return {"x": np.asarray(self.x).tolist(), "sigma": self.sigma, "index": self.index}

    @classmethod
    def from_dict(cls, payload: dict) -> "LocalAnchor":
        return cls(x=np.array(payload["x"], dtype=np.float64), sigma=float(payload["sigma"]),
                   index=payload.get("index"))


@dataclass
class ClusteredMlp:
    """
    Parameters
    ----------
    model : Mlp
        圧縮後ネットワーク μ
    clustering : tuple[LayerClustering, ...]
        l = 1..d のクラスタリング
    origin : str
        元モデルの model_hash
    method : CompressionMethod
    mode : AggregationMode
    gamma : float
    seed : int
    local_anchor : LocalAnchor, optional
        mode = local のときだけ持つ
    layer_evaluations : int
        圧縮中に行った層単位の活性化計算回数
    """

    model: Mlp
    clustering: Tuple[LayerClustering, ...]
    origin: str
    method: CompressionMethod
    mode: AggregationMode = AggregationMode.GLOBAL
    gamma: float = 1.0
    seed: int = 0
    local_anchor: Optional[LocalAnchor] = None
    layer_evaluations: int = 0

    def __post_init__(self) -> None:
        self.method = CompressionMethod(self.method)
        self.mode = AggregationMode(self.mode)
        self.clustering = tuple(self.clustering)
        if len(self.clustering) != self.model.depth:
            raise ConfigError("クラスタリングの層数が圧縮モデルの深さと一致しません。")
        for lc in self.clustering:
            if lc.k != self.model.layer_sizes[lc.layer_index]:
                raise ConfigError(
                    f"層 {lc.layer_index}: K={lc.k} が圧縮モデルの層サイズ "
                    f"{self.model.layer_sizes[lc.layer_index]} と一致しません。"
                )
        if (self.mode is AggregationMode.LOCAL) != (self.local_anchor is not None):
            raise ConfigError("local_anchor は mode = local のときだけ指定します。")

    @property
    def cluster_counts(self) -> List[int]:
        return [lc.k for lc in self.clustering]

    # ──────────── 保存・読み込み ────────────
    def sidecar(self) -> dict:
        return {
            "method": self.method.value,
            "mode": self.mode.value,
            "gamma": self.gamma,
            "seed": self.seed,
            "clustering": [lc.to_dict() for lc in self.clustering],
            "origin_hash": self.origin,
            "local_anchor": self.local_anchor.to_dict() if self.local_anchor else None,
            "layer_evaluations": self.layer_evaluations,
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        save_model(self.model, path)
        write_json(sidecar_path(path, SIDECAR_SUFFIX), self.sidecar())
        logger.info(f"Saved compressed model to {path} (+ {SIDECAR_SUFFIX} sidecar)")
        return path

    @classmethod
    def load(cls, path: Path) -> "ClusteredMlp":
        path = Path(path)
        model = load_model(path)
        meta = read_json(sidecar_path(path, SIDECAR_SUFFIX))
        anchor = meta.get("local_anchor")
        return cls(
            model=model,
            clustering=tuple(LayerClustering.from_dict(c) for c in meta["clustering"]),
            origin=meta["origin_hash"],
            method=meta["method"],
            mode=meta["mode"],
            gamma=float(meta["gamma"]),
            seed=int(meta["seed"]),
            local_anchor=LocalAnchor.from_dict(anchor) if anchor else None,
            layer_evaluations=int(meta.get("layer_evaluations", 0)),
        )


# ──────────────────────────────
# 圧縮
# ──────────────────────────────
def _member_mean(H: np.ndarray, clustering: LayerClustering) -> np.ndarray:
    """クラスタごとに前活性の列平均 (= マージ後ニューロンの前活性)"""
    out = np.empty((H.shape[0], clustering.k))
    for c in range(clustering.k):
        out[:, c] = H[:, clustering.members(c)].mean(axis=1)
    return out


def _resolve_anchor(
    X: np.ndarray,
    mode: AggregationMode,
    anchor: Union[None, int, np.ndarray],
    sigma: Optional[float],
) -> Optional[LocalAnchor]:
    if mode is AggregationMode.GLOBAL:
        if anchor is not None:
            raise ConfigError("anchor は local モードでのみ指定できます。")
        return None
    if anchor is None:
        raise ConfigError("local モードには anchor (サンプル番号または入力ベクトル) が必要です。")
    index = None
    if np.ndim(anchor) == 0:
        index = int(anchor)
        if not 0 <= index < X.shape[0]:
            raise ConfigError(f"anchor 番号 {index} がデータ範囲 0..{X.shape[0] - 1} の外です。")
        x = X[index].copy()
    else:
        x = np.asarray(anchor, dtype=np.float64).ravel()
    if sigma is None:
        sigma = median_pairwise_distance(X)
    if not sigma > 0:
        raise ConfigError(f"sigma は正である必要があります: {sigma}")
    return LocalAnchor(x=x, sigma=float(sigma), index=index)


def _compress(
    model: Mlp,
    X: np.ndarray,
    gamma: float,
    seed: int,
    method: CompressionMethod,
    mode: Union[str, AggregationMode],
    anchor: Union[None, int, np.ndarray],
    sigma: Optional[float],
    counter: Optional[LayerCounter],
) -> ClusteredMlp:
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma は (0, 1] の範囲で指定してください: {gamma}")
    X = check_inputs(model, X)
    if X.shape[0] == 0:
        raise ConfigError("圧縮用データ X が空です。")
    mode = AggregationMode(mode)
    local = _resolve_anchor(X, mode, anchor, sigma)
    pi = locality_weights(X, local.x, local.sigma) if local else None

    counter = counter if counter is not None else LayerCounter()
    start = counter.count
    weights = [np.array(w) for w in model.weights]
    biases = [np.array(b) for b in model.biases]

    # 元モデル M の活性: oneshot のクラスタリング対象、local の O^M
    original = None
    if method is CompressionMethod.ONESHOT or local is not None:
        original = forward_hidden(model, X, counter)
    # μ の前段を順に進めるのは ILLC と local のときだけ
    track_prefix = method is CompressionMethod.ILLC or local is not None
    x_cur = X
    clusterings: List[LayerClustering] = []

    for l in range(1, model.depth + 1):
        H = None
        if track_prefix:
            # 圧縮済みの前段から層 l の前活性を計算し直す
            H = layer_preactivation(x_cur, weights[l - 1], biases[l - 1])
            counter.add(1)
        if method is CompressionMethod.ONESHOT:
            A = original.post[l]
        else:
            A = activation_apply(model.activation, H)

        lc = cluster_layer(A, gamma, seed + l, layer_index=l)
        clusterings.append(lc)

        multipliers = None
        if track_prefix:
            # 入る側の平均は線形なので、μ の層 l の前活性はメンバー前活性の平均
            x_cur = activation_apply(model.activation, _member_mean(H, lc))
            if pi is not None:
                multipliers = local_multipliers(original.post[l], x_cur, lc, pi)

        weights[l - 1], biases[l - 1] = merge_incoming(weights[l - 1], biases[l - 1], lc)
        weights[l] = merge_outgoing(weights[l], lc, multipliers)
        logger.debug(f"[{method.value}] layer {l}: {model.layer_sizes[l]} -> {lc.k} clusters")

    compressed = Mlp(
        layer_sizes=tuple([model.input_dim] + [lc.k for lc in clusterings] + [model.output_dim]),
        weights=tuple(weights),
        biases=tuple(biases),
        activation=model.activation,
        output_activation=model.output_activation,
    )
    evaluations = counter.count - start
    logger.info(
        f"Compressed {model.layer_sizes} -> {compressed.layer_sizes} "
        f"({method.value}/{mode.value}, gamma={gamma}, layer evaluations={evaluations})"
    )
    return ClusteredMlp(
        model=compressed,
        clustering=tuple(clusterings),
        origin=model_hash(model),
        method=method,
        mode=mode,
        gamma=gamma,
        seed=seed,
        local_anchor=local,
        layer_evaluations=evaluations,
    )


def compress_oneshot(
    model: Mlp,
    X: np.ndarray,
    gamma: float,
    seed: int = 0,
    mode: Union[str, AggregationMode] = AggregationMode.GLOBAL,
    anchor: Union[None, int, np.ndarray] = None,
    sigma: Optional[float] = None,
    counter: Optional[LayerCounter] = None,
) -> ClusteredMlp:
    """
    従来法 (SpArX)。元モデルを 1 回だけ順伝播し、各隠れ層をその活性で独立にクラスタリングする。

    Parameters
    ----------
    model : Mlp
    X : np.ndarray
        (N, |V_0|) クラスタリング用データ Δ
    gamma : float
        残すニューロンの割合 (0, 1]。圧縮率 r = 1 - γ
    seed : int
        層 l のクラスタリングは seed + l を使う
    mode : "global" / "local"
    anchor : int or np.ndarray, optional
        local のときのアンカー (X の行番号か入力ベクトル)
    sigma : float, optional
        local のカーネル幅。省略時は Δ の距離の中央値
    counter : LayerCounter, optional
        層単位の活性化計算を数える。global は d 回、local は μ の前段を進める d 回が加わり 2d 回
    """
    return _compress(model, X, gamma, seed, CompressionMethod.ONESHOT, mode, anchor, sigma, counter)


def compress_illc(
    model: Mlp,
    X: np.ndarray,
    gamma: float,
    seed: int = 0,
    mode: Union[str, AggregationMode] = AggregationMode.GLOBAL,
    anchor: Union[None, int, np.ndarray] = None,
    sigma: Optional[float] = None,
    counter: Optional[LayerCounter] = None,
) -> ClusteredMlp:
    """
    ILLC。引数は compress_oneshot と同じ。

    層単位の活性化計算は global でちょうど d 回。local では O^M 用に元モデルの d 回が加わる。
    """
    return _compress(model, X, gamma, seed, CompressionMethod.ILLC, mode, anchor, sigma, counter)


def compress(
    model: Mlp,
    X: np.ndarray,
    method: Union[str, CompressionMethod],
    gamma: float,
    seed: int = 0,
    **kwargs,
) -> ClusteredMlp:
    method = CompressionMethod(method)
    if method is CompressionMethod.ILLC:
        return compress_illc(model, X, gamma, seed, **kwargs)
    return compress_oneshot(model, X, gamma, seed, **kwargs)


@dataclass
class CompressConfig:
    """
    Parameters
    ----------
    method : str
        "illc" / "oneshot"
    gamma : float
        (0, 1]。圧縮率 r とは γ = 1 - r の関係
    seed : int
    mode : str
        "global" / "local"
    anchor_index : int, optional
        local のときのアンカー (Δ の行番号)
    sigma : float, optional
        local のカーネル幅。None なら距離の中央値
    """

    method: str = CompressionMethod.ILLC.value
    gamma: float = 0.2
    seed: int = 0
    mode: str = AggregationMode.GLOBAL.value
    anchor_index: Optional[int] = None
    sigma: Optional[float] = None

    def __post_init__(self) -> None:
        try:
            self.method = CompressionMethod(self.method).value
            self.mode = AggregationMode(self.mode).value
        except ValueError as e:
            raise ConfigError(f"method / mode の指定が不正です: {e}") from None
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma は (0, 1] の範囲で指定してください: {self.gamma}")
        if self.mode == AggregationMode.LOCAL.value and self.anchor_index is None:
            raise ConfigError("local モードには anchor_index が必要です。")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"sigma は正である必要があります: {self.sigma}")

    @classmethod
    def from_rate(cls, rate: float, **kwargs) -> "CompressConfig":
        """圧縮率 r ∈ [0, 1) から γ = 1 - r で作る"""
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"圧縮率 rate は [0, 1) の範囲で指定してください: {rate}")
        return cls(gamma=1.0 - rate, **kwargs)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compress_with(
    model: Mlp, X: np.ndarray, config: CompressConfig, counter: Optional[LayerCounter] = None
) -> ClusteredMlp:
    anchor = config.anchor_index if config.mode == AggregationMode.LOCAL.value else None
    return compress(model, X, config.method, config.gamma, config.seed,
                    mode=config.mode, anchor=anchor, sigma=config.sigma, counter=counter)
