"""
metrics.py

元モデル M と圧縮モデル μ の忠実度・複雑度の指標。

- 入出力非忠実度 (大域 / 局所)
- 構造的非忠実度 (合計・層ごと・累積)
- 認知的複雑度 Ω(μ) = Π K_l
- 死にニューロン率

「大域」の値はサンプル平均 (÷|Δ|) を既定とし、生の総和も併せて返す。
局所版の重み π̂ は総和 1 に正規化したカーネル重み。
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from sparx_illc.compression.clustered import ClusteredMlp
from sparx_illc.errors import ClusteringError, DimensionError, MetricNotApplicableError
from sparx_illc.mlp import Activation, LayerCounter, Mlp, check_inputs, forward_collect, forward_hidden, predict
from sparx_illc.utils.kernel import locality_weights, median_pairwise_distance

logger = logging.getLogger(__name__)

DEAD_EPS = 1e-9

ModelLike = Union[Mlp, ClusteredMlp]


def _as_mlp(model: ModelLike) -> Mlp:
    return model.model if isinstance(model, ClusteredMlp) else model


def _output_gaps(
    original: Mlp, compressed: ModelLike, delta: np.ndarray, counter: Optional[LayerCounter] = None
) -> np.ndarray:
    """サンプルごとの Σ_v (O^M(v) - O^μ(v))^2"""
    mu = _as_mlp(compressed)
    if mu.input_dim != original.input_dim or mu.output_dim != original.output_dim:
        raise DimensionError(
            f"入出力次元が一致しません: M={original.input_dim}->{original.output_dim}, "
            f"μ={mu.input_dim}->{mu.output_dim}"
        )
    delta = check_inputs(original, delta)
    if delta.shape[0] == 0:
        raise DimensionError("Δ が空です。")
    gap = predict(original, delta, counter) - predict(mu, delta, counter)
    return (gap**2).sum(axis=1)


# ──────────────────────────────
# 入出力非忠実度
# ──────────────────────────────
def io_unfaithfulness_global(
    original: Mlp,
    compressed: ModelLike,
    delta: np.ndarray,
    normalize: bool = True,
    counter: Optional[LayerCounter] = None,
) -> float:
    """
    大域の入出力非忠実度。

    Parameters
    ----------
    original : Mlp
    compressed : Mlp or ClusteredMlp
    delta : np.ndarray
        (N, |V_0|) の評価データ Δ
    normalize : bool
        True ならサンプル平均、False なら生の総和
    """
    per_sample = _output_gaps(original, compressed, delta, counter)
    return float(per_sample.mean() if normalize else per_sample.sum())


def io_unfaithfulness_local(
    original: Mlp,
    compressed: ModelLike,
    delta: np.ndarray,
    anchor: np.ndarray,
    sigma: float,
    counter: Optional[LayerCounter] = None,
) -> float:
    """アンカー x 周りの π̂ で重み付けした入出力非忠実度"""
    pi = locality_weights(delta, anchor, sigma)
    per_sample = _output_gaps(original, compressed, delta, counter)
    return float(pi @ per_sample)


# ──────────────────────────────
# 構造的非忠実度
# ──────────────────────────────
@dataclass
class StructuralResult:
    total: float
    per_layer: np.ndarray
    cumulative: np.ndarray


def _check_alignment(original: Mlp, compressed: ClusteredMlp) -> None:
    if len(compressed.clustering) != original.depth:
        raise ClusteringError(
            f"クラスタリングの層数 {len(compressed.clustering)} が元モデルの深さ {original.depth} と一致しません。"
        )
    for l, lc in enumerate(compressed.clustering, start=1):
        if lc.labels.shape[0] != original.layer_sizes[l]:
            raise ClusteringError(
                f"層 {l}: ラベル数 {lc.labels.shape[0]} が元モデルの層サイズ {original.layer_sizes[l]} と一致しません。"
            )


def structural_unfaithfulness(
    original: Mlp,
    compressed: ClusteredMlp,
    delta: np.ndarray,
    anchor: Optional[np.ndarray] = None,
    sigma: Optional[float] = None,
    counter: Optional[LayerCounter] = None,
) -> StructuralResult:
    """
    各隠れニューロンとそのクラスタニューロンの活性の二乗差。

    anchor を渡すと π̂ 重み (局所版)、省略すると 1/|Δ| 重み (大域版)。
    O^M は元モデル、O^μ は圧縮モデル自身の順伝播から取る。

    Returns
    -------
    StructuralResult
        per_layer[l-1] が層 l の値、cumulative はその累積和
    """
    _check_alignment(original, compressed)
    delta = check_inputs(original, delta)
    n = delta.shape[0]
    if n == 0:
        raise DimensionError("Δ が空です。")
    if anchor is not None:
        if sigma is None:
            sigma = median_pairwise_distance(delta)
        weights = locality_weights(delta, anchor, sigma)
    else:
        weights = np.full(n, 1.0 / n)

    orig_stack = forward_hidden(original, delta, counter)
    mu_stack = forward_hidden(compressed.model, delta, counter)

    per_layer = np.empty(original.depth)
    for l, lc in enumerate(compressed.clustering, start=1):
        diff = orig_stack.hidden(l) - mu_stack.hidden(l)[:, lc.labels]
        per_layer[l - 1] = float(weights @ (diff**2).sum(axis=1))
    return StructuralResult(total=float(per_layer.sum()), per_layer=per_layer, cumulative=np.cumsum(per_layer))


# ──────────────────────────────
# 複雑度・死にニューロン
# ──────────────────────────────
def cognitive_complexity(model: ModelLike) -> Tuple[int, float]:
    """Ω = Π_{l=1..d+1} K_l を Python int (桁あふれなし) と log10 で返す"""
    sizes = _as_mlp(model).layer_sizes[1:]
    omega = math.prod(sizes)
    return omega, float(sum(math.log10(k) for k in sizes))


def dead_neuron_ratio(model: Mlp, delta: np.ndarray) -> np.ndarray:
    """
    隠れ層ごとの、Δ の全サンプルで後活性 <= 1e-9 のニューロンの割合。

    Raises
    ------
    MetricNotApplicableError
        隠れ層が ReLU でないとき
    """
    if model.activation is not Activation.RELU:
        raise MetricNotApplicableError(f"死にニューロン率は ReLU 専用です (activation={model.activation.value})")
    stack = forward_hidden(model, delta)
    return np.array([float(np.all(stack.hidden(l) <= DEAD_EPS, axis=0).mean())
                     for l in range(1, model.depth + 1)])


def label_agreement(original: Mlp, compressed: ModelLike, delta: np.ndarray) -> float:
    """0.5 で二値化した予測が M と μ で一致するサンプルの割合"""
    a = predict(original, delta) >= 0.5
    b = predict(_as_mlp(compressed), delta) >= 0.5
    return float((a == b).all(axis=1).mean())


def _accuracy(model: Mlp, delta: np.ndarray, labels: np.ndarray) -> float:
    out = forward_collect(model, delta).output
    y = np.asarray(labels).reshape(out.shape[0], -1)
    return float(((out >= 0.5) == (y >= 0.5)).all(axis=1).mean())


# ──────────────────────────────
# まとめ
# ──────────────────────────────
@dataclass
class EvalReport:
    io_global: float
    io_global_sum: float
    structural: float
    structural_per_layer: List[float]
    structural_cumulative: List[float]
    cognitive_complexity: int
    cognitive_complexity_log10: float
    label_agreement: float
    io_local: Optional[float] = None
    structural_local: Optional[float] = None
    dead_ratio_per_layer: Optional[List[float]] = None
    compressed_dead_ratio_per_layer: Optional[List[float]] = None
    accuracy_original: Optional[float] = None
    accuracy_compressed: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def layer_frame(self) -> pd.DataFrame:
        """layer,structural,cumulative,dead_ratio の表 (層ごとの推移プロット用)"""
        d = len(self.structural_per_layer)
        dead = self.dead_ratio_per_layer if self.dead_ratio_per_layer is not None else [np.nan] * d
        return pd.DataFrame(
            {
                "layer": list(range(1, d + 1)),
                "structural": self.structural_per_layer,
                "cumulative": self.structural_cumulative,
                "dead_ratio": dead,
            }
        )


def _dead_or_none(model: Mlp, delta: np.ndarray) -> Optional[List[float]]:
    try:
        return dead_neuron_ratio(model, delta).tolist()
    except MetricNotApplicableError as e:
        logger.info(f"dead ratio skipped: {e}")
        return None


def evaluate(
    original: Mlp,
    compressed: ClusteredMlp,
    delta: np.ndarray,
    labels: Optional[np.ndarray] = None,
    anchor: Optional[np.ndarray] = None,
    sigma: Optional[float] = None,
    metadata: Optional[Dict[str, Any]] = None,
    counter: Optional[LayerCounter] = None,
) -> EvalReport:
    """
    すべての指標を計算して EvalReport にまとめる。

    anchor を渡すと io_local と structural_local も計算する (σ 省略時は Δ の距離の中央値)。
    """
    delta = check_inputs(original, delta)
    gaps = _output_gaps(original, compressed, delta, counter)
    structural = structural_unfaithfulness(original, compressed, delta, counter=counter)
    omega, omega_log10 = cognitive_complexity(compressed)

    meta = dict(metadata or {})
    meta.update(
        {
            "method": compressed.method.value,
            "mode": compressed.mode.value,
            "gamma": compressed.gamma,
            "seed": compressed.seed,
            "origin_hash": compressed.origin,
            "delta_size": int(delta.shape[0]),
            "io_normalization": "mean",
        }
    )

    report = EvalReport(
        io_global=float(gaps.mean()),
        io_global_sum=float(gaps.sum()),
        structural=structural.total,
        structural_per_layer=structural.per_layer.tolist(),
        structural_cumulative=structural.cumulative.tolist(),
        cognitive_complexity=omega,
        cognitive_complexity_log10=omega_log10,
        label_agreement=label_agreement(original, compressed, delta),
        dead_ratio_per_layer=_dead_or_none(original, delta),
        compressed_dead_ratio_per_layer=_dead_or_none(compressed.model, delta),
        metadata=meta,
    )

    if anchor is not None:
        if sigma is None:
            sigma = median_pairwise_distance(delta)
        anchor = np.asarray(anchor, dtype=np.float64).ravel()
        report.io_local = float(locality_weights(delta, anchor, sigma) @ gaps)
        report.structural_local = structural_unfaithfulness(
            original, compressed, delta, anchor=anchor, sigma=sigma, counter=counter
        ).total
        meta.update({"anchor": anchor.tolist(), "sigma": float(sigma)})

    if labels is not None:
        report.accuracy_original = _accuracy(original, delta, labels)
        report.accuracy_compressed = _accuracy(compressed.model, delta, labels)

    logger.info(
        f"io_global={report.io_global:.6g} structural={report.structural:.6g} "
        f"omega=10^{omega_log10:.3f} agreement={report.label_agreement:.4f}"
    )
    return report
