"""
aggregation.py

クラスタ化 MLP のパラメータを決める集約関数。

大域版
    Agg^b(C)      = (1/|C|) Σ_{i∈C} b_i
    Agg^e(C1, C2) = Σ_{i∈C1} (1/|C2|) Σ_{j∈C2} W[j, i]
局所版 (アンカー x 周りのカーネル重み π̂ 付き)
    Agg^e(C1, C2) = Σ_{x'} π̂_{x'} Σ_{i∈C1} O^M_{x'}(v_i) / (|C2| O^μ_{x'}(C1)) Σ_{j∈C2} W[j, i]
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from sparx_illc.cluster import LayerClustering
from sparx_illc.errors import ClusteringError, ConfigError, DimensionError
from sparx_illc.utils.kernel import locality_weights

# クラスタニューロンの活性がこれ以下なら、そのサンプルでは比率 1 (大域版の項) を使う。
# メンバーの活性は見ない
ACTIVATION_EPS = 1e-9


def _as_index(members: Sequence[int], size: int, what: str) -> np.ndarray:
    idx = np.asarray(members, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ClusteringError(f"{what} が空です。")
    if idx.min() < 0 or idx.max() >= size:
        raise DimensionError(f"{what} のインデックスが範囲外です (0..{size - 1})。")
    return idx


def agg_bias_global(biases: np.ndarray, members: Sequence[int]) -> float:
    biases = np.asarray(biases, dtype=np.float64)
    idx = _as_index(members, biases.shape[0], "members")
    return float(biases[idx].mean())


def agg_edge_global(W: np.ndarray, source: Sequence[int], target: Sequence[int]) -> float:
    """source 側 (列) は和、target 側 (行) は平均"""
    W = np.asarray(W, dtype=np.float64)
    c1 = _as_index(source, W.shape[1], "source cluster")
    c2 = _as_index(target, W.shape[0], "target cluster")
    return float(W[np.ix_(c2, c1)].mean(axis=0).sum())


def activation_ratios(
    orig_acts: np.ndarray, cluster_acts: np.ndarray, eps: float = ACTIVATION_EPS
) -> np.ndarray:
    """O^M_{x'}(v_i) / O^μ_{x'}(C(i))。分母が eps 以下の要素は 1。"""
    orig_acts = np.asarray(orig_acts, dtype=np.float64)
    cluster_acts = np.asarray(cluster_acts, dtype=np.float64)
    safe = cluster_acts > eps
    return np.where(safe, orig_acts / np.where(safe, cluster_acts, 1.0), 1.0)


def agg_edge_local(
    W: np.ndarray,
    source: Sequence[int],
    target: Sequence[int],
    orig_acts: np.ndarray,
    cluster_acts: np.ndarray,
    anchor: np.ndarray,
    sigma: float,
    neighborhood: np.ndarray,
) -> float:
    """
    局所エッジ集約。

    Parameters
    ----------
    W : np.ndarray
        (|V_{l+1}|, |V_l|) の元の重み
    source, target : sequence of int
        C1 (層 l)、C2 (層 l+1) のメンバー
    orig_acts : np.ndarray
        (N', |V_l|) 元ネットワークでの層 l の活性
    cluster_acts : np.ndarray
        (N',) 圧縮ネットワーク μ での C1 のクラスタニューロンの活性
    anchor : np.ndarray
        (F,) アンカー入力 x
    sigma : float
        カーネル幅
    neighborhood : np.ndarray
        (N', F) 近傍 Δ'
    """
    W = np.asarray(W, dtype=np.float64)
    c1 = _as_index(source, W.shape[1], "source cluster")
    c2 = _as_index(target, W.shape[0], "target cluster")
    neighborhood = np.atleast_2d(np.asarray(neighborhood, dtype=np.float64))
    if neighborhood.shape[0] == 0:
        raise ConfigError("近傍 Δ' が空です。")
    orig_acts = np.atleast_2d(np.asarray(orig_acts, dtype=np.float64))
    cluster_acts = np.asarray(cluster_acts, dtype=np.float64).ravel()
    if orig_acts.shape[0] != neighborhood.shape[0] or cluster_acts.shape[0] != neighborhood.shape[0]:
        raise DimensionError("活性テーブルの行数が近傍 Δ' のサンプル数と一致しません。")

    pi = locality_weights(neighborhood, anchor, sigma)
    ratios = activation_ratios(orig_acts[:, c1], cluster_acts[:, None])
    column_means = W[np.ix_(c2, c1)].mean(axis=0)
    return float(pi @ (ratios @ column_means))


# ──────────────────────────────
# 層単位のマージ (ILLC / 一括圧縮で共通)
# ──────────────────────────────
def merge_incoming(
    W_in: np.ndarray, b_in: np.ndarray, clustering: LayerClustering
) -> Tuple[np.ndarray, np.ndarray]:
    """層 l に入る重みの行とバイアスをクラスタ内平均でまとめる"""
    W_new = np.empty((clustering.k, W_in.shape[1]))
    b_new = np.empty(clustering.k)
    for c in range(clustering.k):
        members = clustering.members(c)
        W_new[c] = W_in[members].mean(axis=0)
        b_new[c] = agg_bias_global(b_in, members)
    return W_new, b_new


def merge_outgoing(
    W_out: np.ndarray, clustering: LayerClustering, multipliers: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    層 l から出る重みの列をクラスタ内で足し合わせる。

    multipliers を渡すとメンバー i の列に m_i を掛けてから足す (局所版)。
    """
    W_new = np.empty((W_out.shape[0], clustering.k))
    for c in range(clustering.k):
        members = clustering.members(c)
        cols = W_out[:, members]
        if multipliers is not None:
            cols = cols * multipliers[members]
        W_new[:, c] = cols.sum(axis=1)
    return W_new


def local_multipliers(
    orig_acts: np.ndarray, cluster_acts: np.ndarray, clustering: LayerClustering, pi: np.ndarray
) -> np.ndarray:
    """
    m_i = Σ_{x'} π̂_{x'} · O^M_{x'}(v_i) / O^μ_{x'}(C(i))

    orig_acts は元モデル M の層 l の活性 (N, |V_l|)、cluster_acts は μ の層 l の活性 (N, K)。
    """
    per_member = cluster_acts[:, clustering.labels]
    return pi @ activation_ratios(orig_acts, per_member)
