"""
cluster.py

隠れニューロンの活性化プロファイル (A_l^T の各行 = 1 ニューロン) を
k-means でクラスタリングする。

- 初期化は k-means++ (SplitMix64 で乱数を固定)
- Lloyd 反復は割り当てが不変になるか 300 回で終了
- 空クラスタは「自クラスタ重心から最も遠い点」を奪って埋める
- 最近傍重心が同距離なら番号の小さい重心を選ぶ
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from sparx_illc.errors import ClusteringError, ConfigError
from sparx_illc.utils.rng import SplitMix64

logger = logging.getLogger(__name__)

MAX_ITER = 300


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: List[float] = field(default_factory=list)


@dataclass
class LayerClustering:
    """
    Parameters
    ----------
    layer_index : int
        1..d の隠れ層番号
    labels : np.ndarray
        (|V_l|,) のクラスタ番号 (0..k-1、出現順に振り直し済み)
    k : int
        クラスタ数 K_l
    """

    layer_index: int
    labels: np.ndarray
    k: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.k < 1 or self.labels.size < self.k:
            raise ClusteringError(f"層 {self.layer_index}: k={self.k} が不正です。")
        used = np.unique(self.labels)
        if used.size != self.k or used[0] != 0 or used[-1] != self.k - 1:
            raise ClusteringError(
                f"層 {self.layer_index}: クラスタ番号が 0..{self.k - 1} をちょうど使っていません。"
            )

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def to_dict(self) -> dict:
        return {"layer": self.layer_index, "k": self.k, "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "LayerClustering":
        return cls(layer_index=int(payload["layer"]), labels=np.array(payload["labels"]), k=int(payload["k"]))


# ──────────────────────────────
# k-means
# ──────────────────────────────
def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    p2 = (points**2).sum(axis=1)[:, None]
    c2 = (centroids**2).sum(axis=1)[None, :]
    return np.maximum(p2 - 2.0 * points @ centroids.T + c2, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    m = points.shape[0]
    chosen = [rng.below(m)]
    closest = _sq_distances(points, points[chosen[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # 残りがすべて既存中心と同一点: 未選択の点から一様に選ぶ
            taken = set(chosen)
            remaining = [i for i in range(m) if i not in taken]
            idx = remaining[rng.below(len(remaining))]
        else:
            cum = np.cumsum(closest)
            idx = int(np.searchsorted(cum, rng.uniform() * total, side="right"))
            idx = min(idx, m - 1)
            if closest[idx] <= 0.0:
                idx = int(np.flatnonzero(closest > 0.0)[-1])
        chosen.append(idx)
        closest = np.minimum(closest, _sq_distances(points, points[idx][None, :])[:, 0])
    return points[chosen].copy()


def _repair_empty(labels: np.ndarray, point_dist: np.ndarray, k: int) -> np.ndarray:
    """空クラスタに、2 点以上のクラスタから重心に最も遠い点を移す"""
    labels = labels.copy()
    dist = point_dist.copy()
    sizes = np.bincount(labels, minlength=k)
    for j in range(k):
        if sizes[j] > 0:
            continue
        donors = sizes[labels] > 1
        candidates = np.where(donors, dist, -np.inf)
        victim = int(np.argmax(candidates))
        sizes[labels[victim]] -= 1
        labels[victim] = j
        sizes[j] = 1
        dist[victim] = 0.0
    return labels


def _update_centroids(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centroids = np.empty((k, points.shape[1]))
    for j in range(k):
        centroids[j] = points[labels == j].mean(axis=0)
    return centroids


def _inertia(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER) -> KMeansResult:
    """
    Parameters
    ----------
    points : np.ndarray
        (M, N) の点集合
    k : int
        1 <= k <= M
    seed : int

    Returns
    -------
    KMeansResult
        labels は空クラスタなし
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ClusteringError("points は 2 次元配列である必要があります。")
    m = points.shape[0]
    if not 1 <= k <= m:
        raise ClusteringError(f"k={k} は 1 以上 点数 {m} 以下である必要があります。")
    if not np.all(np.isfinite(points)):
        raise ClusteringError("points に NaN または inf が含まれています。")

    rng = SplitMix64(seed)
    centroids = _kmeans_pp(points, k, rng)
    labels = None
    history: List[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_distances(points, centroids)
        assigned = np.argmin(d2, axis=1)
        assigned = _repair_empty(assigned, d2[np.arange(m), assigned], k)
        if labels is not None and np.array_equal(assigned, labels):
            break
        labels = assigned
        centroids = _update_centroids(points, labels, k)
        history.append(_inertia(points, centroids, labels))

    inertia = _inertia(points, centroids, labels)
    logger.debug(f"kmeans: M={m} k={k} iterations={n_iter} inertia={inertia:.6g}")
    return KMeansResult(labels=labels, centroids=centroids, inertia=inertia,
                        n_iter=n_iter, inertia_history=history)


# ──────────────────────────────
# 層単位のクラスタリング
# ──────────────────────────────
def n_clusters(gamma: float, width: int) -> int:
    """K_l = max(1, round(γ·|V_l|))。四捨五入は half-up。"""
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma は (0, 1] の範囲で指定してください: {gamma}")
    return min(width, max(1, int(math.floor(gamma * width + 0.5))))


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """クラスタ番号を出現順 (ニューロン番号順) に振り直す"""
    mapping = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def cluster_layer(
    activations: np.ndarray, gamma: float, seed: int, layer_index: int = 1
) -> LayerClustering:
    """
    (N, |V_l|) の活性化を転置してニューロン単位でクラスタリングする。

    γ=1 なら各ニューロンが単独クラスタとなり、labels は 0..|V_l|-1 の恒等ラベルになる。
    """
    activations = np.asarray(activations, dtype=np.float64)
    width = activations.shape[1]
    k = n_clusters(gamma, width)
    if not np.any(activations):
        logger.warning(f"Layer {layer_index}: all activations are zero (all neurons dead)")
    result = kmeans(activations.T, k, seed)
    return LayerClustering(layer_index=layer_index, labels=canonical_labels(result.labels), k=k)
