"""
kernel.py

局所版の指標・エッジ集約で使う距離カーネル
π_{x',x} = exp(-D(x', x)^2 / σ^2) （D はユークリッド距離）。
"""

from __future__ import annotations

import numpy as np

from sparx_illc.errors import ConfigError, DimensionError


def locality_weights(
    neighborhood: np.ndarray, anchor: np.ndarray, sigma: float, normalize: bool = True
) -> np.ndarray:
    """
    近傍 Δ' の各サンプルに対するカーネル重みを返す。

    Parameters
    ----------
    neighborhood : np.ndarray
        (N', F) の近傍サンプル
    anchor : np.ndarray
        (F,) のアンカー入力 x
    sigma : float
        カーネル幅 (> 0)
    normalize : bool
        True なら総和 1 に正規化した π̂ を返す

    Returns
    -------
    np.ndarray
        (N',) の重み
    """
    if not sigma > 0:
        raise ConfigError(f"sigma は正である必要があります (sigma={sigma})")
    neighborhood = np.atleast_2d(np.asarray(neighborhood, dtype=np.float64))
    anchor = np.asarray(anchor, dtype=np.float64).ravel()
    if neighborhood.shape[0] == 0:
        raise ConfigError("近傍 Δ' が空です。")
    if neighborhood.shape[1] != anchor.shape[0]:
        raise DimensionError(
            f"アンカーの次元 {anchor.shape[0]} が近傍の次元 {neighborhood.shape[1]} と一致しません。"
        )

    sq_dist = ((neighborhood - anchor) ** 2).sum(axis=1)
    logits = -sq_dist / (sigma * sigma)
    if not normalize:
        return np.exp(logits)
    # 遠いアンカーでも全要素がアンダーフローしないよう最大値で引いてから正規化
    w = np.exp(logits - logits.max())
    return w / w.sum()


def median_pairwise_distance(points: np.ndarray) -> float:
    """σ の既定値。異なるサンプル間ユークリッド距離の中央値。"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    if n < 2:
        return 1.0
    sq = (points**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    iu = np.triu_indices(n, k=1)
    median = float(np.median(np.sqrt(d2[iu])))
    # 全点が同一なら 1.0 にフォールバック
    return median if median > 0 else 1.0
