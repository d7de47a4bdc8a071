"""
sweep.py

層数 × 幅 × 手法 × シードのグリッドで「学習 → 圧縮 → 評価」を回し、
1 行 = 1 (layers, width, method, seed) の結果表を作る実験ハーネス。

モデルの学習は (layers, width, seed) ごとに 1 回だけ行い、
同じモデルを ILLC と従来法の両方で圧縮して比較する。
"""

from __future__ import annotations

import logging
import multiprocessing as mp
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from sparx_illc.compression.clustered import CompressConfig, compress_with
from sparx_illc.data_loader import Dataset, PreparedData
from sparx_illc.errors import ConfigError, SweepIncompleteError, ValidationError
from sparx_illc.metrics import (
    cognitive_complexity,
    io_unfaithfulness_global,
    io_unfaithfulness_local,
    structural_unfaithfulness,
)
from sparx_illc.train import TrainConfig, accuracy, train
from sparx_illc.utils.io import write_csv
from sparx_illc.utils.kernel import median_pairwise_distance
from sparx_illc.utils.rng import SplitMix64

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["layers", "width", "method", "seed", "io", "structural", "omega_log10"]
# 学習の出来は記録するだけで、結果表 CSV とは別のファイルに書く
ACCURACY_COLUMN = "train_accuracy"
SCOPES = ("global", "local")


def pick_anchors(n: int, count: int, seed: int) -> List[int]:
    """Δ の行番号から count 個のアンカーを決定的に選ぶ"""
    if count < 1:
        raise ConfigError(f"anchors は 1 以上で指定してください: {count}")
    return SplitMix64(seed).permutation(n)[: min(count, n)]


def run_job(
    layers: int,
    width: int,
    seed: int,
    config: Dict,
    train_data: Dataset,
    delta: np.ndarray,
) -> List[Dict]:
    """
    1 つの (layers, width, seed) について学習し、全手法で圧縮・評価する。

    Returns
    -------
    list[dict]
        config["methods"] の順に 1 手法 1 行
    """
    train_opts = config.get("train", {})
    train_config = TrainConfig(
        hidden_layers=layers,
        hidden_width=width,
        epochs=train_opts.get("epochs", 100),
        batch_size=train_opts.get("batch_size", 32),
        learning_rate=train_opts.get("learning_rate", 0.01),
        init=train_opts.get("init", "he"),
        seed=seed,
    )
    model = train(train_data, train_config)
    train_acc = accuracy(model, train_data.features, train_data.labels)
    logger.info(f"[layers={layers} width={width} seed={seed}] train accuracy {train_acc:.4f}")

    rate = config.get("rate", 0.8)
    scope = config.get("scope", "global")
    rows: List[Dict] = []
    for method in config["methods"]:
        if scope == "global":
            mu = compress_with(model, delta, CompressConfig.from_rate(rate, method=method, seed=seed))
            io = io_unfaithfulness_global(model, mu, delta)
            structural = structural_unfaithfulness(model, mu, delta).total
        else:
            sigma = config.get("sigma") or median_pairwise_distance(delta)
            io_values, st_values = [], []
            for anchor in pick_anchors(delta.shape[0], config.get("anchors", 3), seed):
                local_config = CompressConfig.from_rate(
                    rate, method=method, seed=seed, mode="local", anchor_index=anchor, sigma=sigma
                )
                mu = compress_with(model, delta, local_config)
                io_values.append(io_unfaithfulness_local(model, mu, delta, delta[anchor], sigma))
                st_values.append(
                    structural_unfaithfulness(model, mu, delta, anchor=delta[anchor], sigma=sigma).total
                )
            io = float(np.mean(io_values))
            structural = float(np.mean(st_values))

        _, omega_log10 = cognitive_complexity(mu)
        rows.append(
            {
                "layers": layers,
                "width": width,
                "method": method,
                "seed": seed,
                "io": io,
                "structural": structural,
                "omega_log10": omega_log10,
                ACCURACY_COLUMN: train_acc,
            }
        )
    return rows


def _safe_run_job(*args) -> Optional[List[Dict]]:
    """数値エラー (発散・非有限値) のジョブだけ None にする。それ以外の例外はそのまま上げる"""
    try:
        return run_job(*args)
    except (ArithmeticError, ValidationError):
        layers, width, seed = args[:3]
        logger.error(f"[layers={layers} width={width} seed={seed}] job failed, skipped", exc_info=True)
        return None


class CompressionSweep:
    """
    Parameters
    ----------
    data : PreparedData
        標準化・分割済みのデータ。学習は train、圧縮と評価は config["delta"] で選んだ Δ
    config : dict
        layers / widths / methods / seeds (グリッド)、rate、scope ("global" / "local")、
        anchors、sigma、delta、processes、train (epochs などの dict)
    """

    def __init__(self, data: PreparedData, config: Dict) -> None:
        self.data = data
        self.config = dict(config)
        self.layers: List[int] = list(self.config.get("layers", []))
        self.widths: List[int] = list(self.config.get("widths", []))
        self.methods: List[str] = list(self.config.get("methods", ["illc", "oneshot"]))
        self.seeds: List[int] = list(self.config.get("seeds", [0]))
        self.config["methods"] = self.methods
        self.failed_jobs: List[Tuple[int, int, int]] = []
        self._validate()

    def _validate(self) -> None:
        if not (self.layers and self.widths and self.methods and self.seeds):
            raise ConfigError("スイープのグリッド (layers / widths / methods / seeds) が空です。")
        for m in self.methods:
            if m not in ("illc", "oneshot"):
                raise ConfigError(f"未知の手法です: {m!r}")
        if self.config.get("scope", "global") not in SCOPES:
            raise ConfigError(f"scope は {SCOPES} のいずれかです: {self.config.get('scope')!r}")
        rate = self.config.get("rate", 0.8)
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"圧縮率 rate は [0, 1) の範囲で指定してください: {rate}")

    @property
    def jobs(self) -> List[Tuple[int, int, int]]:
        return [(l, w, s) for l in self.layers for w in self.widths for s in self.seeds]

    # ──────────────────────────────
    # パブリック API
    # ──────────────────────────────
    def run(self) -> pd.DataFrame:
        """グリッド順 (layers → width → method → seed) に並んだ結果表を返す"""
        delta = self.data.delta(self.config.get("delta", "full")).features
        args = [(l, w, s, self.config, self.data.train, delta) for l, w, s in self.jobs]
        processes = self.config.get("processes", 1)
        logger.info(f"Running {len(args)} sweep jobs x {len(self.methods)} methods (processes={processes})")

        if processes > 1:
            with mp.Pool(processes=processes) as pool:
                results = pool.starmap(_safe_run_job, args)
        else:
            results = [_safe_run_job(*a) for a in tqdm(args, desc="Sweep")]

        rows = [row for r in results if r is not None for row in r]
        self.failed_jobs = [job for job, r in zip(self.jobs, results) if r is None]
        if self.failed_jobs:
            logger.warning(
                f"{len(self.failed_jobs)} sweep jobs failed and were skipped "
                f"({len(rows)} of {len(self.jobs) * len(self.methods)} rows)"
            )

        frame = pd.DataFrame(rows, columns=RESULT_COLUMNS + [ACCURACY_COLUMN])
        order = {
            "layers": {v: i for i, v in enumerate(self.layers)},
            "width": {v: i for i, v in enumerate(self.widths)},
            "method": {v: i for i, v in enumerate(self.methods)},
            "seed": {v: i for i, v in enumerate(self.seeds)},
        }
        frame = frame.sort_values(
            by=list(order), key=lambda col: col.map(order[col.name]), kind="stable"
        ).reset_index(drop=True)
        logger.info(f"Sweep finished: {len(frame)} rows")
        return frame

    def check_complete(self) -> None:
        """直前の run() で欠けた行があれば SweepIncompleteError"""
        if self.failed_jobs:
            raise SweepIncompleteError(self.failed_jobs, len(self.failed_jobs) * len(self.methods))

    @staticmethod
    def save(frame: pd.DataFrame, path, append: bool = False):
        """
        結果表を path に、学習データ正解率を <path>.accuracy.csv に書く。

        正解率は (layers, width, seed) ごとに 1 行。
        """
        path = Path(path)
        out = write_csv(path, frame[RESULT_COLUMNS], append=append)
        if ACCURACY_COLUMN in frame:
            accuracies = frame[["layers", "width", "seed", ACCURACY_COLUMN]].drop_duplicates(
                subset=["layers", "width", "seed"]
            )
            write_csv(accuracy_path(path), accuracies, append=append)
        return out


def accuracy_path(path: Path) -> Path:
    """sweep.csv → sweep.accuracy.csv"""
    path = Path(path)
    return path.with_name(f"{path.stem}.accuracy.csv")


def summarize(frame: pd.DataFrame, keys: Sequence[str] = ("layers", "width", "method")) -> pd.DataFrame:
    """シード平均の表 (手法間比較用)"""
    values = [c for c in ("io", "structural", "omega_log10", ACCURACY_COLUMN) if c in frame]
    return frame.groupby(list(keys), sort=False)[values].mean().reset_index()
