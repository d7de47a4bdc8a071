"""
data_loader.py

UCI Breast Cancer Wisconsin (Diagnostic) = WDBC の CSV を読み込み、
標準化と層化 train/test 分割を行うモジュール。

CSV 形式
---------
id,diagnosis,f1,...,f30   (diagnosis は M / B、ヘッダ行は任意)
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sparx_illc.errors import (
    ConfigError,
    DataFileNotFoundError,
    DimensionError,
    FieldCountError,
    NonNumericFeatureError,
    UnknownDiagnosisError,
)
from sparx_illc.utils.io import write_csv
from sparx_illc.utils.rng import SplitMix64

logger = logging.getLogger(__name__)

N_FEATURES = 30
N_FIELDS = N_FEATURES + 2
DIAGNOSIS_LABELS = {"M": 1, "B": 0}
CONSTANT_STD = 1e-12


@dataclass
class Dataset:
    """
    Parameters
    ----------
    features : np.ndarray
        (N, F) の特徴量
    labels : np.ndarray
        (N,) の 0/1 ラベル (0 = benign, 1 = malignant)
    feature_names : tuple[str, ...]
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"features {self.features.shape} と labels {self.labels.shape} の行数が一致しません。"
            )
        if len(self.feature_names) != self.features.shape[1]:
            raise DimensionError("feature_names の数が特徴量の列数と一致しません。")
        self.feature_names = tuple(self.feature_names)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels.copy(), self.feature_names)


# ──────────────────────────────
# 読み込み
# ──────────────────────────────
def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _read_records(path: Path) -> List[Tuple[int, List[str]]]:
    """
    (ファイル上の行番号, フィールドのリスト) の列を返す。空行は飛ばすが行番号は数え続ける。

    N_FIELDS + 1 列まで受けて、足りない列は NaN になるので後でフィールド数を検査できる。
    それより長い行は pandas が ParserError を出す。
    """
    try:
        raw = pd.read_csv(
            path,
            header=None,
            names=range(N_FIELDS + 1),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raise FieldCountError("データ行がありません。", row=1) from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise FieldCountError(
            f"フィールド数が多すぎます (期待値 {N_FIELDS})", row=int(match.group(1)) if match else None
        ) from e

    raw.index = raw.index + 1
    records = []
    for row, values in raw.iterrows():
        parts = [v.strip() for v in values.dropna()]
        if parts:
            records.append((int(row), parts))
    return records


def load_wdbc(path: Path) -> Dataset:
    """
    WDBC CSV を読み込む。行順はファイルのまま。

    Raises
    ------
    DataFileNotFoundError
        ファイルが存在しない
    FieldCountError / NonNumericFeatureError / UnknownDiagnosisError
        該当行番号つきの解析エラー
    """
    path = Path(path)
    if not path.exists():
        raise DataFileNotFoundError(f"データファイルが見つかりません: {path}")

    records = _read_records(path)
    if not records:
        raise FieldCountError("データ行がありません。", row=1)

    first_row, first = records[0]
    has_header = not _is_number(first[0]) and (len(first) < 2 or first[1] not in DIAGNOSIS_LABELS)
    if has_header:
        if len(first) != N_FIELDS:
            raise FieldCountError(f"ヘッダのフィールド数が {len(first)} です (期待値 {N_FIELDS})", row=first_row)
        feature_names = tuple(first[2:])
        body = records[1:]
    else:
        feature_names = tuple(f"f{i}" for i in range(1, N_FEATURES + 1))
        body = records

    features: List[List[float]] = []
    labels: List[int] = []
    for row, parts in body:
        if len(parts) != N_FIELDS:
            raise FieldCountError(f"フィールド数が {len(parts)} です (期待値 {N_FIELDS})", row=row)
        diagnosis = parts[1].upper()
        if diagnosis not in DIAGNOSIS_LABELS:
            raise UnknownDiagnosisError(f"未知の診断ラベル {parts[1]!r} (M または B)", row=row)
        values = pd.to_numeric(pd.Series(parts[2:]), errors="coerce")
        if values.isna().any():
            bad = parts[2 + int(np.flatnonzero(values.isna().to_numpy())[0])]
            raise NonNumericFeatureError(f"数値でない特徴量 {bad!r}", row=row)
        features.append(values.to_list())
        labels.append(DIAGNOSIS_LABELS[diagnosis])

    if not features:
        raise FieldCountError("データ行がありません。", row=first_row + (1 if has_header else 0))

    logger.info(f"Loaded {len(labels)} samples x {N_FEATURES} features from {path}")
    return Dataset(np.array(features, dtype=np.float64), np.array(labels), feature_names)


# ──────────────────────────────
# 標準化
# ──────────────────────────────
@dataclass
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray

    def transform(self, data: Dataset) -> Dataset:
        return data.with_features(self.transform_array(data.features))

    def transform_array(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.means.shape[0]:
            raise DimensionError(f"列数 {X.shape[-1]} が標準化パラメータ {self.means.shape[0]} と一致しません。")
        safe_std = np.where(self.constant, 1.0, self.stds)
        out = (X - self.means) / safe_std
        return np.where(self.constant, 0.0, out)

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "constant": self.constant.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Standardizer":
        return cls(
            means=np.array(payload["means"], dtype=np.float64),
            stds=np.array(payload["stds"], dtype=np.float64),
            constant=np.array(payload["constant"], dtype=bool),
        )


def fit_standardize(train: Dataset) -> Standardizer:
    """列ごとの平均と母標準偏差 (除数 N)。std < 1e-12 の列は定数列として 0 に変換する。"""
    if len(train) == 0:
        raise ConfigError("空のデータセットでは標準化パラメータを推定できません。")
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0, ddof=0)
    constant = stds < CONSTANT_STD
    if constant.any():
        logger.warning(f"Constant columns mapped to 0: {np.flatnonzero(constant).tolist()}")
    return Standardizer(means=means, stds=stds, constant=constant)


# ──────────────────────────────
# 分割
# ──────────────────────────────
def _allocate_test_counts(class_sizes: List[int], n_test: int) -> List[int]:
    """最大剰余法でクラスごとのテスト件数を割り当てる"""
    total = sum(class_sizes)
    quotas = [n_test * c / total for c in class_sizes]
    counts = [min(int(math.floor(q)), c) for q, c in zip(quotas, class_sizes)]
    remainders = sorted(
        range(len(class_sizes)), key=lambda k: (-(quotas[k] - math.floor(quotas[k])), k)
    )
    short = n_test - sum(counts)
    for k in remainders:
        if short <= 0:
            break
        if counts[k] < class_sizes[k]:
            counts[k] += 1
            short -= 1
    return counts


def split(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    層化 train/test 分割。

    Parameters
    ----------
    data : Dataset
    test_fraction : float
        (0, 1) のテスト比率。テスト件数は ceil(fraction * N)
    seed : int
        SplitMix64 のシード。クラス (ラベル昇順) ごとに同じ乱数列で Fisher–Yates

    Returns
    -------
    (train, test)
        いずれも元の行順を保つ
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction は (0, 1) の範囲で指定してください: {test_fraction}")
    n = len(data)
    if n < 2:
        raise ConfigError("分割には少なくとも 2 サンプル必要です。")

    n_test = int(math.ceil(test_fraction * n - 1e-9))
    n_test = min(max(n_test, 1), n - 1)

    classes = sorted(np.unique(data.labels).tolist())
    members = [np.flatnonzero(data.labels == c).tolist() for c in classes]
    counts = _allocate_test_counts([len(m) for m in members], n_test)

    rng = SplitMix64(seed)
    test_idx: List[int] = []
    for idx, k in zip(members, counts):
        rng.shuffle(idx)
        test_idx.extend(idx[:k])

    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train_ds = data.subset(np.flatnonzero(~mask))
    test_ds = data.subset(np.flatnonzero(mask))
    logger.debug(f"split: train={len(train_ds)} test={len(test_ds)} seed={seed}")
    return train_ds, test_ds


def dump_standardized(data: Dataset, path: Path) -> Path:
    """標準化済みデータを label,f1..fF 形式の CSV で書き出す"""
    columns = [f"f{i}" for i in range(1, data.n_features + 1)]
    frame = pd.DataFrame(data.features, columns=columns)
    frame.insert(0, "label", data.labels)
    return write_csv(Path(path), frame)


@dataclass
class SplitConfig:
    """学習・圧縮・評価で共有するデータ準備の設定"""

    data_path: Path
    test_fraction: float = 0.2
    split_seed: int = 0

    def __post_init__(self) -> None:
        self.data_path = Path(self.data_path)
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction は (0, 1) の範囲で指定してください: {self.test_fraction}")

    def to_dict(self) -> dict:
        return {
            "data_path": str(self.data_path),
            "test_fraction": self.test_fraction,
            "split_seed": self.split_seed,
        }


@dataclass
class PreparedData:
    full: Dataset
    train: Dataset
    test: Dataset
    standardizer: Standardizer

    def delta(self, which: str = "full") -> Dataset:
        """評価用データ Δ (既定は標準化済み全データ)"""
        if which == "full":
            return self.full
        if which == "train":
            return self.train
        if which == "test":
            return self.test
        raise ConfigError(f"Δ は full / train / test のいずれかです: {which!r}")


def prepare(config: SplitConfig, standardizer: Optional[Standardizer] = None) -> PreparedData:
    """読み込み → 分割 → train で標準化を推定 → 3 つすべてに適用"""
    raw = load_wdbc(config.data_path)
    train_raw, test_raw = split(raw, config.test_fraction, config.split_seed)
    scaler = standardizer if standardizer is not None else fit_standardize(train_raw)
    return PreparedData(
        full=scaler.transform(raw),
        train=scaler.transform(train_raw),
        test=scaler.transform(test_raw),
        standardizer=scaler,
    )
