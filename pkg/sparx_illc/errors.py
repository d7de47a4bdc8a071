"""
errors.py

パッケージ共通の例外クラス。
いずれも組み込み例外を継承しているので、呼び出し側は ValueError などで
まとめて捕捉してもよい。
"""

from __future__ import annotations

from typing import List, Optional, Tuple


class ConfigError(ValueError):
    """設定値・引数の範囲外"""


class ProvenanceError(ConfigError):
    """圧縮モデルと元モデルの対応が取れない"""


class DimensionError(ValueError):
    """行列・ベクトルの形状不一致"""


class ValidationError(ValueError):
    """NaN / inf を含む入力など"""


class ActivationDomainError(ValueError):
    """逆活性化関数の定義域外"""


class ClusteringError(ValueError):
    """クラスタ数やクラスタリング結果の不整合"""


class QbafError(ValueError):
    """QBAF の構造不整合（宙に浮いたエッジなど）"""


class MetricNotApplicableError(ValueError):
    """指標がそのモデルに適用できない（例: ReLU 以外の死にニューロン率）"""


class DataFileNotFoundError(FileNotFoundError):
    """データファイルが存在しない"""


class DataParseError(ValueError):
    """
    CSV 解析エラーの基底クラス。

    Parameters
    ----------
    row : int
        ファイル上の行番号 (1 始まり、ヘッダ行を含む)
    """

    def __init__(self, message: str, row: Optional[int] = None) -> None:
        self.row = row
        if row is not None:
            message = f"{row} 行目: {message}"
        super().__init__(message)


class FieldCountError(DataParseError):
    pass


class NonNumericFeatureError(DataParseError):
    pass


class UnknownDiagnosisError(DataParseError):
    pass


class TrainingDivergedError(ArithmeticError):
    """学習中に損失が非有限値になった"""

    def __init__(self, epoch: int, loss: float) -> None:
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"epoch {epoch} で損失が発散しました (loss={loss})")


class SweepIncompleteError(ArithmeticError):
    """
    数値エラーで落ちたジョブがあり、スイープの結果表に行が欠けている。

    Parameters
    ----------
    failed : list[tuple[int, int, int]]
        失敗した (layers, width, seed)
    missing_rows : int
        欠けた行数 (失敗ジョブ数 × 手法数)
    """

    def __init__(self, failed: List[Tuple[int, int, int]], missing_rows: int) -> None:
        self.failed = list(failed)
        self.missing_rows = missing_rows
        jobs = ", ".join(f"(layers={l}, width={w}, seed={s})" for l, w, s in self.failed)
        super().__init__(f"{len(self.failed)} ジョブが失敗し {missing_rows} 行が欠けています: {jobs}")
