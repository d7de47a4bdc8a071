"""
共通フィクスチャ。

scikit-learn 同梱の Breast Cancer Wisconsin (Diagnostic) を
UCI 配布形式 (id,diagnosis,f1..f30、ヘッダなし) の CSV に書き出して使う。
ネットワークや外部ファイルには依存しない。
"""

from pathlib import Path

import numpy as np
import pytest
from sklearn.datasets import load_breast_cancer

from sparx_illc.data_loader import SplitConfig, prepare


def write_wdbc_csv(path: Path, header: bool = False) -> Path:
    bunch = load_breast_cancer()
    lines = []
    if header:
        lines.append(",".join(["id", "diagnosis"] + [n.replace(" ", "_") for n in bunch.feature_names]))
    for i, (row, target) in enumerate(zip(bunch.data, bunch.target), start=1):
        # scikit-learn は 0 = malignant, 1 = benign
        diagnosis = "M" if target == 0 else "B"
        lines.append(",".join([str(842300 + i), diagnosis] + [repr(float(v)) for v in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def wdbc_csv(tmp_path_factory) -> Path:
    return write_wdbc_csv(tmp_path_factory.mktemp("data") / "wdbc.csv")


@pytest.fixture(scope="session")
def prepared_wdbc(wdbc_csv):
    return prepare(SplitConfig(data_path=wdbc_csv, test_fraction=0.2, split_seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
