"""
data_loader モジュールのテスト。WDBC の読み込み・標準化・層化分割を確認する。
"""

import numpy as np
import pandas as pd
import pytest

from sparx_illc.data_loader import (
    Dataset,
    SplitConfig,
    dump_standardized,
    fit_standardize,
    load_wdbc,
    prepare,
    split,
)
from sparx_illc.errors import (
    ConfigError,
    DataFileNotFoundError,
    FieldCountError,
    NonNumericFeatureError,
    UnknownDiagnosisError,
)
from tests.conftest import write_wdbc_csv


def build_row(row_id: int = 1, diagnosis: str = "B", n_features: int = 30, value: str = "1.0") -> str:
    return ",".join([str(row_id), diagnosis] + [value] * n_features)


def test_load_wdbc_shapes(wdbc_csv):
    data = load_wdbc(wdbc_csv)
    assert len(data) == 569
    assert data.n_features == 30
    assert int(data.labels.sum()) == 212  # malignant
    assert data.feature_names[0] == "f1"


def test_load_wdbc_with_header(tmp_path):
    data = load_wdbc(write_wdbc_csv(tmp_path / "with_header.csv", header=True))
    assert len(data) == 569
    assert data.feature_names[0] == "mean_radius"


def test_load_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(DataFileNotFoundError, match="nope.csv"):
        load_wdbc(missing)


@pytest.mark.parametrize(
    "bad_row, error, message",
    [
        (build_row(3, "B", n_features=29), FieldCountError, "3 行目"),
        (build_row(3, "X"), UnknownDiagnosisError, "3 行目: 未知の診断ラベル"),
        (build_row(3, "M", value="abc"), NonNumericFeatureError, "3 行目: 数値でない"),
    ],
    ids=["field-count", "diagnosis", "non-numeric"],
)
def test_parse_errors_carry_row_number(tmp_path, bad_row, error, message):
    path = tmp_path / "bad.csv"
    path.write_text("\n".join([build_row(1), build_row(2, "M"), bad_row]) + "\n", encoding="utf-8")
    with pytest.raises(error, match=message) as exc:
        load_wdbc(path)
    assert exc.value.row == 3


def test_split_is_stratified_and_deterministic(wdbc_csv):
    data = load_wdbc(wdbc_csv)
    train, test = split(data, 0.2, seed=0)
    assert len(test) == 114 and len(train) == 455
    assert int(test.labels.sum()) == 42  # malignant
    assert int((test.labels == 0).sum()) == 72

    train2, test2 = split(data, 0.2, seed=0)
    assert np.array_equal(test.features, test2.features)
    assert np.array_equal(train.features, train2.features)

    _, test3 = split(data, 0.2, seed=1)
    assert not np.array_equal(test.features, test3.features)


def test_split_preserves_row_order_and_is_disjoint():
    features = np.arange(20, dtype=float).reshape(10, 2)
    data = Dataset(features, np.array([0, 1] * 5), ("a", "b"))
    train, test = split(data, 0.3, seed=5)
    train_ids = train.features[:, 0].tolist()
    test_ids = test.features[:, 0].tolist()
    assert train_ids == sorted(train_ids) and test_ids == sorted(test_ids)
    assert set(train_ids).isdisjoint(test_ids)
    assert len(train_ids) + len(test_ids) == 10


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
def test_split_rejects_fraction(fraction):
    data = Dataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]), ("a",))
    with pytest.raises(ConfigError, match="test_fraction"):
        split(data, fraction, seed=0)


def test_standardize_maps_constant_column_to_zero():
    features = np.column_stack([np.arange(6, dtype=float), np.full(6, 7.0)])
    data = Dataset(features, np.zeros(6), ("x", "const"))
    scaler = fit_standardize(data)
    out = scaler.transform(data).features
    assert np.allclose(out[:, 0].mean(), 0.0)
    assert np.allclose(out[:, 0].std(), 1.0)
    assert np.all(out[:, 1] == 0.0)


def test_prepare_fits_on_train_only(prepared_wdbc):
    train = prepared_wdbc.train.features
    assert np.allclose(train.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(train.std(axis=0), 1.0)
    assert len(prepared_wdbc.full) == 569
    assert prepared_wdbc.delta("test") is prepared_wdbc.test
    with pytest.raises(ConfigError):
        prepared_wdbc.delta("validation")


def test_standardizer_round_trip(prepared_wdbc, wdbc_csv):
    restored = type(prepared_wdbc.standardizer).from_dict(prepared_wdbc.standardizer.to_dict())
    again = prepare(SplitConfig(data_path=wdbc_csv), restored)
    assert np.array_equal(again.full.features, prepared_wdbc.full.features)


def test_dump_standardized(tmp_path, prepared_wdbc):
    path = dump_standardized(prepared_wdbc.test, tmp_path / "out" / "test.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns[:2]) == ["label", "f1"]
    assert len(frame) == 114


@pytest.mark.parametrize(
    "n_features, row",
    [(29, 5), (31, 5), (38, 5)],
    ids=["short", "one-extra", "many-extra"],
)
def test_field_count_row_counts_blank_lines(tmp_path, n_features, row):
    lines = [build_row(1), "", build_row(2, "M"), "", build_row(3, "B", n_features=n_features)]
    path = tmp_path / "blank.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(FieldCountError, match=f"{row} 行目") as exc:
        load_wdbc(path)
    assert exc.value.row == row


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "gaps.csv"
    path.write_text("\n".join([build_row(1), "", build_row(2, "M"), ""]) + "\n", encoding="utf-8")
    data = load_wdbc(path)
    assert len(data) == 2
    assert data.labels.tolist() == [0, 1]
