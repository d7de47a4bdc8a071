import math

import numpy as np
import pandas as pd
import pytest

from sparx_illc.errors import ConfigError, SweepIncompleteError
from sparx_illc.pipeline import sweep as sweep_module
from sparx_illc.pipeline.sweep import (
    ACCURACY_COLUMN,
    RESULT_COLUMNS,
    CompressionSweep,
    accuracy_path,
    pick_anchors,
    summarize,
)


def small_config(**overrides) -> dict:
    config = {
        "layers": [2, 1],
        "widths": [10],
        "methods": ["illc", "oneshot"],
        "seeds": [0, 1],
        "rate": 0.8,
        "scope": "global",
        "delta": "test",
        "processes": 1,
        "train": {"epochs": 2, "batch_size": 32, "learning_rate": 0.01},
    }
    config.update(overrides)
    return config


def test_sweep_grid_rows_and_order(prepared_wdbc):
    frame = CompressionSweep(prepared_wdbc, small_config()).run()
    assert list(frame.columns) == RESULT_COLUMNS + [ACCURACY_COLUMN]
    assert len(frame) == 8
    assert frame[ACCURACY_COLUMN].between(0.0, 1.0).all()
    # 同じモデルを両手法で圧縮するので正解率も同じ
    per_job = frame.groupby(["layers", "seed"])[ACCURACY_COLUMN].nunique()
    assert (per_job == 1).all()
    assert frame["layers"].tolist() == [2, 2, 2, 2, 1, 1, 1, 1]
    assert frame["method"].tolist() == ["illc", "illc", "oneshot", "oneshot"] * 2
    assert frame["seed"].tolist() == [0, 1] * 4
    # K = 2 per hidden layer, one output
    assert frame["omega_log10"].tolist() == pytest.approx([l * math.log10(2) for l in frame["layers"]])
    assert np.all(frame["io"] >= 0) and np.all(frame["structural"] >= 0)


def test_single_hidden_layer_methods_tie(prepared_wdbc):
    frame = CompressionSweep(prepared_wdbc, small_config(layers=[1], seeds=[0])).run()
    illc, oneshot = frame.itertuples(index=False)
    assert illc.io == oneshot.io
    assert illc.structural == oneshot.structural


def test_sweep_is_deterministic(prepared_wdbc):
    config = small_config(layers=[2], seeds=[3])
    pd.testing.assert_frame_equal(
        CompressionSweep(prepared_wdbc, config).run(), CompressionSweep(prepared_wdbc, config).run()
    )


def test_sweep_pool_matches_sequential(prepared_wdbc):
    sequential = CompressionSweep(prepared_wdbc, small_config(layers=[1, 2], seeds=[0])).run()
    pooled = CompressionSweep(prepared_wdbc, small_config(layers=[1, 2], seeds=[0], processes=2)).run()
    pd.testing.assert_frame_equal(sequential, pooled)


def test_local_scope(prepared_wdbc):
    frame = CompressionSweep(
        prepared_wdbc, small_config(layers=[2], seeds=[0], scope="local", anchors=2, sigma=5.0)
    ).run()
    assert len(frame) == 2
    assert frame["io"].notna().all()


def test_failed_job_is_skipped_and_reported(prepared_wdbc, monkeypatch):
    original = sweep_module.run_job

    def flaky(layers, width, seed, *rest):
        if seed == 1:
            raise FloatingPointError("boom")
        return original(layers, width, seed, *rest)

    monkeypatch.setattr(sweep_module, "run_job", flaky)
    sweep = CompressionSweep(prepared_wdbc, small_config(layers=[1]))
    frame = sweep.run()
    assert frame["seed"].tolist() == [0, 0]
    assert sweep.failed_jobs == [(1, 10, 1)]
    with pytest.raises(SweepIncompleteError, match="2 行") as exc:
        sweep.check_complete()
    assert exc.value.failed == [(1, 10, 1)]


def test_diverged_training_leaves_no_rows(prepared_wdbc):
    config = small_config(layers=[1], train={"epochs": 2, "batch_size": 32, "learning_rate": 1e308})
    sweep = CompressionSweep(prepared_wdbc, config)
    frame = sweep.run()
    assert frame.empty
    assert sweep.failed_jobs == [(1, 10, 0), (1, 10, 1)]
    with pytest.raises(SweepIncompleteError) as exc:
        sweep.check_complete()
    assert exc.value.missing_rows == 4


def test_non_numeric_failure_is_not_swallowed(prepared_wdbc, monkeypatch):
    def broken(*args):
        raise KeyError("methods")

    monkeypatch.setattr(sweep_module, "run_job", broken)
    with pytest.raises(KeyError):
        CompressionSweep(prepared_wdbc, small_config(layers=[1], seeds=[0])).run()


def test_complete_sweep_passes_check(prepared_wdbc):
    sweep = CompressionSweep(prepared_wdbc, small_config(layers=[1], seeds=[0]))
    sweep.run()
    sweep.check_complete()
    assert sweep.failed_jobs == []


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"layers": []}, "グリッド"),
        ({"methods": ["prune"]}, "手法"),
        ({"scope": "regional"}, "scope"),
        ({"rate": 1.0}, "rate"),
    ],
    ids=["empty-grid", "method", "scope", "rate"],
)
def test_sweep_config_errors(prepared_wdbc, overrides, message):
    with pytest.raises(ConfigError, match=message):
        CompressionSweep(prepared_wdbc, small_config(**overrides))


def test_save_append_writes_header_once(prepared_wdbc, tmp_path):
    frame = CompressionSweep(prepared_wdbc, small_config(layers=[1], seeds=[0])).run()
    path = tmp_path / "results" / "sweep.csv"
    CompressionSweep.save(frame, path)
    CompressionSweep.save(frame, path, append=True)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert sum(line.startswith("layers") for line in lines) == 1
    assert len(pd.read_csv(path)) == 4

    accuracies = pd.read_csv(accuracy_path(path))
    assert list(accuracies.columns) == ["layers", "width", "seed", ACCURACY_COLUMN]
    assert len(accuracies) == 2
    assert accuracy_path(path) == tmp_path / "results" / "sweep.accuracy.csv"


def test_summarize_averages_over_seeds():
    frame = pd.DataFrame(
        {
            "layers": [5, 5, 5, 5],
            "width": [100] * 4,
            "method": ["illc", "illc", "oneshot", "oneshot"],
            "seed": [0, 1, 0, 1],
            "io": [1.0, 3.0, 2.0, 4.0],
            "structural": [0.5, 0.5, 1.0, 2.0],
            "omega_log10": [6.5] * 4,
        }
    )
    summary = summarize(frame)
    assert summary["io"].tolist() == [2.0, 3.0]
    assert summary["structural"].tolist() == [0.5, 1.5]


def test_pick_anchors_is_deterministic():
    assert pick_anchors(50, 3, seed=7) == pick_anchors(50, 3, seed=7)
    assert len(set(pick_anchors(50, 3, seed=7))) == 3
    assert sorted(pick_anchors(2, 5, seed=0)) == [0, 1]
    with pytest.raises(ConfigError, match="anchors"):
        pick_anchors(10, 0, seed=0)
