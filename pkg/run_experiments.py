"""
run_experiments.py

ILLC と従来法 (SpArX) を WDBC 上で比較するグリッド実験のエントリーポイント。
設定はこのファイルの SWEEP_CONFIG で一元管理する。
"""

import logging
from pathlib import Path

from sparx_illc.data_loader import SplitConfig, prepare
from sparx_illc.pipeline.sweep import CompressionSweep, accuracy_path, summarize

# ログ設定
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")

if __name__ == "__main__":
    DATA_PATH = Path("data/wdbc.csv")

    # 実験設定を一元管理
    SWEEP_CONFIG = {
        "layers": [5, 10, 20],
        "widths": [100],
        "methods": ["illc", "oneshot"],
        "seeds": [0, 1, 2, 3, 4],
        "rate": 0.8,  # 圧縮率 (γ = 0.2)
        "scope": "global",  # "local" にするとアンカーごとの局所圧縮
        "anchors": 3,
        "delta": "full",
        "processes": 4,
        "train": {
            "epochs": 100,
            "batch_size": 32,
            "learning_rate": 0.01,
            "init": "he",
        },
    }

    data = prepare(SplitConfig(data_path=DATA_PATH, test_fraction=0.2, split_seed=0))
    sweep = CompressionSweep(data=data, config=SWEEP_CONFIG)
    results = sweep.run()

    out_path = Path("results") / f"sweep_{SWEEP_CONFIG['scope']}.csv"
    CompressionSweep.save(results, out_path)

    print("\n" + "=" * 40)
    print(summarize(results).to_string(index=False))
    print("=" * 40)
    print(f"保存先: {out_path} (学習データ正解率: {accuracy_path(out_path)})")

    # 失敗ジョブがあればここで止める
    sweep.check_complete()
