#!/usr/bin/env python3
"""
illc.py

学習・圧縮・評価・スイープ・QBAF 書き出しをまとめたコマンドライン。

使い方::
    python -m scripts.illc train --data data/wdbc.csv --layers 5 --width 100 --seed 0 --output models/m.json
    python -m scripts.illc compress --model models/m.json --method illc --rate 0.8 --seed 0
    python -m scripts.illc evaluate --original models/m.json --compressed models/m.illc.json --scope global
    python -m scripts.illc sweep --data data/wdbc.csv --layers 5 10 20 --widths 100 --seeds 0 1 2
    python -m scripts.illc export-qbaf --model models/m.illc.json --format dot --output m.dot

終了コード: 0 成功 / 2 設定エラー / 3 入出力エラー / 4 数値エラー
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from sparx_illc.compression.clustered import SIDECAR_SUFFIX, ClusteredMlp, CompressConfig, compress_with
from sparx_illc.data_loader import PreparedData, SplitConfig, Standardizer, prepare
from sparx_illc.errors import ConfigError, DataParseError, ProvenanceError
from sparx_illc.metrics import evaluate
from sparx_illc.mlp import load_model, model_hash, save_model
from sparx_illc.pipeline.sweep import CompressionSweep
from sparx_illc.qbaf import export_qbaf, to_qbaf
from sparx_illc.train import TrainConfig, TrainingLog, accuracy, train
from sparx_illc.utils.io import read_json, sidecar_path, write_csv, write_json
from sparx_illc.utils.kernel import median_pairwise_distance

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

TRAIN_SUFFIX = "train"


# ───────────────────────────────────────────
#  引数
# ───────────────────────────────────────────
def _sigma(text: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma は 'auto' か正の数です: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"sigma は正である必要があります: {text}")
    return value


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(description="ILLC / SpArX compression of MLPs")
    p.add_argument("--verbose", action="store_true", help="DEBUG ログを出す")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="WDBC で MLP を学習")
    t.add_argument("--data", type=Path, required=True, help="WDBC CSV")
    t.add_argument("--layers", type=int, default=5, help="隠れ層の数")
    t.add_argument("--width", type=int, default=100, help="各隠れ層のニューロン数")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.01, help="学習率")
    t.add_argument("--init", choices=["he", "xavier", "gaussian"], default="he")
    t.add_argument("--activation", choices=["relu", "sigmoid", "tanh"], default="relu")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--test-fraction", type=float, default=0.2)
    t.add_argument("--output", type=Path, default=Path("models/model.json"))

    c = sub.add_parser("compress", help="学習済みモデルを ILLC / 従来法で圧縮")
    c.add_argument("--model", type=Path, required=True)
    c.add_argument("--method", choices=["illc", "oneshot"], default="illc")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--rate", type=float, help="圧縮率 r (既定 0.8)。γ = 1 - r")
    g.add_argument("--gamma", type=float, help="残す割合 γ (--rate の別名、γ = 1 - r)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mode", choices=["global", "local"], default="global")
    c.add_argument("--sample", type=int, help="local のアンカー (Δ の行番号)")
    c.add_argument("--sigma", type=_sigma, default=None, help="'auto' (距離の中央値) か正の数")
    c.add_argument("--data", type=Path, help="省略時は学習時の設定を使う")
    c.add_argument("--delta", choices=["full", "train", "test"], default="full", help="クラスタリング用データ Δ")
    c.add_argument("--output", type=Path, help="既定は <model>.<method>.json")

    e = sub.add_parser("evaluate", help="忠実度・複雑度を評価")
    e.add_argument("--original", type=Path, required=True)
    e.add_argument("--compressed", type=Path, required=True)
    e.add_argument("--scope", choices=["global", "local"], default="global")
    e.add_argument("--sample", type=int, help="local のアンカー (Δ の行番号)")
    e.add_argument("--sigma", type=_sigma, default=None, help="'auto' (距離の中央値) か正の数")
    e.add_argument("--data", type=Path)
    e.add_argument("--delta", choices=["full", "train", "test"], default="full")
    e.add_argument("--output", type=Path, help="既定は <compressed>.eval.json")

    s = sub.add_parser("sweep", help="layers × widths × methods × seeds のグリッド実験")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--layers", type=int, nargs="*", default=[5, 10, 20])
    s.add_argument("--widths", type=int, nargs="*", default=[100])
    s.add_argument("--methods", nargs="*", default=["illc", "oneshot"])
    s.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2, 3, 4])
    s.add_argument("--rate", type=float, default=0.8)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--lr", type=float, default=0.01, help="学習率")
    s.add_argument("--processes", type=int, default=1)
    s.add_argument("--scope", choices=["global", "local"], default="global")
    s.add_argument("--anchors", type=int, default=3, help="local のときのアンカー数")
    s.add_argument("--sigma", type=_sigma, default=None)
    s.add_argument("--delta", choices=["full", "train", "test"], default="full")
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.add_argument("--output", type=Path, default=Path("results/sweep.csv"))
    s.add_argument("--append", action="store_true", help="既存 CSV に追記")

    q = sub.add_parser("export-qbaf", help="QBAF を DOT / JSON で書き出す")
    q.add_argument("--model", type=Path, required=True)
    q.add_argument("--format", choices=["dot", "json"], default="dot")
    q.add_argument("--output", type=Path, help="省略時は標準出力")
    q.add_argument("--sample", type=int, help="入力論証の基礎スコアに使う Δ の行番号")
    q.add_argument("--data", type=Path)
    q.add_argument("--prune-quantile", type=float, help="DOT 表示で |重み| がこの分位点未満の辺を省く")

    return p.parse_args(argv)


# ───────────────────────────────────────────
#  ヘルパ
# ───────────────────────────────────────────
def _prepared_for(model_path: Path, data_override: Optional[Path]) -> PreparedData:
    """学習時サイドカーの分割・標準化を再現して Δ を作る"""
    meta_path = sidecar_path(model_path, TRAIN_SUFFIX)
    if meta_path.exists():
        meta = read_json(meta_path)
        split_meta = meta["split"]
        config = SplitConfig(
            data_path=data_override or Path(split_meta["data_path"]),
            test_fraction=split_meta["test_fraction"],
            split_seed=split_meta["split_seed"],
        )
        return prepare(config, Standardizer.from_dict(meta["standardizer"]))
    if data_override is None:
        raise ConfigError(f"{meta_path} がないため --data の指定が必要です。")
    return prepare(SplitConfig(data_path=data_override))


def _anchor_row(prepared: PreparedData, which: str, sample: Optional[int]):
    delta = prepared.delta(which)
    if sample is None:
        raise ConfigError("local スコープには --sample が必要です。")
    if not 0 <= sample < len(delta):
        raise ConfigError(f"--sample {sample} が Δ の範囲 0..{len(delta) - 1} の外です。")
    return delta.features[sample]


# ───────────────────────────────────────────
#  サブコマンド
# ───────────────────────────────────────────
def cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig(
        hidden_layers=args.layers,
        hidden_width=args.width,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        init=args.init,
        activation=args.activation,
    )
    split_config = SplitConfig(args.data, args.test_fraction, args.split_seed)
    prepared = prepare(split_config)

    log = TrainingLog()
    model = train(prepared.train, config, log=log, progress=True)
    test_acc = accuracy(model, prepared.test.features, prepared.test.labels)

    save_model(model, args.output)
    write_json(
        sidecar_path(args.output, TRAIN_SUFFIX),
        {
            "split": split_config.to_dict(),
            "standardizer": prepared.standardizer.to_dict(),
            "train": config.to_dict(),
            "final_loss": log.final_loss,
            "final_accuracy": log.final_accuracy,
            "test_accuracy": test_acc,
            "model_hash": model_hash(model),
        },
    )
    log_path = args.output.with_name(f"{args.output.stem}.train_log.csv")
    write_csv(log_path, log.to_frame())
    logger.info(f"Saved model {model.layer_sizes} to {args.output} (test accuracy {test_acc:.4f})")
    return EXIT_OK


def cmd_compress(args: argparse.Namespace) -> int:
    options = dict(method=args.method, seed=args.seed, mode=args.mode,
                   anchor_index=args.sample if args.mode == "local" else None, sigma=args.sigma)
    if args.gamma is not None:
        config = CompressConfig(gamma=args.gamma, **options)
    else:
        config = CompressConfig.from_rate(0.8 if args.rate is None else args.rate, **options)

    model = load_model(args.model)
    prepared = _prepared_for(args.model, args.data)
    delta = prepared.delta(args.delta).features
    if config.mode == "local" and not 0 <= config.anchor_index < delta.shape[0]:
        raise ConfigError(f"--sample {config.anchor_index} が Δ の範囲 0..{delta.shape[0] - 1} の外です。")

    mu = compress_with(model, delta, config)
    output = args.output or args.model.with_name(f"{args.model.stem}.{config.method}.json")
    mu.save(output)
    logger.info(f"K_l = {mu.cluster_counts} (layer evaluations: {mu.layer_evaluations})")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    original = load_model(args.original)
    mu = ClusteredMlp.load(args.compressed)
    actual = model_hash(original)
    if mu.origin != actual:
        raise ProvenanceError(
            f"{args.compressed} は別のモデルから圧縮されています "
            f"(origin_hash={mu.origin[:12]}..., {args.original} の hash={actual[:12]}...)"
        )

    prepared = _prepared_for(args.original, args.data)
    delta = prepared.delta(args.delta)
    anchor = None
    sigma = args.sigma
    if args.scope == "local":
        anchor = _anchor_row(prepared, args.delta, args.sample)
        if sigma is None:
            sigma = median_pairwise_distance(delta.features)

    report = evaluate(
        original,
        mu,
        delta.features,
        labels=delta.labels,
        anchor=anchor,
        sigma=sigma,
        metadata={"original": str(args.original), "compressed": str(args.compressed),
                  "delta": args.delta, "scope": args.scope, "sample": args.sample},
    )
    output = args.output or args.compressed.with_name(f"{args.compressed.stem}.eval.json")
    write_json(output, report.to_dict())
    write_csv(output.with_suffix(".csv"), report.layer_frame())
    logger.info(f"Saved report to {output}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = {
        "layers": args.layers,
        "widths": args.widths,
        "methods": args.methods,
        "seeds": args.seeds,
        "rate": args.rate,
        "scope": args.scope,
        "anchors": args.anchors,
        "sigma": args.sigma,
        "delta": args.delta,
        "processes": args.processes,
        "train": {"epochs": args.epochs, "learning_rate": args.lr},
    }
    sweep = CompressionSweep(prepare(SplitConfig(args.data, args.test_fraction, args.split_seed)), config)
    frame = sweep.run()
    CompressionSweep.save(frame, args.output, append=args.append)
    logger.info(f"Saved {len(frame)} rows to {args.output}")
    # 欠けた行があれば書ける分は書いたうえで数値エラーとして終える
    sweep.check_complete()
    return EXIT_OK


def cmd_export_qbaf(args: argparse.Namespace) -> int:
    if sidecar_path(args.model, SIDECAR_SUFFIX).exists():
        model = ClusteredMlp.load(args.model)
        train_source = None
    else:
        model = load_model(args.model)
        train_source = args.model

    x = None
    feature_names = None
    if args.sample is not None or args.data is not None:
        if train_source is None and args.data is None:
            raise ConfigError("圧縮モデルで --sample を使うには --data が必要です。")
        prepared = _prepared_for(train_source or args.model, args.data)
        feature_names = prepared.full.feature_names
        if args.sample is not None:
            x = _anchor_row(prepared, "full", args.sample)

    qbaf = to_qbaf(model, x=x, feature_names=feature_names, output_names=["malignant"])
    text = export_qbaf(qbaf, args.format, prune_quantile=args.prune_quantile)
    if args.output is None:
        print(text)
    else:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {args.format} QBAF to {args.output}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "compress": cmd_compress,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "export-qbaf": cmd_export_qbaf,
}


# ───────────────────────────────────────────
#  メイン処理
# ───────────────────────────────────────────
def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    try:
        return COMMANDS[args.command](args)
    except DataParseError as e:
        logger.error(f"データ解析エラー: {e}")
        return EXIT_IO
    except OSError as e:
        logger.error(f"入出力エラー: {e}")
        return EXIT_IO
    except ArithmeticError as e:
        logger.error(f"数値エラー: {e}")
        return EXIT_NUMERIC
    except ValueError as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
