"""
train.py

ミニバッチ SGD による MLP の学習。

逆伝播は QBAF 的な言い方をすると
    後方集約 g_a = Σ_b w(a, b) δ_b
    後方影響 δ_a = g_a · φ'(h_a)   (出力層は ∂L/∂a · φ'(h_a))
をそのまま行列演算にしたもの。損失は二値交差エントロピー (BCE)。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from sparx_illc.data_loader import Dataset
from sparx_illc.errors import ConfigError, DimensionError, TrainingDivergedError
from sparx_illc.mlp import (
    Activation,
    ActivationStack,
    Mlp,
    activation_derivative,
    forward_collect,
)

logger = logging.getLogger(__name__)

INIT_SCHEMES = ("he", "xavier", "gaussian")
LOSSES = ("bce",)


@dataclass
class TrainConfig:
    """
    Parameters
    ----------
    hidden_layers : int
        隠れ層の数 d (>= 1)
    hidden_width : int
        各隠れ層のニューロン数 (>= 1)
    epochs : int
        エポック数 (0 なら初期化したモデルをそのまま返す)
    batch_size : int
    learning_rate : float
    seed : int
        初期化とミニバッチ順序のシード
    init : str
        "he" / "xavier" / "gaussian"
    loss : str
        "bce" のみ
    activation : str
        隠れ層の活性化関数
    """

    hidden_layers: int = 5
    hidden_width: int = 100
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0
    init: str = "he"
    loss: str = "bce"
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.hidden_layers < 1:
            raise ConfigError(f"hidden_layers は 1 以上で指定してください: {self.hidden_layers}")
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width は 1 以上で指定してください: {self.hidden_width}")
        if self.epochs < 0:
            raise ConfigError(f"epochs は 0 以上で指定してください: {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size は 1 以上で指定してください: {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate は正である必要があります: {self.learning_rate}")
        if self.init not in INIT_SCHEMES:
            raise ConfigError(f"init は {INIT_SCHEMES} のいずれかです: {self.init!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss は {LOSSES} のいずれかです: {self.loss!r}")
        Activation.parse(self.activation)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass
class TrainingLog:
    records: List[dict] = field(default_factory=list)

    def append(self, epoch: int, loss: float, accuracy: float) -> None:
        self.records.append({"epoch": epoch, "loss": loss, "accuracy": accuracy})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=["epoch", "loss", "accuracy"])

    @property
    def final_loss(self) -> Optional[float]:
        return self.records[-1]["loss"] if self.records else None

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.records[-1]["accuracy"] if self.records else None


# ──────────────────────────────
# 初期化
# ──────────────────────────────
def init_mlp(config: TrainConfig, input_dim: int, output_dim: int) -> Mlp:
    """He (既定) / Xavier / 標準正規で重みを初期化。バイアスは 0。"""
    if input_dim < 1 or output_dim < 1:
        raise ConfigError("入力次元・出力次元は 1 以上である必要があります。")
    sizes = [input_dim] + [config.hidden_width] * config.hidden_layers + [output_dim]
    rng = np.random.default_rng(config.seed)

    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if config.init == "he":
            scale = np.sqrt(2.0 / fan_in)
        elif config.init == "xavier":
            scale = np.sqrt(2.0 / (fan_in + fan_out))
        else:
            scale = 1.0
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
    biases = [np.zeros(n) for n in sizes[1:]]

    return Mlp(
        layer_sizes=tuple(sizes),
        weights=tuple(weights),
        biases=tuple(biases),
        activation=config.activation,
        output_activation=Activation.SIGMOID,
    )


# ──────────────────────────────
# 損失と逆伝播
# ──────────────────────────────
def _as_targets(labels: np.ndarray, n_out: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.shape[1] != n_out:
        raise DimensionError(f"ラベルの列数 {y.shape[1]} が出力次元 {n_out} と一致しません。")
    return y


def bce_loss(model: Mlp, stack: ActivationStack, labels: np.ndarray) -> float:
    """バッチ平均の BCE。sigmoid 出力ではロジットから安定に計算する。"""
    y = _as_targets(labels, model.output_dim)
    if model.output_activation is Activation.SIGMOID:
        h = stack.pre[-1]
        per_sample = (np.logaddexp(0.0, h) - y * h).sum(axis=1)
    else:
        o = np.clip(stack.output, 1e-12, 1.0 - 1e-12)
        per_sample = -(y * np.log(o) + (1.0 - y) * np.log(1.0 - o)).sum(axis=1)
    return float(per_sample.mean())


def backward(model: Mlp, stack: ActivationStack, labels: np.ndarray) -> Gradients:
    """
    BCE のバッチ平均に対する ∂L/∂W^l, ∂L/∂b^l。

    Parameters
    ----------
    model : Mlp
    stack : ActivationStack
        forward_collect(model, X) の結果
    labels : np.ndarray
        (N,) または (N, |V_{d+1}|)

    Returns
    -------
    Gradients
        weights / biases と同じ形状の勾配
    """
    if len(stack.pre) != model.depth + 1 or stack.output.shape[1] != model.output_dim:
        raise DimensionError("ActivationStack がモデルの形状と一致しません。")
    y = _as_targets(labels, model.output_dim)
    n = y.shape[0]
    if stack.output.shape[0] != n:
        raise DimensionError(f"ラベル数 {n} がバッチサイズ {stack.output.shape[0]} と一致しません。")

    o = stack.output
    if model.output_activation is Activation.SIGMOID:
        # sigmoid + BCE: ∂L/∂o · φ'(h) = o - y
        delta = o - y
    else:
        oc = np.clip(o, 1e-12, 1.0 - 1e-12)
        delta = (oc - y) / (oc * (1.0 - oc)) * activation_derivative(model.output_activation, stack.pre[-1])
    delta = delta / n

    grad_w: List[np.ndarray] = [np.empty(0)] * (model.depth + 1)
    grad_b: List[np.ndarray] = [np.empty(0)] * (model.depth + 1)
    for l in range(model.depth, -1, -1):
        grad_w[l] = delta.T @ stack.post[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            # 後方集約 → 後方影響
            g = delta @ model.weights[l]
            delta = g * activation_derivative(model.activation, stack.pre[l - 1])
    return Gradients(weights=grad_w, biases=grad_b)


def accuracy(model: Mlp, X: np.ndarray, labels: np.ndarray) -> float:
    out = forward_collect(model, X).output
    pred = (out >= 0.5).astype(np.int64)
    y = _as_targets(labels, model.output_dim).astype(np.int64)
    return float((pred == y).all(axis=1).mean())


# ──────────────────────────────
# 学習ループ
# ──────────────────────────────
def train(
    data: Dataset,
    config: TrainConfig,
    log: Optional[TrainingLog] = None,
    progress: bool = False,
) -> Mlp:
    """
    ミニバッチ SGD で学習したモデルを返す。

    log を渡すとエポックごとの (平均バッチ損失, 学習データ正解率) を追記する。

    Raises
    ------
    TrainingDivergedError
        損失が非有限値になったとき (発生 epoch を保持)
    """
    if len(data) == 0:
        raise ConfigError("学習データが空です。")
    model = init_mlp(config, data.n_features, 1)
    if config.epochs == 0:
        return model

    X = data.features
    y = data.labels.astype(np.float64)
    n = len(data)
    rng = np.random.default_rng(config.seed + 1)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    lr = config.learning_rate

    for epoch in tqdm(range(1, config.epochs + 1), desc="Training", disable=not progress):
        order = rng.permutation(n)
        batch_losses = []
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                current = Mlp(model.layer_sizes, tuple(weights), tuple(biases),
                              model.activation, model.output_activation)
                stack = forward_collect(current, X[idx])
                loss = bce_loss(current, stack, y[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, loss)
                batch_losses.append(loss)
                grads = backward(current, stack, y[idx])
                for l in range(len(weights)):
                    weights[l] = weights[l] - lr * grads.weights[l]
                    biases[l] = biases[l] - lr * grads.biases[l]
                if not all(np.all(np.isfinite(w)) for w in weights):
                    raise TrainingDivergedError(epoch, float("nan"))

        model = Mlp(model.layer_sizes, tuple(weights), tuple(biases),
                    model.activation, model.output_activation)
        epoch_loss = float(np.mean(batch_losses))
        if log is not None:
            log.append(epoch, epoch_loss, accuracy(model, X, y))
        logger.debug(f"epoch {epoch}: loss={epoch_loss:.6f}")

    logger.info(
        f"Trained {model.layer_sizes} for {config.epochs} epochs "
        f"(final batch loss {epoch_loss:.4f}, train acc {accuracy(model, X, y):.4f})"
    )
    return model
