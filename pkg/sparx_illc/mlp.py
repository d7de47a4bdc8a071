"""
mlp.py

全結合 MLP の表現と順伝播。

- 重み行列 W^l は (|V_{l+1}|, |V_l|) 形状 (行 j = 入る先のニューロン, 列 i = 出元)
- 隠れ層は単一の活性化関数、出力層は output_activation を使う
- 層ごとの活性化評価回数を LayerCounter で数えられる
  (ILLC の O(d) と従来法の O(2d) の比較に使う)
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from sparx_illc.errors import (
    ActivationDomainError,
    ConfigError,
    DimensionError,
    ValidationError,
)
from sparx_illc.utils.io import read_json, write_json

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value: Union[str, "Activation"]) -> "Activation":
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"未対応の活性化関数です: {value!r}") from None


HIDDEN_ACTIVATIONS = {Activation.RELU, Activation.SIGMOID, Activation.TANH}
OUTPUT_ACTIVATIONS = {Activation.SIGMOID, Activation.IDENTITY}


# ──────────────────────────────
# 活性化関数とその逆関数
# ──────────────────────────────
def activation_apply(kind: Union[str, Activation], x: ArrayLike) -> ArrayLike:
    """φ(x) を要素ごとに計算する。スカラーを渡せばスカラーを返す。"""
    kind = Activation.parse(kind)
    arr = np.asarray(x, dtype=np.float64)
    if kind is Activation.RELU:
        out = np.maximum(arr, 0.0)
    elif kind is Activation.SIGMOID:
        # 1/(1+e^-x) と同値で、大きな |x| でもオーバーフローしない
        out = 0.5 * (1.0 + np.tanh(0.5 * arr))
    elif kind is Activation.TANH:
        out = np.tanh(arr)
    else:
        out = arr.copy()
    return float(out) if out.ndim == 0 else out


def activation_inverse(kind: Union[str, Activation], y: ArrayLike) -> ArrayLike:
    """
    φ^{-1}(y)。ReLU は「正ならそのまま、それ以外は 0」の擬似逆関数。

    Raises
    ------
    ActivationDomainError
        sigmoid で y ∉ (0, 1)、tanh で y ∉ (-1, 1) のとき
    """
    kind = Activation.parse(kind)
    arr = np.asarray(y, dtype=np.float64)
    if kind is Activation.RELU:
        out = np.where(arr > 0, arr, 0.0)
    elif kind is Activation.SIGMOID:
        if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
            raise ActivationDomainError("sigmoid の逆関数は (0, 1) の開区間でのみ定義されます。")
        out = np.log(arr) - np.log1p(-arr)
    elif kind is Activation.TANH:
        if np.any((arr <= -1.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
            raise ActivationDomainError("tanh の逆関数は (-1, 1) の開区間でのみ定義されます。")
        out = np.arctanh(arr)
    else:
        out = arr.copy()
    return float(out) if out.ndim == 0 else out


def activation_derivative(kind: Union[str, Activation], h: np.ndarray) -> np.ndarray:
    """φ'(h)。ReLU は h > 0 で 1、それ以外 0。"""
    kind = Activation.parse(kind)
    h = np.asarray(h, dtype=np.float64)
    if kind is Activation.RELU:
        return (h > 0).astype(np.float64)
    if kind is Activation.SIGMOID:
        s = 0.5 * (1.0 + np.tanh(0.5 * h))
        return s * (1.0 - s)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(h) ** 2
    return np.ones_like(h)


# ──────────────────────────────
# モデル
# ──────────────────────────────
@dataclass(frozen=True, eq=False)
class Mlp:
    """
    Parameters
    ----------
    layer_sizes : tuple[int, ...]
        (|V_0|, ..., |V_{d+1}|)
    weights : tuple[np.ndarray, ...]
        d+1 個。weights[l] の形状は (|V_{l+1}|, |V_l|)
    biases : tuple[np.ndarray, ...]
        d+1 個。biases[l] の長さは |V_{l+1}|
    activation : Activation
        隠れ層の活性化関数
    output_activation : Activation
        出力層の活性化関数
    """

    layer_sizes: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: Activation = Activation.RELU
    output_activation: Activation = Activation.SIGMOID

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3:
            raise ConfigError("隠れ層が少なくとも 1 層必要です (depth >= 1)。")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"層サイズはすべて正である必要があります: {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionError("weights / biases の個数は層数 - 1 と一致する必要があります。")

        act = Activation.parse(self.activation)
        out_act = Activation.parse(self.output_activation)
        if act not in HIDDEN_ACTIVATIONS:
            raise ConfigError(f"隠れ層に使えない活性化関数です: {act.value}")
        if out_act not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"出力層に使えない活性化関数です: {out_act.value}")

        weights = []
        biases = []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float64, copy=True)
            b = np.array(b, dtype=np.float64, copy=True).ravel()
            if w.shape != (sizes[l + 1], sizes[l]):
                raise DimensionError(
                    f"weights[{l}] の形状 {w.shape} が期待値 {(sizes[l + 1], sizes[l])} と一致しません。"
                )
            if b.shape != (sizes[l + 1],):
                raise DimensionError(f"biases[{l}] の長さ {b.shape[0]} が {sizes[l + 1]} と一致しません。")
            w.setflags(write=False)
            b.setflags(write=False)
            weights.append(w)
            biases.append(b)

        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))
        object.__setattr__(self, "activation", act)
        object.__setattr__(self, "output_activation", out_act)

    @property
    def depth(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def layer_activation(self, l: int) -> Activation:
        """weights[l] の先 (層 l+1) で使う活性化関数"""
        return self.output_activation if l == self.depth else self.activation

    def incoming(self, layer: int, j: int) -> np.ndarray:
        """層 layer (>= 1) のニューロン j に入る重み (長さ |V_{layer-1}|)"""
        return self.weights[layer - 1][j, :]

    def outgoing(self, layer: int, i: int) -> np.ndarray:
        """層 layer (<= d) のニューロン i から出る重み (長さ |V_{layer+1}|)"""
        return self.weights[layer][:, i]

    def same_parameters(self, other: "Mlp") -> bool:
        return (
            self.layer_sizes == other.layer_sizes
            and self.activation == other.activation
            and self.output_activation == other.output_activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass
class ActivationStack:
    """
    pre[l]  : (N, |V_{l+1}|) の前活性 h
    post[l] : (N, |V_l|) の後活性 o。post[0] は入力 X
    """

    pre: List[np.ndarray]
    post: List[np.ndarray]
    layer_evaluations: int = 0

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    def hidden(self, layer: int) -> np.ndarray:
        return self.post[layer]


class LayerCounter:
    """層単位の活性化計算回数。スレッド間で共有してよい。"""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        with self._lock:
            return self._count


# ──────────────────────────────
# 順伝播
# ──────────────────────────────
def check_inputs(model: Mlp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionError(
            f"入力の列数 {X.shape[-1] if X.ndim else 0} がモデルの入力次元 {model.input_dim} と一致しません。"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError("入力に NaN または inf が含まれています。")
    return X


def layer_preactivation(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """h = X W^T + b （全モジュールで同じ式を使い、ビット単位で結果を揃える）"""
    return X @ W.T + b


def _iter_layers(
    model: Mlp, X: np.ndarray, n_layers: int
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    cur = X
    for l in range(n_layers):
        h = layer_preactivation(cur, model.weights[l], model.biases[l])
        cur = activation_apply(model.layer_activation(l), h)
        yield h, cur


def forward_collect(
    model: Mlp, X: np.ndarray, counter: Optional[LayerCounter] = None
) -> ActivationStack:
    """
    全層の前活性・後活性を集める。

    Parameters
    ----------
    model : Mlp
    X : np.ndarray
        (N, |V_0|) の入力
    counter : LayerCounter, optional
        渡された場合 d+1 を加算する

    Returns
    -------
    ActivationStack
    """
    X = check_inputs(model, X)
    pre: List[np.ndarray] = []
    post: List[np.ndarray] = [X]
    for h, o in _iter_layers(model, X, model.depth + 1):
        pre.append(h)
        post.append(o)
    if counter is not None:
        counter.add(model.depth + 1)
    return ActivationStack(pre=pre, post=post, layer_evaluations=model.depth + 1)


def forward_hidden(
    model: Mlp, X: np.ndarray, counter: Optional[LayerCounter] = None
) -> ActivationStack:
    """隠れ層 1..d だけを評価する (d 回)。出力層は含まない。"""
    X = check_inputs(model, X)
    pre: List[np.ndarray] = []
    post: List[np.ndarray] = [X]
    for h, o in _iter_layers(model, X, model.depth):
        pre.append(h)
        post.append(o)
    if counter is not None:
        counter.add(model.depth)
    return ActivationStack(pre=pre, post=post, layer_evaluations=model.depth)


def predict(model: Mlp, X: np.ndarray, counter: Optional[LayerCounter] = None) -> np.ndarray:
    """(N, |V_{d+1}|) の出力だけを返す"""
    return forward_collect(model, X, counter).output


# ──────────────────────────────
# 保存・読み込み
# ──────────────────────────────
def model_to_dict(model: Mlp) -> dict:
    return {
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation.value,
        "output_activation": model.output_activation.value,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(payload: dict) -> Mlp:
    try:
        sizes = payload["layer_sizes"]
        weights = [np.array(w, dtype=np.float64).reshape(sizes[l + 1], sizes[l])
                   for l, w in enumerate(payload["weights"])]
        return Mlp(
            layer_sizes=tuple(sizes),
            weights=tuple(weights),
            biases=tuple(np.array(b, dtype=np.float64) for b in payload["biases"]),
            activation=payload.get("activation", "relu"),
            output_activation=payload.get("output_activation", "sigmoid"),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise ConfigError(f"モデル JSON の形式が不正です: {e}") from e
    except ValueError as e:
        if isinstance(e, (ConfigError, DimensionError)):
            raise
        raise DimensionError(f"モデル JSON の重み形状が不正です: {e}") from e


def save_model(model: Mlp, path: Path) -> Path:
    # json は float を最短の往復可能表現 (最大 17 桁) で書くので、読み戻しはビット単位で一致する
    return write_json(Path(path), model_to_dict(model))


def load_model(path: Path) -> Mlp:
    return model_from_dict(read_json(Path(path)))


def model_hash(model: Mlp) -> str:
    """正準 JSON の SHA-256。圧縮モデルの出自確認に使う。"""
    canonical = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_mlp(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: Union[str, Activation] = Activation.RELU,
    output_activation: Union[str, Activation] = Activation.SIGMOID,
) -> Mlp:
    """重みリストから層サイズを推定して Mlp を組み立てる"""
    if not weights:
        raise ConfigError("weights が空です。")
    sizes = [np.asarray(weights[0]).shape[1]] + [np.asarray(w).shape[0] for w in weights]
    return Mlp(
        layer_sizes=tuple(sizes),
        weights=tuple(np.asarray(w, dtype=np.float64) for w in weights),
        biases=tuple(np.asarray(b, dtype=np.float64) for b in biases),
        activation=activation,
        output_activation=output_activation,
    )
