"""
rng.py

言語をまたいで再現できる乱数列のための SplitMix64 実装。
データ分割と k-means++ の初期化はすべてこの乱数で行う。
"""

from __future__ import annotations

from typing import List, MutableSequence, TypeVar

T = TypeVar("T")

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """
    Parameters
    ----------
    seed : int
        任意の整数。64bit に丸めて内部状態にする。
    """

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """[0, n) の整数。剰余の偏りは 2^-64 オーダーなので無視する。"""
        if n <= 0:
            raise ValueError("n は正の整数である必要があります。")
        return self.next_u64() % n

    def uniform(self) -> float:
        """[0, 1) の一様乱数 (上位 53bit)"""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: MutableSequence[T]) -> None:
        """Fisher–Yates (末尾から) でその場シャッフル"""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> List[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx
