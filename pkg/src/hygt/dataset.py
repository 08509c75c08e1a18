"""クラスラベル付き残差データセット"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from hygt.errors import ArgumentError
from hygt.transform import IndexArray, log2_dimension


@dataclass(frozen=True, eq=False)
class ResidualDataset:
    """
    残差ベクトル r = x − p の集合

    各ブロックはクラスID（0始まり）と長さnのベクトルを持ちます。
    ベクトルはfloat32またはfloat64で保持され、ファイル形式の精度に対応します。

    例:
        dataset = ResidualDataset.from_classes([vectors_class0, vectors_class1])
        phi0 = accumulate_correlation(dataset.for_class(0))
    """

    n: int
    classes: int
    class_ids: IndexArray
    vectors: npt.NDArray[np.floating]

    def __post_init__(self) -> None:
        log2_dimension(self.n)
        if self.classes < 1:
            raise ArgumentError(f"class count must be >= 1, got {self.classes}")

        class_ids = np.array(self.class_ids, dtype=np.int64).reshape(-1)
        vectors = np.array(self.vectors)
        if not np.issubdtype(vectors.dtype, np.floating):
            vectors = vectors.astype(np.float64)
        vectors = vectors.reshape(-1, self.n) if vectors.size else vectors.reshape(0, self.n)
        if vectors.shape[0] != class_ids.size:
            raise ArgumentError(
                f"{class_ids.size} class ids for {vectors.shape[0]} vectors of length {self.n}"
            )
        if class_ids.size and (class_ids.min() < 0 or class_ids.max() >= self.classes):
            raise ArgumentError(f"class ids must lie in 0..{self.classes - 1}")
        if not np.all(np.isfinite(vectors)):
            raise ArgumentError("residual vectors must be finite")

        class_ids.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "class_ids", class_ids)
        object.__setattr__(self, "vectors", vectors)

    @property
    def log2_n(self) -> int:
        return log2_dimension(self.n)

    @property
    def block_count(self) -> int:
        return int(self.class_ids.size)

    def __len__(self) -> int:
        return self.block_count

    def for_class(self, class_id: int) -> npt.NDArray[np.float64]:
        """指定クラスのベクトルをfloat64で返す"""
        if not 0 <= class_id < self.classes:
            raise ArgumentError(f"class id {class_id} out of range 0..{self.classes - 1}")
        return self.vectors[self.class_ids == class_id].astype(np.float64)

    def class_counts(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.class_ids, minlength=self.classes)

    def with_vectors(self, vectors: npt.ArrayLike) -> "ResidualDataset":
        """ラベルはそのままでベクトルだけを差し替えたデータセット"""
        return ResidualDataset(self.n, self.classes, self.class_ids, np.asarray(vectors))

    @classmethod
    def from_classes(cls, per_class: Sequence[npt.ArrayLike]) -> "ResidualDataset":
        """
        クラスごとのベクトル配列から作成（クラスID昇順に並ぶ）

        引数:
            per_class: per_class[k]がクラスkの(M_k, N)配列

        戻り値:
            ResidualDataset
        """
        arrays = [np.atleast_2d(np.asarray(block)) for block in per_class]
        if not arrays:
            raise ArgumentError("at least one class is required")
        n = arrays[0].shape[1]
        if any(block.shape[1] != n for block in arrays):
            raise ArgumentError("all classes must share the vector length")
        class_ids = np.concatenate(
            [np.full(block.shape[0], k, dtype=np.int64) for k, block in enumerate(arrays)]
        )
        return cls(n, len(arrays), class_ids, np.concatenate(arrays))

    @classmethod
    def single_class(cls, vectors: npt.ArrayLike) -> "ResidualDataset":
        return cls.from_classes([vectors])
