"""
角度パラメータの量子化と整数演算によるHyGT

角度は[0, 2π)を2^b個に一様量子化した小さな整数コードとして保存し、
必要なときだけ共有のsin/cosテーブルで高精度の乗数に変換します。
テーブルは全ての変換で共有されるため、メモリ使用量にはほとんど影響しません。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from hygt.errors import ArgumentError, FixedPointOverflowError, InvariantError
from hygt.transform import (
    MAX_LOG2_N,
    HyGTModel,
    IndexArray,
    check_permutation,
    hypercube_indices,
    num_parameters,
)

logger = logging.getLogger(__name__)

IntArray = npt.NDArray[np.int64]

DEFAULT_ANGLE_BITS = 8
DEFAULT_PRECISION_BITS = 10
MIN_ANGLE_BITS, MAX_ANGLE_BITS = 1, 12
MIN_PRECISION_BITS, MAX_PRECISION_BITS = 4, 15
MAX_INPUT_MAGNITUDE = 1 << 20


class TransformKind(str, Enum):
    """メモリ・演算量の比較対象となる変換の種類"""

    KLT = "klt"
    HYGT = "hygt"


@dataclass(frozen=True, eq=False)
class TrigTable:
    """
    量子化角度コード用の固定小数点sin/cosテーブル

    cos_entries[q] = round(cos(2π·q/2^b)·2^p)、sin_entriesも同様。
    不変で、スレッド間で同期なしに共有できます。
    """

    angle_bits: int
    precision_bits: int
    cos_entries: IntArray
    sin_entries: IntArray

    @property
    def size(self) -> int:
        return 1 << self.angle_bits

    def lookup(self, codes: npt.ArrayLike) -> tuple[IntArray, IntArray]:
        """角度コードから(cos, sin)の整数乗数を取り出す"""
        index = np.asarray(codes, dtype=np.int64)
        return self.cos_entries[index], self.sin_entries[index]


@lru_cache(maxsize=None)
def build_trig_table(
    angle_bits: int = DEFAULT_ANGLE_BITS, precision_bits: int = DEFAULT_PRECISION_BITS
) -> TrigTable:
    """
    共有sin/cosテーブルを構築

    同じ幅の組に対しては同一のテーブルインスタンスを返します。

    引数:
        angle_bits: 角度コードのビット幅b（1〜12）
        precision_bits: 乗数の精度p（4〜15）

    戻り値:
        2^b項目のTrigTable
    """
    if not MIN_ANGLE_BITS <= angle_bits <= MAX_ANGLE_BITS:
        raise ArgumentError(f"angle_bits must be in {MIN_ANGLE_BITS}..{MAX_ANGLE_BITS}")
    if not MIN_PRECISION_BITS <= precision_bits <= MAX_PRECISION_BITS:
        raise ArgumentError(
            f"precision_bits must be in {MIN_PRECISION_BITS}..{MAX_PRECISION_BITS}"
        )

    size = 1 << angle_bits
    scale = float(1 << precision_bits)
    phase = 2.0 * np.pi * np.arange(size) / size
    cos_entries = np.rint(np.cos(phase) * scale).astype(np.int64)
    if angle_bits >= 2:
        # sin(θ) = cos(θ − π/2): 四分の一周期ずらして対称性を厳密に保つ
        sin_entries = np.roll(cos_entries, size // 4)
    else:
        sin_entries = np.rint(np.sin(phase) * scale).astype(np.int64)

    cos_entries.setflags(write=False)
    sin_entries.setflags(write=False)
    return TrigTable(angle_bits, precision_bits, cos_entries, sin_entries)


@dataclass(frozen=True, eq=False)
class QuantizedHyGTModel:
    """角度をbビットのコードで保持するHyGTモデル（レイアウトはHyGTModel.anglesと同じ）"""

    log2_n: int
    rounds: int
    angle_bits: int
    angle_codes: IntArray
    permutation: Optional[IndexArray] = None

    def __post_init__(self) -> None:
        if not 1 <= self.log2_n <= MAX_LOG2_N or self.rounds < 1:
            raise ArgumentError("invalid log2_n or rounds")
        if not MIN_ANGLE_BITS <= self.angle_bits <= MAX_ANGLE_BITS:
            raise ArgumentError(f"angle_bits must be in {MIN_ANGLE_BITS}..{MAX_ANGLE_BITS}")

        shape = (self.rounds, self.log2_n, self.dimension // 2)
        codes = np.array(self.angle_codes, dtype=np.int64)
        if codes.size != int(np.prod(shape)):
            raise ArgumentError(f"expected {int(np.prod(shape))} angle codes, got {codes.size}")
        codes = codes.reshape(shape)
        if np.any(codes < 0) or np.any(codes >= 1 << self.angle_bits):
            raise InvariantError(f"angle codes must lie in 0..{(1 << self.angle_bits) - 1}")
        codes.setflags(write=False)
        object.__setattr__(self, "angle_codes", codes)

        if self.permutation is not None:
            object.__setattr__(
                self, "permutation", check_permutation(self.permutation, self.dimension)
            )

    @property
    def dimension(self) -> int:
        return 1 << self.log2_n

    @property
    def num_parameters(self) -> int:
        return num_parameters(self.log2_n, self.rounds)

    @property
    def has_permutation(self) -> bool:
        return self.permutation is not None

    @property
    def storage_bytes(self) -> int:
        """角度パラメータの保存に必要なバイト数（b ≤ 8なら1パラメータ1バイト）"""
        return self.num_parameters * ((self.angle_bits + 7) // 8)


def quantize_model(model: HyGTModel, angle_bits: int = DEFAULT_ANGLE_BITS) -> QuantizedHyGTModel:
    """
    角度を一様量子化

    code = round(θ/(2π)·2^b) mod 2^b。角度あたりの量子化誤差は高々π/2^bです。
    """
    if not MIN_ANGLE_BITS <= angle_bits <= MAX_ANGLE_BITS:
        raise ArgumentError(f"angle_bits must be in {MIN_ANGLE_BITS}..{MAX_ANGLE_BITS}")
    size = 1 << angle_bits
    codes = np.rint(model.angles / (2.0 * np.pi) * size).astype(np.int64) % size
    return QuantizedHyGTModel(
        model.log2_n, model.rounds, angle_bits, codes, model.permutation
    )


def dequantize_model(model: QuantizedHyGTModel) -> HyGTModel:
    """角度コードを角度 2π·code/2^b に戻す"""
    angles = 2.0 * np.pi * model.angle_codes / (1 << model.angle_bits)
    return HyGTModel(model.log2_n, model.rounds, angles, model.permutation)


def _integer_input(model: QuantizedHyGTModel, table: TrigTable, x: npt.ArrayLike) -> IntArray:
    if table.angle_bits != model.angle_bits:
        raise ArgumentError(
            f"table has {table.angle_bits}-bit codes, model uses {model.angle_bits}-bit codes"
        )
    values = np.asarray(x)
    if not np.issubdtype(values.dtype, np.integer):
        if not np.all(np.isfinite(values)) or np.any(values != np.rint(values)):
            raise ArgumentError("fixed-point transforms require integer input")
    values = values.astype(np.int64)
    if values.ndim == 0 or values.shape[-1] != model.dimension:
        raise ArgumentError(f"model dimension is {model.dimension}, input has shape {values.shape}")
    if values.size and int(np.max(np.abs(values))) > MAX_INPUT_MAGNITUDE:
        raise ArgumentError(f"input magnitudes must not exceed {MAX_INPUT_MAGNITUDE}")
    return values


def _fixed_pass(
    x: IntArray, log2_n: int, pass_index: int, codes: IntArray, table: TrigTable
) -> IntArray:
    indexing = hypercube_indices(log2_n, pass_index)
    shift = table.precision_bits
    # |c·x_m| + |s·x_n| + 2^(p−1) < 2^63
    if x.size and int(np.max(np.abs(x))) >= 1 << (61 - shift):
        raise FixedPointOverflowError("fixed-point intermediate exceeds 64-bit headroom")

    cos, sin = table.lookup(codes)
    half = 1 << (shift - 1)
    xm = x[..., indexing.m]
    xn = x[..., indexing.n]
    y = x.copy()
    y[..., indexing.m] = (cos * xm + sin * xn + half) >> shift
    y[..., indexing.n] = (cos * xn - sin * xm + half) >> shift
    return y


def forward_fixed(
    model: QuantizedHyGTModel, table: TrigTable, x: npt.ArrayLike
) -> IntArray:
    """
    整数演算による順変換

    各バタフライは
        y_m = ( c·x_m + s·x_n + 2^(p−1)) >> p
        y_n = (−s·x_m + c·x_n + 2^(p−1)) >> p
    を算術右シフトで計算し、パスとラウンドの順序はtransform.forwardと同じです。

    引数:
        model: 量子化モデル
        table: モデルと同じangle_bitsのテーブル
        x: 整数入力（|x| ≤ 2^20）

    戻り値:
        整数の変換係数
    """
    y = _integer_input(model, table, x)
    for r in range(model.rounds):
        for p in range(model.log2_n):
            y = _fixed_pass(y, model.log2_n, p, model.angle_codes[r, p], table)
    if model.permutation is not None:
        y = y[..., model.permutation]
    return y


def inverse_fixed(
    model: QuantizedHyGTModel, table: TrigTable, y: npt.ArrayLike
) -> IntArray:
    """
    整数演算による逆変換

    置換を戻してから逆順にパスを適用し、角度の反転は
    code' = (2^b − code) mod 2^b で表します。丸めのため往復は厳密ではありません。
    """
    x = _integer_input(model, table, y)
    if model.permutation is not None:
        scattered = np.empty_like(x)
        scattered[..., model.permutation] = x
        x = scattered
    size = 1 << model.angle_bits
    for r in reversed(range(model.rounds)):
        for p in reversed(range(model.log2_n)):
            negated = (size - model.angle_codes[r, p]) % size
            x = _fixed_pass(x, model.log2_n, p, negated, table)
    return x


def memory_footprint(
    kind: Union[TransformKind, str], log2_n: int, rounds: int, num_transforms: int
) -> int:
    """
    変換セットの保存に必要な記憶単位数

    1スカラー1単位: KLTは行列要素N²個、HyGTは角度R·N·log2(N)/2個（1角度1バイト）。
    共有のsin/cosテーブルは含めません。
    """
    transform_kind = TransformKind(kind)
    if log2_n < 1 or rounds < 1 or num_transforms < 1:
        raise ArgumentError("log2_n, rounds and num_transforms must be >= 1")
    if transform_kind is TransformKind.KLT:
        return num_transforms * (1 << log2_n) ** 2
    return num_transforms * num_parameters(log2_n, rounds)


def memory_ratio(log2_n: int, rounds: int) -> float:
    """同じ数の変換についてのKLTとHyGTのメモリ比"""
    klt = memory_footprint(TransformKind.KLT, log2_n, rounds, 1)
    return klt / memory_footprint(TransformKind.HYGT, log2_n, rounds, 1)


class ArithmeticCost(BaseModel):
    """1ベクトルあたりの演算量"""

    multiplications: int
    additions: int
    multiplications_per_coefficient: float


def arithmetic_cost(kind: Union[TransformKind, str], log2_n: int, rounds: int) -> ArithmeticCost:
    """
    1ベクトルを変換する演算量

    KLTは行列・ベクトル積でN²回の乗算とN(N−1)回の加算。
    HyGTはバタフライごとに乗算4回・加算2回で、バタフライ数はR·log2(N)·N/2。
    """
    transform_kind = TransformKind(kind)
    if log2_n < 1 or rounds < 1:
        raise ArgumentError("log2_n and rounds must be >= 1")
    n = 1 << log2_n
    if transform_kind is TransformKind.KLT:
        mults, adds = n * n, n * (n - 1)
    else:
        butterflies = num_parameters(log2_n, rounds)
        mults, adds = 4 * butterflies, 2 * butterflies
    return ArithmeticCost(
        multiplications=mults, additions=adds, multiplications_per_coefficient=mults / n
    )
