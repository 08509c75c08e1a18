"""
Hypercube-Givens変換（HyGT）のコア

HyGTは並列Givens回転パスの積として定義される直交変換です。
各ラウンドはlog2(N)個のパスからなり、パスkではビットkだけが異なる
インデックス対（log2(N)次元ハイパーキューブの辺）をN/2個のバタフライで回転します。
インデックスはその場で生成されるため、パラメータとして保存するのは角度だけです。

符号規約（全モジュール共通）:
    y_m =  cos(θ)·x_m + sin(θ)·x_n
    y_n = -sin(θ)·x_m + cos(θ)·x_n

置換（ソーティングパス）はgather形式: output[i] = input[perm[i]]
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np
import numpy.typing as npt

from hygt.errors import ArgumentError, InvariantError

logger = logging.getLogger(__name__)

MAX_LOG2_N = 16
MAX_MATRIX_DIMENSION = 4096

FloatArray = npt.NDArray[np.float64]
IndexArray = npt.NDArray[np.int64]
ArrayLike = Union[npt.ArrayLike, FloatArray]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_float(x: ArrayLike) -> FloatArray:
    return np.asarray(x, dtype=np.float64)


def log2_dimension(n: int) -> int:
    """
    ベクトル長Nからlog2(N)を求める

    引数:
        n: ベクトル長（2のべき乗）

    戻り値:
        log2(N)

    例外:
        ArgumentError: Nが2以上の2のべき乗でない場合
    """
    if n < 2 or n & (n - 1):
        raise ArgumentError(f"dimension must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def check_permutation(permutation: npt.ArrayLike, n: int) -> IndexArray:
    """置換ベクトルが{0,…,N−1}上の全単射であることを検証して返す"""
    perm = np.array(permutation, dtype=np.int64).reshape(-1)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvariantError(f"permutation must be a bijection on 0..{n - 1}")
    return _readonly(perm)


@dataclass(frozen=True)
class GivensRotation:
    """インデックスm, nの2次元部分空間を角度theta（ラジアン）だけ回転する"""

    m: int
    n: int
    theta: float

    def __post_init__(self) -> None:
        if not 0 <= self.m < self.n:
            raise InvariantError(
                f"rotation indexes must satisfy 0 <= m < n, got ({self.m}, {self.n})"
            )


@dataclass(frozen=True, eq=False)
class PassIndexing:
    """
    1パス分のインデックス対

    mとnはそれぞれN/2個のインデックスを持ち、全体で{0,…,N−1}をちょうど一度ずつ
    覆います（ペア被覆）。各対はm_k < n_kの向きで保持されます。
    """

    m: IndexArray
    n: IndexArray

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=np.int64).reshape(-1)
        n = np.array(self.n, dtype=np.int64).reshape(-1)
        if m.shape != n.shape or m.size == 0:
            raise InvariantError("index vectors m and n must be non-empty and of equal length")
        if np.any(m >= n):
            raise InvariantError("every pair must satisfy m_k < n_k")
        covered = np.sort(np.concatenate([m, n]))
        if not np.array_equal(covered, np.arange(2 * m.size)):
            raise InvariantError(f"pairs must partition 0..{2 * m.size - 1} exactly once")
        object.__setattr__(self, "m", _readonly(m))
        object.__setattr__(self, "n", _readonly(n))

    @property
    def dimension(self) -> int:
        return 2 * int(self.m.size)


@lru_cache(maxsize=None)
def hypercube_indices(log2_n: int, pass_index: int) -> PassIndexing:
    """
    ハイパーキューブ・スケジュールのパスpass_indexのインデックス対を生成

    k = 2^pass_index、hN = 2^(log2_n−1)として
    m_j = j + (j AND −k)、n_j = m_j + k（j = 0…hN−1）。

    引数:
        log2_n: log2(N)（1〜16）
        pass_index: パス番号（0 ≤ pass_index < log2_n）

    戻り値:
        ペア被覆を満たすPassIndexing
    """
    if not 1 <= log2_n <= MAX_LOG2_N:
        raise ArgumentError(f"log2_n must be in 1..{MAX_LOG2_N}, got {log2_n}")
    if not 0 <= pass_index < log2_n:
        raise ArgumentError(f"pass must be in 0..{log2_n - 1}, got {pass_index}")

    k = 1 << pass_index
    j = np.arange(1 << (log2_n - 1), dtype=np.int64)
    m = j + (j & -k)
    return PassIndexing(m=m, n=m + k)


def rotate_pairs(
    x: FloatArray, m: IndexArray, n: IndexArray, cos: FloatArray, sin: FloatArray
) -> FloatArray:
    """互いに素なインデックス対を最終軸に沿って一括回転（検証なしのカーネル）"""
    xm = x[..., m]
    xn = x[..., n]
    y = x.copy()
    y[..., m] = cos * xm + sin * xn
    y[..., n] = cos * xn - sin * xm
    return y


def apply_butterfly(x: ArrayLike, rot: GivensRotation) -> FloatArray:
    """
    1つのGivens回転（バタフライ）を適用

    引数:
        x: 入力ベクトル（最終軸が係数軸のバッチも可）
        rot: 回転

    戻り値:
        y_m, y_nだけが変化した新しいベクトル
    """
    x = _as_float(x)
    if rot.n >= x.shape[-1]:
        raise ArgumentError(f"rotation index {rot.n} out of range for length {x.shape[-1]}")
    c = np.cos(np.float64(rot.theta))
    s = np.sin(np.float64(rot.theta))
    y = x.copy()
    y[..., rot.m] = c * x[..., rot.m] + s * x[..., rot.n]
    y[..., rot.n] = c * x[..., rot.n] - s * x[..., rot.m]
    return y


def apply_pass(x: ArrayLike, indexing: PassIndexing, thetas: ArrayLike) -> FloatArray:
    """
    並列Givens行列G(m, n, θ)を適用

    N/2個のバタフライは互いに素な対に作用するため、適用順序は結果に影響しません。
    ここでは全バタフライをベクトル化して同時に計算します。

    引数:
        x: 長さNのベクトル、または最終軸の長さがNの配列
        indexing: ペア被覆を満たすインデックス対
        thetas: N/2個の角度

    戻り値:
        変換後の配列
    """
    x = _as_float(x)
    thetas = _as_float(thetas)
    if thetas.shape != indexing.m.shape:
        raise ArgumentError(f"expected {indexing.m.size} angles, got shape {thetas.shape}")
    if x.ndim == 0 or x.shape[-1] != indexing.dimension:
        raise ArgumentError(f"expected trailing dimension {indexing.dimension}, got {x.shape}")
    return rotate_pairs(x, indexing.m, indexing.n, np.cos(thetas), np.sin(thetas))


def conjugate_pass(a: ArrayLike, indexing: PassIndexing, thetas: ArrayLike) -> FloatArray:
    """
    F·A·Fᵀを計算（Fはパス行列）

    行と列の両側にパスを対ごとに適用するだけで、密な行列積は作りません。
    """
    half = apply_pass(a, indexing, thetas)
    return apply_pass(half.T, indexing, thetas).T


def num_parameters(log2_n: int, rounds: int) -> int:
    """HyGTの角度パラメータ数 R·N·log2(N)/2"""
    if log2_n < 1 or rounds < 1:
        raise ArgumentError("log2_n and rounds must be >= 1")
    return rounds * (1 << log2_n) * log2_n // 2


@dataclass(frozen=True, eq=False)
class HyGTModel:
    """
    HyGTの変換パラメータ

    angles[round][pass][butterfly]に適用順で角度（ラジアン）を保持します。
    permutationは任意の最終ソーティングパスで、角度数には数えません。
    構築後は不変で、スレッド間で共有できます。
    """

    log2_n: int
    rounds: int
    angles: FloatArray
    permutation: Optional[IndexArray] = None

    def __post_init__(self) -> None:
        if not 1 <= self.log2_n <= MAX_LOG2_N:
            raise ArgumentError(f"log2_n must be in 1..{MAX_LOG2_N}, got {self.log2_n}")
        if self.rounds < 1:
            raise ArgumentError(f"rounds must be >= 1, got {self.rounds}")

        shape = (self.rounds, self.log2_n, self.dimension // 2)
        angles = np.array(self.angles, dtype=np.float64)
        if angles.size != int(np.prod(shape)):
            raise ArgumentError(f"expected {int(np.prod(shape))} angles, got {angles.size}")
        angles = angles.reshape(shape)
        if not np.all(np.isfinite(angles)):
            raise ArgumentError("angles must be finite")
        object.__setattr__(self, "angles", _readonly(angles))

        if self.permutation is not None:
            object.__setattr__(
                self, "permutation", check_permutation(self.permutation, self.dimension)
            )

    @property
    def dimension(self) -> int:
        """ベクトル長N"""
        return 1 << self.log2_n

    @property
    def num_parameters(self) -> int:
        return num_parameters(self.log2_n, self.rounds)

    @property
    def has_permutation(self) -> bool:
        return self.permutation is not None

    @classmethod
    def identity(cls, log2_n: int, rounds: int) -> "HyGTModel":
        """全角度0の恒等変換モデル"""
        return cls(log2_n, rounds, np.zeros((rounds, log2_n, 1 << (log2_n - 1))))

    @classmethod
    def for_dimension(cls, n: int, rounds: int) -> "HyGTModel":
        """ベクトル長nの恒等変換モデル（nが2のべき乗でなければArgumentError）"""
        return cls.identity(log2_dimension(n), rounds)

    @classmethod
    def random(
        cls, log2_n: int, rounds: int, seed: Union[int, np.random.Generator, None] = None
    ) -> "HyGTModel":
        """[0, 2π)の一様乱数角度を持つモデル"""
        rng = np.random.default_rng(seed)
        shape = (rounds, log2_n, 1 << (log2_n - 1))
        return cls(log2_n, rounds, rng.uniform(0.0, 2.0 * np.pi, size=shape))

    def with_permutation(self, permutation: npt.ArrayLike) -> "HyGTModel":
        """ソーティングパスを付加した新しいモデルを返す"""
        return HyGTModel(self.log2_n, self.rounds, self.angles, permutation)

    def without_permutation(self) -> "HyGTModel":
        return HyGTModel(self.log2_n, self.rounds, self.angles)

    def extend_rounds(self, extra: int) -> "HyGTModel":
        """
        全角度0のラウンドを末尾に追加

        追加ラウンドは恒等変換なので、変換行列は変わりません。
        R+1ラウンドの探索をRラウンドの最適解から始めるために使います。
        """
        if extra < 0:
            raise ArgumentError("extra rounds must be >= 0")
        zeros = np.zeros((extra, self.log2_n, self.dimension // 2))
        return HyGTModel(
            self.log2_n,
            self.rounds + extra,
            np.concatenate([self.angles, zeros]),
            self.permutation,
        )


def model_passes(model: HyGTModel) -> list[tuple[PassIndexing, FloatArray]]:
    """モデルのパスを適用順に(インデックス対, 角度)のリストとして返す"""
    return [
        (hypercube_indices(model.log2_n, p), model.angles[r, p])
        for r in range(model.rounds)
        for p in range(model.log2_n)
    ]


def _check_dimension(model: HyGTModel, x: FloatArray) -> None:
    if x.ndim == 0 or x.shape[-1] != model.dimension:
        raise ArgumentError(
            f"model dimension is {model.dimension}, input has shape {x.shape}"
        )


def forward(model: HyGTModel, x: ArrayLike) -> FloatArray:
    """
    順変換 y = T(h)·x

    ラウンド1…Rを順に、各ラウンド内ではパス0…log2(N)−1を適用し、
    最後に置換があればgatherします。

    引数:
        model: HyGTモデル
        x: 長さNのベクトル（または最終軸の長さがNのバッチ）

    戻り値:
        変換係数
    """
    y = _as_float(x)
    _check_dimension(model, y)
    for indexing, thetas in model_passes(model):
        y = apply_pass(y, indexing, thetas)
    if model.permutation is not None:
        y = y[..., model.permutation]
    return y


def inverse(model: HyGTModel, y: ArrayLike) -> FloatArray:
    """
    逆変換 x = T(h)ᵀ·y

    置換を先に戻し、その後ラウンドとパスを逆順に、角度の符号を反転して適用します。
    """
    x = _as_float(y)
    _check_dimension(model, x)
    if model.permutation is not None:
        scattered = np.empty_like(x)
        scattered[..., model.permutation] = x
        x = scattered
    for indexing, thetas in reversed(model_passes(model)):
        x = apply_pass(x, indexing, -thetas)
    return x


def to_matrix(model: HyGTModel) -> FloatArray:
    """
    変換行列Tを実体化

    列jはforward(model, e_j)に等しくなります。テストと固有値解析用です。
    """
    if model.dimension > MAX_MATRIX_DIMENSION:
        raise ArgumentError(f"refusing to materialize a {model.dimension}-point matrix")
    columns = forward(model, np.eye(model.dimension))
    return np.ascontiguousarray(columns.T)
