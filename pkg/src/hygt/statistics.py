"""
残差統計: 相関行列、KLT、変換後の分散、符号化利得、合成AR(1)ソース

符号化利得は高レート近似のもとで、変換係数の分散の算術平均と幾何平均の比（dB）です。
歪み定数ε²は同じビット配分で変換同士を比較するときに打ち消し合うため、
分布（ガウス、ラプラス等）に依存しない形で計算します。
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np
import numpy.typing as npt

from hygt.dataset import ResidualDataset
from hygt.errors import ArgumentError, NumericalError
from hygt.transform import FloatArray, PassIndexing, apply_pass, conjugate_pass, log2_dimension

logger = logging.getLogger(__name__)

JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100
PSD_TOLERANCE = 1e-10
VARIANCE_FLOOR = 1e-30

Seed = Union[int, Sequence[int]]


def _symmetrize(values: FloatArray) -> FloatArray:
    return (values + values.T) / 2.0


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """
    残差の相関行列 Φ = E[r·rᵀ]

    対称・半正定値。sample_countは推定に使ったベクトル数（解析的なモデルでは0）。
    """

    values: FloatArray
    sample_count: int = 0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] == 0:
            raise ArgumentError(f"correlation matrix must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ArgumentError("correlation matrix must be finite")
        if self.sample_count < 0:
            raise ArgumentError("sample_count must be >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.values))

    def merge(self, other: "CorrelationMatrix") -> "CorrelationMatrix":
        return merge_correlations(self, other)


def merge_correlations(*parts: CorrelationMatrix) -> CorrelationMatrix:
    """
    互いに素なサンプル集合から推定した相関行列をサンプル数で重み付けして結合

    シャードごとに並行して推定した結果をまとめるための演算子です。
    """
    if not parts:
        raise ArgumentError("nothing to merge")
    n = parts[0].n
    if any(part.n != n for part in parts):
        raise ArgumentError("cannot merge correlation matrices of different dimensions")
    total = sum(part.sample_count for part in parts)
    if total == 0:
        raise ArgumentError("cannot merge correlation matrices without samples")
    weighted = sum(part.values * part.sample_count for part in parts)
    return CorrelationMatrix(_symmetrize(np.asarray(weighted) / total), total)


class CorrelationAccumulator:
    """
    相関行列の逐次推定器

    例:
        acc = CorrelationAccumulator(16)
        for batch in batches:
            acc.update(batch)
        phi = acc.result()
    """

    def __init__(self, dimension: int):
        """
        引数:
            dimension: ベクトル長N
        """
        if dimension < 1:
            raise ArgumentError("dimension must be >= 1")
        self.dimension = dimension
        self._sum = np.zeros((dimension, dimension))
        self._count = 0

    @property
    def sample_count(self) -> int:
        return self._count

    def update(self, residuals: npt.ArrayLike) -> None:
        """ベクトルのバッチ（(M, N)配列）を取り込む"""
        batch = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
        if batch.ndim != 2 or batch.shape[1] != self.dimension:
            raise ArgumentError(f"expected vectors of length {self.dimension}, got {batch.shape}")
        self._sum += batch.T @ batch
        self._count += batch.shape[0]

    def result(self) -> CorrelationMatrix:
        if self._count == 0:
            raise ArgumentError("no residual vectors accumulated")
        return CorrelationMatrix(_symmetrize(self._sum / self._count), self._count)


def _stack_residuals(residuals: Union[npt.ArrayLike, Sequence[Sequence[float]]]) -> FloatArray:
    if isinstance(residuals, np.ndarray):
        stacked = residuals.astype(np.float64)
    else:
        vectors = [np.asarray(r, dtype=np.float64).reshape(-1) for r in residuals]
        if not vectors:
            raise ArgumentError("at least one residual vector is required")
        if len({v.size for v in vectors}) != 1:
            raise ArgumentError("residual vectors have mixed lengths")
        stacked = np.stack(vectors)
    if stacked.ndim != 2 or stacked.shape[0] == 0 or stacked.shape[1] == 0:
        raise ArgumentError(f"expected a non-empty (M, N) set of vectors, got {stacked.shape}")
    return stacked


def accumulate_correlation(
    residuals: Union[npt.ArrayLike, Sequence[Sequence[float]]],
) -> CorrelationMatrix:
    """
    残差ベクトル集合から相関行列を推定

    Φ = (1/M)·Σ r·rᵀ。転置との平均で厳密な対称性を保証します。

    引数:
        residuals: 長さNのベクトルの集合（(M, N)配列またはベクトルのリスト）

    戻り値:
        CorrelationMatrix
    """
    stacked = _stack_residuals(residuals)
    accumulator = CorrelationAccumulator(stacked.shape[1])
    accumulator.update(stacked)
    return accumulator.result()


@dataclass(frozen=True, eq=False)
class KLTResult:
    """
    KLT: 行が固有ベクトルの直交行列Kと降順の固有値Λ

    各行は絶対値最大の要素が非負になるよう符号を正規化済みです。
    """

    basis: FloatArray
    eigenvalues: FloatArray

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)


def _matrix(phi: Union[CorrelationMatrix, npt.ArrayLike]) -> FloatArray:
    if isinstance(phi, CorrelationMatrix):
        return phi.values
    return CorrelationMatrix(np.asarray(phi)).values


@lru_cache(maxsize=None)
def _round_robin_schedule(size: int) -> tuple[PassIndexing, ...]:
    # 総当たり戦の組み合わせ: size−1ステップで全ての対をちょうど一度ずつ訪れる
    players = list(range(size))
    steps = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        steps.append(
            PassIndexing(
                m=np.array([min(p) for p in pairs]), n=np.array([max(p) for p in pairs])
            )
        )
        players = [players[0], players[-1], *players[1:-1]]
    return tuple(steps)


def _inner_jacobi_angles(a_mm: FloatArray, a_nn: FloatArray, a_mn: FloatArray) -> FloatArray:
    theta = 0.5 * np.arctan2(2.0 * a_mn, a_mm - a_nn)
    # |θ| ≤ π/4 の回転を選ぶ（対角要素の入れ替えを避けて二次収束を保つ）
    theta = np.where(theta > np.pi / 4, theta - np.pi / 2, theta)
    return np.where(theta < -np.pi / 4, theta + np.pi / 2, theta)


def _max_off_diagonal(a: FloatArray) -> float:
    off = np.abs(a - np.diag(np.diag(a)))
    return float(off.max()) if off.size else 0.0


def jacobi_eigen(
    phi: Union[CorrelationMatrix, npt.ArrayLike],
    tolerance: float = JACOBI_TOLERANCE,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> KLTResult:
    """
    巡回Jacobi法による対称固有値分解（KLT）

    1スイープは総当たり順序のN−1ステップからなり、各ステップでは互いに素な
    N/2個の対を並列Givensパスとして同時に回転します（奇数Nはダミー添字で補う）。
    非対角要素の最大値が tolerance·trace 以下になるまでスイープを繰り返します。

    引数:
        phi: 対称行列
        tolerance: trace相対の収束しきい値
        max_sweeps: スイープ数の上限

    戻り値:
        固有値降順・符号正規化済みのKLTResult

    例外:
        NumericalError: 上限スイープ数で収束しない場合（残差を付与）
    """
    a = _matrix(phi)
    n = a.shape[0]
    scale = max(abs(float(np.trace(a))), float(np.max(np.abs(a))))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(scale, 1e-300)):
        raise ArgumentError("jacobi_eigen requires a symmetric matrix")

    padded = n % 2 == 1
    size = n + int(padded)
    work = np.zeros((size, size))
    work[:n, :n] = _symmetrize(a)
    rotations = np.eye(size)
    threshold = tolerance * scale

    if size > 1:
        schedule = _round_robin_schedule(size)
        for sweep in range(max_sweeps + 1):
            residual = _max_off_diagonal(work)
            if residual <= threshold:
                logger.debug("jacobi converged after %d sweeps (residual %.3g)", sweep, residual)
                break
            if sweep == max_sweeps:
                raise NumericalError(
                    f"Jacobi iteration did not converge in {max_sweeps} sweeps "
                    f"(max off-diagonal {residual:.3g})",
                    residual=residual,
                )
            for indexing in schedule:
                m, k = indexing.m, indexing.n
                thetas = _inner_jacobi_angles(work[m, m], work[k, k], work[m, k])
                if padded:
                    thetas = np.where(k == n, 0.0, thetas)
                work = conjugate_pass(work, indexing, thetas)
                rotations = apply_pass(rotations.T, indexing, thetas).T

    eigenvalues = np.diag(work)[:n].copy()
    basis = rotations[:n, :n]

    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    basis = basis[order]
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.where(basis[np.arange(n), pivots] < 0.0, -1.0, 1.0)
    basis = np.ascontiguousarray(basis * signs[:, None])

    basis.setflags(write=False)
    eigenvalues.setflags(write=False)
    return KLTResult(basis=basis, eigenvalues=eigenvalues)


def is_positive_semidefinite(
    phi: Union[CorrelationMatrix, npt.ArrayLike], tolerance: float = PSD_TOLERANCE
) -> bool:
    """全ての固有値が −tolerance·trace 以上か"""
    a = _matrix(phi)
    eigenvalues = jacobi_eigen(a).eigenvalues
    return bool(eigenvalues.min() >= -tolerance * max(abs(float(np.trace(a))), 1e-300))


def klt_forward(klt: KLTResult, r: npt.ArrayLike) -> FloatArray:
    """KLTを適用 y = K·r（最終軸がNのバッチも可）"""
    vector = np.asarray(r, dtype=np.float64)
    if vector.ndim == 0 or vector.shape[-1] != klt.n:
        raise ArgumentError(f"KLT dimension is {klt.n}, input has shape {vector.shape}")
    return vector @ klt.basis.T


@dataclass(frozen=True, eq=False)
class VarianceVector:
    """変換係数の分散 σ²_i"""

    values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __len__(self) -> int:
        return int(self.values.size)


def transformed_variances(
    transform: npt.ArrayLike, phi: Union[CorrelationMatrix, npt.ArrayLike]
) -> VarianceVector:
    """
    v = diag(T·Φ·Tᵀ)

    各行の二次形式として計算し、積T·Φ·Tᵀ全体は作りません。
    """
    t = np.asarray(transform, dtype=np.float64)
    a = _matrix(phi)
    if t.ndim != 2 or t.shape[1] != a.shape[0]:
        raise ArgumentError(f"transform shape {t.shape} does not match dimension {a.shape[0]}")
    return VarianceVector(np.einsum("ij,jk,ik->i", t, a, t))


class CodingGain(NamedTuple):
    """符号化利得（dB）と、床値に切り上げた分散の個数"""

    db: float
    clamped: int


def coding_gain(variances: Union[VarianceVector, npt.ArrayLike]) -> CodingGain:
    """
    変換符号化利得 10·log10(算術平均 / 幾何平均)

    幾何平均は対数の平均で求めます。1e−30·平均以下の分散は床値に切り上げ、
    その個数をclampedとして報告します（特異・縮退したソースの兆候）。
    """
    values = variances.values if isinstance(variances, VarianceVector) else np.asarray(
        variances, dtype=np.float64
    )
    if values.ndim != 1 or values.size == 0:
        raise ArgumentError("coding gain requires a non-empty variance vector")

    mean = float(values.mean())
    if not mean > 0.0:
        logger.warning("all variances are zero; coding gain reported as 0 dB")
        return CodingGain(0.0, int(values.size))

    floor = VARIANCE_FLOOR * mean
    clamped = int(np.count_nonzero(values <= floor))
    if clamped:
        logger.warning("%d of %d variances clamped to the floor %.3g", clamped, values.size, floor)
    logs = np.log10(np.maximum(values, floor))
    return CodingGain(10.0 * np.log10(mean) - 10.0 * float(logs.mean()), clamped)


def coding_gain_db(variances: Union[VarianceVector, npt.ArrayLike]) -> float:
    """符号化利得（dB）"""
    return coding_gain(variances).db


def _check_rho(rho: float) -> None:
    if not 0.0 <= rho < 1.0:
        raise ArgumentError(f"AR(1) correlation must satisfy 0 <= rho < 1, got {rho}")


def ar1_covariance_1d(n: int, rho: float) -> CorrelationMatrix:
    """1次元AR(1)のToeplitz共分散 A_ij = ρ^|i−j|"""
    _check_rho(rho)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    index = np.arange(n)
    return CorrelationMatrix(float(rho) ** np.abs(index[:, None] - index[None, :]))


def ar1_covariance_2d(block_size: int, rho: float) -> CorrelationMatrix:
    """
    分離型2次元AR(1)共分散 A⊗A（ラスター順の画素、N = block_size²）

    画像符号化の標準的な合成ソースです。
    """
    _check_rho(rho)
    log2_dimension(block_size)
    one_d = ar1_covariance_1d(block_size, rho).values
    return CorrelationMatrix(np.kron(one_d, one_d))


def sample_residuals(
    phi: Union[CorrelationMatrix, npt.ArrayLike], count: int, seed: Seed = 0
) -> ResidualDataset:
    """
    共分散Φを持つガウス残差ベクトルを生成

    固有値分解による着色 r = Kᵀ·√Λ·z を使います。同じseedなら同一のデータです。

    引数:
        phi: 半正定値の共分散
        count: ベクトル数（≥ 1）
        seed: 乱数シード（整数または整数列）

    戻り値:
        単一クラスのResidualDataset（float64）
    """
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    klt = jacobi_eigen(phi)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, klt.n))
    scales = np.sqrt(np.clip(klt.eigenvalues, 0.0, None))
    return ResidualDataset.single_class((z * scales) @ klt.basis)


def class_correlations(dataset: ResidualDataset) -> list[CorrelationMatrix]:
    """
    クラスごとの相関行列（クラスID順）

    ブロックのないクラスはsample_count=0の零行列になります。
    """
    correlations = []
    for class_id in range(dataset.classes):
        vectors = dataset.for_class(class_id)
        if len(vectors):
            correlations.append(accumulate_correlation(vectors))
        else:
            correlations.append(CorrelationMatrix(np.zeros((dataset.n, dataset.n)), 0))
    return correlations


def synthesize_ar1_dataset(
    block_size: int, rho: float, count: int, classes: int = 1, seed: int = 0
) -> ResidualDataset:
    """
    2次元AR(1)ソースから複数クラスの残差データセットを合成

    クラスkは相関係数ρ^(1+k/10)とシード列(seed, k)を使うため、
    クラスごとに統計が異なり、結果はシードに対して決定的です。

    引数:
        block_size: ブロックの一辺（2のべき乗、N = block_size²）
        rho: 基準の相関係数（0 ≤ ρ < 1）
        count: クラスあたりのブロック数
        classes: クラス数C

    戻り値:
        float64のResidualDataset
    """
    if classes < 1:
        raise ArgumentError(f"classes must be >= 1, got {classes}")
    per_class = []
    for class_id in range(classes):
        phi = ar1_covariance_2d(block_size, rho ** (1.0 + class_id / 10.0))
        per_class.append(sample_residuals(phi, count, (seed, class_id)).vectors)
    return ResidualDataset.from_classes(per_class)
