"""
HyGT角度パラメータの学習

目的関数は変換後の分散ベクトル v(h) = diag(T(h)·Φ·T(h)ᵀ) の符号化利得です。
非凸問題なので、貪欲なJacobi初期化から始める巡回座標降下を複数の初期値で繰り返し、
最良の局所解を選びます。

座標降下の2段階:
1. Jacobiスイープ: 各角度を、そのパスまで伝播した共分散の2×2ブロックを対角化する
   角度（閉形式）に置き換える。真の利得が下がる更新は採用しない。
2. 仕上げスイープ: 各角度について、他の角度を固定したときの最終分散ベクトルを
   角度の三角多項式として閉形式で評価し、格子探索と黄金分割探索で真の利得を最大化する。

どちらの段階も利得を単調に増加させます。
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from hygt.errors import ArgumentError
from hygt.statistics import (
    PSD_TOLERANCE,
    VARIANCE_FLOOR,
    CorrelationMatrix,
    coding_gain_db,
    jacobi_eigen,
)
from hygt.transform import (
    FloatArray,
    HyGTModel,
    PassIndexing,
    apply_pass,
    conjugate_pass,
    hypercube_indices,
    model_passes,
)

logger = logging.getLogger(__name__)

InitMode = Literal["greedy_jacobi", "random", "zero"]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_TOLERANCE = 1e-10
_GOLDEN_MAX_ITERATIONS = 64


class OptimizerConfig(BaseModel):
    """
    最適化の設定

    restart 0はinit_modeで初期化し、それ以外のrestartは[0, 2π)の一様乱数角度から始めます。
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    restarts: int = Field(default=4, ge=1)
    max_sweeps: int = Field(default=50, ge=1)
    gain_tolerance: float = Field(default=1e-4, gt=0.0)
    seed: int = Field(default=0, ge=0)
    init_mode: InitMode = "greedy_jacobi"
    polish_sweeps: int = Field(default=8, ge=0)
    polish_grid: int = Field(default=33, ge=3)
    workers: int = Field(default=1, ge=1)


class TrainingReport(BaseModel):
    """学習結果の記録（dB値はrestartごと、軌跡はスイープごと）"""

    final_gain_db: list[float]
    best_restart: int
    trajectories: list[list[float]]
    init_modes: list[str]
    klt_gain_db: float
    gain_ratio: float

    @property
    def best_gain_db(self) -> float:
        return self.final_gain_db[self.best_restart]


def _matrix(phi: Union[CorrelationMatrix, npt.ArrayLike]) -> FloatArray:
    if isinstance(phi, CorrelationMatrix):
        return phi.values
    return CorrelationMatrix(np.asarray(phi)).values


def propagate_covariance(
    passes: Sequence[tuple[PassIndexing, npt.ArrayLike]],
    phi: Union[CorrelationMatrix, npt.ArrayLike],
) -> CorrelationMatrix:
    """
    パス列を共分散の両側に適用: F_k⋯F_1·Φ·F_1ᵀ⋯F_kᵀ

    各パスは対ごとに行と列を回転するだけで、1パスあたりO(N²)です。

    引数:
        passes: 適用順の(インデックス対, 角度)の列（model_passesの接頭辞など）
        phi: 共分散

    戻り値:
        伝播後のCorrelationMatrix
    """
    a = _matrix(phi)
    for indexing, thetas in passes:
        if indexing.dimension != a.shape[0]:
            raise ArgumentError(
                f"pass dimension {indexing.dimension} does not match covariance {a.shape[0]}"
            )
        a = conjugate_pass(a, indexing, thetas)
    count = phi.sample_count if isinstance(phi, CorrelationMatrix) else 0
    return CorrelationMatrix((a + a.T) / 2.0, count)


def jacobi_angle(phi_mm: float, phi_nn: float, phi_mn: float) -> float:
    """
    2×2対称ブロックを対角化する角度 θ = ½·atan2(2·φ_mn, φ_mm − φ_nn)

    回転後は大きい方の分散がインデックスm側に来ます。φ_mn = 0かつφ_mm = φ_nnなら0。
    """
    return 0.5 * math.atan2(2.0 * (phi_mn + 0.0), phi_mm - phi_nn)


def _jacobi_angles(a: FloatArray, indexing: PassIndexing) -> FloatArray:
    m, n = indexing.m, indexing.n
    return 0.5 * np.arctan2(2.0 * (a[m, n] + 0.0), a[m, m] - a[n, n])


def greedy_init(
    phi: Union[CorrelationMatrix, npt.ArrayLike], log2_n: int, rounds: int
) -> HyGTModel:
    """
    貪欲なJacobi初期化

    適用順にパスを処理し、各バタフライの角度をその時点の伝播共分散の
    jacobi_angleに設定してから、次のパスのために共分散を更新します。
    """
    a = _matrix(phi)
    model = HyGTModel.identity(log2_n, rounds)
    if a.shape[0] != model.dimension:
        raise ArgumentError(f"covariance dimension {a.shape[0]} != {model.dimension}")

    angles = np.zeros_like(model.angles)
    for r in range(rounds):
        for p in range(log2_n):
            indexing = hypercube_indices(log2_n, p)
            angles[r, p] = _jacobi_angles(a, indexing)
            a = conjugate_pass(a, indexing, angles[r, p])
    return HyGTModel(log2_n, rounds, angles)


def _gain_of(variances: FloatArray) -> FloatArray:
    # coding_gain_dbと同じ式を最終軸に沿って一括評価する
    mean = variances.mean(axis=-1)
    floor = VARIANCE_FLOOR * np.maximum(mean, np.finfo(np.float64).tiny)
    logs = np.log10(np.maximum(variances, floor[..., None]))
    return 10.0 * np.log10(np.maximum(mean, np.finfo(np.float64).tiny)) - 10.0 * logs.mean(axis=-1)


def _model_gain(angles: FloatArray, log2_n: int, a: FloatArray) -> float:
    for r in range(angles.shape[0]):
        for p in range(log2_n):
            a = conjugate_pass(a, hypercube_indices(log2_n, p), angles[r, p])
    return coding_gain_db(np.diag(a))


class _ButterflyObjective:
    """
    1つの角度θだけを動かしたときの最終分散ベクトル v(θ)

    後続パスの積をS、このパスの現在の行列をF、このパス直前の共分散をAとすると
    W = S·F で v_i = W_i·A·W_iᵀ。θが変えるのはWの列m, nだけなので
        u_m = cosθ·S[:, m] − sinθ·S[:, n]
        u_n = sinθ·S[:, m] + cosθ·S[:, n]
    として v = base + 2(u_m·h_m + u_n·h_n) + u_m²A_mm + 2u_m·u_n·A_mn + u_n²A_nn。
    準備にO(N³)、評価はO(N)です。
    """

    def __init__(self, remainder: FloatArray, suffix: FloatArray, a: FloatArray, m: int, n: int):
        fixed = remainder.copy()
        fixed[:, [m, n]] = 0.0
        q = fixed @ a
        self.base = np.einsum("ij,ij->i", q, fixed)
        self.h_m = q[:, m]
        self.h_n = q[:, n]
        self.s_m = suffix[:, m]
        self.s_n = suffix[:, n]
        self.a_mm, self.a_nn, self.a_mn = a[m, m], a[n, n], a[m, n]

    def variances(self, theta: npt.ArrayLike) -> FloatArray:
        theta = np.asarray(theta, dtype=np.float64)[..., None]
        c, s = np.cos(theta), np.sin(theta)
        u_m = c * self.s_m - s * self.s_n
        u_n = s * self.s_m + c * self.s_n
        return (
            self.base
            + 2.0 * (u_m * self.h_m + u_n * self.h_n)
            + u_m * u_m * self.a_mm
            + 2.0 * u_m * u_n * self.a_mn
            + u_n * u_n * self.a_nn
        )

    def gain(self, theta: npt.ArrayLike) -> FloatArray:
        return _gain_of(self.variances(theta))


def _golden_section(objective: _ButterflyObjective, lo: float, hi: float) -> float:
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = float(objective.gain(x1)), float(objective.gain(x2))
    for _ in range(_GOLDEN_MAX_ITERATIONS):
        if hi - lo < _GOLDEN_TOLERANCE:
            break
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = float(objective.gain(x2))
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = float(objective.gain(x1))
    return (lo + hi) / 2.0


def _line_search(objective: _ButterflyObjective, grid: int) -> float:
    # 後続パスがあると目的関数の周期は2π: [0, π)の格子点とその対蹠点を評価する
    step = np.pi / grid
    base = np.arange(grid) * step
    candidates = np.concatenate([base, base + np.pi])
    centre = float(candidates[int(np.argmax(objective.gain(candidates)))])
    refined = _golden_section(objective, centre - step, centre + step)
    if float(objective.gain(refined)) >= float(objective.gain(centre)):
        return float(np.mod(refined, 2.0 * np.pi))
    return centre


def _suffix_products(angles: FloatArray, log2_n: int) -> list[FloatArray]:
    # suffix[k] = F_{P−1}⋯F_{k+1}（パスkより後のパスの積）
    passes = [
        (hypercube_indices(log2_n, p), angles[r, p])
        for r in range(angles.shape[0])
        for p in range(log2_n)
    ]
    current = np.eye(1 << log2_n)
    suffix: list[FloatArray] = [current] * len(passes)
    for k in reversed(range(len(passes))):
        suffix[k] = current
        indexing, thetas = passes[k]
        current = apply_pass(current, indexing, -thetas)
    return suffix


def _sweep(angles: FloatArray, log2_n: int, phi: FloatArray, phase: str, grid: int) -> int:
    """1回の座標降下スイープ（anglesをその場で更新し、更新した角度数を返す）"""
    suffix = _suffix_products(angles, log2_n)
    a = phi
    updated = 0
    k = 0
    for r in range(angles.shape[0]):
        for p in range(log2_n):
            indexing = hypercube_indices(log2_n, p)
            s_k = suffix[k]
            remainder = apply_pass(s_k, indexing, -angles[r, p])
            for j in range(indexing.m.size):
                m, n = int(indexing.m[j]), int(indexing.n[j])
                objective = _ButterflyObjective(remainder, s_k, a, m, n)
                if phase == "jacobi":
                    candidate = jacobi_angle(a[m, m], a[n, n], a[m, n])
                else:
                    candidate = _line_search(objective, grid)
                if float(objective.gain(candidate)) > float(objective.gain(angles[r, p, j])):
                    angles[r, p, j] = candidate
                    c, s = math.cos(candidate), math.sin(candidate)
                    remainder[:, m] = c * s_k[:, m] - s * s_k[:, n]
                    remainder[:, n] = s * s_k[:, m] + c * s_k[:, n]
                    updated += 1
            a = conjugate_pass(a, indexing, angles[r, p])
            k += 1
    return updated


@dataclass
class _RestartOutcome:
    angles: FloatArray
    trajectory: list[float]


def _run_restart(
    index: int, initial: FloatArray, log2_n: int, phi: FloatArray, config: OptimizerConfig
) -> _RestartOutcome:
    angles = np.array(initial, dtype=np.float64)
    gain = _model_gain(angles, log2_n, phi)
    trajectory = [gain]
    for phase, sweeps in (("jacobi", config.max_sweeps), ("polish", config.polish_sweeps)):
        for sweep in range(sweeps):
            updated = _sweep(angles, log2_n, phi, phase, config.polish_grid)
            new_gain = _model_gain(angles, log2_n, phi)
            trajectory.append(new_gain)
            improvement, gain = new_gain - gain, new_gain
            logger.debug(
                "restart %d %s sweep %d: %.6f dB (%d angles updated)",
                index, phase, sweep, gain, updated,
            )
            if improvement < config.gain_tolerance:
                break
    return _RestartOutcome(angles, trajectory)


def _initial_angles(
    index: int, phi: FloatArray, log2_n: int, rounds: int, config: OptimizerConfig
) -> tuple[str, FloatArray]:
    mode = config.init_mode if index == 0 else "random"
    if mode == "greedy_jacobi":
        return mode, np.array(greedy_init(phi, log2_n, rounds).angles)
    if mode == "zero":
        return mode, np.zeros((rounds, log2_n, 1 << (log2_n - 1)))
    return mode, np.array(HyGTModel.random(log2_n, rounds, [config.seed, index]).angles)


def optimize(
    phi: Union[CorrelationMatrix, npt.ArrayLike],
    log2_n: int,
    rounds: int,
    config: Optional[OptimizerConfig] = None,
    warm_start: Optional[HyGTModel] = None,
) -> tuple[HyGTModel, TrainingReport]:
    """
    符号化利得を最大化するHyGT角度を探索

    引数:
        phi: 半正定値の共分散（N = 2^log2_n）
        log2_n: log2(N)
        rounds: ラウンド数R
        config: 最適化設定（省略時は既定値）
        warm_start: 追加の初期値として使うモデル（restart番号はconfig.restarts）

    戻り値:
        (最良モデル（置換なし）, TrainingReport)

    例外:
        ArgumentError: Φが半正定値でない、または次元が合わない場合
    """
    config = config or OptimizerConfig()
    a = _matrix(phi)
    template = HyGTModel.identity(log2_n, rounds)
    if a.shape[0] != template.dimension:
        raise ArgumentError(f"covariance dimension {a.shape[0]} != {template.dimension}")

    klt = jacobi_eigen(a)
    scale = max(abs(float(np.trace(a))), np.finfo(np.float64).tiny)
    if klt.eigenvalues.min() < -PSD_TOLERANCE * scale:
        raise ArgumentError(
            f"covariance is not positive semi-definite (min eigenvalue {klt.eigenvalues.min():.3g})"
        )
    klt_gain = coding_gain_db(klt.eigenvalues)

    starts = [_initial_angles(i, a, log2_n, rounds, config) for i in range(config.restarts)]
    if warm_start is not None:
        if (warm_start.log2_n, warm_start.rounds) != (log2_n, rounds):
            raise ArgumentError("warm start model must have the same log2_n and rounds")
        starts.append(("warm_start", np.array(warm_start.angles)))

    def run(index: int) -> _RestartOutcome:
        return _run_restart(index, starts[index][1], log2_n, a, config)

    if config.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run, range(len(starts))))
    else:
        outcomes = [run(i) for i in range(len(starts))]

    finals = [outcome.trajectory[-1] for outcome in outcomes]
    best = int(np.argmax(finals))
    best_gain = finals[best]
    ratio = best_gain / klt_gain if klt_gain > 0.0 else 1.0
    logger.info(
        "N=%d R=%d: best restart %d, %.4f dB (KLT %.4f dB, ratio %.4f)",
        template.dimension, rounds, best, best_gain, klt_gain, ratio,
    )

    report = TrainingReport(
        final_gain_db=finals,
        best_restart=best,
        trajectories=[outcome.trajectory for outcome in outcomes],
        init_modes=[mode for mode, _ in starts],
        klt_gain_db=klt_gain,
        gain_ratio=ratio,
    )
    return HyGTModel(log2_n, rounds, outcomes[best].angles), report


def variance_permutation(
    model: HyGTModel, phi: Union[CorrelationMatrix, npt.ArrayLike]
) -> HyGTModel:
    """
    変換係数を分散の降順に並べるソーティングパスを付加

    同じ分散は元のインデックスの昇順（安定ソート）。符号化利得は変わりません。
    """
    if model.has_permutation:
        raise ArgumentError("model already has a permutation pass")
    variances = np.diag(propagate_covariance(model_passes(model), phi).values)
    return model.with_permutation(np.argsort(-variances, kind="stable"))


@dataclass(frozen=True)
class ClassTrainingResult:
    """1クラス分の学習結果（サンプル不足で恒等変換にした場合はreportなし）"""

    class_id: int
    model: HyGTModel
    report: Optional[TrainingReport]
    sample_count: int

    @property
    def fallback(self) -> bool:
        return self.report is None


def train_classes(
    correlations: Sequence[CorrelationMatrix],
    log2_n: int,
    rounds: int,
    config: Optional[OptimizerConfig] = None,
    workers: int = 1,
) -> list[ClassTrainingResult]:
    """
    クラスごとに独立してHyGTを学習し、分散ソーティングパスを付加

    クラス間でパラメータは共有しません。サンプル数がN未満のクラスは警告して
    恒等変換にします。結果は完了順によらずクラスID昇順です。
    """
    config = config or OptimizerConfig()
    n = 1 << log2_n

    def train(class_id: int) -> ClassTrainingResult:
        phi = correlations[class_id]
        if phi.sample_count < n:
            logger.warning(
                "class %d has %d samples (< N=%d); using the identity transform",
                class_id, phi.sample_count, n,
            )
            return ClassTrainingResult(
                class_id, HyGTModel.identity(log2_n, rounds), None, phi.sample_count
            )
        model, report = optimize(phi, log2_n, rounds, config)
        return ClassTrainingResult(
            class_id, variance_permutation(model, phi), report, phi.sample_count
        )

    if workers > 1 and len(correlations) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(train, range(len(correlations))))
    return [train(class_id) for class_id in range(len(correlations))]
