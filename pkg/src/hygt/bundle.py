"""クラスごとのHyGTモデルの集合（モデルバンドル）、学習と適用"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from hygt.dataset import ResidualDataset
from hygt.errors import ArgumentError
from hygt.fixedpoint import (
    DEFAULT_ANGLE_BITS,
    DEFAULT_PRECISION_BITS,
    MAX_ANGLE_BITS,
    MAX_PRECISION_BITS,
    MIN_PRECISION_BITS,
    QuantizedHyGTModel,
    TrigTable,
    build_trig_table,
    dequantize_model,
    forward_fixed,
    inverse_fixed,
    quantize_model,
)
from hygt.optimizer import ClassTrainingResult, OptimizerConfig, train_classes
from hygt.statistics import class_correlations
from hygt.transform import MAX_LOG2_N, HyGTModel, forward, inverse

logger = logging.getLogger(__name__)

AnyModel = Union[HyGTModel, QuantizedHyGTModel]
Direction = Literal["forward", "inverse"]
Arithmetic = Literal["float", "fixed"]


class ClassTrainingSummary(BaseModel):
    """1クラス分の学習結果の要約"""

    class_id: int
    sample_count: int
    rounds: int
    fallback: bool = False
    hygt_gain_db: Optional[float] = None
    klt_gain_db: Optional[float] = None
    gain_ratio: Optional[float] = None
    best_restart: Optional[int] = None
    final_gain_db: list[float] = Field(default_factory=list)
    trajectories: list[list[float]] = Field(default_factory=list)

    @classmethod
    def from_result(cls, result: ClassTrainingResult) -> "ClassTrainingSummary":
        report = result.report
        if report is None:
            return cls(
                class_id=result.class_id,
                sample_count=result.sample_count,
                rounds=result.model.rounds,
                fallback=True,
            )
        return cls(
            class_id=result.class_id,
            sample_count=result.sample_count,
            rounds=result.model.rounds,
            hygt_gain_db=report.best_gain_db,
            klt_gain_db=report.klt_gain_db,
            gain_ratio=report.gain_ratio,
            best_restart=report.best_restart,
            final_gain_db=report.final_gain_db,
            trajectories=report.trajectories,
        )


class TrainingMetadata(BaseModel):
    """
    学習条件と結果（モデルファイルと並べて<model>.jsonに保存）

    キーの順序はフィールドの宣言順で固定です。
    """

    dimension: int
    rounds: int
    angle_bits: int
    precision_bits: int
    optimizer: OptimizerConfig
    classes: list[ClassTrainingSummary] = Field(default_factory=list)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """
    クラスIDごとのHyGTモデルの集合

    全モデルが同じNを持ちます。angle_bitsが0なら全モデルがfloat角度のHyGTModel、
    それ以外は全モデルが同じビット幅のQuantizedHyGTModelです。
    sin/cosテーブルはバンドル内の全モデルで共有されます。
    """

    log2_n: int
    models: tuple[AnyModel, ...]
    angle_bits: int = 0
    precision_bits: int = DEFAULT_PRECISION_BITS
    metadata: Optional[TrainingMetadata] = None

    def __post_init__(self) -> None:
        models = tuple(self.models)
        object.__setattr__(self, "models", models)
        if not 1 <= self.log2_n <= MAX_LOG2_N:
            raise ArgumentError(f"log2_n must be in 1..{MAX_LOG2_N}, got {self.log2_n}")
        if not models:
            raise ArgumentError("a model bundle needs at least one class")
        if not 0 <= self.angle_bits <= MAX_ANGLE_BITS:
            raise ArgumentError(f"angle_bits must be in 0..{MAX_ANGLE_BITS}")
        if not MIN_PRECISION_BITS <= self.precision_bits <= MAX_PRECISION_BITS:
            raise ArgumentError(
                f"precision_bits must be in {MIN_PRECISION_BITS}..{MAX_PRECISION_BITS}"
            )

        for class_id, model in enumerate(models):
            if model.log2_n != self.log2_n:
                raise ArgumentError(
                    f"class {class_id} has N={model.dimension}, bundle has N={self.dimension}"
                )
            if self.angle_bits == 0 and not isinstance(model, HyGTModel):
                raise ArgumentError(f"class {class_id}: float bundle holds a quantized model")
            if self.angle_bits > 0 and (
                not isinstance(model, QuantizedHyGTModel) or model.angle_bits != self.angle_bits
            ):
                raise ArgumentError(
                    f"class {class_id}: expected a model with {self.angle_bits}-bit angle codes"
                )

    @property
    def dimension(self) -> int:
        return 1 << self.log2_n

    @property
    def class_count(self) -> int:
        return len(self.models)

    @property
    def quantized(self) -> bool:
        return self.angle_bits > 0

    def _model(self, class_id: int) -> AnyModel:
        if not 0 <= class_id < self.class_count:
            raise ArgumentError(f"class id {class_id} out of range 0..{self.class_count - 1}")
        return self.models[class_id]

    def float_model(self, class_id: int) -> HyGTModel:
        """クラスのモデルをfloat角度で返す（量子化済みなら逆量子化）"""
        model = self._model(class_id)
        if isinstance(model, QuantizedHyGTModel):
            return dequantize_model(model)
        return model

    def quantized_model(self, class_id: int) -> QuantizedHyGTModel:
        """
        整数演算用のモデル

        float角度のバンドルでは既定の8ビットで量子化して返します。
        """
        model = self._model(class_id)
        if isinstance(model, QuantizedHyGTModel):
            return model
        return quantize_model(model, DEFAULT_ANGLE_BITS)

    def trig_table(self) -> TrigTable:
        """quantized_modelと組み合わせる共有sin/cosテーブル"""
        return build_trig_table(self.angle_bits or DEFAULT_ANGLE_BITS, self.precision_bits)

    @classmethod
    def from_models(
        cls,
        models: Sequence[HyGTModel],
        angle_bits: int = 0,
        precision_bits: int = DEFAULT_PRECISION_BITS,
        metadata: Optional[TrainingMetadata] = None,
    ) -> "ModelBundle":
        """
        float角度のモデル列からバンドルを作成

        引数:
            models: クラスID順のモデル
            angle_bits: 0ならfloatのまま、1〜12なら量子化して保持
            precision_bits: 共有テーブルの乗数精度
            metadata: 学習メタデータ

        戻り値:
            ModelBundle
        """
        if not models:
            raise ArgumentError("a model bundle needs at least one class")
        stored: list[AnyModel] = (
            [quantize_model(model, angle_bits) for model in models]
            if angle_bits > 0
            else list(models)
        )
        return cls(models[0].log2_n, tuple(stored), angle_bits, precision_bits, metadata)


def train_bundle(
    dataset: ResidualDataset,
    rounds: int,
    config: Optional[OptimizerConfig] = None,
    angle_bits: int = 0,
    precision_bits: int = DEFAULT_PRECISION_BITS,
    workers: int = 1,
) -> ModelBundle:
    """
    データセットの各クラスについてHyGTを学習し、バンドルにまとめる

    クラスごとに相関を推定して最適化し、分散ソーティングパスを付加してから
    （angle_bits > 0なら）角度を量子化します。

    引数:
        dataset: 残差データセット
        rounds: ラウンド数R
        config: 最適化設定
        angle_bits: 0ならfloat角度、1〜12なら量子化コード
        precision_bits: 共有テーブルの乗数精度
        workers: 並行して学習するクラス数

    戻り値:
        メタデータ付きのModelBundle
    """
    config = config or OptimizerConfig()
    results = train_classes(
        class_correlations(dataset), dataset.log2_n, rounds, config, workers
    )
    for result in results:
        if result.report is not None:
            logger.info(
                "class %d: %.4f dB (KLT %.4f dB) from %d blocks",
                result.class_id, result.report.best_gain_db, result.report.klt_gain_db,
                result.sample_count,
            )
    metadata = TrainingMetadata(
        dimension=dataset.n,
        rounds=rounds,
        angle_bits=angle_bits,
        precision_bits=precision_bits,
        optimizer=config,
        classes=[ClassTrainingSummary.from_result(result) for result in results],
    )
    return ModelBundle.from_models(
        [result.model for result in results], angle_bits, precision_bits, metadata
    )


def apply_bundle(
    bundle: ModelBundle,
    dataset: ResidualDataset,
    direction: Direction = "forward",
    arithmetic: Arithmetic = "float",
) -> ResidualDataset:
    """
    各ブロックにそのクラスの変換を適用

    整数演算では入力を最も近い整数に丸めてから変換します。
    ブロックの順序とクラスIDは入力のままです。

    引数:
        bundle: モデルバンドル
        dataset: 同じNの残差データセット
        direction: "forward"または"inverse"
        arithmetic: "float"または"fixed"

    戻り値:
        変換後のデータセット（float64）
    """
    if dataset.n != bundle.dimension:
        raise ArgumentError(f"dataset has N={dataset.n}, bundle has N={bundle.dimension}")
    if dataset.classes > bundle.class_count:
        raise ArgumentError(
            f"dataset has {dataset.classes} classes, bundle only {bundle.class_count}"
        )
    if direction not in ("forward", "inverse") or arithmetic not in ("float", "fixed"):
        raise ArgumentError(f"unsupported transform {direction}/{arithmetic}")

    output = np.zeros(dataset.vectors.shape, dtype=np.float64)
    for class_id in range(dataset.classes):
        mask = dataset.class_ids == class_id
        if not mask.any():
            continue
        vectors = dataset.vectors[mask].astype(np.float64)
        if arithmetic == "float":
            model = bundle.float_model(class_id)
            float_op = forward if direction == "forward" else inverse
            output[mask] = float_op(model, vectors)
        else:
            quantized = bundle.quantized_model(class_id)
            fixed_op = forward_fixed if direction == "forward" else inverse_fixed
            output[mask] = fixed_op(quantized, bundle.trig_table(), np.rint(vectors))
    return dataset.with_vectors(output)
