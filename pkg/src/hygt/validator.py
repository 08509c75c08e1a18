"""モデルバンドルのバリデータ"""

from collections.abc import Callable
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from hygt.bundle import ModelBundle
from hygt.dataset import ResidualDataset
from hygt.errors import FormatError
from hygt.formats import read_bundle
from hygt.transform import MAX_MATRIX_DIMENSION, to_matrix

ORTHOGONALITY_TOLERANCE = 1e-12


class ValidationResult(BaseModel):
    """バンドル検証の結果"""

    is_valid: bool
    errors: list[str] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)
    bundle_name: str

    def add_error(self, message: str) -> None:
        """エラーメッセージを追加"""
        self.errors.append(message)
        self.is_valid = False

    def add_warning(self, message: str) -> None:
        """警告メッセージを追加"""
        self.warnings.append(message)


Rule = Callable[[ModelBundle, ValidationResult], None]


class BundleValidator:
    """
    モデルバンドルの構造と数値的な健全性を検証

    検証項目:
    - ファイルが読めること（ヘッダ、角度コードの範囲、置換の全単射）
    - 各クラスの変換行列の直交性
    - データセットとの互換性（次元、クラス数）

    恒等変換のクラスとソーティングパスのないクラスは警告します。
    """

    def __init__(self) -> None:
        self.rules: list[Rule] = [
            self._check_orthogonality,
            self._check_identity_classes,
            self._check_sorting_pass,
        ]

    def validate_bundle(
        self,
        bundle: Union[ModelBundle, str, Path],
        dataset: Optional[ResidualDataset] = None,
    ) -> ValidationResult:
        """
        モデルバンドルを検証

        引数:
            bundle: ModelBundle、またはHYGTファイルへのパス
            dataset: 互換性を確認する残差データセット（任意）

        戻り値:
            エラーと警告を含むValidationResult
        """
        if isinstance(bundle, ModelBundle):
            result = ValidationResult(is_valid=True, bundle_name="<memory>")
        else:
            path = Path(bundle)
            result = ValidationResult(is_valid=True, bundle_name=path.stem)
            if not path.exists():
                result.add_error(f"モデルファイルが見つかりません: {path}")
                return result
            try:
                bundle = read_bundle(path)
            except FormatError as e:
                result.add_error(f"モデルファイルを読み込めません: {e}")
                return result

        for rule in self.rules:
            rule(bundle, result)
        if dataset is not None:
            self._check_dataset(bundle, dataset, result)
        return result

    def _check_orthogonality(self, bundle: ModelBundle, result: ValidationResult) -> None:
        if bundle.dimension > MAX_MATRIX_DIMENSION:
            result.add_warning(f"N={bundle.dimension}は大きすぎるため直交性の検証を省略しました")
            return
        identity = np.eye(bundle.dimension)
        for class_id in range(bundle.class_count):
            t = to_matrix(bundle.float_model(class_id))
            deviation = float(np.max(np.abs(t @ t.T - identity)))
            if deviation >= ORTHOGONALITY_TOLERANCE:
                result.add_error(
                    f"クラス{class_id}の変換が直交ではありません（最大偏差 {deviation:.3g}）"
                )

    def _check_identity_classes(self, bundle: ModelBundle, result: ValidationResult) -> None:
        for class_id in range(bundle.class_count):
            model = bundle.float_model(class_id)
            if not np.any(model.angles) and not model.has_permutation:
                result.add_warning(
                    f"クラス{class_id}は恒等変換です（学習サンプル不足の可能性があります）"
                )

    def _check_sorting_pass(self, bundle: ModelBundle, result: ValidationResult) -> None:
        missing = [k for k, model in enumerate(bundle.models) if not model.has_permutation]
        if missing:
            result.add_warning(
                f"ソーティングパスのないクラス: {', '.join(str(k) for k in missing)}"
            )

    def _check_dataset(
        self, bundle: ModelBundle, dataset: ResidualDataset, result: ValidationResult
    ) -> None:
        if dataset.n != bundle.dimension:
            result.add_error(
                f"次元が一致しません: データセット N={dataset.n}、モデル N={bundle.dimension}"
            )
        if dataset.classes != bundle.class_count:
            result.add_error(
                f"クラス数が一致しません: データセット {dataset.classes}、"
                f"モデル {bundle.class_count}"
            )
