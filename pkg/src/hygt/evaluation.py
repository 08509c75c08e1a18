"""
HyGTとKLTの比較: 符号化利得とメモリ使用量

メモリ使用比 = KLTの記憶量 / HyGTの記憶量。1スカラー1単位で数えるため、
fixedpoint.memory_footprintと常に一致します。
"""

import logging
import re
from collections.abc import Sequence
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from hygt.bundle import ModelBundle
from hygt.dataset import ResidualDataset
from hygt.errors import ArgumentError
from hygt.fixedpoint import TransformKind, memory_footprint
from hygt.optimizer import propagate_covariance
from hygt.statistics import accumulate_correlation, coding_gain_db, jacobi_eigen
from hygt.transform import model_passes

logger = logging.getLogger(__name__)

REPORT_DECIMALS = 4
DEFAULT_SCHEME_SIZES = (4, 6)
TRANSFORMS_PER_SIZE = 105

_SCHEME_TERM = re.compile(r"^\s*(?:(K)|H\((\d+)\))\s*$")


def _rounded(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(float(value), REPORT_DECIMALS)


class ClassEvaluation(BaseModel):
    """1クラス分の評価（サンプルがないクラスの利得はNone）"""

    class_id: int
    sample_count: int
    rounds: int
    has_permutation: bool
    hygt_gain_db: Optional[float]
    klt_gain_db: Optional[float]
    gain_ratio: Optional[float]
    num_parameters: int
    hygt_memory_units: int
    klt_memory_units: int
    memory_ratio: float


class BundleEvaluation(BaseModel):
    """1つのモデルバンドル（1ブロックサイズ）の評価"""

    dimension: int
    angle_bits: int
    class_count: int
    classes: list[ClassEvaluation]
    average_hygt_gain_db: Optional[float]
    average_klt_gain_db: Optional[float]
    average_gain_ratio: Optional[float]
    hygt_memory_units: int
    klt_memory_units: int
    memory_ratio: float


class AggregateEvaluation(BaseModel):
    """全バンドルを合わせた平均とメモリ比"""

    bundle_count: int
    class_count: int
    average_hygt_gain_db: Optional[float]
    average_klt_gain_db: Optional[float]
    average_gain_ratio: Optional[float]
    hygt_memory_units: int
    klt_memory_units: int
    memory_ratio: float


class EvaluationReport(BaseModel):
    bundles: list[BundleEvaluation] = Field(default_factory=list)
    aggregate: AggregateEvaluation


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return _rounded(float(np.mean(present))) if present else None


def _evaluate_class(
    bundle: ModelBundle, dataset: ResidualDataset, class_id: int
) -> ClassEvaluation:
    model = bundle.float_model(class_id)
    vectors = dataset.for_class(class_id)
    hygt_gain: Optional[float] = None
    klt_gain: Optional[float] = None
    ratio: Optional[float] = None
    if len(vectors):
        phi = accumulate_correlation(vectors)
        variances = np.diag(propagate_covariance(model_passes(model), phi).values)
        hygt_gain = coding_gain_db(variances)
        klt_gain = coding_gain_db(jacobi_eigen(phi).eigenvalues)
        ratio = hygt_gain / klt_gain if klt_gain > 0.0 else 1.0
    else:
        logger.warning("class %d has no blocks in the dataset; gains not reported", class_id)

    hygt_units = memory_footprint(TransformKind.HYGT, bundle.log2_n, model.rounds, 1)
    klt_units = memory_footprint(TransformKind.KLT, bundle.log2_n, model.rounds, 1)
    return ClassEvaluation(
        class_id=class_id,
        sample_count=len(vectors),
        rounds=model.rounds,
        has_permutation=model.has_permutation,
        hygt_gain_db=_rounded(hygt_gain),
        klt_gain_db=_rounded(klt_gain),
        gain_ratio=_rounded(ratio),
        num_parameters=model.num_parameters,
        hygt_memory_units=hygt_units,
        klt_memory_units=klt_units,
        memory_ratio=round(klt_units / hygt_units, REPORT_DECIMALS),
    )


def evaluate_bundle(bundle: ModelBundle, dataset: ResidualDataset) -> BundleEvaluation:
    """
    バンドルの各クラスをデータセットの対応するクラスで評価

    引数:
        bundle: モデルバンドル
        dataset: 同じN・同じクラス数の残差データセット

    戻り値:
        BundleEvaluation（クラスID昇順）

    例外:
        ArgumentError: 次元またはクラス数が一致しない場合
    """
    if dataset.n != bundle.dimension:
        raise ArgumentError(f"dataset has N={dataset.n}, bundle has N={bundle.dimension}")
    if dataset.classes != bundle.class_count:
        raise ArgumentError(
            f"dataset has {dataset.classes} classes, bundle has {bundle.class_count}"
        )

    classes = [_evaluate_class(bundle, dataset, k) for k in range(bundle.class_count)]
    hygt_units = sum(c.hygt_memory_units for c in classes)
    klt_units = sum(c.klt_memory_units for c in classes)
    return BundleEvaluation(
        dimension=bundle.dimension,
        angle_bits=bundle.angle_bits,
        class_count=bundle.class_count,
        classes=classes,
        average_hygt_gain_db=_mean([c.hygt_gain_db for c in classes]),
        average_klt_gain_db=_mean([c.klt_gain_db for c in classes]),
        average_gain_ratio=_mean([c.gain_ratio for c in classes]),
        hygt_memory_units=hygt_units,
        klt_memory_units=klt_units,
        memory_ratio=round(klt_units / hygt_units, REPORT_DECIMALS),
    )


def evaluate(pairs: Sequence[tuple[ModelBundle, ResidualDataset]]) -> EvaluationReport:
    """
    複数のバンドル（例: 4×4用と8×8用）をまとめて評価

    集計のメモリ比は全バンドルの記憶量の合計どうしの比です。
    """
    if not pairs:
        raise ArgumentError("at least one model/data pair is required")
    bundles = [evaluate_bundle(bundle, dataset) for bundle, dataset in pairs]
    classes = [c for b in bundles for c in b.classes]
    hygt_units = sum(b.hygt_memory_units for b in bundles)
    klt_units = sum(b.klt_memory_units for b in bundles)
    return EvaluationReport(
        bundles=bundles,
        aggregate=AggregateEvaluation(
            bundle_count=len(bundles),
            class_count=len(classes),
            average_hygt_gain_db=_mean([c.hygt_gain_db for c in classes]),
            average_klt_gain_db=_mean([c.klt_gain_db for c in classes]),
            average_gain_ratio=_mean([c.gain_ratio for c in classes]),
            hygt_memory_units=hygt_units,
            klt_memory_units=klt_units,
            memory_ratio=round(klt_units / hygt_units, REPORT_DECIMALS),
        ),
    )


class SchemeTerm(BaseModel):
    """方式の1項: KLT（rounds=None）またはR回のHyGT"""

    kind: TransformKind
    rounds: Optional[int] = None

    @property
    def label(self) -> str:
        return "K" if self.kind is TransformKind.KLT else f"H({self.rounds})"

    def memory_units(self, log2_n: int, num_transforms: int) -> int:
        return memory_footprint(self.kind, log2_n, self.rounds or 1, num_transforms)


def parse_scheme(scheme: str) -> list[SchemeTerm]:
    """
    "H(2)/K"のような方式表記を解析

    "A/B"はブロックサイズごとに使う変換で、KはKLT、H(R)はRラウンドのHyGTです。
    """
    terms = []
    for part in scheme.split("/"):
        match = _SCHEME_TERM.match(part)
        if match is None:
            raise ArgumentError(f"cannot parse scheme term {part!r} in {scheme!r}")
        if match.group(1):
            terms.append(SchemeTerm(kind=TransformKind.KLT))
        else:
            rounds = int(match.group(2))
            if rounds < 1:
                raise ArgumentError(f"HyGT rounds must be >= 1 in {scheme!r}")
            terms.append(SchemeTerm(kind=TransformKind.HYGT, rounds=rounds))
    return terms


class SchemeMemory(BaseModel):
    """方式のメモリ使用比（ブロックサイズごとと全体）"""

    scheme: str
    dimensions: list[int]
    per_size: list[float]
    combined: float
    klt_memory_units: int
    scheme_memory_units: int


def scheme_memory_ratios(
    scheme: str,
    log2_sizes: Sequence[int] = DEFAULT_SCHEME_SIZES,
    transforms_per_size: int = TRANSFORMS_PER_SIZE,
) -> SchemeMemory:
    """
    方式のKLTに対するメモリ使用比

    引数:
        scheme: "K/H(3)"のような表記（項の数はlog2_sizesと同じ）
        log2_sizes: 各項を適用するベクトル長のlog2（既定は4×4と8×8ブロック）
        transforms_per_size: ブロックサイズごとの変換数

    戻り値:
        SchemeMemory（例: K/H(3) → 1.0, 7.1, 全体5.2）
    """
    terms = parse_scheme(scheme)
    if len(terms) != len(log2_sizes):
        raise ArgumentError(
            f"scheme {scheme!r} has {len(terms)} terms for {len(log2_sizes)} block sizes"
        )
    klt = [
        memory_footprint(TransformKind.KLT, log2_n, 1, transforms_per_size)
        for log2_n in log2_sizes
    ]
    used = [
        term.memory_units(log2_n, transforms_per_size)
        for term, log2_n in zip(terms, log2_sizes)
    ]
    return SchemeMemory(
        scheme="/".join(term.label for term in terms),
        dimensions=[1 << log2_n for log2_n in log2_sizes],
        per_size=[round(k / u, REPORT_DECIMALS) for k, u in zip(klt, used)],
        combined=round(sum(klt) / sum(used), REPORT_DECIMALS),
        klt_memory_units=sum(klt),
        scheme_memory_units=sum(used),
    )
