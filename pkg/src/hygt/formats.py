"""
ファイル形式: 残差データセット（RBLK）、モデルバンドル（HYGT）、行列テキスト、JSON

バイナリ形式はすべてリトルエンディアンです。

RBLK:
    "RBLK", u8 version, u8 log2_n, u16 class_count, u32 block_count,
    ブロックごとに u16 class_id + N個の値（version 1はfloat32、version 2はfloat64）

HYGT:
    "HYGT", u8 version=1, u8 log2_n, u16 class_count, u8 angle_bits, u8 precision_bits,
    クラスごとに u8 rounds, u8 has_permutation, 適用順の角度
    （angle_bits=0ならfloat64、1〜8なら1バイトのコード、9〜12ならu16のコード）、
    has_permutationなら N個のu16インデックス
"""

import io
import json
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from hygt.bundle import AnyModel, ModelBundle
from hygt.dataset import ResidualDataset
from hygt.errors import ArgumentError, FormatError
from hygt.fixedpoint import QuantizedHyGTModel
from hygt.transform import MAX_LOG2_N, HyGTModel, num_parameters

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DATASET_MAGIC = b"RBLK"
DATASET_VERSION_FLOAT32 = 1
DATASET_VERSION_FLOAT64 = 2
_DATASET_HEADER = struct.Struct("<4sBBHI")
_DATASET_VALUE_TYPES = {DATASET_VERSION_FLOAT32: "<f4", DATASET_VERSION_FLOAT64: "<f8"}

BUNDLE_MAGIC = b"HYGT"
BUNDLE_VERSION = 1
_BUNDLE_HEADER = struct.Struct("<4sBBHBB")
_CLASS_HEADER = struct.Struct("<BB")
_MAX_ROUNDS = 255


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise FormatError(f"truncated file: expected {size} bytes of {what}, got {len(data)}")
    return data


def _block_dtype(n: int, value_type: str) -> np.dtype:
    return np.dtype([("class_id", "<u2"), ("values", value_type, (n,))])


def encode_dataset(dataset: ResidualDataset, wide: bool = False) -> bytes:
    """
    データセットをRBLKバイト列に変換

    引数:
        dataset: 残差データセット
        wide: Trueならfloat64（version 2）、Falseならfloat32（version 1）

    戻り値:
        ファイル内容
    """
    if dataset.classes > 0xFFFF:
        raise ArgumentError(f"at most 65535 classes can be stored, got {dataset.classes}")
    version = DATASET_VERSION_FLOAT64 if wide else DATASET_VERSION_FLOAT32
    dtype = _block_dtype(dataset.n, _DATASET_VALUE_TYPES[version])
    blocks = np.zeros(dataset.block_count, dtype=dtype)
    blocks["class_id"] = dataset.class_ids
    blocks["values"] = dataset.vectors
    header = _DATASET_HEADER.pack(
        DATASET_MAGIC, version, dataset.log2_n, dataset.classes, dataset.block_count
    )
    return header + blocks.tobytes()


def decode_dataset(data: bytes) -> ResidualDataset:
    """RBLKバイト列を読み込む（値はファイルの精度のまま保持）"""
    if len(data) < _DATASET_HEADER.size:
        raise FormatError("truncated residual dataset header")
    magic, version, log2_n, classes, count = _DATASET_HEADER.unpack_from(data)
    if magic != DATASET_MAGIC:
        raise FormatError(f"not a residual dataset (magic {magic!r})")
    if version not in _DATASET_VALUE_TYPES:
        raise FormatError(f"unsupported residual dataset version {version}")
    if not 1 <= log2_n <= MAX_LOG2_N:
        raise FormatError(f"invalid log2_n {log2_n}")

    dtype = _block_dtype(1 << log2_n, _DATASET_VALUE_TYPES[version])
    payload = memoryview(data)[_DATASET_HEADER.size :]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(
            f"dataset payload is {len(payload)} bytes, header announces {count} blocks "
            f"of {dtype.itemsize} bytes"
        )
    blocks = np.frombuffer(payload, dtype=dtype, count=count) if count else np.zeros(0, dtype)
    native = np.float32 if version == DATASET_VERSION_FLOAT32 else np.float64
    try:
        return ResidualDataset(
            1 << log2_n,
            classes,
            blocks["class_id"].astype(np.int64),
            blocks["values"].astype(native),
        )
    except ArgumentError as e:
        raise FormatError(f"invalid residual dataset: {e}") from e


def write_dataset(dataset: ResidualDataset, path: PathLike, wide: bool = False) -> Path:
    path = Path(path)
    path.write_bytes(encode_dataset(dataset, wide))
    logger.info("wrote %d blocks of N=%d to %s", dataset.block_count, dataset.n, path)
    return path


def read_dataset(path: PathLike) -> ResidualDataset:
    return decode_dataset(Path(path).read_bytes())


def _angle_type(angle_bits: int) -> str:
    if angle_bits == 0:
        return "<f8"
    return "u1" if angle_bits <= 8 else "<u2"


def _encode_model(model: AnyModel, angle_type: str) -> bytes:
    if model.rounds > _MAX_ROUNDS:
        raise ArgumentError(f"at most {_MAX_ROUNDS} rounds can be stored, got {model.rounds}")
    values = model.angle_codes if isinstance(model, QuantizedHyGTModel) else model.angles
    parts = [
        _CLASS_HEADER.pack(model.rounds, int(model.has_permutation)),
        np.ascontiguousarray(values, dtype=angle_type).tobytes(),
    ]
    if model.permutation is not None:
        parts.append(np.asarray(model.permutation, dtype="<u2").tobytes())
    return b"".join(parts)


def encode_bundle(bundle: ModelBundle) -> bytes:
    """
    モデルバンドルをHYGTバイト列に変換

    angle_bits ≤ 8の量子化バンドルでは角度1つが1バイトになります。
    """
    if bundle.class_count > 0xFFFF:
        raise ArgumentError(f"at most 65535 classes can be stored, got {bundle.class_count}")
    header = _BUNDLE_HEADER.pack(
        BUNDLE_MAGIC,
        BUNDLE_VERSION,
        bundle.log2_n,
        bundle.class_count,
        bundle.angle_bits,
        bundle.precision_bits,
    )
    angle_type = _angle_type(bundle.angle_bits)
    return header + b"".join(_encode_model(model, angle_type) for model in bundle.models)


def _decode_model(
    stream: BinaryIO, class_id: int, log2_n: int, angle_bits: int
) -> AnyModel:
    rounds, has_permutation = _CLASS_HEADER.unpack(
        _read_exact(stream, _CLASS_HEADER.size, f"class {class_id} header")
    )
    if rounds < 1 or has_permutation not in (0, 1):
        raise FormatError(f"class {class_id}: invalid rounds {rounds} or flag {has_permutation}")

    dtype = np.dtype(_angle_type(angle_bits))
    count = num_parameters(log2_n, rounds)
    raw = _read_exact(stream, count * dtype.itemsize, f"class {class_id} angles")
    values = np.frombuffer(raw, dtype=dtype)
    permutation = None
    if has_permutation:
        n = 1 << log2_n
        raw_perm = _read_exact(stream, 2 * n, f"class {class_id} permutation")
        permutation = np.frombuffer(raw_perm, dtype="<u2").astype(np.int64)

    try:
        if angle_bits == 0:
            return HyGTModel(log2_n, rounds, values.astype(np.float64), permutation)
        return QuantizedHyGTModel(
            log2_n, rounds, angle_bits, values.astype(np.int64), permutation
        )
    except ArgumentError as e:
        raise FormatError(f"class {class_id}: {e}") from e


def decode_bundle(data: bytes) -> ModelBundle:
    """HYGTバイト列を読み込む"""
    stream = io.BytesIO(data)
    magic, version, log2_n, classes, angle_bits, precision_bits = _BUNDLE_HEADER.unpack(
        _read_exact(stream, _BUNDLE_HEADER.size, "bundle header")
    )
    if magic != BUNDLE_MAGIC:
        raise FormatError(f"not a model bundle (magic {magic!r})")
    if version != BUNDLE_VERSION:
        raise FormatError(f"unsupported model bundle version {version}")
    if not 1 <= log2_n <= MAX_LOG2_N or classes < 1:
        raise FormatError(f"invalid bundle header (log2_n={log2_n}, classes={classes})")

    models = [_decode_model(stream, k, log2_n, angle_bits) for k in range(classes)]
    trailing = len(data) - stream.tell()
    if trailing:
        raise FormatError(f"{trailing} unexpected trailing bytes after the last class")
    try:
        return ModelBundle(log2_n, tuple(models), angle_bits, precision_bits)
    except ArgumentError as e:
        raise FormatError(f"invalid model bundle: {e}") from e


def write_bundle(bundle: ModelBundle, path: PathLike) -> Path:
    path = Path(path)
    path.write_bytes(encode_bundle(bundle))
    logger.info("wrote %d-class bundle (N=%d) to %s", bundle.class_count, bundle.dimension, path)
    return path


def read_bundle(path: PathLike) -> ModelBundle:
    return decode_bundle(Path(path).read_bytes())


def format_matrix(matrix: npt.ArrayLike) -> str:
    """行列をN行のテキストに変換（各値は有効数字17桁）"""
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2:
        raise ArgumentError(f"expected a 2-D matrix, got shape {values.shape}")
    buffer = io.StringIO()
    np.savetxt(buffer, values, fmt="%.17g", delimiter=" ")
    return buffer.getvalue()


def write_matrix(matrix: npt.ArrayLike, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(format_matrix(matrix))
    return path


def read_matrix(path: PathLike) -> npt.NDArray[np.float64]:
    """write_matrixで書いた行列テキストを読み込む"""
    try:
        values = np.loadtxt(Path(path), dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise FormatError(f"malformed matrix file {path}: {e}") from e
    if values.shape[0] != values.shape[1]:
        raise FormatError(f"matrix file {path} is not square: {values.shape}")
    return values


def to_json(document: Union[BaseModel, dict[str, Any]]) -> str:
    """キー順を保ったJSONテキスト（末尾改行付き）"""
    data = document.model_dump(mode="json") if isinstance(document, BaseModel) else document
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def write_json(document: Union[BaseModel, dict[str, Any]], path: PathLike) -> Path:
    path = Path(path)
    path.write_text(to_json(document), encoding="utf-8")
    return path


def metadata_path(model_path: PathLike) -> Path:
    """モデルファイルに対応するメタデータのパス（<model>.json）"""
    path = Path(model_path)
    return path.with_name(path.name + ".json")
