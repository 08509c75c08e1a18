"""hygt.yamlによる学習設定"""

import logging
from pathlib import Path
from typing import Any, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hygt.errors import ArgumentError
from hygt.fixedpoint import (
    DEFAULT_ANGLE_BITS,
    DEFAULT_PRECISION_BITS,
    MAX_ANGLE_BITS,
    MAX_PRECISION_BITS,
    MIN_PRECISION_BITS,
)
from hygt.optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "hygt.yaml"


class TrainingSettings(BaseModel):
    """
    学習の設定

    angle_bits=0なら角度をfloat64のまま保存します。
    """

    model_config = ConfigDict(extra="forbid")

    rounds: int = Field(default=2, ge=1, le=255)
    angle_bits: int = Field(default=DEFAULT_ANGLE_BITS, ge=0, le=MAX_ANGLE_BITS)
    precision_bits: int = Field(
        default=DEFAULT_PRECISION_BITS, ge=MIN_PRECISION_BITS, le=MAX_PRECISION_BITS
    )
    workers: int = Field(default=1, ge=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)

    def with_overrides(self, **overrides: Any) -> "TrainingSettings":
        """
        Noneでない値だけを上書きした設定を返す

        引数:
            **overrides: rounds、angle_bits等、またはOptimizerConfigのフィールド名
                （restarts、seed等）。両方にある名前（workers）はこの設定側を上書き

        戻り値:
            検証済みの新しいTrainingSettings
        """
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if key in TrainingSettings.model_fields:
                data[key] = value
            elif key in OptimizerConfig.model_fields:
                data["optimizer"][key] = value
            else:
                raise ArgumentError(f"unknown setting: {key}")
        return _validate(data, "command-line options")


def _validate(data: Any, source: str) -> TrainingSettings:
    try:
        return TrainingSettings.model_validate(data)
    except ValidationError as e:
        raise ArgumentError(f"invalid configuration in {source}: {e}") from e


def load_settings(path: Optional[Union[str, Path]] = None) -> TrainingSettings:
    """
    設定ファイルを読み込む

    pathを省略した場合、カレントディレクトリのhygt.yamlがあれば読み、なければ既定値です。

    引数:
        path: 設定ファイルのパス

    戻り値:
        TrainingSettings
    """
    if path is None:
        default = Path.cwd() / CONFIG_FILENAME
        if not default.exists():
            return TrainingSettings()
        path = default

    config_path = Path(path)
    with open(config_path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ArgumentError(f"cannot parse {config_path}: {e}") from e
    logger.info("loaded settings from %s", config_path)
    return _validate(data or {}, str(config_path))


def write_default_config(directory: Optional[Path] = None, overwrite: bool = False) -> Path:
    """
    既定値のhygt.yamlを作成

    引数:
        directory: 作成先ディレクトリ（デフォルトはcwd）
        overwrite: 既存ファイルを上書きするか

    戻り値:
        作成したファイルのパス
    """
    config_path = (directory or Path.cwd()) / CONFIG_FILENAME
    if config_path.exists() and not overwrite:
        raise ArgumentError(f"{config_path} already exists")

    settings = TrainingSettings().model_dump(mode="json")
    header = (
        "# hygt training settings\n"
        "# angle_bits: 0 keeps float64 angles, 1-12 stores quantized angle codes\n"
        "# command-line flags override the values below\n"
    )
    with open(config_path, "w") as f:
        f.write(header)
        yaml.dump(settings, f, default_flow_style=False, sort_keys=False)

    return config_path
