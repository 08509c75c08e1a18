"""hygtの例外階層とCLI終了コード"""

from typing import Optional

EXIT_OK = 0
EXIT_ARGUMENT = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class HygtError(Exception):
    """hygtが送出する全ての例外の基底クラス"""

    exit_code = EXIT_ARGUMENT


class ArgumentError(HygtError, ValueError):
    """引数が事前条件を満たさない"""


class InvariantError(ArgumentError):
    """構造的な不変条件（ペア被覆、置換の全単射など）の違反"""


class NumericalError(HygtError, ArithmeticError):
    """
    数値計算の失敗（収束しない等）

    引数:
        message: エラーメッセージ
        residual: 失敗時の残差（分かる場合）
    """

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class FixedPointOverflowError(NumericalError, OverflowError):
    """整数演算の中間値が64ビットのヘッドルームを超えた"""


class FormatError(HygtError):
    """バイナリファイルが壊れている、またはサポートされていない"""

    exit_code = EXIT_IO
