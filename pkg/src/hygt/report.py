"""評価結果とメモリ表のテキストレンダリング"""

from collections.abc import Sequence
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateNotFound

from hygt.evaluation import EvaluationReport, SchemeMemory

PACKAGE_TEMPLATE_DIR = Path(__file__).parent / "templates"


class ReportRenderer:
    """
    Jinja2テンプレートによるレポートのレンダリング

    既定ではパッケージ同梱のtemplates/を使います。同名のテンプレートを置いた
    ディレクトリを先に指定すれば、出力の書式を差し替えられます。
    """

    def __init__(self, template_dirs: Optional[list[Path]] = None):
        """
        引数:
            template_dirs: テンプレートを検索するディレクトリ（先頭が優先）
        """
        dirs = [Path(d) for d in (template_dirs or [])]
        if PACKAGE_TEMPLATE_DIR not in dirs:
            dirs.append(PACKAGE_TEMPLATE_DIR)
        self.template_dirs = dirs
        self._setup_environment()

    def _setup_environment(self) -> None:
        self.env = Environment(
            loader=FileSystemLoader([str(d) for d in self.template_dirs]),
            undefined=StrictUndefined,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["db"] = self._db_filter
        self.env.filters["ratio"] = self._ratio_filter

    @staticmethod
    def _db_filter(value: Optional[float], width: int = 9) -> str:
        """dB値を小数4桁で右寄せ（値がなければ"-"）"""
        text = "-" if value is None else f"{value:.4f}"
        return text.rjust(width)

    @staticmethod
    def _ratio_filter(value: Optional[float], width: int = 6) -> str:
        """比を小数1桁で右寄せ（4.25 → 4.3のように四捨五入）"""
        if value is None:
            return "-".rjust(width)
        text = str(Decimal(str(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
        return text.rjust(width)

    def render(self, template_name: str, context: Optional[dict[str, Any]] = None) -> str:
        """
        テンプレートをレンダリング

        引数:
            template_name: テンプレートのファイル名
            context: テンプレート変数

        戻り値:
            レンダリングされたテキスト
        """
        template = self.env.get_template(template_name)
        return template.render(**(context or {}))

    def render_evaluation(self, report: EvaluationReport) -> str:
        return self.render("eval_summary.txt.j2", {"report": report})

    def render_memory_table(self, schemes: Sequence[SchemeMemory]) -> str:
        dimensions = schemes[0].dimensions if schemes else []
        return self.render("memory_table.txt.j2", {"schemes": schemes, "dimensions": dimensions})

    def add_template_dir(self, template_dir: Path) -> None:
        """検索パスの先頭にディレクトリを追加"""
        if Path(template_dir) not in self.template_dirs:
            self.template_dirs.insert(0, Path(template_dir))
            self._setup_environment()

    def template_exists(self, template_name: str) -> bool:
        try:
            self.env.get_template(template_name)
            return True
        except TemplateNotFound:
            return False
