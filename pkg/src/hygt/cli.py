"""hygt のコマンドラインインターフェース"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import click

from hygt import __version__
from hygt.bundle import apply_bundle, train_bundle
from hygt.config import load_settings, write_default_config
from hygt.errors import EXIT_ARGUMENT, EXIT_IO, EXIT_OK, HygtError
from hygt.evaluation import evaluate, scheme_memory_ratios
from hygt.formats import (
    metadata_path,
    read_bundle,
    read_dataset,
    to_json,
    write_bundle,
    write_dataset,
    write_json,
    write_matrix,
)
from hygt.report import ReportRenderer
from hygt.statistics import synthesize_ar1_dataset
from hygt.transform import to_matrix
from hygt.validator import BundleValidator

logger = logging.getLogger(__name__)

DEFAULT_SCHEMES = (
    "K/K",
    "H(2)/K",
    "H(3)/K",
    "K/H(3)",
    "K/H(4)",
    "K/H(5)",
    "H(2)/H(3)",
    "H(2)/H(4)",
)

FilePath = click.Path(dir_okay=False, path_type=Path)


class HygtGroup(click.Group):
    """使い方の誤りを終了コード1で報告するコマンドグループ"""

    def main(self, *args: Any, **kwargs: Any) -> Any:  # type: ignore[override]
        if not kwargs.get("standalone_mode", True):
            return super().main(*args, **kwargs)
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_ARGUMENT)
        except click.Abort:
            click.echo("中断しました", err=True)
            sys.exit(EXIT_ARGUMENT)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


@contextmanager
def _reporting_errors(action: str) -> Iterator[None]:
    """ライブラリの例外を終了コードに変換"""
    try:
        yield
    except HygtError as e:
        click.echo(f"{action}エラー: {e}", err=True)
        sys.exit(e.exit_code)
    except OSError as e:
        click.echo(f"{action}エラー（入出力）: {e}", err=True)
        sys.exit(EXIT_IO)


@click.group(cls=HygtGroup)
@click.version_option(version=__version__)
@click.option(
    "--config",
    "config_path",
    type=FilePath,
    default=None,
    help="設定ファイル（デフォルト: カレントディレクトリのhygt.yaml）",
)
@click.option("-v", "--verbose", count=True, help="ログを詳しく表示（-vvでデバッグ）")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[Path], verbose: int) -> None:
    """
    hygt: Hypercube-Givens変換（HyGT）の学習と評価

    残差データからクラスごとのHyGTを学習し、KLTと符号化利得・メモリ使用量を比較します。
    """
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True
    )
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@main.command("gen-data")
@click.option("--block-size", type=int, default=4, show_default=True, help="ブロックの一辺")
@click.option("--rho", type=float, default=0.95, show_default=True, help="AR(1)相関係数")
@click.option(
    "--count", type=int, default=10000, show_default=True, help="クラスごとのブロック数"
)
@click.option("--classes", type=int, default=1, show_default=True, help="クラス数")
@click.option("--seed", type=int, default=0, show_default=True, help="乱数シード")
@click.option("--wide", is_flag=True, help="float64で保存（RBLK version 2）")
@click.option("--out", type=FilePath, required=True, help="出力ファイル")
def gen_data(
    block_size: int, rho: float, count: int, classes: int, seed: int, wide: bool, out: Path
) -> None:
    """
    合成2次元AR(1)残差データセットを作成します。

    クラスkは相関係数ρ^(1+k/10)を使うため、クラスごとに統計が異なります。

    例:
        hygt gen-data --block-size 4 --count 10000 --seed 7 --out train.rblk
    """
    with _reporting_errors("データ生成"):
        dataset = synthesize_ar1_dataset(block_size, rho, count, classes, seed)
        write_dataset(dataset, out, wide=wide)
    click.echo(f"✓ {dataset.block_count}ブロック（N={dataset.n}、{classes}クラス）: {out}")


@main.command()
@click.argument("data", type=FilePath)
@click.option("--out", type=FilePath, required=True, help="出力モデルファイル")
@click.option("--rounds", type=int, default=None, help="ラウンド数R（デフォルト: 2）")
@click.option("--restarts", type=int, default=None, help="初期値を変えた探索の回数")
@click.option("--seed", type=int, default=None, help="乱数シード")
@click.option("--angle-bits", type=int, default=None, help="角度コードのビット数（0でfloat）")
@click.option("--precision-bits", type=int, default=None, help="sin/cos乗数の精度")
@click.option("--workers", type=int, default=None, help="並行して学習するクラス数")
@click.pass_context
def train(
    ctx: click.Context,
    data: Path,
    out: Path,
    rounds: Optional[int],
    restarts: Optional[int],
    seed: Optional[int],
    angle_bits: Optional[int],
    precision_bits: Optional[int],
    workers: Optional[int],
) -> None:
    """
    クラスごとにHyGTを学習してモデルバンドルを保存します。

    <out>.jsonに学習条件と結果（利得の推移など）も保存します。

    例:
        hygt train train.rblk --out model.hygt --rounds 2 --restarts 4
    """
    with _reporting_errors("学習"):
        settings = load_settings(ctx.obj["config_path"]).with_overrides(
            rounds=rounds,
            restarts=restarts,
            seed=seed,
            angle_bits=angle_bits,
            precision_bits=precision_bits,
            workers=workers,
        )
        dataset = read_dataset(data)
        click.echo(
            f"学習中: N={dataset.n}、{dataset.classes}クラス、{dataset.block_count}ブロック、"
            f"R={settings.rounds}"
        )
        bundle = train_bundle(
            dataset,
            settings.rounds,
            settings.optimizer,
            settings.angle_bits,
            settings.precision_bits,
            settings.workers,
        )
        write_bundle(bundle, out)
        assert bundle.metadata is not None
        write_json(bundle.metadata, metadata_path(out))

    for summary in bundle.metadata.classes:
        if summary.fallback:
            click.echo(
                click.style(
                    f"  クラス{summary.class_id}: サンプル不足（{summary.sample_count}）、恒等変換",
                    fg="yellow",
                )
            )
        else:
            click.echo(
                f"  クラス{summary.class_id}: HyGT {summary.hygt_gain_db:.4f} dB / "
                f"KLT {summary.klt_gain_db:.4f} dB（比 {summary.gain_ratio:.4f}）"
            )
    click.echo(f"✓ モデルを保存しました: {out}")


@main.command()
@click.argument("model", type=FilePath)
@click.argument("data", type=FilePath)
@click.option("--out", type=FilePath, required=True, help="出力データファイル")
@click.option(
    "--direction",
    type=click.Choice(["forward", "inverse"]),
    default="forward",
    show_default=True,
    help="変換の向き",
)
@click.option(
    "--arithmetic",
    type=click.Choice(["float", "fixed"]),
    default="float",
    show_default=True,
    help="浮動小数点または整数演算",
)
@click.option("--wide", is_flag=True, help="float64で保存（RBLK version 2）")
def apply(
    model: Path, data: Path, out: Path, direction: str, arithmetic: str, wide: bool
) -> None:
    """
    データセットの各ブロックにそのクラスの変換を適用します。

    整数演算では入力を整数に丸めてから変換します。

    例:
        hygt apply model.hygt train.rblk --out coeffs.rblk --wide
        hygt apply model.hygt coeffs.rblk --direction inverse --out restored.rblk --wide
    """
    with _reporting_errors("変換"):
        bundle = read_bundle(model)
        dataset = read_dataset(data)
        result = apply_bundle(bundle, dataset, direction, arithmetic)  # type: ignore[arg-type]
        write_dataset(result, out, wide=wide)
    click.echo(f"✓ {result.block_count}ブロックを変換しました（{direction}, {arithmetic}）: {out}")


@main.command("eval")
@click.option("--model", "models", type=FilePath, multiple=True, required=True, help="モデル")
@click.option("--data", "datasets", type=FilePath, multiple=True, required=True, help="データ")
@click.option("--report", type=FilePath, required=True, help="JSONレポートの出力先")
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["text", "json"]),
    default="text",
    show_default=True,
    help="標準出力の形式",
)
def eval_command(
    models: tuple[Path, ...], datasets: tuple[Path, ...], report: Path, output_format: str
) -> None:
    """
    HyGTとKLTを符号化利得とメモリ使用量で比較します。

    --modelと--dataは指定順に対応します。複数組を指定すると（例: 4×4用と8×8用）
    全体のメモリ使用比も計算します。

    例:
        hygt eval --model model4.hygt --data test4.rblk --report report.json
    """
    if len(models) != len(datasets):
        click.echo("--modelと--dataは同じ数だけ指定してください", err=True)
        sys.exit(EXIT_ARGUMENT)

    with _reporting_errors("評価"):
        pairs = [(read_bundle(m), read_dataset(d)) for m, d in zip(models, datasets)]
        evaluation = evaluate(pairs)
        write_json(evaluation, report)

    if output_format == "json":
        click.echo(to_json(evaluation), nl=False)
    else:
        click.echo(ReportRenderer().render_evaluation(evaluation), nl=False)


@main.command("export-matrix")
@click.argument("model", type=FilePath)
@click.option("--class-id", type=int, default=0, show_default=True, help="クラスID")
@click.option("--out", type=FilePath, required=True, help="出力テキストファイル")
def export_matrix(model: Path, class_id: int, out: Path) -> None:
    """
    クラスの変換行列をテキスト（N行×N列、有効数字17桁）で書き出します。

    例:
        hygt export-matrix model.hygt --class-id 0 --out t0.txt
    """
    with _reporting_errors("行列の書き出し"):
        bundle = read_bundle(model)
        write_matrix(to_matrix(bundle.float_model(class_id)), out)
    click.echo(f"✓ {bundle.dimension}×{bundle.dimension}行列を書き出しました: {out}")


@main.command()
@click.option(
    "--scheme",
    "schemes",
    multiple=True,
    help="方式（例: H(2)/H(3)）。省略時は代表的な方式をすべて表示",
)
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["text", "json"]),
    default="text",
    show_default=True,
)
def memory(schemes: tuple[str, ...], output_format: str) -> None:
    """
    4×4と8×8ブロック用の変換セット（各105個）のメモリ使用比を表示します。

    "A/B"は4×4にA、8×8にBを使う方式で、KはKLT、H(R)はRラウンドのHyGTです。

    例:
        hygt memory --scheme "H(2)/H(3)" --scheme "K/H(4)"
    """
    with _reporting_errors("メモリ計算"):
        results = [scheme_memory_ratios(s) for s in (schemes or DEFAULT_SCHEMES)]
    if output_format == "json":
        click.echo(to_json({"schemes": [r.model_dump(mode="json") for r in results]}), nl=False)
    else:
        click.echo(ReportRenderer().render_memory_table(results), nl=False)


@main.command()
@click.argument("model", type=FilePath)
@click.option("--data", type=FilePath, default=None, help="互換性を確認するデータセット")
def validate(model: Path, data: Optional[Path]) -> None:
    """
    モデルバンドルを検証します。

    ファイル構造、各クラスの変換の直交性、データセットとの互換性をチェックします。

    例:
        hygt validate model.hygt --data test.rblk
    """
    click.echo(f"モデルを検証中: {model}")

    with _reporting_errors("検証"):
        dataset = read_dataset(data) if data is not None else None
        result = BundleValidator().validate_bundle(model, dataset)

    if result.is_valid:
        click.echo(click.style("✓ モデルは有効です！", fg="green"))
    else:
        click.echo(click.style("✗ モデルに問題があります:", fg="red"))

    if result.errors:
        click.echo("\nエラー:")
        for error in result.errors:
            click.echo(click.style(f"  - {error}", fg="red"))

    if result.warnings:
        click.echo("\n警告:")
        for warning in result.warnings:
            click.echo(click.style(f"  - {warning}", fg="yellow"))

    if not result.is_valid:
        sys.exit(EXIT_ARGUMENT)


@main.command()
@click.option(
    "--path",
    type=click.Path(file_okay=False, path_type=Path),
    default=".",
    help="設定ファイルを作成するディレクトリ",
)
@click.option("--force", is_flag=True, help="既存のhygt.yamlを上書き")
def init(path: Path, force: bool) -> None:
    """
    既定値のhygt.yaml設定ファイルを作成します。

    例:
        hygt init
    """
    with _reporting_errors("初期化"):
        config_file = write_default_config(path, overwrite=force)
    click.echo(f"✓ 設定ファイルが作成されました: {config_file}")


if __name__ == "__main__":
    main()
