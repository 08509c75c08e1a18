"""Tests for CLI commands."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from hygt.cli import main
from hygt.errors import EXIT_ARGUMENT, EXIT_IO
from hygt.formats import read_bundle, read_dataset, read_matrix


@pytest.fixture
def runner() -> CliRunner:
    """Create a CLI runner."""
    return CliRunner()


def _gen_data(runner: CliRunner, out: str, *extra: str) -> None:
    result = runner.invoke(
        main,
        ["gen-data", "--block-size", "4", "--count", "200", "--classes", "2", "--seed", "7",
         "--out", out, *extra],
    )
    assert result.exit_code == 0, result.output


def _train(runner: CliRunner, data: str, out: str, *extra: str) -> None:
    result = runner.invoke(
        main, ["train", data, "--out", out, "--rounds", "1", "--restarts", "1", *extra]
    )
    assert result.exit_code == 0, result.output


def test_cli_help(runner: CliRunner) -> None:
    """Test CLI help command."""
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    assert "hygt" in result.output
    for command in ("gen-data", "train", "apply", "eval", "export-matrix", "memory", "validate"):
        assert command in result.output


def test_cli_version(runner: CliRunner) -> None:
    """Test CLI version command."""
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


def test_gen_data_is_deterministic(runner: CliRunner, tmp_path: Path) -> None:
    """Test that the same seed writes identical files."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "a.rblk")
        _gen_data(runner, "b.rblk")
        assert Path("a.rblk").read_bytes() == Path("b.rblk").read_bytes()
        dataset = read_dataset("a.rblk")
        assert dataset.n == 16
        assert dataset.class_counts().tolist() == [200, 200]


def test_gen_data_output(runner: CliRunner, tmp_path: Path) -> None:
    """Test the summary line and the wide flag."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(
            main, ["gen-data", "--block-size", "2", "--count", "10", "--wide", "--out", "w.rblk"]
        )
        assert result.exit_code == 0
        assert "✓ 10ブロック" in result.output
        assert read_dataset("w.rblk").vectors.dtype == np.float64


def test_train_writes_model_and_metadata(runner: CliRunner, tmp_path: Path) -> None:
    """Test training output files and per-class lines."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        result = runner.invoke(
            main, ["train", "train.rblk", "--out", "model.hygt", "--rounds", "1", "--restarts", "1"]
        )
        assert result.exit_code == 0, result.output
        assert "クラス0: HyGT" in result.output
        assert "✓ モデルを保存しました" in result.output

        bundle = read_bundle("model.hygt")
        assert bundle.class_count == 2
        assert bundle.angle_bits == 8
        metadata = json.loads(Path("model.hygt.json").read_text())
        assert metadata["dimension"] == 16
        assert metadata["optimizer"]["restarts"] == 1
        assert len(metadata["classes"]) == 2


def test_train_is_deterministic(runner: CliRunner, tmp_path: Path) -> None:
    """Test that training twice gives byte-identical bundles."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "a.hygt")
        _train(runner, "train.rblk", "b.hygt")
        assert Path("a.hygt").read_bytes() == Path("b.hygt").read_bytes()


def test_train_reads_config(runner: CliRunner, tmp_path: Path) -> None:
    """Test that hygt.yaml settings apply and flags override them."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        Path("hygt.yaml").write_text("rounds: 2\nangle_bits: 0\noptimizer:\n  restarts: 1\n")
        result = runner.invoke(main, ["train", "train.rblk", "--out", "m.hygt"])
        assert result.exit_code == 0, result.output
        bundle = read_bundle("m.hygt")
        assert bundle.angle_bits == 0
        assert bundle.float_model(0).rounds == 2

        result = runner.invoke(main, ["train", "train.rblk", "--out", "r1.hygt", "--rounds", "1"])
        assert result.exit_code == 0, result.output
        assert read_bundle("r1.hygt").float_model(0).rounds == 1

        Path("other.yaml").write_text("rounds: 0\n")
        result = runner.invoke(
            main, ["--config", "other.yaml", "train", "train.rblk", "--out", "x.hygt"]
        )
        assert result.exit_code == EXIT_ARGUMENT


def test_apply_float_roundtrip(runner: CliRunner, tmp_path: Path) -> None:
    """Test forward then inverse application through files."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk", "--wide")
        _train(runner, "train.rblk", "model.hygt")
        result = runner.invoke(
            main, ["apply", "model.hygt", "train.rblk", "--out", "coeffs.rblk", "--wide"]
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main,
            ["apply", "model.hygt", "coeffs.rblk", "--direction", "inverse",
             "--out", "restored.rblk", "--wide"],
        )
        assert result.exit_code == 0, result.output
        original = read_dataset("train.rblk")
        restored = read_dataset("restored.rblk")
        np.testing.assert_array_equal(restored.class_ids, original.class_ids)
        np.testing.assert_allclose(restored.vectors, original.vectors, atol=1e-9)


def test_apply_fixed(runner: CliRunner, tmp_path: Path) -> None:
    """Test integer application produces integer coefficients."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "model.hygt")
        result = runner.invoke(
            main,
            ["apply", "model.hygt", "train.rblk", "--arithmetic", "fixed", "--out", "q.rblk"],
        )
        assert result.exit_code == 0, result.output
        assert "fixed" in result.output
        values = read_dataset("q.rblk").vectors
        assert np.all(values == np.rint(values))


def test_eval_reports(runner: CliRunner, tmp_path: Path) -> None:
    """Test the text summary, the JSON report and the JSON stdout format."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "model.hygt")
        result = runner.invoke(
            main, ["eval", "--model", "model.hygt", "--data", "train.rblk", "--report", "r.json"]
        )
        assert result.exit_code == 0, result.output
        assert "N=16 (2 classes, 8-bit angles)" in result.output
        report = json.loads(Path("r.json").read_text())
        assert report["aggregate"]["memory_ratio"] == 8.0
        for entry in report["bundles"][0]["classes"]:
            assert entry["hygt_gain_db"] <= entry["klt_gain_db"] + 1e-4

        result = runner.invoke(
            main,
            ["eval", "--model", "model.hygt", "--data", "train.rblk", "--report", "s.json",
             "--format", "json"],
        )
        assert result.exit_code == 0
        assert json.loads(result.output) == json.loads(Path("s.json").read_text())


def test_eval_mismatched_pairs(runner: CliRunner, tmp_path: Path) -> None:
    """Test that unequal --model/--data counts are an argument error."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(
            main,
            ["eval", "--model", "a.hygt", "--model", "b.hygt", "--data", "a.rblk",
             "--report", "r.json"],
        )
        assert result.exit_code == EXIT_ARGUMENT


def test_eval_dimension_mismatch(runner: CliRunner, tmp_path: Path) -> None:
    """Test that evaluating on the wrong block size is an argument error."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "model.hygt")
        runner.invoke(
            main, ["gen-data", "--block-size", "2", "--count", "5", "--classes", "2",
                   "--out", "small.rblk"]
        )
        result = runner.invoke(
            main, ["eval", "--model", "model.hygt", "--data", "small.rblk", "--report", "r.json"]
        )
        assert result.exit_code == EXIT_ARGUMENT
        assert "評価エラー" in result.output


def test_export_matrix(runner: CliRunner, tmp_path: Path) -> None:
    """Test that the exported matrix is orthogonal."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "model.hygt")
        result = runner.invoke(
            main, ["export-matrix", "model.hygt", "--class-id", "1", "--out", "t1.txt"]
        )
        assert result.exit_code == 0, result.output
        matrix = read_matrix("t1.txt")
        assert matrix.shape == (16, 16)
        np.testing.assert_allclose(matrix @ matrix.T, np.eye(16), atol=1e-12)

        result = runner.invoke(
            main, ["export-matrix", "model.hygt", "--class-id", "5", "--out", "t5.txt"]
        )
        assert result.exit_code == EXIT_ARGUMENT


def test_memory_table(runner: CliRunner) -> None:
    """Test the default scheme table and selected schemes."""
    result = runner.invoke(main, ["memory"])
    assert result.exit_code == 0
    rows = {line.split()[0]: line.split()[1:] for line in result.output.splitlines()}
    assert rows["H(2)/H(3)"] == ["4.0", "7.1", "6.8"]
    assert rows["K/H(4)"] == ["1.0", "5.3", "4.3"]
    assert rows["K/K"] == ["1.0", "1.0", "1.0"]

    result = runner.invoke(main, ["memory", "--scheme", "H(2)/H(4)", "--format", "json"])
    assert result.exit_code == 0
    schemes = json.loads(result.output)["schemes"]
    assert schemes[0]["scheme"] == "H(2)/H(4)"
    assert round(schemes[0]["combined"], 1) == 5.2


def test_memory_bad_scheme(runner: CliRunner) -> None:
    """Test that an unparsable scheme is an argument error."""
    result = runner.invoke(main, ["memory", "--scheme", "Q(2)/K"])
    assert result.exit_code == EXIT_ARGUMENT


def test_validate_command(runner: CliRunner, tmp_path: Path) -> None:
    """Test validation of a trained bundle with matching and mismatched data."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        _gen_data(runner, "train.rblk")
        _train(runner, "train.rblk", "model.hygt")
        result = runner.invoke(main, ["validate", "model.hygt", "--data", "train.rblk"])
        assert result.exit_code == 0, result.output
        assert "✓ モデルは有効です！" in result.output

        runner.invoke(main, ["gen-data", "--block-size", "4", "--count", "20", "--out", "one.rblk"])
        result = runner.invoke(main, ["validate", "model.hygt", "--data", "one.rblk"])
        assert result.exit_code == EXIT_ARGUMENT
        assert "クラス数が一致しません" in result.output


def test_validate_broken_file(runner: CliRunner, tmp_path: Path) -> None:
    """Test validation of a file that is not a bundle."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        Path("junk.hygt").write_bytes(b"not a bundle")
        result = runner.invoke(main, ["validate", "junk.hygt"])
        assert result.exit_code == EXIT_ARGUMENT
        assert "✗ モデルに問題があります" in result.output


def test_init_command(runner: CliRunner, tmp_path: Path) -> None:
    """Test config creation and the overwrite guard."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(main, ["init"])
        assert result.exit_code == 0
        assert Path("hygt.yaml").exists()
        assert runner.invoke(main, ["init"]).exit_code == EXIT_ARGUMENT
        assert runner.invoke(main, ["init", "--force"]).exit_code == 0


def test_io_errors(runner: CliRunner, tmp_path: Path) -> None:
    """Test exit code 2 for missing and malformed input files."""
    with runner.isolated_filesystem(temp_dir=tmp_path):
        result = runner.invoke(main, ["train", "missing.rblk", "--out", "m.hygt"])
        assert result.exit_code == EXIT_IO
        Path("bad.rblk").write_bytes(b"RBLK\x07")
        result = runner.invoke(main, ["train", "bad.rblk", "--out", "m.hygt"])
        assert result.exit_code == EXIT_IO
        assert "学習エラー" in result.output


def test_usage_errors(runner: CliRunner) -> None:
    """Test that usage mistakes exit with code 1."""
    assert runner.invoke(main, ["train"]).exit_code == EXIT_ARGUMENT
    assert runner.invoke(main, ["gen-data"]).exit_code == EXIT_ARGUMENT
    bad_direction = ["apply", "a", "b", "--out", "c", "--direction", "up"]
    assert runner.invoke(main, bad_direction).exit_code == EXIT_ARGUMENT
    assert runner.invoke(main, ["no-such-command"]).exit_code == EXIT_ARGUMENT
