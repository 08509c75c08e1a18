"""Tests for angle quantization and integer transforms."""

import numpy as np
import pytest

from hygt.errors import ArgumentError, FixedPointOverflowError, InvariantError
from hygt.fixedpoint import (
    QuantizedHyGTModel,
    TransformKind,
    arithmetic_cost,
    build_trig_table,
    dequantize_model,
    forward_fixed,
    inverse_fixed,
    memory_footprint,
    memory_ratio,
    quantize_model,
)
from hygt.transform import HyGTModel, forward


def test_trig_table_entries() -> None:
    """Test the documented 8-bit / 10-bit table entries."""
    table = build_trig_table(8, 10)
    assert table.size == 256
    assert table.cos_entries[0] == 1024 and table.sin_entries[0] == 0
    assert table.cos_entries[64] == 0 and table.sin_entries[64] == 1024
    assert table.cos_entries[32] == 724


def test_trig_table_symmetry() -> None:
    """Test sin[q] == cos[(q - 2^(b-2)) mod 2^b] for several widths."""
    for bits in (2, 5, 8, 12):
        table = build_trig_table(bits, 12)
        q = np.arange(table.size)
        np.testing.assert_array_equal(
            table.sin_entries, table.cos_entries[(q - table.size // 4) % table.size]
        )


def test_trig_table_matches_rounding() -> None:
    """Test entries against round(cos/sin * 2^p)."""
    table = build_trig_table(6, 14)
    phase = 2 * np.pi * np.arange(64) / 64
    np.testing.assert_array_equal(table.cos_entries, np.rint(np.cos(phase) * 2**14))
    np.testing.assert_array_equal(table.sin_entries, np.rint(np.sin(phase) * 2**14))


def test_trig_table_entry_width() -> None:
    """Test that entries fit a signed (p+2)-bit integer."""
    table = build_trig_table(10, 15)
    limit = 1 << 16
    assert np.all(np.abs(table.cos_entries) < limit)
    assert np.all(np.abs(table.sin_entries) < limit)


def test_trig_table_is_shared() -> None:
    """Test that equal widths return the same table instance."""
    assert build_trig_table(8, 10) is build_trig_table(8, 10)


def test_trig_table_rejects_bad_widths() -> None:
    """Test the width preconditions."""
    with pytest.raises(ArgumentError):
        build_trig_table(0, 10)
    with pytest.raises(ArgumentError):
        build_trig_table(13, 10)
    with pytest.raises(ArgumentError):
        build_trig_table(8, 3)
    with pytest.raises(ArgumentError):
        build_trig_table(8, 16)


def test_quantize_examples() -> None:
    """Test codes for 0, pi/2 and -pi/4 at 8 bits."""
    model = HyGTModel(2, 1, [0.0, np.pi / 2, -np.pi / 4, 2 * np.pi])
    codes = quantize_model(model, 8).angle_codes.reshape(-1)
    assert codes.tolist() == [0, 64, 224, 0]


def test_quantization_error_bound(rng: np.random.Generator) -> None:
    """Test that the wrapped angle error is at most pi / 2^b."""
    model = HyGTModel.random(5, 3, rng)
    for bits in (4, 8, 11):
        restored = dequantize_model(quantize_model(model, bits))
        diff = np.angle(np.exp(1j * (model.angles - restored.angles)))
        assert np.max(np.abs(diff)) <= np.pi / 2**bits + 1e-12


def test_quantized_model_storage_bytes() -> None:
    """Test one byte per parameter at 8 bits and two above."""
    model = HyGTModel.identity(4, 2)
    assert quantize_model(model, 8).storage_bytes == 64
    assert quantize_model(model, 10).storage_bytes == 128


def test_quantized_model_rejects_out_of_range_codes() -> None:
    """Test the code range invariant."""
    with pytest.raises(InvariantError):
        QuantizedHyGTModel(1, 1, 4, np.array([16]))


def test_forward_fixed_zero_codes_is_identity(rng: np.random.Generator) -> None:
    """Test that all-zero codes reproduce the input exactly."""
    model = quantize_model(HyGTModel.identity(4, 2), 8)
    table = build_trig_table(8, 10)
    x = rng.integers(-1024, 1025, size=16)
    np.testing.assert_array_equal(forward_fixed(model, table, x), x)
    np.testing.assert_array_equal(inverse_fixed(model, table, x), x)


def test_quarter_turn_butterfly() -> None:
    """Test the exact quarter turn and its exact roundtrip."""
    model = QuantizedHyGTModel(1, 1, 8, np.array([64]))
    table = build_trig_table(8, 10)
    y = forward_fixed(model, table, [100, 7])
    assert y.tolist() == [7, -100]
    assert inverse_fixed(model, table, y).tolist() == [100, 7]


def _fixed_case(seed: int) -> tuple[QuantizedHyGTModel, np.ndarray]:
    rng = np.random.default_rng(seed)
    model = quantize_model(HyGTModel.random(4, 2, rng), 8)
    return model, rng.integers(-1024, 1025, size=(50, 16))


def test_fixed_matches_float_within_bound() -> None:
    """Test integer output against the rounded float transform at |x| <= 1024."""
    table = build_trig_table(8, 10)
    errors = []
    for seed in range(20):
        model, x = _fixed_case(seed)
        expected = np.rint(forward(dequantize_model(model), x))
        errors.append(np.max(np.abs(forward_fixed(model, table, x) - expected)))
    assert max(errors) <= 4


def test_fixed_roundtrip_bound() -> None:
    """Test the integer forward/inverse roundtrip error at |x| <= 1024."""
    table = build_trig_table(8, 10)
    errors = []
    for seed in range(20):
        model, x = _fixed_case(seed)
        restored = inverse_fixed(model, table, forward_fixed(model, table, x))
        errors.append(np.max(np.abs(restored - x)))
    assert max(errors) <= 6



def test_fixed_preserves_permutation(rng: np.random.Generator) -> None:
    """Test that the sorting pass is applied exactly in integer mode."""
    perm = rng.permutation(8)
    model = quantize_model(HyGTModel.identity(3, 1).with_permutation(perm), 8)
    table = build_trig_table(8, 10)
    x = np.arange(8) * 10
    y = forward_fixed(model, table, x)
    np.testing.assert_array_equal(y, x[perm])
    np.testing.assert_array_equal(inverse_fixed(model, table, y), x)


def test_fixed_rejects_bad_input() -> None:
    """Test integer, magnitude and table-width preconditions."""
    model = quantize_model(HyGTModel.identity(1, 1), 8)
    table = build_trig_table(8, 10)
    with pytest.raises(ArgumentError):
        forward_fixed(model, table, [0.5, 1.0])
    with pytest.raises(ArgumentError):
        forward_fixed(model, table, [2**21, 0])
    with pytest.raises(ArgumentError):
        forward_fixed(model, build_trig_table(7, 10), [1, 2])


def test_fixed_overflow_detection() -> None:
    """Test that values beyond the 64-bit headroom raise an overflow error."""
    from hygt.fixedpoint import _fixed_pass

    table = build_trig_table(8, 15)
    x = np.array([1 << 50, 0], dtype=np.int64)
    with pytest.raises(FixedPointOverflowError):
        _fixed_pass(x, 1, 0, np.array([0]), table)


def test_memory_footprint_units() -> None:
    """Test the one-unit-per-scalar accounting."""
    assert memory_footprint(TransformKind.KLT, 4, 2, 1) == 256
    assert memory_footprint("hygt", 4, 2, 1) == 64
    assert memory_footprint("klt", 6, 3, 105) == 105 * 4096
    assert memory_footprint("hygt", 6, 3, 105) == 105 * 576


def test_memory_ratios_match_published_rows() -> None:
    """Test the 4x4 and 8x8 ratios and the combined H(2)/H(3) ratio."""
    assert round(memory_ratio(4, 2), 1) == 4.0
    assert round(memory_ratio(4, 3), 1) == 2.7
    assert round(memory_ratio(6, 3), 1) == 7.1
    assert round(memory_ratio(6, 4), 1) == 5.3
    assert round(memory_ratio(6, 5), 1) == 4.3
    hygt_units = memory_footprint("hygt", 4, 2, 1) + memory_footprint("hygt", 6, 3, 1)
    combined = (256 + 4096) / hygt_units
    assert round(combined, 1) == 6.8


def test_memory_footprint_rejects_bad_arguments() -> None:
    """Test argument checks."""
    with pytest.raises(ArgumentError):
        memory_footprint("hygt", 0, 1, 1)
    with pytest.raises(ValueError):
        memory_footprint("dct", 4, 1, 1)


def test_arithmetic_cost() -> None:
    """Test operation counts for KLT and HyGT."""
    klt = arithmetic_cost("klt", 4, 2)
    assert (klt.multiplications, klt.additions) == (256, 240)
    assert klt.multiplications_per_coefficient == 16.0
    hygt = arithmetic_cost(TransformKind.HYGT, 4, 2)
    assert (hygt.multiplications, hygt.additions) == (256, 128)
    assert arithmetic_cost("hygt", 6, 1).multiplications_per_coefficient == 12.0
