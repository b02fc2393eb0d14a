import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qcs import quantizer
from qcs.errors import CorruptPayloadError, InvalidConfigError


@pytest.mark.parametrize("v_ref, bits, expected", [(1.0, 2, 0.5), (1.0, 1, 1.0), (0.35, 2, 0.175)])
def test_cell_width(v_ref, bits, expected):
    assert quantizer.cell_width(v_ref, bits) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("v_ref, bits", [(0.0, 2), (-1.0, 2), (1.0, 0), (float("inf"), 2)])
def test_cell_width_rejects(v_ref, bits):
    with pytest.raises(InvalidConfigError):
        quantizer.cell_width(v_ref, bits)


@pytest.mark.parametrize("bits", [1, 17])
def test_config_bit_range(bits):
    with pytest.raises(InvalidConfigError):
        quantizer.QuantizerConfig(1.0, bits)


def test_config_levels():
    cfg = quantizer.QuantizerConfig(1.0, 5)
    assert cfg.levels == 32
    assert cfg.cell_width == 2.0 / 32


@pytest.mark.parametrize("v, level", [(0.3, 2), (-1.2, 0), (0.5, 3), (1.0, 3), (7.0, 3), (-1.0, 0)])
def test_quantize_cells(v, level):
    p = quantizer.quantize([v], quantizer.QuantizerConfig(1.0, 2))
    assert p.levels.tolist() == [level]


@pytest.mark.parametrize("level, value", [(2, 0.25), (0, -0.75), (3, 0.75)])
def test_dequantize_midpoints(level, value):
    p = quantizer.QuantizedPayload(quantizer.QuantizerConfig(1.0, 2), np.array([level]))
    assert quantizer.dequantize(p)[0] == pytest.approx(value, abs=1e-15)


def test_dequantize_rejects_bad_level():
    with pytest.raises(CorruptPayloadError):
        quantizer.QuantizedPayload(quantizer.QuantizerConfig(1.0, 2), np.array([4]))


@pytest.mark.parametrize("delta, var", [(0.5, 0.5 ** 2 / 12), (1.0, 1 / 12)])
def test_error_variance(delta, var):
    assert quantizer.error_variance(delta) == pytest.approx(var, rel=1e-15)


def test_error_is_uniform_on_cell():
    cfg = quantizer.QuantizerConfig(1.0, 3)
    v = np.random.default_rng(0).uniform(-1, 1, 200_000)
    err = quantizer.dequantize(quantizer.quantize(v, cfg)) - v
    d = cfg.cell_width
    assert stats.kstest(err, stats.uniform(loc=-d / 2, scale=d).cdf).pvalue > 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100), st.integers(2, 16), st.lists(st.floats(-1, 1), min_size=1, max_size=50))
def test_round_trip_within_half_cell(v_ref, bits, frac):
    cfg = quantizer.QuantizerConfig(v_ref, bits)
    v = np.asarray(frac) * v_ref * (1 - 1e-9)
    back = quantizer.dequantize(quantizer.quantize(v, cfg))
    assert np.all(np.abs(back - v) <= cfg.cell_width / 2 * (1 + 1e-9))
    assert np.all(np.abs(back) < v_ref)


def test_saturation_mask():
    p = quantizer.quantize([-5.0, 0.0, 5.0], quantizer.QuantizerConfig(1.0, 2))
    assert quantizer.saturation_mask(p).tolist() == [True, False, True]


def test_pack_layout():
    assert quantizer.pack_bits([3, 0, 1, 2], 2) == bytes([0x93])
    assert quantizer.pack_bits([1], 2) == bytes([0x01])
    assert quantizer.pack_bits([0x1FF], 9) == bytes([0xFF, 0x01])


def test_unpack_truncated():
    with pytest.raises(CorruptPayloadError):
        quantizer.unpack_bits(b"\x00", 5, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 16).flatmap(
    lambda b: st.tuples(st.just(b), st.lists(st.integers(0, (1 << b) - 1), max_size=80))))
def test_pack_unpack_inverse(case):
    bits, levels = case
    packed = quantizer.pack_bits(levels, bits)
    assert len(packed) == (len(levels) * bits + 7) // 8
    np.testing.assert_array_equal(quantizer.unpack_bits(packed, len(levels), bits), levels)


def _payload():
    cfg = quantizer.QuantizerConfig(0.4321, 3)
    return quantizer.quantize(np.linspace(-0.5, 0.5, 11), cfg, n=128, input_bit_depth=12,
                              matrix_seed=2 ** 63 + 5, segment_index=17)


def test_wire_round_trip():
    p = _payload()
    blob = p.to_bytes()
    assert len(blob) == quantizer.HEADER_SIZE + (11 * 3 + 7) // 8
    assert blob[:4] == quantizer.MAGIC
    assert quantizer.QuantizedPayload.from_bytes(blob) == p


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + bytes([9]) + b[5:],
    lambda b: b[:-1],
    lambda b: b + b"\x00",
    lambda b: b[:10],
])
def test_wire_rejects_corruption(mutate):
    with pytest.raises(CorruptPayloadError):
        quantizer.QuantizedPayload.from_bytes(mutate(_payload().to_bytes()))


def test_levels_are_read_only():
    p = _payload()
    with pytest.raises(ValueError):
        p.levels[0] = 1
