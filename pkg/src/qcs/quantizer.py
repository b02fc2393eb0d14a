"""Uniform mid-point quantizer with saturation, and the payload wire format.

Level ``k`` covers ``[-v_ref + k*delta, -v_ref + (k+1)*delta)``; the top
cell also contains ``+v_ref``.  Inputs beyond either rail clamp to the
extreme level.  Reconstruction uses the cell mid-point.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CorruptPayloadError, InvalidConfigError

MAGIC = b"QCS1"
VERSION = 1
# magic, version, N, M, B, B_i, v_ref, matrix_seed, segment_index
_HEADER = struct.Struct("<4sBIIBBdQI")
HEADER_SIZE = _HEADER.size

MIN_BITS = 2
MAX_BITS = 16


def cell_width(v_ref, bits):
    """Width of one quantization cell, ``2*v_ref / 2**bits``."""
    if not (isinstance(bits, (int, np.integer)) and bits >= 1):
        raise InvalidConfigError(f"bit depth must be a positive integer, got {bits!r}")
    if not (math.isfinite(v_ref) and v_ref > 0):
        raise InvalidConfigError(f"v_ref must be positive and finite, got {v_ref!r}")
    return 2.0 * v_ref / (1 << int(bits))


def error_variance(delta):
    """Variance of a quantization error uniform on ``[-delta/2, delta/2]``."""
    if not delta > 0:
        raise InvalidConfigError(f"cell width must be positive, got {delta!r}")
    return delta * delta / 12.0


@dataclass(frozen=True)
class QuantizerConfig:
    v_ref: float
    bit_depth: int

    def __post_init__(self):
        if not (isinstance(self.bit_depth, (int, np.integer))
                and MIN_BITS <= self.bit_depth <= MAX_BITS):
            raise InvalidConfigError(
                f"bit depth must be in [{MIN_BITS}, {MAX_BITS}], got {self.bit_depth!r}")
        cell_width(self.v_ref, self.bit_depth)
        object.__setattr__(self, "v_ref", float(self.v_ref))
        object.__setattr__(self, "bit_depth", int(self.bit_depth))

    @property
    def cell_width(self):
        return cell_width(self.v_ref, self.bit_depth)

    @property
    def levels(self):
        return 1 << self.bit_depth


@dataclass(frozen=True, eq=False)
class QuantizedPayload:
    """Quantized measurements of one segment plus the header needed to decode it."""

    config: QuantizerConfig
    levels: np.ndarray
    n: int = 0
    input_bit_depth: int = 12
    matrix_seed: int = 0
    segment_index: int = 0

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 1:
            raise CorruptPayloadError("levels must be one-dimensional")
        if lv.size and (lv.min() < 0 or lv.max() >= self.config.levels):
            raise CorruptPayloadError(
                f"level index outside [0, {self.config.levels - 1}]")
        lv = lv.astype(np.uint16)
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def m(self):
        return int(self.levels.shape[0])

    @property
    def body_size(self):
        return (self.m * self.config.bit_depth + 7) // 8

    def __eq__(self, other):
        if not isinstance(other, QuantizedPayload):
            return NotImplemented
        return (self.config == other.config
                and np.array_equal(self.levels, other.levels)
                and (self.n, self.input_bit_depth, self.matrix_seed, self.segment_index)
                == (other.n, other.input_bit_depth, other.matrix_seed, other.segment_index))

    def to_bytes(self):
        header = _HEADER.pack(MAGIC, VERSION, self.n, self.m, self.config.bit_depth,
                              self.input_bit_depth, self.config.v_ref,
                              self.matrix_seed, self.segment_index)
        return header + kernels.pack_bits(self.levels, self.config.bit_depth)

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < HEADER_SIZE:
            raise CorruptPayloadError(f"truncated header ({len(data)} bytes)")
        magic, version, n, m, bits, bi, v_ref, seed, index = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise CorruptPayloadError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptPayloadError(f"unsupported payload version {version}")
        try:
            cfg = QuantizerConfig(v_ref, bits)
        except InvalidConfigError as exc:
            raise CorruptPayloadError(f"bad header: {exc}") from exc
        body = data[HEADER_SIZE:]
        need = (m * bits + 7) // 8
        if len(body) != need:
            raise CorruptPayloadError(f"payload body has {len(body)} bytes, expected {need}")
        levels = kernels.unpack_bits(body, m, bits)
        return cls(cfg, levels, n=n, input_bit_depth=bi, matrix_seed=seed, segment_index=index)


def quantize(v, cfg, **header):
    """Map real samples to level indices; extra keywords fill the payload header."""
    levels = kernels.quantize_levels(np.asarray(v, dtype=np.float64).ravel(),
                                     cfg.v_ref, cfg.bit_depth)
    return QuantizedPayload(cfg, levels, **header)


def dequantize(p):
    """Mid-point reconstruction ``-v_ref + delta*(k + 1/2)``."""
    cfg = p.config
    lv = np.asarray(p.levels, dtype=np.int64)
    if lv.size and (lv.min() < 0 or lv.max() >= cfg.levels):
        raise CorruptPayloadError(f"level index outside [0, {cfg.levels - 1}]")
    return -cfg.v_ref + cfg.cell_width * (lv + 0.5)


def pack_bits(levels, bits):
    """Pack ``bits``-wide level indices LSB-first into ``ceil(len*bits/8)`` bytes."""
    return kernels.pack_bits(np.asarray(levels, dtype=np.uint16), int(bits))


def unpack_bits(data, m, bits):
    return kernels.unpack_bits(data, int(m), int(bits))


def saturation_mask(p):
    """Boolean mask of measurements sitting on an extreme level."""
    lv = np.asarray(p.levels)
    return (lv == 0) | (lv == p.config.levels - 1)
