"""Numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them one to one.
"""
import numpy as np

from .errors import CorruptPayloadError


def quantize_levels(v, v_ref, bits):
    v = np.asarray(v, dtype=np.float64)
    top = (1 << bits) - 1
    delta = 2.0 * v_ref / (1 << bits)
    k = np.floor((v + v_ref) / delta)
    k = np.nan_to_num(k, nan=0.0, posinf=top, neginf=0.0)
    return np.clip(k, 0, top).astype(np.uint16)


def pack_bits(levels, bits):
    levels = np.asarray(levels, dtype=np.uint16)
    if levels.size and int(levels.max()) >> bits:
        raise CorruptPayloadError(f"level exceeds {bits}-bit range")
    shifts = np.arange(bits, dtype=np.uint16)
    bitplane = ((levels[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitplane.ravel(), bitorder="little").tobytes()


def unpack_bits(data, m, bits):
    need = (m * bits + 7) // 8
    if len(data) < need:
        raise CorruptPayloadError(f"payload body has {len(data)} bytes, need {need}")
    raw = np.frombuffer(bytes(data[:need]), dtype=np.uint8)
    flat = np.unpackbits(raw, bitorder="little")[: m * bits].reshape(m, bits)
    weights = (1 << np.arange(bits)).astype(np.uint32)
    return (flat.astype(np.uint32) @ weights).astype(np.uint16)


def sparse_matvec(supports, x, m):
    supports = np.asarray(supports, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.bincount(supports[:, 0], weights=x, minlength=m)
    y += np.bincount(supports[:, 1], weights=x, minlength=m)
    return y


def sparse_rmatvec(supports, r):
    supports = np.asarray(supports, dtype=np.int64)
    r = np.asarray(r, dtype=np.float64)
    return r[supports[:, 0]] + r[supports[:, 1]]
