# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, isnan

from .errors import CorruptPayloadError

cnp.import_array()


def quantize_levels(v, double v_ref, int bits):
    cdef const double[::1] src = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0], i
    cdef cnp.ndarray[cnp.uint16_t, ndim=1] out = np.empty(n, dtype=np.uint16)
    cdef cnp.uint16_t[::1] dst = out
    cdef long top = (1 << bits) - 1
    cdef double delta = 2.0 * v_ref / (1 << bits)
    cdef double k
    with nogil:
        for i in range(n):
            if isnan(src[i]):
                dst[i] = 0
                continue
            k = floor((src[i] + v_ref) / delta)
            if k < 0:
                k = 0
            elif k > top:
                k = top
            dst[i] = <cnp.uint16_t>k
    return out


def pack_bits(levels, int bits):
    cdef const cnp.uint16_t[::1] lv = np.ascontiguousarray(levels, dtype=np.uint16)
    cdef Py_ssize_t m = lv.shape[0], i
    cdef Py_ssize_t nbytes = (m * bits + 7) // 8
    cdef bytearray out = bytearray(nbytes)
    cdef unsigned char[::1] dst = out
    cdef unsigned long long acc = 0
    cdef int filled = 0
    cdef Py_ssize_t pos = 0
    cdef unsigned int limit = 1u << bits
    for i in range(m):
        if lv[i] >= limit:
            raise CorruptPayloadError(f"level exceeds {bits}-bit range")
    with nogil:
        for i in range(m):
            acc |= (<unsigned long long>lv[i]) << filled
            filled += bits
            while filled >= 8:
                dst[pos] = acc & 0xFF
                pos += 1
                acc >>= 8
                filled -= 8
        if filled > 0:
            dst[pos] = acc & 0xFF
    return bytes(out)


def unpack_bits(data, Py_ssize_t m, int bits):
    cdef Py_ssize_t need = (m * bits + 7) // 8
    if len(data) < need:
        raise CorruptPayloadError(f"payload body has {len(data)} bytes, need {need}")
    cdef const unsigned char[::1] src = memoryview(bytes(data[:need]))
    cdef cnp.ndarray[cnp.uint16_t, ndim=1] out = np.empty(m, dtype=np.uint16)
    cdef cnp.uint16_t[::1] dst = out
    cdef unsigned long long acc = 0
    cdef int filled = 0
    cdef Py_ssize_t pos = 0, i
    cdef unsigned long long mask = (1ULL << bits) - 1
    with nogil:
        for i in range(m):
            while filled < bits:
                acc |= (<unsigned long long>src[pos]) << filled
                pos += 1
                filled += 8
            dst[i] = acc & mask
            acc >>= bits
            filled -= bits
    return out


def sparse_matvec(supports, x, Py_ssize_t m):
    cdef const long long[:, ::1] sup = np.ascontiguousarray(supports, dtype=np.int64)
    cdef const double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(m, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t n = sup.shape[0], j
    with nogil:
        for j in range(n):
            y[sup[j, 0]] += xs[j]
            y[sup[j, 1]] += xs[j]
    return out


def sparse_rmatvec(supports, r):
    cdef const long long[:, ::1] sup = np.ascontiguousarray(supports, dtype=np.int64)
    cdef const double[::1] rs = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t n = sup.shape[0], j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] x = out
    with nogil:
        for j in range(n):
            x[j] = rs[sup[j, 0]] + rs[sup[j, 1]]
    return out
