# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pooling and quantization loops.

Semantics are identical to :mod:`hirise._pykernels`; see that module for the
reference behaviour.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fmax, fmin

cnp.import_array()


def pool_blocks(const double[:, :, ::1] data, weights, int k, bint gray):
    cdef Py_ssize_t m = data.shape[0]
    cdef Py_ssize_t n = data.shape[1]
    cdef Py_ssize_t c = data.shape[2]
    cdef Py_ssize_t oh = m // k
    cdef Py_ssize_t ow = n // k
    cdef Py_ssize_t oc = 1 if gray else c
    out_arr = np.empty((oh, ow, oc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef const double[:, :, ::1] w
    cdef Py_ssize_t by, bx, y, x, ch
    cdef double acc, wsum, wi
    cdef bint weighted = weights is not None
    if weighted:
        w = weights
    cdef double count = k * k * (c if gray else 1)

    for by in range(oh):
        for bx in range(ow):
            if gray:
                acc = 0.0
                wsum = 0.0
                for y in range(by * k, by * k + k):
                    for x in range(bx * k, bx * k + k):
                        for ch in range(c):
                            if weighted:
                                wi = w[y, x, ch]
                                acc += wi * data[y, x, ch]
                                wsum += wi
                            else:
                                acc += data[y, x, ch]
                out[by, bx, 0] = acc / wsum if weighted else acc / count
            else:
                for ch in range(c):
                    acc = 0.0
                    wsum = 0.0
                    for y in range(by * k, by * k + k):
                        for x in range(bx * k, bx * k + k):
                            if weighted:
                                wi = w[y, x, ch]
                                acc += wi * data[y, x, ch]
                                wsum += wi
                            else:
                                acc += data[y, x, ch]
                    out[by, bx, ch] = acc / wsum if weighted else acc / count
    return out_arr


def quantize(const double[::1] values, double vdd, int bits):
    cdef Py_ssize_t size = values.shape[0]
    cdef Py_ssize_t i
    cdef double full = <double>((1 << bits) - 1)
    cdef double scaled
    cdef long base
    out_arr = np.empty(size, dtype=np.uint16)
    cdef cnp.uint16_t[::1] out = out_arr
    # branch-free: random inputs make the half-step test unpredictable
    for i in range(size):
        scaled = fmin(fmax(values[i] / vdd * full, 0.0), full)
        base = <long>scaled
        out[i] = <cnp.uint16_t>(base + (scaled - base >= 0.5))
    return out_arr
