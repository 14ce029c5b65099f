# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of numpy_backend. Same accumulation order, so results
are bit-identical to the fallback (the extension is built with
-ffp-contract=off to keep fused multiply-adds out of the picture)."""

import numpy as np

cimport cython
cimport numpy as cnp

from ..errors import FormatError

cnp.import_array()

NAME = "cython"

ctypedef fused real:
    float
    double


def kpn_forward(real[:, ::1] xp, real[:, :, ::1] w, int k):
    # tap-major traversal: each output element still accumulates its taps
    # in ascending order, so sums match the fallback bit for bit, while
    # every inner loop walks contiguous memory
    cdef Py_ssize_t k2 = w.shape[0]
    cdef Py_ssize_t h = w.shape[1]
    cdef Py_ssize_t wd = w.shape[2]
    cdef Py_ssize_t i, y, x, dy, dx
    if real is float:
        out_arr = np.zeros((h, wd), dtype=np.float32)
    else:
        out_arr = np.zeros((h, wd), dtype=np.float64)
    cdef real[:, ::1] out = out_arr
    for i in range(k2):
        dy = i // k
        dx = i - dy * k
        for y in range(h):
            for x in range(wd):
                out[y, x] = out[y, x] + w[i, y, x] * xp[y + dy, x + dx]
    return out_arr


def kpn_backward(real[:, ::1] xp, real[:, :, ::1] w, int k,
                 real[:, ::1] gout):
    cdef Py_ssize_t k2 = w.shape[0]
    cdef Py_ssize_t h = w.shape[1]
    cdef Py_ssize_t wd = w.shape[2]
    cdef Py_ssize_t i, y, x, dy, dx
    cdef real g
    if real is float:
        gxp_arr = np.zeros((xp.shape[0], xp.shape[1]), dtype=np.float32)
        gw_arr = np.empty((k2, h, wd), dtype=np.float32)
    else:
        gxp_arr = np.zeros((xp.shape[0], xp.shape[1]), dtype=np.float64)
        gw_arr = np.empty((k2, h, wd), dtype=np.float64)
    cdef real[:, ::1] gxp = gxp_arr
    cdef real[:, :, ::1] gw = gw_arr
    for i in range(k2):
        dy = i // k
        dx = i - dy * k
        for y in range(h):
            for x in range(wd):
                g = gout[y, x]
                gw[i, y, x] = g * xp[y + dy, x + dx]
                gxp[y + dy, x + dx] = gxp[y + dy, x + dx] + g * w[i, y, x]
    return gxp_arr, gw_arr


@cython.boundscheck(False)
def rgbe_decode_scanlines(bytes buf, Py_ssize_t offset, int width, int height):
    cdef const unsigned char[::1] data = buf
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t pos = offset
    out_arr = np.empty((height, width, 4), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef int y, c, x, count, j
    cdef unsigned char b0, b1, b2, b3, v
    for y in range(height):
        if pos + 4 > n:
            raise FormatError("truncated scanline %d" % y)
        b0 = data[pos]; b1 = data[pos + 1]; b2 = data[pos + 2]; b3 = data[pos + 3]
        if b0 == 2 and b1 == 2 and ((<int>b2 << 8) | <int>b3) == width:
            pos += 4
            for c in range(4):
                x = 0
                while x < width:
                    if pos >= n:
                        raise FormatError("truncated RLE scanline %d" % y)
                    count = data[pos]
                    pos += 1
                    if count > 128:
                        count -= 128
                        if x + count > width or pos >= n:
                            raise FormatError("RLE run overflow in scanline %d" % y)
                        v = data[pos]
                        pos += 1
                        for j in range(count):
                            out[y, x + j, c] = v
                    else:
                        if count == 0 or x + count > width or pos + count > n:
                            raise FormatError("RLE literal overflow in scanline %d" % y)
                        for j in range(count):
                            out[y, x + j, c] = data[pos + j]
                        pos += count
                    x += count
        elif b0 == 1 and b1 == 1 and b2 == 1:
            raise FormatError("legacy run-length scanlines are not supported")
        else:
            if pos + 4 * width > n:
                raise FormatError("truncated flat scanline %d" % y)
            for x in range(width):
                out[y, x, 0] = data[pos]
                out[y, x, 1] = data[pos + 1]
                out[y, x, 2] = data[pos + 2]
                out[y, x, 3] = data[pos + 3]
                pos += 4
    return out_arr, pos
