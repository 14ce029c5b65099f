"""Pure numpy implementations of the hot kernels.

These are the reference semantics for the compiled extension: the Cython
versions in _cykernels.pyx must produce bit-identical results. Reductions
over the kernel taps therefore run in a fixed sequential order (ascending
tap index); numpy's pairwise summation would differ in the low bits.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError

NAME = "numpy"


def kpn_forward(xp: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """Per-pixel filtering of a padded single-channel image.

    xp : (H + k - 1, W + k - 1) padded input
    w  : (k*k, H, W) one filter per output pixel, tap index row-major
    returns (H, W)
    """
    k2, h, wd = w.shape
    out = np.zeros((h, wd), dtype=xp.dtype)
    for i in range(k2):
        dy, dx = divmod(i, k)
        out += w[i] * xp[dy:dy + h, dx:dx + wd]
    return out


def kpn_backward(xp: np.ndarray, w: np.ndarray, k: int,
                 gout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of kpn_forward.

    Returns (gxp, gw) where gxp has the padded shape; the caller folds the
    pad back onto the image border.
    """
    k2, h, wd = w.shape
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for i in range(k2):
        dy, dx = divmod(i, k)
        win = xp[dy:dy + h, dx:dx + wd]
        gw[i] = gout * win
        gxp[dy:dy + h, dx:dx + wd] += gout * w[i]
    return gxp, gw


def rgbe_decode_scanlines(buf: bytes, offset: int, width: int,
                          height: int) -> tuple[np.ndarray, int]:
    """Decode `height` Radiance scanlines starting at `offset`.

    Handles flat scanlines and adaptive RLE (introducer 0x02 0x02 hi lo).
    Returns (uint8 array of shape (height, width, 4), next offset).
    """
    data = np.frombuffer(buf, dtype=np.uint8)
    n = data.size
    out = np.empty((height, width, 4), dtype=np.uint8)
    pos = offset
    for y in range(height):
        if pos + 4 > n:
            raise FormatError("truncated scanline %d" % y)
        b0, b1, b2, b3 = data[pos], data[pos + 1], data[pos + 2], data[pos + 3]
        if b0 == 2 and b1 == 2 and ((int(b2) << 8) | int(b3)) == width:
            pos += 4
            row = out[y].reshape(-1, 4)
            for c in range(4):
                x = 0
                while x < width:
                    if pos >= n:
                        raise FormatError("truncated RLE scanline %d" % y)
                    count = int(data[pos])
                    pos += 1
                    if count > 128:          # run of one repeated byte
                        count -= 128
                        if x + count > width or pos >= n:
                            raise FormatError("RLE run overflow in scanline %d" % y)
                        row[x:x + count, c] = data[pos]
                        pos += 1
                    else:                    # literal bytes
                        if count == 0 or x + count > width or pos + count > n:
                            raise FormatError("RLE literal overflow in scanline %d" % y)
                        row[x:x + count, c] = data[pos:pos + count]
                        pos += count
                    x += count
        elif b0 == 1 and b1 == 1 and b2 == 1:
            raise FormatError("legacy run-length scanlines are not supported")
        else:
            end = pos + 4 * width
            if end > n:
                raise FormatError("truncated flat scanline %d" % y)
            out[y] = data[pos:end].reshape(width, 4)
            pos = end
    return out, pos
