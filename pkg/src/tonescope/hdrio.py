"""Image I/O and photometric helpers.

Radiance RGBE (.hdr) reading/writing with flat and adaptive-RLE scanlines,
a deterministic 8-bit PNG writer, Rec. 709 luminance, and log-domain
luminance normalization. Pixel decode is m * 2^(e - 136) for a nonzero
exponent byte, so (128, 128, 128, 129) is exactly 1.0; the shared-exponent
round trip keeps each channel within 1/256 of the per-pixel max channel.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _core
from .errors import DomainError, FormatError

LUMA_R, LUMA_G, LUMA_B = 0.2126, 0.7152, 0.0722
LOG_FLOOR_SCALE = 1e-6
_RLE_MIN_WIDTH, _RLE_MAX_WIDTH = 8, 32767


@dataclass
class HdrImage:
    """Linear radiance image, (H, W, 3) float."""
    data: np.ndarray
    header: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.data.shape


@dataclass
class LogLuminance:
    """Luminance mapped to [0, 1] in the log domain.

    degenerate means the source had no usable dynamic range (constant or
    all-black image); data is then all 0.5 and the bounds are meaningless.
    """
    data: np.ndarray
    log_min: float
    log_max: float
    degenerate: bool = False


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------

def _parse_header(blob: bytes):
    if not (blob.startswith(b"#?RADIANCE") or blob.startswith(b"#?RGBE")):
        raise FormatError("not a Radiance file (bad magic)")
    pos = blob.index(b"\n") + 1
    header = {}
    while True:
        end = blob.find(b"\n", pos)
        if end < 0:
            raise FormatError("unterminated Radiance header")
        line = blob[pos:end]
        pos = end + 1
        if line == b"":
            break
        if line.startswith(b"#"):
            continue
        if b"=" in line:
            k, _, v = line.partition(b"=")
            header[k.decode("ascii", "replace").strip()] = \
                v.decode("ascii", "replace").strip()
    fmt = header.get("FORMAT", "32-bit_rle_rgbe")
    if fmt != "32-bit_rle_rgbe":
        raise FormatError("unsupported Radiance FORMAT %r" % fmt)
    end = blob.find(b"\n", pos)
    if end < 0:
        raise FormatError("missing Radiance resolution line")
    res = blob[pos:end].decode("ascii", "replace").split()
    pos = end + 1
    if len(res) != 4 or res[0] != "-Y" or res[2] != "+X":
        raise FormatError("unsupported Radiance orientation %r"
                          % " ".join(res))
    try:
        h, w = int(res[1]), int(res[3])
    except ValueError:
        raise FormatError("bad Radiance resolution line")
    if h <= 0 or w <= 0:
        raise FormatError("non-positive Radiance image size %dx%d" % (h, w))
    return header, h, w, pos


def rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    """(..., 4) uint8 -> (..., 3) float32; zero exponent byte means black."""
    m = rgbe[..., :3].astype(np.float32)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.ldexp(np.float32(1.0), e - 136).astype(np.float32)
    out = m * scale[..., None]
    out[e == 0] = 0.0
    return out


def float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) float -> (..., 4) uint8 with a shared exponent.

    Mantissas round to nearest; a max-channel mantissa that would round to
    256 is clamped to 255 so the exponent never widens, keeping the
    round-trip error within 1/256 of the per-pixel max channel.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if np.any(~np.isfinite(rgb)) or np.any(rgb < 0):
        raise DomainError("RGBE encoding needs finite nonnegative values")
    m = rgb.max(axis=-1)
    frac, ex = np.frexp(m)
    nonzero = m >= 1e-38
    scale = np.zeros_like(m)
    np.divide(frac * 256.0, m, out=scale, where=nonzero)
    mant = np.rint(rgb * scale[..., None])
    mant = np.minimum(mant, 255.0)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = mant.astype(np.uint8)
    out[..., 3] = np.where(nonzero, ex + 128, 0).astype(np.uint8)
    out[~nonzero] = 0
    return out


def read_hdr(src) -> HdrImage:
    """Read a Radiance .hdr file from a path, file object, or bytes."""
    if isinstance(src, (bytes, bytearray)):
        blob = bytes(src)
    elif hasattr(src, "read"):
        blob = src.read()
    else:
        with open(src, "rb") as f:
            blob = f.read()
    header, h, w, pos = _parse_header(blob)
    rgbe, _ = _core.get_backend().rgbe_decode_scanlines(blob, pos, w, h)
    return HdrImage(rgbe_to_float(rgbe), header)


def _rle_encode_channel(ch: np.ndarray) -> bytes:
    out = bytearray()
    w = ch.shape[0]
    i = 0
    while i < w:
        run = 1
        while i + run < w and run < 127 and ch[i + run] == ch[i]:
            run += 1
        if run >= 4:
            out.append(128 + run)
            out.append(int(ch[i]))
            i += run
            continue
        # literal chunk: stop before the next run of >= 4 or at 128 bytes
        j = i
        while j < w and j - i < 128:
            if j + 3 < w and ch[j] == ch[j + 1] == ch[j + 2] == ch[j + 3]:
                break
            j += 1
        if j == i:  # at a run head; emit it as a (short) run instead
            out.append(128 + run)
            out.append(int(ch[i]))
            i += run
            continue
        out.append(j - i)
        out.extend(ch[i:j].tobytes())
        i = j
    return bytes(out)


def write_hdr(path, image) -> None:
    data = image.data if isinstance(image, HdrImage) else np.asarray(image)
    if data.ndim != 3 or data.shape[2] != 3:
        raise FormatError("write_hdr expects (H, W, 3), got %s" % (data.shape,))
    h, w = data.shape[:2]
    rgbe = float_to_rgbe(data)
    buf = io.BytesIO()
    buf.write(b"#?RADIANCE\n")
    buf.write(b"FORMAT=32-bit_rle_rgbe\n\n")
    buf.write(("-Y %d +X %d\n" % (h, w)).encode("ascii"))
    use_rle = _RLE_MIN_WIDTH <= w <= _RLE_MAX_WIDTH
    for y in range(h):
        row = rgbe[y]
        if use_rle:
            buf.write(bytes([2, 2, (w >> 8) & 0xFF, w & 0xFF]))
            for c in range(4):
                buf.write(_rle_encode_channel(np.ascontiguousarray(row[:, c])))
        else:
            buf.write(row.tobytes())
    if hasattr(path, "write"):
        path.write(buf.getvalue())
    else:
        with open(path, "wb") as f:
            f.write(buf.getvalue())


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

def quantize8(img: np.ndarray) -> np.ndarray:
    """[0, 1] float -> uint8 with round-half-up: floor(255 v + 0.5)."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    crc = zlib.crc32(tag + body) & 0xFFFFFFFF
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", crc)


def encode_png(arr: np.ndarray) -> bytes:
    """Deterministic 8-bit RGB PNG encoder (filter 0, fixed zlib level).

    Float input is taken as [0, 1] and quantized; uint8 passes through.
    """
    a = np.asarray(arr)
    if a.dtype != np.uint8:
        a = quantize8(a)
    if a.ndim != 3 or a.shape[2] != 3:
        raise FormatError("encode_png expects (H, W, 3), got %s %s"
                          % (a.dtype, a.shape))
    h, w = a.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = bytearray()
    for y in range(h):
        raw.append(0)
        raw.extend(a[y].tobytes())
    idat = zlib.compress(bytes(raw), 6)
    return (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", idat) + _png_chunk(b"IEND", b""))


def write_png(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(arr))


def read_png(src) -> np.ndarray:
    """Read an 8-bit image into (H, W, 3) float64 in [0, 1]."""
    from PIL import Image
    try:
        img = Image.open(io.BytesIO(src) if isinstance(src, (bytes, bytearray))
                         else src)
        img = img.convert("RGB")
    except Exception as exc:
        raise FormatError("cannot read image: %s" % exc) from exc
    return np.asarray(img, dtype=np.float64) / 255.0


# ---------------------------------------------------------------------------
# photometry
# ---------------------------------------------------------------------------

def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance, preserving dtype for float inputs."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DomainError("luminance expects (H, W, 3), got %s" % (rgb.shape,))
    return LUMA_R * rgb[..., 0] + LUMA_G * rgb[..., 1] + LUMA_B * rgb[..., 2]


def floor_luminance(y: np.ndarray, floor_scale: float = LOG_FLOOR_SCALE):
    """Clamp luminance away from zero at floor_scale * max(y)."""
    ymax = float(y.max())
    if ymax <= 0:
        return None
    return np.maximum(y, floor_scale * ymax)


def log_normalize(y: np.ndarray, floor_scale: float = LOG_FLOOR_SCALE,
                  bounds: Optional[tuple] = None) -> LogLuminance:
    """Map luminance to [0, 1] in the log domain.

    bounds, when given, are (log_min, log_max) from another image (aligned
    crops share the parent's bounds). A constant or all-black image yields
    all 0.5 with the degenerate flag set.
    """
    y = np.asarray(y)
    if y.ndim != 2:
        raise DomainError("log_normalize expects (H, W), got %s" % (y.shape,))
    yf = floor_luminance(y, floor_scale)
    if yf is None:
        return LogLuminance(np.full(y.shape, 0.5, dtype=y.dtype), 0.0, 0.0,
                            degenerate=True)
    logy = np.log(yf)
    if bounds is None:
        lmin, lmax = float(logy.min()), float(logy.max())
    else:
        lmin, lmax = float(bounds[0]), float(bounds[1])
    if lmax - lmin < 1e-12:
        return LogLuminance(np.full(y.shape, 0.5, dtype=y.dtype), lmin, lmax,
                            degenerate=True)
    data = (logy - lmin) / (lmax - lmin)
    return LogLuminance(data.astype(y.dtype, copy=False), lmin, lmax, False)


def srgb_encode(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    lo = 12.92 * x
    hi = 1.055 * np.power(x, 1.0 / 2.4) - 0.055
    return np.where(x <= 0.0031308, lo, hi)


def resize_area(img: np.ndarray, max_edge: int) -> np.ndarray:
    """Integer-factor area downscale until the long edge fits max_edge.

    Deterministic block mean; trailing rows/cols that do not fill a block
    are dropped. No-op when the image already fits.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    long_edge = max(h, w)
    if long_edge <= max_edge:
        return img
    f = -(-long_edge // max_edge)  # ceil
    hn, wn = h // f, w // f
    if hn == 0 or wn == 0:
        raise DomainError("image %dx%d too small to downscale by %d"
                          % (h, w, f))
    crop = img[:hn * f, :wn * f]
    if img.ndim == 3:
        blocks = crop.reshape(hn, f, wn, f, img.shape[2])
        return blocks.mean(axis=(1, 3))
    blocks = crop.reshape(hn, f, wn, f)
    return blocks.mean(axis=(1, 3))
