"""Flat weight container: text header + raw little-endian payload.

Layout:

    TSWC1\n
    <count>\n
    <name> <dtype> <ndim> <d0> ... <dn-1> <offset> <nbytes>\n   (count lines)
    end\n
    <payload bytes>

Offsets are relative to the payload start. Entry names may not contain
whitespace. Round trips are bit-exact; dtypes are limited to float32,
float64, int64 and uint8 (uint8 carries embedded text such as manifests).
"""

from __future__ import annotations

import io
from typing import Dict

import numpy as np

from ..errors import FormatError

MAGIC = b"TSWC1"
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "|u1"}
_NAMES = {np.dtype("<f4"): "float32", np.dtype("<f8"): "float64",
          np.dtype("<i8"): "int64", np.dtype("|u1"): "uint8"}


def save_arrays(path, arrays: Dict[str, np.ndarray]) -> None:
    entries = []
    payload = io.BytesIO()
    offset = 0
    for name, arr in arrays.items():
        if not name or any(ch.isspace() for ch in name):
            raise FormatError("container entry name %r is empty or has "
                              "whitespace" % name)
        a = np.ascontiguousarray(arr)
        key = np.dtype(a.dtype).name
        if key not in _DTYPES:
            raise FormatError("container does not support dtype %r for %r"
                              % (key, name))
        raw = a.astype(_DTYPES[key], copy=False).tobytes()
        dims = " ".join(str(d) for d in a.shape)
        line = "%s %s %d%s %d %d" % (name, key, a.ndim,
                                     (" " + dims) if dims else "",
                                     offset, len(raw))
        entries.append(line)
        payload.write(raw)
        offset += len(raw)
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n")
        f.write(("%d\n" % len(entries)).encode("ascii"))
        for line in entries:
            f.write(line.encode("ascii") + b"\n")
        f.write(b"end\n")
        f.write(payload.getvalue())


def load_arrays(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    try:
        head_end = blob.index(b"end\n")
    except ValueError:
        raise FormatError("weight container: missing header terminator")
    header = blob[:head_end].decode("ascii", errors="replace").splitlines()
    payload = blob[head_end + 4:]
    if not header or header[0].encode() != MAGIC:
        raise FormatError("weight container: bad magic")
    try:
        count = int(header[1])
    except (IndexError, ValueError):
        raise FormatError("weight container: bad entry count")
    if len(header) != count + 2:
        raise FormatError("weight container: header has %d entry lines, "
                          "expected %d" % (len(header) - 2, count))
    out: Dict[str, np.ndarray] = {}
    for line in header[2:]:
        parts = line.split()
        if len(parts) < 5:
            raise FormatError("weight container: malformed entry %r" % line)
        name, dkey, nd = parts[0], parts[1], int(parts[2])
        if dkey not in _DTYPES:
            raise FormatError("weight container: unknown dtype %r" % dkey)
        if len(parts) != 5 + nd:
            raise FormatError("weight container: malformed entry %r" % line)
        shape = tuple(int(v) for v in parts[3:3 + nd])
        offset, nbytes = int(parts[3 + nd]), int(parts[4 + nd])
        if offset < 0 or offset + nbytes > len(payload):
            raise FormatError("weight container: entry %r exceeds payload"
                              % name)
        want = int(np.prod(shape)) if shape else 1
        itemsize = np.dtype(_DTYPES[dkey]).itemsize
        if nbytes != want * itemsize:
            raise FormatError("weight container: entry %r size mismatch" % name)
        arr = np.frombuffer(payload, dtype=_DTYPES[dkey], count=want,
                            offset=offset).reshape(shape)
        out[name] = np.array(arr, copy=True)  # own the memory
    return out


def pack_text(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def unpack_text(arr: np.ndarray) -> str:
    return bytes(np.ascontiguousarray(arr, dtype=np.uint8)).decode("utf-8")
