"""Binary weight files.

Layout, all integers little-endian::

    b"CCSW"                 magic
    u32 version             FORMAT_VERSION
    u32 flags               bit 0: lossy (some arrays stored at width 4)
    u32 config_len, bytes   MixerConfig as UTF-8 JSON (sorted keys)
    u32 array_count
    per array:
        u32 name_len, bytes  UTF-8 name
        u32 rank, rank x u64 dims
        u8 width             4 or 8
        payload              IEEE-754 little-endian, prod(dims) * width bytes

A file is parsed completely before any array is returned.
"""

import json
import struct

import numpy as np

from .model import MixerConfig, ModelParams

MAGIC = b"CCSW"
FORMAT_VERSION = 1
FLAG_LOSSY = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class WeightFileError(ValueError):
    pass


class BadMagicError(WeightFileError):
    pass


class VersionMismatchError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


def dumps(params, width=8):
    if width not in _DTYPES:
        raise ValueError(f"element width must be 4 or 8, got {width}")
    cfg = json.dumps(params.config.to_dict(), sort_keys=True).encode()
    out = [MAGIC, struct.pack("<III", FORMAT_VERSION, FLAG_LOSSY if width == 4 else 0, len(cfg)), cfg]
    out.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        raw = name.encode()
        out.append(struct.pack("<I", len(raw)) + raw + struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(struct.pack("<B", width))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[width]).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"truncated payload: needed {n} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data):
    """Parse a weight file; returns ``(params, lossy)``."""
    r = _Reader(data)
    if len(data) < len(MAGIC) or bytes(r.take(len(MAGIC), "magic")) != MAGIC:
        raise BadMagicError("bad magic: not a CCSW weight file")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"version mismatch: file has {version}, reader supports {FORMAT_VERSION}")
    flags, cfg_len = r.unpack("<II", "header")
    config = MixerConfig.from_dict(json.loads(bytes(r.take(cfg_len, "config")).decode()))
    (count,) = r.unpack("<I", "array count")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I", "name length")
        name = bytes(r.take(name_len, "name")).decode()
        (rank,) = r.unpack("<I", f"{name} rank")
        dims = r.unpack(f"<{rank}Q", f"{name} dims")
        (width,) = r.unpack("<B", f"{name} width")
        if width not in _DTYPES:
            raise WeightFileError(f"{name}: unsupported element width {width}")
        n = int(np.prod(dims, dtype=np.int64))
        payload = r.take(n * width, f"{name} payload")
        arrays[name] = np.frombuffer(payload, dtype=_DTYPES[width]).astype(np.float64).reshape(dims)
    if r.pos != len(data):
        raise WeightFileError(f"{len(data) - r.pos} trailing bytes after the last array")
    return ModelParams(config, arrays), bool(flags & FLAG_LOSSY)


def save_weights(params, path, width=8):
    with open(path, "wb") as fh:
        fh.write(dumps(params, width))


def load_weights(path):
    with open(path, "rb") as fh:
        params, _ = loads(fh.read())
    return params
