"""Image and tensor file formats.

Two on-disk families:

* Binary plain pixmaps, 8-bit maxval 255: P5 (grayscale) and P6 (RGB).
  Loaded as float arrays scaled to [0, 1] with shape HxWx1 or HxWx3.
* "RALT" raw tensors: magic b"RALT", rank u32, dims u32 x rank, then
  little-endian float32 values row-major. Lossless for float32 data.

Malformed files are rejected with the byte offset of the problem;
truncated files report how many bytes are missing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

RALT_MAGIC = b"RALT"


class ImageFormatError(ValueError):
    pass


def load_image(path):
    """Read a P5/P6 pixmap or RALT tensor as a float32 array.

    Pixmaps come back HxWx1 or HxWx3 scaled to [0,1]; RALT tensors keep
    their stored shape and values.
    """
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] == RALT_MAGIC:
        return _decode_ralt(blob, str(path))
    if blob[:2] in (b"P5", b"P6"):
        return _decode_pixmap(blob, str(path))
    raise ImageFormatError(f"{path}: unknown magic {blob[:4]!r} at byte 0")


def save_image(path, pixels):
    """Write a [0,1] float image as P5 (1 channel) or P6 (3 channels)."""
    path = Path(path)
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ImageFormatError(f"cannot write shape {arr.shape} as a pixmap")
    h, w, c = arr.shape
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if c == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode()
    path.write_bytes(header + data.tobytes())
    return path


def save_ralt(path, tensor):
    path = Path(path)
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    parts = [RALT_MAGIC, struct.pack("<I", arr.ndim),
             struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    path.write_bytes(b"".join(parts))
    return path


def _decode_ralt(blob, name):
    off = 4
    if len(blob) < 8:
        raise ImageFormatError(f"{name}: truncated at byte {len(blob)}: "
                               f"need {8 - len(blob)} more bytes for rank")
    (rank,) = struct.unpack_from("<I", blob, off)
    off += 4
    need = 4 * rank
    if len(blob) < off + need:
        raise ImageFormatError(f"{name}: truncated at byte {len(blob)}: "
                               f"need {off + need - len(blob)} more bytes for dims")
    dims = struct.unpack_from(f"<{rank}I", blob, off)
    off += need
    count = int(np.prod(dims)) if rank else 1
    need = 4 * count
    if len(blob) < off + need:
        raise ImageFormatError(f"{name}: truncated at byte {len(blob)}: "
                               f"need {off + need - len(blob)} more bytes of data")
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
    return data.reshape(dims).astype(np.float32)


def _decode_pixmap(blob, name):
    magic = blob[:2]
    channels = 3 if magic == b"P6" else 1
    off = 2
    fields = []
    while len(fields) < 3:
        off = _skip_space_and_comments(blob, off, name)
        start = off
        while off < len(blob) and not blob[off:off + 1].isspace():
            off += 1
        token = blob[start:off]
        if not token:
            raise ImageFormatError(f"{name}: truncated header at byte {start}: "
                                   f"expected {'width height maxval'.split()[len(fields)]}")
        try:
            fields.append(int(token))
        except ValueError:
            raise ImageFormatError(f"{name}: bad header token {token!r} at byte {start}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"{name}: non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"{name}: unsupported maxval {maxval} (only 8-bit, 255)")
    if off >= len(blob):
        raise ImageFormatError(f"{name}: truncated at byte {off}: missing pixel data")
    off += 1  # single whitespace byte terminates the header
    need = width * height * channels
    have = len(blob) - off
    if have < need:
        raise ImageFormatError(f"{name}: truncated at byte {len(blob)}: "
                               f"need {need - have} more pixel bytes")
    data = np.frombuffer(blob, dtype=np.uint8, count=need, offset=off)
    return (data.reshape(height, width, channels).astype(np.float32) / 255.0)


def _skip_space_and_comments(blob, off, name):
    while off < len(blob):
        ch = blob[off:off + 1]
        if ch.isspace():
            off += 1
        elif ch == b"#":
            while off < len(blob) and blob[off:off + 1] != b"\n":
                off += 1
        else:
            return off
    raise ImageFormatError(f"{name}: truncated header at byte {off}")
