"""File formats: binary PGM, PNG, the ORF1 orientation-field format and key=value text.

ORF1 layout (little endian)::

    b"ORF1" | width: u32 | height: u32 | width*height * (re: f32, im: f32), row-major
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimensionOverflow, ImageFormatError, TruncatedFile

ORF_MAGIC = b"ORF1"
_ORF_HEADER = struct.Struct("<4sII")
# refuse headers describing rasters larger than this many pixels
MAX_PIXELS = 1 << 28


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ImageFormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise ImageFormatError("PGM dimensions must be positive")
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise ImageFormatError("truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(image) -> bytes:
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ImageFormatError("PGM output needs a 2-D uint8 raster or a boolean mask")
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def write_pgm(path, image) -> None:
    atomic_write_bytes(path, encode_pgm(image))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def read_mask(path) -> np.ndarray:
    return read_pgm(path) > 127


def read_image(path) -> np.ndarray:
    """Read an 8-bit grey PGM or PNG."""
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        return decode_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from io import BytesIO

        from PIL import Image

        with Image.open(BytesIO(data)) as im:
            if im.mode not in ("L", "LA", "P", "RGB", "RGBA", "I;16", "1"):
                raise ImageFormatError(f"unsupported PNG mode {im.mode}")
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    raise ImageFormatError(f"{path}: neither binary PGM nor PNG")


def write_png(path, array) -> None:
    """Write an 8-bit ``(h, w)`` grey or ``(h, w, 2)`` grey+alpha array as PNG."""
    from io import BytesIO

    from PIL import Image

    arr = np.ascontiguousarray(array, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "LA"
    buf = BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


# -- ORF1 --------------------------------------------------------------------

def encode_field(field) -> bytes:
    f = np.asarray(field)
    if f.ndim != 2:
        raise DimensionOverflow("orientation field must be 2-D")
    h, w = f.shape
    pairs = np.empty((h, w, 2), dtype="<f4")
    pairs[..., 0] = f.real
    pairs[..., 1] = f.imag
    return _ORF_HEADER.pack(ORF_MAGIC, w, h) + pairs.tobytes()


def decode_field(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != ORF_MAGIC:
        raise BadMagic("missing ORF1 magic")
    if len(data) < _ORF_HEADER.size:
        raise TruncatedFile("ORF1 header truncated")
    _, w, h = _ORF_HEADER.unpack_from(data)
    if w == 0 or h == 0 or w * h > MAX_PIXELS:
        raise DimensionOverflow(f"unusable ORF1 dimensions {w}x{h}")
    need = _ORF_HEADER.size + 8 * w * h
    if len(data) < need:
        raise TruncatedFile(f"ORF1 payload has {len(data)} bytes, expected {need}")
    pairs = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=_ORF_HEADER.size)
    pairs = pairs.reshape(h, w, 2).astype(np.float64)
    return pairs[..., 0] + 1j * pairs[..., 1]


def write_field(path, field) -> None:
    atomic_write_bytes(path, encode_field(field))


def read_field(path) -> np.ndarray:
    return decode_field(Path(path).read_bytes())


# -- key = value text --------------------------------------------------------

def format_keyvalues(items) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items)


def parse_keyvalues(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
