"""
Raw log readers: newline-delimited text, optionally gzip-compressed.

- Lines are decoded with surrogateescape so invalid UTF-8 bytes survive and can be written back verbatim.
- Byte offsets refer to the (decompressed) stream; the line terminator (\\n or \\r\\n) is not part of the raw text.
- Plain files can be cut into line-aligned byte ranges for parallel parsing.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, Iterator

from mbda.errors import DataError

_GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True, slots=True)
class LogLine:
    """One raw line of one source, as found in its input file."""

    source: str
    timestamp: datetime
    raw: str
    byte_offset: int


def is_gzip(path: str | Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(2) == _GZIP_MAGIC
    except OSError as e:
        raise DataError(f"cannot read input {path}: {e.strerror or e}") from e


def _open_binary(path: str | Path) -> BinaryIO:
    try:
        if is_gzip(path):
            return gzip.open(path, "rb")  # type: ignore[return-value]
        return open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read input {path}: {e.strerror or e}") from e


def _decode(data: bytes, encoding: str) -> str:
    if data.endswith(b"\n"):
        data = data[:-1]
        if data.endswith(b"\r"):
            data = data[:-1]
    return data.decode(encoding, errors="surrogateescape")


def encode_raw(raw: str, encoding: str = "utf-8") -> bytes:
    """Inverse of the decoding applied on read; reproduces the original bytes."""
    return raw.encode(encoding, errors="surrogateescape")


def iter_lines(
    path: str | Path,
    encoding: str = "utf-8",
    start: int = 0,
    end: int | None = None,
) -> Iterator[tuple[int, str]]:
    """
    Yield (byte_offset, raw) for every line starting in [start, end).

    A range that begins mid-line skips to the next line start, so adjacent ranges
    partition the file exactly. Ranges are only supported on uncompressed files.
    """
    fh = _open_binary(path)
    try:
        if start > 0:
            if isinstance(fh, gzip.GzipFile):
                raise DataError(f"byte ranges are not supported on compressed input {path}")
            fh.seek(start - 1)
            if fh.read(1) != b"\n":
                fh.readline()
        pos = fh.tell()
        while end is None or pos < end:
            data = fh.readline()
            if not data:
                break
            yield pos, _decode(data, encoding)
            pos += len(data)
    except OSError as e:
        raise DataError(f"cannot read input {path}: {e.strerror or e}") from e
    finally:
        fh.close()


def plan_chunks(path: str | Path, n_chunks: int) -> list[tuple[int, int | None]]:
    """Split a file into up to n_chunks byte ranges; compressed files stay whole."""
    if n_chunks <= 1 or is_gzip(path):
        return [(0, None)]
    size = os.path.getsize(path)
    if size == 0:
        return [(0, None)]
    step = max(1, -(-size // n_chunks))
    bounds = list(range(0, size, step))
    return [(b, min(b + step, size)) for b in bounds]
