"""File formats: binary PGM images, raw float dumps, CSV reports.

Keep this module dependency-free within the package; higher layers
(scene, reconstruct, cli) build on it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import EmptyImage, InvalidParameter, UnsupportedFormat


def _read_pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Pull whitespace-separated header tokens, honoring # comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last one (raster starts there).
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise UnsupportedFormat("truncated PGM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
            if len(tokens) == count:
                i += 1  # exactly one whitespace separates maxval from raster
    return tokens, i


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) graymap; returns (levels as uint array, maxval).

    8-bit and 16-bit (big-endian) rasters supported.
    """
    data = Path(path).read_bytes()
    if data[:2] == b"P2":
        raise UnsupportedFormat("ASCII (P2) graymaps not supported; use binary P5")
    if data[:2] in (b"P3", b"P6"):
        raise UnsupportedFormat("color pixmaps not supported; need a single-channel P5")
    if data[:2] != b"P5":
        raise UnsupportedFormat(f"not a PGM file: magic {data[:2]!r}")
    tokens, offset = _read_pgm_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise UnsupportedFormat("malformed PGM header") from None
    if width <= 0 or height <= 0:
        raise EmptyImage(f"degenerate image {width}x{height}")
    if not 0 < maxval < 65536:
        raise UnsupportedFormat(f"maxval {maxval} out of range")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height
    raster = data[offset : offset + n * dtype.itemsize]
    if len(raster) != n * dtype.itemsize:
        raise UnsupportedFormat("truncated PGM raster")
    levels = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return levels.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, values: np.ndarray, maxval: int = 65535) -> None:
    """Write values in [0, 1] as a binary P5 graymap (16-bit by default)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise InvalidParameter("PGM export needs a 2-D array")
    if not np.all(np.isfinite(v)):
        raise InvalidParameter("PGM export needs finite values")
    if v.min() < 0.0 or v.max() > 1.0:
        raise InvalidParameter("PGM export expects values already scaled to [0, 1]")
    if not 0 < maxval < 65536:
        raise InvalidParameter(f"maxval {maxval} out of range")
    levels = np.rint(v * maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + levels.astype(dtype).tobytes())


def read_image_levels(path) -> tuple[np.ndarray, int]:
    """Read a graymap (PGM mandatory, single-channel PNG if Pillow is present)."""
    p = Path(path)
    head = p.read_bytes()[:8]
    if head[:2] == b"\x89P" and head[1:4] == b"PNG":
        try:
            from PIL import Image
        except ImportError:
            raise UnsupportedFormat(
                "PNG input needs the optional Pillow dependency; convert to PGM"
            ) from None
        img = Image.open(p)
        if img.mode not in ("L", "I;16", "I;16B", "I"):
            raise UnsupportedFormat(f"PNG must be single-channel gray, got mode {img.mode}")
        arr = np.asarray(img)
        maxval = 65535 if arr.dtype.itemsize > 1 else 255
        return arr, maxval
    return read_pgm(p)


def display_normalize(G: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1] by the grid's min/max (constant arrays -> 0)."""
    G = np.asarray(G, dtype=np.float64)
    lo = G.min()
    hi = G.max()
    if hi == lo:
        return np.zeros_like(G)
    return (G - lo) / (hi - lo)


RAW_MAGIC = "f64le"


def write_raw(path, values: np.ndarray) -> None:
    """Flat little-endian float64 dump with a one-line ASCII shape header."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise InvalidParameter("raw dump is defined for 2-D arrays")
    header = f"{RAW_MAGIC} {v.shape[0]} {v.shape[1]}\n".encode("ascii")
    Path(path).write_bytes(header + v.astype("<f8").tobytes())


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise UnsupportedFormat("missing raw dump header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != RAW_MAGIC:
        raise UnsupportedFormat(f"bad raw dump header {data[:nl]!r}")
    ny, nx = int(parts[1]), int(parts[2])
    body = data[nl + 1 :]
    if len(body) != ny * nx * 8:
        raise UnsupportedFormat("raw dump length does not match its header")
    return np.frombuffer(body, dtype="<f8").reshape(ny, nx).copy()


def write_csv(path, rows, columns: tuple[str, ...], header_lines: tuple[str, ...] = ()) -> None:
    """CSV with optional '#' metadata lines above the column row."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read back a write_csv file; returns (column names, rows as strings)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise EmptyImage(f"no data rows in {path}")
    return rows[0], rows[1:]


def write_metadata(path, entries: dict) -> None:
    """key=value sidecar, one entry per line, floats in full precision."""
    lines = []
    for key, value in entries.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metadata(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
