"""Binary PGM (P5) images and plain CSV tables."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


class ImageFormatError(ValueError):
    pass


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Raw pixels of an 8-bit binary PGM, shape (height, width), and its maxval."""
    data = Path(path).read_bytes()
    match = _HEADER.match(data)
    if match is None:
        raise ImageFormatError(f"{path}: not a binary (P5) PGM file")
    width, height, maxval = (int(g) for g in match.groups())
    if not 0 < maxval < 256:
        raise ImageFormatError(f"{path}: only 8-bit PGM is supported (maxval={maxval})")
    body = data[match.end() :]
    if len(body) < width * height:
        raise ImageFormatError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(body[: width * height], dtype=np.uint8).reshape(height, width)
    return pixels, maxval


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError("expected a 2D uint8 array")
    h, w = pixels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes())


def save_image(path, image: np.ndarray) -> None:
    """Write ``image`` min-max normalised to 0..255."""
    image = np.asarray(image, dtype=float)
    lo, hi = image.min(), image.max()
    scaled = np.zeros_like(image) if hi == lo else (image - lo) / (hi - lo)
    write_pgm(path, np.round(scaled * 255).astype(np.uint8))


def area_average_matrix(size: int, n: int) -> np.ndarray:
    """``n x size`` matrix averaging the input cells each output cell overlaps."""
    edges_in = np.arange(size + 1) / size
    edges_out = np.arange(n + 1) / n
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    W = np.clip(hi - lo, 0, None)
    return W / W.sum(axis=1, keepdims=True)


def center_crop(image: np.ndarray) -> np.ndarray:
    h, w = image.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return image[top : top + side, left : left + side]


def load_image(path, n: int | None = None, crop: bool = False) -> np.ndarray:
    """Grayscale image scaled to [0, 1], optionally cropped and averaged down to n x n."""
    pixels, maxval = read_pgm(path)
    image = pixels.astype(float) / maxval
    if image.shape[0] != image.shape[1]:
        if not crop:
            raise ImageFormatError(f"{path}: image is {image.shape[1]}x{image.shape[0]}, not square")
        image = center_crop(image)
    if n is not None and n != image.shape[0]:
        if n > image.shape[0]:
            raise ValueError(f"cannot upsample a {image.shape[0]}-pixel image to {n}")
        A = area_average_matrix(image.shape[0], n)
        image = A @ image @ A.T
    return image


def write_csv(path, header, columns) -> None:
    """Columns of equal length, full-precision decimal text, ``,`` delimited."""
    columns = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_csv(path) -> dict:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(t) for t in line.split(",")] for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}
