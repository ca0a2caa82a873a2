"""Grayscale image container, PGM/PNG I/O and seeded synthetic images.

Coordinates follow the usual convention throughout the package: ``x``/``u``
index columns, ``y``/``v`` index rows, and pixels are stored row-major as a
``(height, width)`` uint8 array.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

KINDS = ("block-mosaic", "gradient", "uniform-noise")


class ImageError(ValueError):
    """Raised for unreadable, unsupported or malformed image data."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ImageError(f"expected a 2-D pixel grid, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageError(f"zero-dimension image {arr.shape[1]}x{arr.shape[0]}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ImageError("pixel values must lie in 0..255")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        if arr is self.pixels or np.shares_memory(arr, self.pixels):
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "GrayImage":
        return cls(np.array(rows, dtype=np.int64))

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[int]) -> "GrayImage":
        if len(values) != width * height:
            raise ImageError(f"{len(values)} values for a {width}x{height} image")
        return cls(np.array(values, dtype=np.int64).reshape(height, width))

    def extract(self, u: int, v: int, width: int, height: int) -> "GrayImage":
        if u < 0 or v < 0 or u + width > self.width or v + height > self.height:
            raise ImageError(f"rectangle ({u},{v},{width},{height}) outside {self.width}x{self.height}")
        return GrayImage(self.pixels[v:v + height, u:u + width])

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


def to_grayscale(r, g, b):
    """BT.601 luma, rounded half up.

    Works on scalars and on integer arrays alike. Integer arithmetic keeps the
    rounding exact: ``(299 r + 587 g + 114 b + 500) // 1000``.
    """
    r, g, b = (np.asarray(c, dtype=np.int64) for c in (r, g, b))
    y = np.clip((299 * r + 587 * g + 114 * b + 500) // 1000, 0, 255)
    if y.ndim == 0:
        return int(y)
    return y.astype(np.uint8)


def _read_pgm(data: bytes) -> np.ndarray:
    # header tokens: magic, width, height, maxval; '#' comments allowed between them
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster

    if tokens[0] != b"P5":
        raise ImageError(f"unsupported netpbm variant {tokens[0]!r}; only binary PGM (P5) is read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageError("malformed PGM header") from exc
    if width < 1 or height < 1:
        raise ImageError(f"zero-dimension image {width}x{height}")
    if maxval != 255:
        raise ImageError(f"unsupported PGM maxval {maxval}; only 8-bit (255) is read")
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise ImageError("truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageError(f"{path}: unsupported format {im.format}")
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            if mode in ("L", "LA"):
                arr = np.asarray(im.getchannel(0))
            elif mode in ("RGB", "RGBA"):
                rgb = np.asarray(im.convert("RGB")).astype(np.int64)
                arr = to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])
            elif mode == "1":
                arr = np.asarray(im.convert("L"))
            else:
                raise ImageError(f"{path}: unsupported PNG mode {mode} (8-bit only)")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"{path}: cannot read image ({exc})") from exc
    return np.array(arr, dtype=np.uint8)


def load_image(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) or an 8-bit PNG as grayscale."""
    path = Path(path)
    try:
        head = path.read_bytes()
    except OSError as exc:
        raise ImageError(f"{path}: cannot read file ({exc})") from exc
    if head[:2] == b"P5" or head[:1] == b"P" and head[1:2].isdigit():
        return GrayImage(_read_pgm(head))
    if head[:8] == b"\x89PNG\r\n\x1a\n":
        return GrayImage(_read_png(path))
    raise ImageError(f"{path}: unsupported format (expected PGM P5 or PNG)")


def save_png(image, path) -> None:
    """Write a GrayImage, or an (H, W, 3) uint8 array, as PNG."""
    arr = image.pixels if isinstance(image, GrayImage) else np.asarray(image, dtype=np.uint8)
    Image.fromarray(np.ascontiguousarray(arr)).save(Path(path), format="PNG")


def save_pgm(image: GrayImage, path) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


@dataclass(frozen=True)
class SyntheticSpec:
    width: int
    height: int
    kind: str = "block-mosaic"
    block_size: int = 8
    seed: int = 0


def generate_synthetic(spec: SyntheticSpec) -> GrayImage:
    """Deterministic test image; the output depends on ``spec`` only.

    * ``block-mosaic``: ``block_size`` squares (clipped at the borders), each
      filled with one random intensity.
    * ``gradient``: left-to-right ramp, ``round(255 x / (width - 1))``; a
      single-column image is all zeros. The seed is unused.
    * ``uniform-noise``: i.i.d. uniform intensities.
    """
    w, h = spec.width, spec.height
    if w < 1 or h < 1:
        raise ImageError(f"zero dimensions {w}x{h}")
    if spec.kind not in KINDS:
        raise ImageError(f"unknown synthetic kind {spec.kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "uniform-noise":
        return GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))

    if spec.kind == "gradient":
        x = np.arange(w, dtype=np.int64)
        if w == 1:
            row = np.zeros(1, dtype=np.int64)
        else:
            row = (510 * x + (w - 1)) // (2 * (w - 1))
        return GrayImage(np.broadcast_to(row, (h, w)).copy())

    b = spec.block_size
    if b < 1 or b > max(w, h):
        raise ImageError(f"block size {b} does not fit a {w}x{h} image")
    bw, bh = -(-w // b), -(-h // b)
    blocks = rng.integers(0, 256, size=(bh, bw), dtype=np.uint8)
    return GrayImage(np.repeat(np.repeat(blocks, b, axis=0), b, axis=1)[:h, :w])


def plant_template(source: GrayImage, template: GrayImage, u: int, v: int) -> GrayImage:
    """Copy of ``source`` with ``template`` pasted at column ``u``, row ``v``."""
    if u < 0 or v < 0 or u + template.width > source.width or v + template.height > source.height:
        raise ImageError(
            f"cannot place {template.width}x{template.height} at ({u},{v}) "
            f"inside {source.width}x{source.height}"
        )
    out = source.pixels.copy()
    out[v:v + template.height, u:u + template.width] = template.pixels
    return GrayImage(out)
