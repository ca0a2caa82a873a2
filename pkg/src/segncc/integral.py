"""Summed-area tables of intensities and squared intensities.

Tables are stored with a leading zero row and column, so ``padded[r, c]``
holds the sum over rows ``< r`` and columns ``< c``. That realises the
convention ``s(-1, .) = s(., -1) = 0`` without guarded lookups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import GrayImage


class RegionError(IndexError):
    pass


@dataclass(frozen=True, eq=False)
class SumTables:
    width: int
    height: int
    padded_s: np.ndarray
    padded_s2: np.ndarray

    @property
    def s(self) -> np.ndarray:
        """``s[y, x]`` = sum of f over columns <= x and rows <= y."""
        return self.padded_s[1:, 1:]

    @property
    def s2(self) -> np.ndarray:
        return self.padded_s2[1:, 1:]

    def rect_sum(self, x: int, y: int, w: int, h: int) -> int:
        _check_rect(self, x, y, w, h)
        return _corners(self.padded_s, x, y, w, h)

    def rect_sum_sq(self, x: int, y: int, w: int, h: int) -> int:
        _check_rect(self, x, y, w, h)
        return _corners(self.padded_s2, x, y, w, h)


def _integral(values: np.ndarray) -> np.ndarray:
    h, w = values.shape
    out = np.zeros((h + 1, w + 1), dtype=np.int64)
    out[1:, 1:] = values
    np.cumsum(out, axis=1, out=out)
    np.cumsum(out, axis=0, out=out)
    out.flags.writeable = False
    return out


def build_sum_tables(f: GrayImage) -> SumTables:
    px = f.pixels.astype(np.int64)
    return SumTables(f.width, f.height, _integral(px), _integral(px * px))


def _check_rect(tables: SumTables, x, y, w, h):
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > tables.width or y + h > tables.height:
        raise RegionError(
            f"rectangle ({x},{y},{w},{h}) is not inside the {tables.width}x{tables.height} image"
        )


def _corners(p: np.ndarray, x, y, w, h) -> int:
    # bottom-right + top-left - bottom-left - top-right of the padded table
    return int(p[y + h, x + w] + p[y, x] - p[y + h, x] - p[y, x + w])


def window_sums(tables: SumTables, u: int, v: int, w: int, h: int) -> tuple[int, int]:
    """(sum f, sum f^2) over the ``w`` x ``h`` window whose top-left is (u, v)."""
    _check_rect(tables, u, v, w, h)
    return _corners(tables.padded_s, u, v, w, h), _corners(tables.padded_s2, u, v, w, h)


def region_sum(tables: SumTables, u: int, v: int, seg) -> int:
    """Sum of f under segment ``seg`` of a template placed at (u, v)."""
    return tables.rect_sum(u + seg.x, v + seg.y, seg.w, seg.h)


def shifted(p: np.ndarray, dx: int, dy: int, nu: int, nv: int) -> np.ndarray:
    """View ``p[dy + v, dx + u]`` for all ``0 <= u < nu``, ``0 <= v < nv``."""
    return p[dy:dy + nv, dx:dx + nu]


def all_window_sums(tables: SumTables, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Window sums for every placement of a ``w`` x ``h`` window, shape (nv, nu)."""
    if w > tables.width or h > tables.height:
        raise RegionError(f"{w}x{h} window larger than {tables.width}x{tables.height} image")
    nu, nv = tables.width - w + 1, tables.height - h + 1
    out = []
    for p in (tables.padded_s, tables.padded_s2):
        out.append(
            shifted(p, w, h, nu, nv) + shifted(p, 0, 0, nu, nv)
            - shifted(p, 0, h, nu, nv) - shifted(p, w, 0, nu, nv)
        )
    return out[0], out[1]
