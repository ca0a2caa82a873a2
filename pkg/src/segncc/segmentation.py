"""Split-and-merge rectangular approximation of a template.

A template is cut recursively in half (on its larger side, height on ties)
until every piece has a population standard deviation below ``sigma_max``
or is a single pixel. Touching pieces with identical means are then merged
back together. Each piece is replaced by the mean of its pixels, giving a
piecewise-constant approximation that can be correlated against a source
image with a handful of summed-area lookups per piece.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .imagecore import GrayImage


class UniformTemplateError(ValueError):
    """NCC is undefined for a template without intensity variation."""


@dataclass(frozen=True, slots=True)
class Segment:
    x: int
    y: int
    w: int
    h: int
    mu: float

    @property
    def area(self) -> int:
        return self.w * self.h


def _std_from_sums(n: int, s: int, s2: int) -> float:
    # population std; n*s2 - s*s is exact in Python integers
    return math.sqrt(n * s2 - s * s) / n


def segment_stats(t: GrayImage, rect) -> tuple[float, float]:
    """(mean, population std) of template pixels inside ``rect = (x, y, w, h)``."""
    x, y, w, h = rect
    if w < 1 or h < 1:
        raise ValueError(f"empty rectangle {rect}")
    if x < 0 or y < 0 or x + w > t.width or y + h > t.height:
        raise ValueError(f"rectangle {rect} outside {t.width}x{t.height} template")
    block = t.pixels[y:y + h, x:x + w].astype(np.int64)
    n = w * h
    s = int(block.sum())
    s2 = int((block * block).sum())
    return s / n, _std_from_sums(n, s, s2)


def _halves(x, y, w, h):
    if w > h:
        a = w // 2
        return (x, y, a, h), (x + a, y, w - a, h)
    a = h // 2
    return (x, y, w, a), (x, y + a, w, h - a)


def split_segment(t: GrayImage, sigma_max: float, rect, acc: list | None = None) -> list[Segment]:
    """Recursive binary split, appending finished pieces to ``acc`` in visit order.

    Straightforward reference version; :func:`approximate_segments` produces
    the same pieces without recomputing statistics from pixels.
    """
    if acc is None:
        acc = []
    x, y, w, h = rect
    if w == 1 and h == 1:
        acc.append(Segment(x, y, 1, 1, float(t.pixels[y, x])))
        return acc
    mean, std = segment_stats(t, rect)
    if std < sigma_max:
        acc.append(Segment(x, y, w, h, mean))
        return acc
    first, second = _halves(x, y, w, h)
    split_segment(t, sigma_max, first, acc)
    split_segment(t, sigma_max, second, acc)
    return acc


class _SplitTree:
    """Split tree materialised down to the leaves for the smallest threshold.

    Raising ``sigma_max`` can only stop splits earlier, so every leaf for a
    larger threshold is already a node of this tree. A node is a leaf for
    threshold ``s`` iff it is 1x1 or ``std < s``, and every ancestor has
    ``std >= s``. Nodes are kept in depth-first visit order, which is the
    order the recursive split appends its pieces.
    """

    def __init__(self, t: GrayImage, sigma_max: float):
        px = t.pixels.astype(np.int64)
        ps = np.zeros((t.height + 1, t.width + 1), dtype=np.int64)
        ps[1:, 1:] = px.cumsum(0).cumsum(1)
        ps2 = np.zeros_like(ps)
        ps2[1:, 1:] = (px * px).cumsum(0).cumsum(1)
        ps, ps2 = ps.tolist(), ps2.tolist()

        rects, sums, stds, unit, anc = [], [], [], [], []
        stack = [(0, 0, t.width, t.height, math.inf)]
        while stack:
            x, y, w, h, amin = stack.pop()
            s = ps[y + h][x + w] + ps[y][x] - ps[y + h][x] - ps[y][x + w]
            s2 = ps2[y + h][x + w] + ps2[y][x] - ps2[y + h][x] - ps2[y][x + w]
            n = w * h
            std = _std_from_sums(n, s, s2)
            rects.append((x, y, w, h))
            sums.append(s)
            stds.append(std)
            unit.append(n == 1)
            anc.append(amin)
            if n == 1 or std < sigma_max:
                continue
            first, second = _halves(x, y, w, h)
            child_amin = min(amin, std)
            stack.append((*second, child_amin))
            stack.append((*first, child_amin))

        self.sigma_min = sigma_max
        self.rects = rects
        self.sums = sums
        self.std = np.array(stds)
        self.unit = np.array(unit, dtype=bool)
        self.ancestor_min = np.array(anc)

    def leaf_mask(self, sigma_max: float) -> np.ndarray:
        if sigma_max < self.sigma_min:
            raise ValueError("threshold below the one the tree was built for")
        return (self.unit | (self.std < sigma_max)) & (self.ancestor_min >= sigma_max)

    def leaves(self, sigma_max: float) -> list[Segment]:
        out = []
        for i in np.flatnonzero(self.leaf_mask(sigma_max)):
            x, y, w, h = self.rects[i]
            out.append(Segment(x, y, w, h, self.sums[i] / (w * h)))
        return out


def approximate_segments(t: GrayImage, sigma_max: float, k_max: int) -> tuple[list[Segment], float]:
    """Split with back-off and merge; returns (segments, threshold actually used).

    The threshold goes up by one intensity level until the split yields at
    most ``k_max`` pieces, then equal-valued neighbours are merged. Works on
    uniform templates too (they come out as a single segment).
    """
    if not sigma_max >= 0:
        raise ValueError(f"sigma_max must be non-negative, got {sigma_max}")
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    tree = _SplitTree(t, sigma_max)
    sigma = sigma_max
    while True:
        count = int(tree.leaf_mask(sigma).sum())
        sigma_used = sigma
        sigma += 1.0
        if count <= k_max:
            break
    return merge_redundant_segments(tree.leaves(sigma_used)), sigma_used


def _merge_pass(k: list[list], along: str) -> None:
    # along="y": runs sharing x and w, stacked vertically; along="x": sharing y and h
    if along == "y":
        pos, size, key, ext = 0, 2, 1, 3
    else:
        pos, size, key, ext = 1, 3, 0, 2
    i = 0
    while i < len(k) - 1:
        a = k[i]
        if a[2] == 0 or a[3] == 0:
            i += 1
            continue
        j = i + 1
        while (
            j < len(k)
            and a[pos] == k[j][pos]
            and a[size] == k[j][size]
            and a[key] + a[ext] == k[j][key]
            and a[4] == k[j][4]
        ):
            a[ext] += k[j][ext]
            k[j][ext] = 0
            j += 1
        i = j


def merge_redundant_segments(segments: Iterable[Segment]) -> list[Segment]:
    """Coalesce touching segments with exactly equal means until nothing changes."""
    k = [[s.x, s.y, s.w, s.h, s.mu] for s in segments]
    while True:
        k.sort(key=lambda s: (s[0], s[1]))
        _merge_pass(k, "y")
        k.sort(key=lambda s: (s[1], s[0]))
        _merge_pass(k, "x")
        kept = [s for s in k if s[2] != 0 and s[3] != 0]
        changed = len(kept) != len(k)
        k = kept
        if not changed:
            break
    return [Segment(*s) for s in k]


@dataclass(frozen=True, eq=False)
class SegmentedTemplate:
    width: int
    height: int
    segments: tuple[Segment, ...]
    k_bar: float
    zero_mean: np.ndarray
    sum_sq_zero_mean: float
    rho_self: float
    sigma_used: float
    geometry: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.segments)

    @property
    def areas(self) -> np.ndarray:
        return self.geometry[:, 2] * self.geometry[:, 3]

    def to_json(self) -> str:
        return segments_to_json(self.segments)


def build_segmented_template(t: GrayImage, segments: Sequence[Segment], sigma_used: float) -> SegmentedTemplate:
    """Attach the precomputed mean, zero-mean values and self-NCC to ``segments``."""
    geometry = np.array([(s.x, s.y, s.w, s.h) for s in segments], dtype=np.int64).reshape(-1, 4)
    mu = np.array([s.mu for s in segments], dtype=np.float64)
    areas = geometry[:, 2] * geometry[:, 3]
    n = t.width * t.height
    if int(areas.sum()) != n:
        raise ValueError("segments do not partition the template")

    k_bar = float(np.dot(areas, mu) / n)
    zero_mean = mu - k_bar
    sum_sq = float(np.dot(areas, zero_mean * zero_mean))

    px = t.pixels.astype(np.float64)
    t_bar = float(t.pixels.sum(dtype=np.int64)) / n
    t_norm = float(((px - t_bar) ** 2).sum())
    # template sums per segment equal mu * area up to rounding; take them from pixels
    seg_sums = np.array(
        [int(t.pixels[s.y:s.y + s.h, s.x:s.x + s.w].sum(dtype=np.int64)) for s in segments],
        dtype=np.float64,
    )
    num = float(np.dot(seg_sums - t_bar * areas, zero_mean))
    denom = math.sqrt(t_norm * sum_sq)
    rho = num / denom if denom > 0 else 0.0

    zero_mean.flags.writeable = False
    geometry.flags.writeable = False
    return SegmentedTemplate(
        width=t.width,
        height=t.height,
        segments=tuple(segments),
        k_bar=k_bar,
        zero_mean=zero_mean,
        sum_sq_zero_mean=sum_sq,
        rho_self=rho,
        sigma_used=sigma_used,
        geometry=geometry,
    )


def template_std(t: GrayImage) -> float:
    return segment_stats(t, (0, 0, t.width, t.height))[1]


def precompute_template_approximation(
    t: GrayImage, sigma_max: float, k_max: int = 5000
) -> tuple[SegmentedTemplate, float]:
    """Segmented approximation of ``t`` and its NCC with ``t``.

    Raises :class:`UniformTemplateError` for a constant template.
    """
    if template_std(t) == 0:
        raise UniformTemplateError("template is uniform; NCC is undefined")
    segments, sigma_used = approximate_segments(t, sigma_max, k_max)
    st = build_segmented_template(t, segments, sigma_used)
    return st, st.rho_self


def coverage(segments: Iterable[Segment], width: int, height: int) -> np.ndarray:
    """Per-pixel count of covering segments (all ones for an exact partition)."""
    cov = np.zeros((height, width), dtype=np.int64)
    for s in segments:
        cov[s.y:s.y + s.h, s.x:s.x + s.w] += 1
    return cov


def approximation_values(st: SegmentedTemplate) -> np.ndarray:
    """Piecewise-constant approximation as a float image (unrounded means)."""
    out = np.empty((st.height, st.width), dtype=np.float64)
    for s in st.segments:
        out[s.y:s.y + s.h, s.x:s.x + s.w] = s.mu
    return out


def render_approximation(st: SegmentedTemplate) -> GrayImage:
    if not np.all(coverage(st.segments, st.width, st.height) == 1):
        raise ValueError("segments do not cover the template exactly once")
    vals = np.floor(approximation_values(st) + 0.5)
    return GrayImage(np.clip(vals, 0, 255).astype(np.uint8))


def segments_to_json(segments: Iterable[Segment]) -> str:
    return json.dumps([{"x": s.x, "y": s.y, "w": s.w, "h": s.h, "mu": s.mu} for s in segments])


def segments_from_json(text: str) -> list[Segment]:
    return [Segment(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]), float(d["mu"])) for d in json.loads(text)]
