"""NCC engines: exact pixel-space NCC and the segmented two-stage matcher."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import GrayImage
from .integral import RegionError, SumTables, region_sum, window_sums
from .segmentation import (
    SegmentedTemplate,
    UniformTemplateError,
    precompute_template_approximation,
    template_std,
)


class TemplateSizeError(ValueError):
    pass


def _check_fits(f: GrayImage, t: GrayImage):
    if t.width > f.width or t.height > f.height:
        raise TemplateSizeError(
            f"template {t.width}x{t.height} is larger than source {f.width}x{f.height}"
        )


# ---------------------------------------------------------------- exact NCC

def ncc_naive(f: GrayImage, t: GrayImage, u: int, v: int) -> float:
    """Exact NCC of ``t`` against the window of ``f`` at (u, v).

    Returns NaN when the source window is uniform.
    """
    if u < 0 or v < 0 or u + t.width > f.width or v + t.height > f.height:
        raise RegionError(f"placement ({u},{v}) of {t.width}x{t.height} outside {f.width}x{f.height}")
    tp = t.pixels.astype(np.float64)
    t0 = tp - tp.mean()
    t_norm = float((t0 * t0).sum())
    if t_norm == 0:
        raise UniformTemplateError("template is uniform; NCC is undefined")
    win = f.pixels[v:v + t.height, u:u + t.width].astype(np.float64)
    f0 = win - win.mean()
    f_norm = float((f0 * f0).sum())
    if f_norm == 0:
        return math.nan
    return float((f0 * t0).sum()) / math.sqrt(f_norm * t_norm)


@dataclass(frozen=True, eq=False)
class SurfaceResult:
    """NCC at every placement; ``surface[v, u]``, NaN where undefined."""

    surface: np.ndarray

    @property
    def argmax(self) -> tuple[int, int] | None:
        if np.all(np.isnan(self.surface)):
            return None
        v, u = np.unravel_index(np.nanargmax(self.surface), self.surface.shape)
        return int(u), int(v)

    @property
    def max(self) -> float:
        if np.all(np.isnan(self.surface)):
            return math.nan
        return float(np.nanmax(self.surface))


def naive_search(f: GrayImage, t: GrayImage, max_chunk: int = 1 << 22) -> SurfaceResult:
    """Exact NCC by direct pixel summation at every placement."""
    _check_fits(f, t)
    tp = t.pixels.astype(np.float64)
    t0 = tp - tp.mean()
    t_norm = float((t0 * t0).sum())
    if t_norm == 0:
        raise UniformTemplateError("template is uniform; NCC is undefined")
    windows = sliding_window_view(f.pixels, (t.height, t.width))
    nv, nu = windows.shape[:2]
    out = np.empty((nv, nu), dtype=np.float64)
    rows = max(1, max_chunk // (nu * t.width * t.height))
    for v0 in range(0, nv, rows):
        win = windows[v0:v0 + rows].astype(np.float64)
        win -= win.mean(axis=(2, 3), keepdims=True)
        num = np.einsum("abij,ij->ab", win, t0)
        f_norm = np.einsum("abij,abij->ab", win, win)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = num / np.sqrt(f_norm * t_norm)
        rho[f_norm == 0] = np.nan
        out[v0:v0 + rows] = rho
    return SurfaceResult(out)


# ---------------------------------------------------------- segmented NCC

def segmented_numerator(tables: SumTables, st: SegmentedTemplate, u: int, v: int, f_bar: float) -> float:
    """Approximate NCC numerator: sum over segments of (window sum - f_bar*area) * (mu - k_bar)."""
    num = 0.0
    for seg, c in zip(st.segments, st.zero_mean):
        num += (region_sum(tables, u, v, seg) - f_bar * seg.area) * c
    return num


def segmented_denominator(
    tables: SumTables, st: SegmentedTemplate, u: int, v: int, sum_f: int, sum_f2: int
) -> float:
    """sqrt((sum f^2 - f_bar * sum f) * sum of area-weighted squared zero-mean values)."""
    if u < 0 or v < 0 or u + st.width > tables.width or v + st.height > tables.height:
        raise RegionError(f"placement ({u},{v}) outside the source")
    n = st.width * st.height
    var_f = sum_f2 - (sum_f / n) * sum_f
    if var_f <= 0:
        return 0.0
    return math.sqrt(var_f * st.sum_sq_zero_mean)


def segmented_ncc(tables: SumTables, st: SegmentedTemplate, u: int, v: int) -> float:
    """Approximate NCC at one placement via sum tables; NaN for a uniform window."""
    sum_f, sum_f2 = window_sums(tables, u, v, st.width, st.height)
    denom = segmented_denominator(tables, st, u, v, sum_f, sum_f2)
    if denom == 0:
        return math.nan
    return segmented_numerator(tables, st, u, v, sum_f / (st.width * st.height)) / denom


class _CornerForm:
    """A weighted sum of integral-table lookups at fixed offsets.

    ``sum_i c_i * R_i(u, v)`` with ``R_i`` a four-corner rectangle sum equals
    ``sum_j w_j * P[v + dy_j, u + dx_j]``. Corners shared by neighbouring
    segments collapse into one term.
    """

    def __init__(self, rects, coeffs):
        acc: dict[tuple[int, int], float] = {}
        for (x, y, w, h), c in zip(rects, coeffs):
            for key, sign in (((y + h, x + w), 1.0), ((y, x), 1.0), ((y + h, x), -1.0), ((y, x + w), -1.0)):
                acc[key] = acc.get(key, 0.0) + sign * c
        self.terms = [(dy, dx, acc[dy, dx]) for dy, dx in sorted(acc) if acc[dy, dx] != 0.0]

    @classmethod
    def for_template(cls, st: SegmentedTemplate) -> "_CornerForm":
        form = cls(st.geometry.tolist(), st.zero_mean.tolist())
        # mathematically zero; kept so the numerator follows the per-segment form exactly
        form.area_weight = float(np.dot(st.areas, st.zero_mean))
        return form

    def rows(self, flat: np.ndarray, stride: int, v0: int, v1: int, nu: int) -> np.ndarray:
        """Values for rows ``v0 <= v < v1`` and columns ``u < nu``, shape (v1 - v0, nu).

        ``flat`` is the raveled padded table with row length ``stride``. Each
        term is a single contiguous slice; the columns past ``nu`` that wrap
        into the next row are computed and thrown away.
        """
        acc = np.zeros((v1 - v0) * stride)
        length = (v1 - v0 - 1) * stride + nu
        head = acc[:length]
        tmp = np.empty(length)
        for dy, dx, w in self.terms:
            o = (v0 + dy) * stride + dx
            np.multiply(flat[o:o + length], w, out=tmp)
            head += tmp
        return acc.reshape(v1 - v0, stride)[:, :nu]

    def gather(self, flat: np.ndarray, stride: int, vs: np.ndarray, us: np.ndarray) -> np.ndarray:
        base = vs * stride + us
        out = np.zeros(len(base))
        for dy, dx, w in self.terms:
            out += w * flat[base + (dy * stride + dx)]
        return out


def _window_form(w: int, h: int) -> _CornerForm:
    return _CornerForm([(0, 0, w, h)], [1.0])


def _rho(num, var_f, sum_sq):
    """NCC from numerator and source variance; NaN where the window is uniform."""
    defined = var_f > 0
    if sum_sq == 0:
        # constant approximation: no information, correlation taken as 0
        return np.where(defined, 0.0, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = num / np.sqrt(var_f * sum_sq)
    return np.where(defined, rho, np.nan)


def _float_integral(pixels: np.ndarray, square: bool) -> np.ndarray:
    out = np.zeros((pixels.shape[0] + 1, pixels.shape[1] + 1))
    body = out[1:, 1:]
    body[...] = pixels
    if square:
        body *= body
    np.cumsum(out, axis=1, out=out)
    np.cumsum(out, axis=0, out=out)
    return out


class _Source:
    """Float64 sum tables, raveled for offset slicing.

    Entries are integers below 2**53 for any image up to 4032x3024, so the
    float tables are exact; building them directly skips an int64 pass.
    """

    def __init__(self, f: GrayImage | None, w: int, h: int, tables: SumTables | None = None):
        if tables is not None:
            width, height = tables.width, tables.height
            self.s = tables.padded_s.astype(np.float64).ravel()
            self.s2 = tables.padded_s2.astype(np.float64).ravel()
        else:
            width, height = f.width, f.height
            self.s = _float_integral(f.pixels, square=False).ravel()
            self.s2 = _float_integral(f.pixels, square=True).ravel()
        self.stride = width + 1
        self.nu = width - w + 1
        self.nv = height - h + 1
        self.n = w * h
        self.window = _window_form(w, h)

    def bands(self, target: int = 1 << 15) -> list[tuple[int, int]]:
        rows = max(1, target // self.stride)
        return [(v0, min(self.nv, v0 + rows)) for v0 in range(0, self.nv, rows)]

    def moments(self, v0: int, v1: int):
        s = self.window.rows(self.s, self.stride, v0, v1, self.nu)
        s2 = self.window.rows(self.s2, self.stride, v0, v1, self.nu)
        f_bar = s / self.n
        return f_bar, s2 - f_bar * s


def segmented_ncc_surface(tables: SumTables, st: SegmentedTemplate) -> SurfaceResult:
    """Approximate NCC at every placement (single-stage, no thresholds)."""
    if st.width > tables.width or st.height > tables.height:
        raise TemplateSizeError("template larger than source")
    src = _Source(None, st.width, st.height, tables=tables)
    form = _CornerForm.for_template(st)
    out = np.empty((src.nv, src.nu))
    for v0, v1 in src.bands():
        f_bar, var_f = src.moments(v0, v1)
        num = form.rows(src.s, src.stride, v0, v1, src.nu) - f_bar * form.area_weight
        out[v0:v1] = _rho(num, var_f, st.sum_sq_zero_mean)
    return SurfaceResult(out)


# ---------------------------------------------------------- two-stage matcher

@dataclass(frozen=True)
class SearchParams:
    sigma_fast_factor: float = 0.99
    sigma_slow_factor: float = 0.1
    k_max: int = 5000
    precision: float = 0.9

    def __post_init__(self):
        if not 0 < self.sigma_slow_factor <= self.sigma_fast_factor < 1:
            raise ValueError(
                "need 0 < sigma_slow_factor <= sigma_fast_factor < 1, got "
                f"{self.sigma_slow_factor}, {self.sigma_fast_factor}"
            )
        if not 0 < self.precision <= 1:
            raise ValueError(f"precision must be in (0, 1], got {self.precision}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be positive, got {self.k_max}")


class MatchRecord(NamedTuple):
    u: int
    v: int
    rho: float


@dataclass
class SearchStats:
    positions_evaluated: int = 0
    slow_evaluations: int = 0
    segment_iterations: int = 0

    def __iadd__(self, other: "SearchStats"):
        self.positions_evaluated += other.positions_evaluated
        self.slow_evaluations += other.slow_evaluations
        self.segment_iterations += other.segment_iterations
        return self


@dataclass(frozen=True, eq=False)
class PreparedTemplate:
    """Coarse and fine approximations with their acceptance thresholds."""

    fast: SegmentedTemplate
    slow: SegmentedTemplate
    threshold_fast: float
    threshold_slow: float
    fast_form: _CornerForm
    slow_form: _CornerForm

    @property
    def width(self) -> int:
        return self.fast.width

    @property
    def height(self) -> int:
        return self.fast.height


def prepare_template(
    t: GrayImage,
    params: SearchParams = SearchParams(),
    sigma_fast: float | None = None,
    sigma_slow: float | None = None,
) -> PreparedTemplate:
    """Build both approximations. Absolute thresholds override the factors."""
    sigma_t = template_std(t)
    if sigma_t == 0:
        raise UniformTemplateError("template is uniform; NCC is undefined")
    if sigma_fast is None:
        sigma_fast = params.sigma_fast_factor * sigma_t
    if sigma_slow is None:
        sigma_slow = params.sigma_slow_factor * sigma_t
    fast, rho_fast = precompute_template_approximation(t, sigma_fast, params.k_max)
    slow, rho_slow = precompute_template_approximation(t, sigma_slow, params.k_max)
    return PreparedTemplate(
        fast=fast,
        slow=slow,
        threshold_fast=params.precision * rho_fast,
        threshold_slow=params.precision * rho_slow,
        fast_form=_CornerForm.for_template(fast),
        slow_form=_CornerForm.for_template(slow),
    )


def _search_band(src: _Source, prep: PreparedTemplate, v0: int, v1: int):
    f_bar, var_f = src.moments(v0, v1)
    num = prep.fast_form.rows(src.s, src.stride, v0, v1, src.nu) - f_bar * prep.fast_form.area_weight
    rho_fast = _rho(num, var_f, prep.fast.sum_sq_zero_mean)
    defined = int(np.count_nonzero(var_f > 0))

    cand_v, cand_u = np.nonzero(rho_fast >= prep.threshold_fast)
    q = len(cand_v)
    matches = []
    if q:
        gv = cand_v + v0
        num = (
            prep.slow_form.gather(src.s, src.stride, gv, cand_u)
            - f_bar[cand_v, cand_u] * prep.slow_form.area_weight
        )
        rho_slow = _rho(num, var_f[cand_v, cand_u], prep.slow.sum_sq_zero_mean)
        keep = np.flatnonzero(rho_slow >= prep.threshold_slow)
        matches = [MatchRecord(int(cand_u[i]), int(gv[i]), float(rho_slow[i])) for i in keep]
    stats = SearchStats(
        positions_evaluated=(v1 - v0) * src.nu,
        slow_evaluations=q,
        segment_iterations=len(prep.fast) * defined + len(prep.slow) * q,
    )
    return matches, stats


def search(
    f: GrayImage,
    prep: PreparedTemplate,
    threads: int = 1,
    tables: SumTables | None = None,
) -> tuple[list[MatchRecord], SearchStats]:
    """Coarse-to-fine scan of every placement of the prepared template over ``f``.

    The placement grid is processed in row bands small enough to stay in
    cache; ``threads`` workers share the bands. Matches are ordered by row,
    then column, and do not depend on ``threads``.
    """
    if prep.width > f.width or prep.height > f.height:
        raise TemplateSizeError(
            f"template {prep.width}x{prep.height} is larger than source {f.width}x{f.height}"
        )
    src = _Source(f, prep.width, prep.height, tables=tables)
    bands = src.bands()
    if threads <= 1:
        parts = [_search_band(src, prep, a, b) for a, b in bands]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _search_band(src, prep, *ab), bands))
    matches: list[MatchRecord] = []
    stats = SearchStats()
    for m, st in parts:
        matches.extend(m)
        stats += st
    matches.sort(key=lambda m: (m.v, m.u))
    return matches, stats


def match_template(
    f: GrayImage, t: GrayImage, params: SearchParams = SearchParams(), threads: int = 1
) -> tuple[list[MatchRecord], SearchStats]:
    """Find every placement of ``t`` in ``f`` whose fine-stage NCC clears its threshold."""
    _check_fits(f, t)
    return search(f, prepare_template(t, params), threads=threads)


def best_match(matches: list[MatchRecord]) -> MatchRecord | None:
    """Highest-NCC match; ties go to the first in (v, u) order."""
    if not matches:
        return None
    return max(matches, key=lambda m: m.rho)


def non_max_suppression(matches: list[MatchRecord], width: int, height: int) -> list[MatchRecord]:
    """Greedy NMS: keep the best match, drop any whose rectangle overlaps a kept one."""
    kept: list[MatchRecord] = []
    for m in sorted(matches, key=lambda m: (-m.rho, m.v, m.u)):
        if all(abs(m.u - k.u) >= width or abs(m.v - k.v) >= height for k in kept):
            kept.append(m)
    kept.sort(key=lambda m: (m.v, m.u))
    return kept
