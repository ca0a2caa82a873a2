"""Reference NCC engine: FFT cross-correlation numerator, sum-table denominator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .imagecore import GrayImage
from .integral import SumTables, all_window_sums, build_sum_tables
from .search import MatchRecord, SurfaceResult, TemplateSizeError
from .segmentation import UniformTemplateError


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass(frozen=True, eq=False)
class PreparedFftTemplate:
    padded_width: int
    padded_height: int
    source_width: int
    source_height: int
    width: int
    height: int
    spectrum: np.ndarray
    t_norm: float


def fft_prepare_template(t: GrayImage, source_dims: tuple[int, int]) -> PreparedFftTemplate:
    """Conjugated spectrum of the zero-mean template, zero-padded to powers of two.

    ``source_dims`` is (width, height) of the images this will be run against.
    """
    sw, sh = source_dims
    if t.width > sw or t.height > sh:
        raise TemplateSizeError(f"template {t.width}x{t.height} is larger than source {sw}x{sh}")
    tp = t.pixels.astype(np.float64)
    t0 = tp - tp.mean()
    t_norm = float((t0 * t0).sum())
    if t_norm == 0:
        raise UniformTemplateError("template is uniform; NCC is undefined")
    pw, ph = next_pow2(sw), next_pow2(sh)
    plane = np.zeros((ph, pw), dtype=np.float64)
    plane[:t.height, :t.width] = t0
    spectrum = np.conj(sfft.rfft2(plane))
    spectrum.flags.writeable = False
    return PreparedFftTemplate(pw, ph, sw, sh, t.width, t.height, spectrum, t_norm)


def fft_ncc_surface(f: GrayImage, prep: PreparedFftTemplate, tables: SumTables | None = None) -> SurfaceResult:
    """NCC at every placement; NaN where the source window is uniform."""
    if (f.width, f.height) != (prep.source_width, prep.source_height):
        raise ValueError(
            f"prepared for a {prep.source_width}x{prep.source_height} source, got {f.width}x{f.height}"
        )
    pw, ph = prep.padded_width, prep.padded_height
    spec = sfft.rfft2(f.pixels.astype(np.float64), s=(ph, pw))
    corr = sfft.irfft2(spec * prep.spectrum, s=(ph, pw))
    nu = f.width - prep.width + 1
    nv = f.height - prep.height + 1
    # sum(f - f_bar)(t - t_bar) == sum f (t - t_bar), so no source centring is needed
    num = corr[:nv, :nu]
    if tables is None:
        tables = build_sum_tables(f)
    s, s2 = all_window_sums(tables, prep.width, prep.height)
    n = prep.width * prep.height
    var_f = s2 - (s / n) * s
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = num / np.sqrt(var_f * prep.t_norm)
    rho = np.where(var_f > 0, rho, np.nan)
    return SurfaceResult(rho)


def fft_search(f: GrayImage, t: GrayImage, threshold: float) -> list[MatchRecord]:
    """Placements with NCC >= ``threshold``, ordered by row then column."""
    prep = fft_prepare_template(t, (f.width, f.height))
    rho = fft_ncc_surface(f, prep).surface
    with np.errstate(invalid="ignore"):
        vs, us = np.nonzero(rho >= threshold)
    return [MatchRecord(int(u), int(v), float(rho[v, u])) for v, u in zip(vs, us)]
