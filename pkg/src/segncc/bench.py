"""Benchmark harness: preparation and search timings for the three engines.

Preparation covers building both approximations and their thresholds (or
the template spectrum for FFT); search covers the sum tables and the scan.
Each timing is the median over ``RunConfig.repeats`` runs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .fft_baseline import fft_ncc_surface, fft_prepare_template
from .imagecore import GrayImage, SyntheticSpec, generate_synthetic
from .search import SearchParams, naive_search, prepare_template, search
from .segmentation import template_std

log = logging.getLogger(__name__)

ENGINES = ("segmented", "fft", "naive")
CAPPED = "capped"


@dataclass(frozen=True)
class RunConfig:
    params: SearchParams = SearchParams()
    repeats: int = 5
    engines: tuple[str, ...] = ENGINES
    naive_time_cap: float = 60.0
    threads: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        unknown = set(self.engines) - set(ENGINES)
        if unknown:
            raise ValueError(f"unknown engines {sorted(unknown)}; choose from {ENGINES}")


@dataclass
class BenchReportRow:
    source_id: str
    template_id: str
    source_dims: tuple[int, int]
    template_dims: tuple[int, int]
    k_fast: int | None = None
    k_slow: int | None = None
    prep_time_segmented: float | None = None
    prep_time_fft: float | None = None
    search_time_segmented: float | None = None
    search_time_fft: float | None = None
    search_time_naive: float | str | None = None  # CAPPED when skipped by the cap
    max_ncc_segmented: float | None = None
    max_ncc_fft: float | None = None
    q_slow: int | None = None


COLUMNS = tuple(f.name for f in fields(BenchReportRow))


@dataclass
class BenchReport:
    rows: list[BenchReportRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def _timed(fn: Callable, repeats: int):
    """(median seconds, result of the last call)."""
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


@lru_cache(maxsize=1)
def naive_seconds_per_op() -> float:
    """Measured cost of one pixel term of the naive engine on this machine."""
    f = generate_synthetic(SyntheticSpec(64, 64, "uniform-noise", seed=1))
    t = generate_synthetic(SyntheticSpec(16, 16, "uniform-noise", seed=2))
    naive_search(f, t)  # warm-up
    elapsed, _ = _timed(lambda: naive_search(f, t), 3)
    return elapsed / naive_ops(f, t)


def naive_ops(f: GrayImage, t: GrayImage) -> int:
    return t.width * t.height * (f.width - t.width + 1) * (f.height - t.height + 1)


def _finite_or_none(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


def run_benchmark(
    source: GrayImage,
    templates: Mapping[str, GrayImage] | Iterable[tuple[str, GrayImage]],
    config: RunConfig = RunConfig(),
    source_id: str = "source",
) -> BenchReport:
    items = templates.items() if isinstance(templates, Mapping) else templates
    report = BenchReport()
    for name, t in items:
        if t.width > source.width or t.height > source.height:
            report.failures.append({"template_id": name, "reason": "template larger than source"})
            log.warning("%s: template larger than source, skipped", name)
            continue
        if template_std(t) == 0:
            report.failures.append({"template_id": name, "reason": "uniform template"})
            log.warning("%s: uniform template, skipped", name)
            continue
        report.rows.append(_bench_one(source, t, name, source_id, config))
    return report


def _bench_one(f: GrayImage, t: GrayImage, name: str, source_id: str, config: RunConfig) -> BenchReportRow:
    row = BenchReportRow(
        source_id=source_id,
        template_id=name,
        source_dims=(f.width, f.height),
        template_dims=(t.width, t.height),
    )
    n = config.repeats

    if "segmented" in config.engines:
        row.prep_time_segmented, prep = _timed(lambda: prepare_template(t, config.params), n)
        row.search_time_segmented, (matches, stats) = _timed(
            lambda: search(f, prep, threads=config.threads), n
        )
        row.k_fast, row.k_slow = len(prep.fast), len(prep.slow)
        row.q_slow = stats.slow_evaluations
        row.max_ncc_segmented = max((m.rho for m in matches), default=None)

    if "fft" in config.engines:
        row.prep_time_fft, fprep = _timed(lambda: fft_prepare_template(t, (f.width, f.height)), n)
        row.search_time_fft, surf = _timed(lambda: fft_ncc_surface(f, fprep), n)
        row.max_ncc_fft = _finite_or_none(surf.max)

    if "naive" in config.engines:
        projected = naive_ops(f, t) * naive_seconds_per_op()
        if projected > config.naive_time_cap:
            log.info("%s: naive search projected at %.1f s, over the %.1f s cap", name, projected, config.naive_time_cap)
            row.search_time_naive = CAPPED
        else:
            runs = max(1, min(n, int(config.naive_time_cap // max(projected, 1e-9))))
            row.search_time_naive, _ = _timed(lambda: naive_search(f, t), runs)
    return row


# ------------------------------------------------------------------ output

def _row_to_json(row: BenchReportRow) -> dict:
    d = asdict(row)
    d["source_dims"] = list(row.source_dims)
    d["template_dims"] = list(row.template_dims)
    return d


def _row_from_json(d: dict) -> BenchReportRow:
    d = dict(d)
    d["source_dims"] = tuple(d["source_dims"])
    d["template_dims"] = tuple(d["template_dims"])
    return BenchReportRow(**{k: d[k] for k in COLUMNS})


def report_to_json(report: BenchReport) -> str:
    return json.dumps(
        {"rows": [_row_to_json(r) for r in report.rows], "failures": report.failures}, indent=2
    )


def report_from_json(text: str) -> BenchReport:
    d = json.loads(text)
    return BenchReport([_row_from_json(r) for r in d["rows"]], list(d.get("failures", [])))


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return f"{value[0]}x{value[1]}"
    return str(value)


def write_report(report: BenchReport, fmt: str, path) -> None:
    """Write ``report`` as ``json`` or ``csv`` (one column per row field, in order)."""
    path = Path(path)
    if fmt == "json":
        path.write_text(report_to_json(report) + "\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in report.rows:
                w.writerow([_csv_cell(getattr(row, c)) for c in COLUMNS])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
