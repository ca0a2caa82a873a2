"""Synthetic benchmark: templates of rising visual complexity planted in one source.

Writes a bench report (CSV or JSON by suffix) with segment counts,
preparation and search times for the segmented, FFT and naive engines.

    python3 scripts/run_benchmark.py --out results/bench.csv
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from segncc.bench import RunConfig, run_benchmark, write_report
from segncc.imagecore import SyntheticSpec, generate_synthetic, plant_template
from segncc.search import SearchParams

# (kind, block size as a fraction of the template side), low to high complexity
TEMPLATES = [
    ("block-mosaic", 1 / 2),
    ("block-mosaic", 1 / 4),
    ("block-mosaic", 1 / 8),
    ("block-mosaic", 1 / 16),
    ("gradient", 1),
    ("uniform-noise", 1),
]


def build_scene(size, tsize, seed):
    """Source with every template planted once, in non-overlapping grid cells."""
    rng = np.random.default_rng(seed)
    src = generate_synthetic(SyntheticSpec(size, size, "block-mosaic", block_size=16, seed=seed))
    per_row = size // tsize
    if per_row * per_row < len(TEMPLATES):
        raise SystemExit(f"source {size} too small for {len(TEMPLATES)} templates of {tsize}")
    cells = rng.permutation(per_row * per_row)[: len(TEMPLATES)]
    templates = []
    for i, ((kind, frac), cell) in enumerate(zip(TEMPLATES, cells)):
        bs = max(1, int(tsize * frac))
        t = generate_synthetic(SyntheticSpec(tsize, tsize, kind, block_size=bs, seed=seed + 1 + i))
        src = plant_template(src, t, int(cell % per_row) * tsize, int(cell // per_row) * tsize)
        name = f"mosaic-b{bs}" if kind == "block-mosaic" else kind
        templates.append((f"{name}-{tsize}", t))
    return src, templates


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--template-sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--naive-cap", type=float, default=60.0)
    ap.add_argument("--engines", default="segmented,fft,naive")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    config = RunConfig(
        params=SearchParams(),
        repeats=args.repeats,
        engines=tuple(args.engines.split(",")),
        naive_time_cap=args.naive_cap,
    )
    rows, failures = [], []
    for tsize in args.template_sizes:
        src, templates = build_scene(args.size, tsize, args.seed)
        report = run_benchmark(src, templates, config, source_id=f"mosaic-{args.size}")
        rows += report.rows
        failures += report.failures
        for r in report.rows:
            naive = r.search_time_naive
            naive = f"{naive:.4f}s" if isinstance(naive, float) else naive
            print(
                f"{r.template_id:>18}  K {r.k_fast:>5}/{r.k_slow:<6} Q {r.q_slow:<7}"
                f" seg {r.search_time_segmented or 0:.4f}s  fft {r.search_time_fft or 0:.4f}s"
                f"  naive {naive}"
            )
    report.rows, report.failures = rows, failures
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, "json" if out.suffix == ".json" else "csv", out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
