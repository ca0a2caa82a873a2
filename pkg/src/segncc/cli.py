"""Command-line entry point: ``segncc {match,segment,bench,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error (bad image, uniform or
oversized template, unwritable output).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import ENGINES, RunConfig, report_to_json, run_benchmark, write_report
from .imagecore import (
    KINDS,
    GrayImage,
    ImageError,
    SyntheticSpec,
    generate_synthetic,
    load_image,
    plant_template,
    save_pgm,
    save_png,
)
from .integral import RegionError
from .search import (
    SearchParams,
    TemplateSizeError,
    best_match,
    match_template,
    non_max_suppression,
)
from .segmentation import (
    UniformTemplateError,
    approximate_segments,
    build_segmented_template,
    render_approximation,
    segments_to_json,
    template_std,
)

log = logging.getLogger("segncc")

DATA_ERRORS = (ImageError, UniformTemplateError, TemplateSizeError, RegionError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def draw_overlay(f: GrayImage, matches, width: int, height: int) -> np.ndarray:
    """RGB copy of ``f`` with a red rectangle outline at every match."""
    rgb = np.repeat(f.pixels[:, :, None], 3, axis=2).copy()
    red = np.array([255, 0, 0], dtype=np.uint8)
    for m in matches:
        x0, y0, x1, y1 = m.u, m.v, m.u + width - 1, m.v + height - 1
        rgb[y0, x0:x1 + 1] = red
        rgb[y1, x0:x1 + 1] = red
        rgb[y0:y1 + 1, x0] = red
        rgb[y0:y1 + 1, x1] = red
    return rgb


def _emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_match(args) -> int:
    f = load_image(args.source)
    t = load_image(args.template)
    try:
        params = SearchParams(
            sigma_fast_factor=args.sigma_fast,
            sigma_slow_factor=args.sigma_slow,
            k_max=args.kmax,
            precision=args.precision,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    matches, stats = match_template(f, t, params, threads=args.threads)
    if args.nms:
        matches = non_max_suppression(matches, t.width, t.height)
    best = best_match(matches)
    if best is None:
        log.info("no match above threshold")
    else:
        log.info("best match u=%d v=%d rho=%.6f (%d matches)", best.u, best.v, best.rho, len(matches))

    if args.format == "json":
        doc = {
            "matches": [{"u": m.u, "v": m.v, "rho": m.rho} for m in matches],
            "stats": {"positions": stats.positions_evaluated, "slow_evals": stats.slow_evaluations},
        }
        text = json.dumps(doc) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["u", "v", "rho"])
        for m in matches:
            w.writerow([m.u, m.v, repr(m.rho)])
        text = buf.getvalue()
    _emit(text, args.output)
    if args.overlay:
        save_png(draw_overlay(f, matches, t.width, t.height), args.overlay)
    return 0


def cmd_segment(args) -> int:
    t = load_image(args.template)
    if args.sigma is None:
        sigma = 0.1 * template_std(t)
    else:
        sigma = args.sigma
    if sigma < 0 or args.kmax < 1:
        raise UsageError("--sigma must be >= 0 and --kmax >= 1")
    segments, sigma_used = approximate_segments(t, sigma, args.kmax)
    st = build_segmented_template(t, segments, sigma_used)
    _emit(segments_to_json(st.segments) + "\n", args.out)
    log.info("%d segments, sigma used %.3f, self-NCC %.6f", len(st), sigma_used, st.rho_self)
    if args.render:
        save_png(render_approximation(st), args.render)
    return 0


def cmd_bench(args) -> int:
    f = load_image(args.source)
    templates = [(Path(p).stem, load_image(p)) for p in args.template]
    engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
    try:
        config = RunConfig(
            params=SearchParams(
                sigma_fast_factor=args.sigma_fast,
                sigma_slow_factor=args.sigma_slow,
                k_max=args.kmax,
                precision=args.precision,
            ),
            repeats=args.repeats,
            engines=engines,
            naive_time_cap=args.naive_cap,
            threads=args.threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_benchmark(f, templates, config, source_id=Path(args.source).stem)
    fmt = args.format or ("csv" if str(args.out).endswith(".csv") else "json")
    if args.out in (None, "-"):
        if fmt == "json":
            sys.stdout.write(report_to_json(report) + "\n")
        else:
            raise UsageError("CSV output needs --out PATH")
    else:
        write_report(report, fmt, args.out)
    return 2 if report.failures and not report.rows else 0


def cmd_synth(args) -> int:
    try:
        img = generate_synthetic(
            SyntheticSpec(args.width, args.height, args.kind, args.block_size, args.seed)
        )
    except ImageError as exc:
        raise UsageError(str(exc)) from exc
    if args.plant:
        t = load_image(args.plant)
        u, v = args.at
        img = plant_template(img, t, u, v)
    out = Path(args.out)
    if out.suffix.lower() == ".pgm":
        save_pgm(img, out)
    else:
        save_png(img, out)
    return 0


def _add_search_flags(p):
    p.add_argument("--precision", type=float, default=0.9)
    p.add_argument("--kmax", type=int, default=5000)
    p.add_argument("--sigma-fast", type=float, default=0.99, help="coarse per-segment std cap, as a fraction of the template std")
    p.add_argument("--sigma-slow", type=float, default=0.1, help="fine per-segment std cap, as a fraction of the template std")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segncc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("match", help="find a template in a source image")
    p.add_argument("--source", required=True)
    p.add_argument("--template", required=True)
    _add_search_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", default=None, help="write matches here instead of stdout")
    p.add_argument("--overlay", metavar="PATH", help="PNG with a rectangle at every match")
    p.add_argument("--nms", action="store_true", help="drop matches overlapping a better one")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("segment", help="emit the segmented approximation of a template")
    p.add_argument("--template", required=True)
    p.add_argument("--sigma", type=float, default=None, help="absolute std threshold (default 0.1 x template std)")
    p.add_argument("--kmax", type=int, default=5000)
    p.add_argument("--out", default=None, help="segment JSON path (default stdout)")
    p.add_argument("--render", metavar="PATH", help="PNG of the approximation")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("bench", help="time the segmented, FFT and naive engines")
    p.add_argument("--source", required=True)
    p.add_argument("--template", required=True, action="append")
    _add_search_flags(p)
    p.add_argument("--engines", default=",".join(ENGINES))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--naive-cap", type=float, default=60.0)
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a seeded synthetic image")
    p.add_argument("--kind", choices=KINDS, default="block-mosaic")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plant", metavar="TEMPLATE", help="paste this image into the result")
    p.add_argument("--at", type=int, nargs=2, metavar=("U", "V"), default=(0, 0))
    p.add_argument("--out", required=True, help=".png or .pgm")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error
        return exc.code
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"segncc: error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"segncc: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
