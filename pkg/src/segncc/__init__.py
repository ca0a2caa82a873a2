"""Template matching with segmented normalized cross-correlation."""

from .imagecore import GrayImage, ImageError, SyntheticSpec, generate_synthetic, load_image, plant_template, to_grayscale
from .integral import SumTables, build_sum_tables, region_sum, window_sums
from .segmentation import (
    Segment,
    SegmentedTemplate,
    UniformTemplateError,
    merge_redundant_segments,
    precompute_template_approximation,
    render_approximation,
    segment_stats,
    split_segment,
)
from .search import (
    MatchRecord,
    SearchParams,
    SearchStats,
    TemplateSizeError,
    match_template,
    naive_search,
    ncc_naive,
    prepare_template,
    search,
)
from .fft_baseline import fft_ncc_surface, fft_prepare_template, fft_search

__version__ = "0.1.0"
