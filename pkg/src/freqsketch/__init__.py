"""Streaming frequency sketches with temporal aggregation.

A Count-Min sketch core plus three synchronized aggregation pyramids
(dyadic time windows, per-epoch sketches with aging resolution, and
their jointly folded normalizer), an interpolating point estimator,
tuple frequency estimation from sketched marginals, an exact oracle
for accuracy scoring, and a line-protocol service around it all.
"""

from .dual import (
    DualPyramid,
    EstimateReport,
    METHOD_HEAVY_HITTER,
    METHOD_INTERPOLATED,
    estimate,
    heavy_hitter_threshold,
    interpolate,
)
from .engine import Engine, EngineConfig, IngestSummary, load_config
from .errors import (
    AlignmentError,
    ArityError,
    BadMagicError,
    CannotFoldError,
    ClockSkewError,
    ConfigError,
    EmptyKeySetError,
    EpochRangeError,
    FreqSketchError,
    InconsistentCountsError,
    IncompatibleSketchError,
    SnapshotFormatError,
    TemplateError,
    TruncatedSnapshotError,
    VersionMismatchError,
)
from .itempyramid import ItemPyramid, scheduled_log_width
from .ngram import (
    FactorTemplate,
    NgramStore,
    SmoothingConfig,
    bigram_chain,
    parse_template,
    parse_template_file,
    single_clique,
    unigram_chain,
)
from .oracle import DeviationReport, DeviationRow, ExactOracle, frequency_band
from .sketch import (
    CmSketch,
    HashFamily,
    SketchConfig,
    depth_for_confidence,
    log_width_for_error,
)
from .timepyramid import IntervalDescriptor, TimePyramid, covering_levels, level_span

__all__ = [
    "AlignmentError",
    "ArityError",
    "BadMagicError",
    "CannotFoldError",
    "ClockSkewError",
    "CmSketch",
    "ConfigError",
    "DeviationReport",
    "DeviationRow",
    "DualPyramid",
    "EmptyKeySetError",
    "Engine",
    "EngineConfig",
    "EpochRangeError",
    "EstimateReport",
    "ExactOracle",
    "FactorTemplate",
    "FreqSketchError",
    "HashFamily",
    "InconsistentCountsError",
    "IncompatibleSketchError",
    "IngestSummary",
    "IntervalDescriptor",
    "ItemPyramid",
    "METHOD_HEAVY_HITTER",
    "METHOD_INTERPOLATED",
    "NgramStore",
    "SketchConfig",
    "SmoothingConfig",
    "SnapshotFormatError",
    "TemplateError",
    "TimePyramid",
    "TruncatedSnapshotError",
    "VersionMismatchError",
    "bigram_chain",
    "covering_levels",
    "depth_for_confidence",
    "estimate",
    "frequency_band",
    "heavy_hitter_threshold",
    "interpolate",
    "level_span",
    "load_config",
    "log_width_for_error",
    "parse_template",
    "parse_template_file",
    "scheduled_log_width",
    "single_clique",
    "unigram_chain",
]
