"""somqe: unsupervised single-pixel change detection in image series.

Train a small self-organizing map once on a reference image, then score
every image of a series by its quantization error (the mean distance from
each pixel to its best-matching map node). Because the score is a mean of
per-pixel terms, a single changed pixel among millions shifts it by an
exactly predictable amount, which makes the per-series score cleanly linear
in the number of replaced pixels and detectable far below the precision at
which per-image RGB means are read off.
"""

from .baseline import BaselineRecord, rgb_mean
from .pipeline import (
    ConditionSpec,
    PipelineConfig,
    RunReport,
    default_config,
    default_conditions,
    default_ground_truth_spec,
    derive_seeds,
    run_all,
    stage_analyze,
    stage_score,
    stage_simulate,
    stage_synth,
    stage_train,
)
from .raster import (
    AlphaChannelError,
    CorruptImageError,
    GrayLevel,
    ImageFormatError,
    Mask,
    PixelFormatError,
    Raster,
    UnsupportedFormatError,
    circular_mask,
    count_level,
    load_image,
    save_image,
)
from .simulate import (
    ChangeSpec,
    GroundTruthSpec,
    ManifestEntry,
    SeriesManifest,
    VerificationReport,
    eligible_pixels,
    generate_series,
    iter_series,
    read_manifest,
    select_replacements,
    synthesize_ground_truth,
    verify_series,
    write_manifest,
)
from .som import (
    ModelFormatError,
    ModelIntegrityError,
    ModelVersionError,
    QeRecord,
    SomConfig,
    SomModel,
    best_matching_unit,
    init_model,
    load_model,
    node_occupancy,
    quantization_error,
    save_model,
    train,
)
from .stats import (
    LinearFit,
    SeriesClassification,
    SwResult,
    TTestResult,
    classify_series,
    linear_fit,
    shapiro_wilk,
    t_test,
)

__version__ = "1.0.0"
