"""Two-bucket snapshot difference imaging: simulation, statistics, recovery."""

from .core import (
    DifferenceFrame,
    ExpectedWells,
    MomentField,
    SensorConfig,
    SkellamMixingMatrix,
    invert_moments,
    mixing_matrix,
    normalize_gain,
    skellam_moments,
)
from .simulator import (
    CaptureMode,
    ModulationPattern,
    SceneSpec,
    capture,
    capture_wells,
    integrate_sequence,
    integrate_wells,
    sample_frame,
    sample_frames,
    sample_sequential_frames,
    sample_sequential_pair,
)
from .recon import (
    BilateralParams,
    Segmentation,
    SeparationResult,
    dark_frame_calibrate,
    estimate_moments_m1,
    estimate_moments_m2,
    estimate_moments_m3,
    separate_sources,
)
from .analysis import (
    LinearFit,
    NoiseReport,
    RatioEstimate,
    intensity_sweep,
    ratio_at_zero,
    variance_field,
    variance_histogram,
    weighted_linear_fit,
)

__version__ = "0.1.0"

__all__ = [
    "SensorConfig",
    "ExpectedWells",
    "DifferenceFrame",
    "MomentField",
    "SkellamMixingMatrix",
    "skellam_moments",
    "mixing_matrix",
    "invert_moments",
    "normalize_gain",
    "ModulationPattern",
    "SceneSpec",
    "CaptureMode",
    "integrate_wells",
    "integrate_sequence",
    "sample_frame",
    "sample_frames",
    "sample_sequential_pair",
    "sample_sequential_frames",
    "capture",
    "capture_wells",
    "Segmentation",
    "BilateralParams",
    "SeparationResult",
    "dark_frame_calibrate",
    "estimate_moments_m1",
    "estimate_moments_m2",
    "estimate_moments_m3",
    "separate_sources",
    "LinearFit",
    "RatioEstimate",
    "NoiseReport",
    "variance_field",
    "variance_histogram",
    "weighted_linear_fit",
    "intensity_sweep",
    "ratio_at_zero",
    "__version__",
]
