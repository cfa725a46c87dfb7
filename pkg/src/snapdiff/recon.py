"""Recovery of the latent well pair from difference-frame statistics.

Three estimators produce the per-pixel (mean, variance) field that the
mixing-matrix inversion consumes:

* M1: temporal statistics over a stack of frames taken under identical
  conditions (unbiased variance, denominator N - 1);
* M2: spatial statistics over pre-segmented patches of a single frame,
  every pixel inheriting its patch's mean and unbiased variance;
* M3: bilateral-weighted statistics over a window of a single frame.
  Both moments are normalized by the weight sum, so the variance is the
  weighted biased estimator; the range kernel trades variance for bias.

Dark-frame calibration supplies the fixed-pattern offset and the scalar
read-noise variance used by the inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DifferenceFrame,
    ExpectedWells,
    MomentField,
    SensorConfig,
    invert_moments,
)

__all__ = [
    "Segmentation",
    "BilateralParams",
    "SeparationResult",
    "dark_frame_calibrate",
    "estimate_moments_m1",
    "estimate_moments_m2",
    "estimate_moments_m3",
    "separate_sources",
    "default_sigma_range",
]


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Patch labels for M2; label 0 means unassigned."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("labels must be a 2-D integer image")
        if arr.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", arr.astype(np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class BilateralParams:
    """Kernel widths for M3.

    sigma_range is in frame-value units, sigma_domain in pixels. The
    window is truncated at window_radius (default 4, i.e. 9x9).
    """

    sigma_range: float
    sigma_domain: float = 3.0
    window_radius: int = 4

    def __post_init__(self):
        if self.sigma_range <= 0.0 or self.sigma_domain <= 0.0:
            raise ValueError("bilateral sigmas must be positive")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")


def default_sigma_range(frame_values: np.ndarray) -> float:
    """Default range sigma: twice the frame's estimated noise level.

    The noise variance is estimated robustly from horizontal first
    differences (MAD scaled for Gaussian data), so scene structure and
    patch boundaries do not inflate it the way a global variance would.
    """
    frame = np.asarray(frame_values, dtype=np.float64)
    if frame.shape[1] < 2:
        var = float(np.var(frame))
    else:
        d = np.diff(frame, axis=1)
        mad = float(np.median(np.abs(d - np.median(d))))
        var = (mad / 0.6745) ** 2 / 2.0
    return 2.0 * math.sqrt(max(var, 1.0))


def _stack(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError("frame stack must have shape (N, H, W)")
        return arr
    values = [f.values if isinstance(f, DifferenceFrame) else np.asarray(f, dtype=np.float64) for f in frames]
    if not values:
        raise ValueError("no frames given")
    shape = values[0].shape
    if any(v.shape != shape for v in values):
        raise ValueError("frames differ in shape")
    return np.stack(values)


def dark_frame_calibrate(dark_frames) -> tuple[np.ndarray, float]:
    """Fixed-pattern offset and read-variance estimate from dark captures.

    The offset is the per-pixel temporal mean; the read variance is the
    spatial median of the per-pixel temporal variances, robust against
    outlier pixels.
    """
    stack = _stack(dark_frames)
    if stack.shape[0] < 2:
        raise ValueError("dark calibration needs at least 2 frames")
    offset = stack.mean(axis=0)
    read_variance = float(np.median(stack.var(axis=0, ddof=1)))
    return offset, read_variance


def estimate_moments_m1(frames) -> MomentField:
    """Per-pixel temporal mean and unbiased variance over a frame stack."""
    stack = _stack(frames)
    n = stack.shape[0]
    if n < 2:
        raise ValueError("M1 needs at least 2 frames (N >= 2)")
    return MomentField(stack.mean(axis=0), stack.var(axis=0, ddof=1), sample_count=n)


def estimate_moments_m2(frame, seg: Segmentation) -> tuple[MomentField, int]:
    """Patch statistics of a single frame.

    Every pixel of a patch receives the patch's mean and unbiased
    variance. Unassigned pixels (label 0) and patches with fewer than 2
    members are marked invalid; the count of such undersized patches is
    returned alongside the field.
    """
    values = frame.values if isinstance(frame, DifferenceFrame) else np.asarray(frame, dtype=np.float64)
    if values.shape != seg.shape:
        raise ValueError("segmentation shape does not match frame")
    labels = seg.labels.ravel()
    flat = values.ravel()
    counts = np.bincount(labels)
    sums = np.bincount(labels, weights=flat)
    with np.errstate(invalid="ignore", divide="ignore"):
        patch_mean = sums / counts
    # two-pass variance avoids cancellation on large means
    centered = flat - patch_mean[labels]
    sqsums = np.bincount(labels, weights=centered * centered)
    with np.errstate(invalid="ignore", divide="ignore"):
        patch_var = sqsums / (counts - 1)

    usable = (np.arange(counts.size) > 0) & (counts >= 2)
    undersized = int(np.count_nonzero((np.arange(counts.size) > 0) & (counts == 1)))
    valid = usable[labels]
    mean = np.where(valid, patch_mean[labels], 0.0)
    var = np.where(valid, patch_var[labels], 0.0)
    field = MomentField(
        mean.reshape(values.shape),
        var.reshape(values.shape),
        sample_count="spatial",
        valid=valid.reshape(values.shape),
    )
    return field, undersized


def estimate_moments_m3(frame, params: BilateralParams) -> MomentField:
    """Bilateral-weighted moments of a single frame.

    Weight of neighbor x' relative to center x is
    exp(-(I(x') - I(x))^2 / (2 sigma_range^2)) *
    exp(-|x' - x|^2 / (2 sigma_domain^2)); both the mean and the variance
    are normalized by the weight sum. Out-of-frame neighbors contribute
    nothing.
    """
    values = frame.values if isinstance(frame, DifferenceFrame) else np.asarray(frame, dtype=np.float64)
    h, w = values.shape
    r = params.window_radius
    inv2sr = 0.5 / (params.sigma_range**2)
    inv2sd = 0.5 / (params.sigma_domain**2)

    # offsets beyond the frame have empty overlap
    offsets = [
        (dy, dx, math.exp(-(dy * dy + dx * dx) * inv2sd))
        for dy in range(-min(r, h - 1), min(r, h - 1) + 1)
        for dx in range(-min(r, w - 1), min(r, w - 1) + 1)
    ]

    def shifted_views(dy, dx):
        ys = slice(max(dy, 0), h + min(dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        ys_src = slice(max(-dy, 0), h + min(-dy, 0))
        xs_src = slice(max(-dx, 0), w + min(-dx, 0))
        return (ys, xs), (ys_src, xs_src)

    wsum = np.zeros_like(values)
    wval = np.zeros_like(values)
    for dy, dx, dw in offsets:
        dst, src = shifted_views(dy, dx)
        diff = values[src] - values[dst]
        wgt = dw * np.exp(-(diff * diff) * inv2sr)
        wsum[dst] += wgt
        wval[dst] += wgt * values[src]
    mean = wval / wsum

    wdev = np.zeros_like(values)
    for dy, dx, dw in offsets:
        dst, src = shifted_views(dy, dx)
        diff = values[src] - values[dst]
        wgt = dw * np.exp(-(diff * diff) * inv2sr)
        dev = values[src] - mean[dst]
        wdev[dst] += wgt * dev * dev
    variance = wdev / wsum
    return MomentField(mean, variance, sample_count="spatial")


@dataclass(frozen=True, eq=False)
class SeparationResult:
    wells: ExpectedWells
    clamp_count: int
    valid: np.ndarray | None = None


def separate_sources(
    m: MomentField,
    config: SensorConfig,
    dark_offset: np.ndarray | None = None,
    zero_read_noise: bool = False,
) -> SeparationResult:
    """Invert difference moments into the latent well pair.

    dark_offset (from dark_frame_calibrate) is subtracted from the mean
    before inversion. zero_read_noise replicates the uncorrected variant
    that treats the read term as zero, which biases both recovered wells
    upward by read_variance / (2 gain^2 contrast^2) electrons.
    """
    mean = m.mean
    if dark_offset is not None:
        offset = np.asarray(dark_offset, dtype=np.float64)
        if offset.shape != m.shape:
            raise ValueError("dark offset shape does not match moments")
        mean = mean - offset
    cfg = config
    if zero_read_noise:
        cfg = SensorConfig(
            contrast=config.contrast,
            gain=config.gain,
            read_variance=0.0,
            exposure=config.exposure,
            width=config.width,
            height=config.height,
        )
    field = MomentField(mean, m.variance, sample_count=m.sample_count, valid=m.valid)
    wells, clamped = invert_moments(field, cfg)
    return SeparationResult(wells=wells, clamp_count=clamped, valid=m.valid)
