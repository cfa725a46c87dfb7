"""Quantitative noise study of the two readout models.

The central comparison: a snapshot difference carries one read-noise draw,
a digitally subtracted pair carries two. Their per-pixel variances differ
by exactly the read variance, and at zero intensity (no shot noise) their
ratio tends to 2. The sweep simulates flat fields over a range of well
intensities in both modes, fits variance against intensity with weighted
least squares, and extrapolates both intercepts to zero intensity.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import ExpectedWells, SensorConfig
from .simulator import (
    SEQUENTIAL_PAIR,
    SNAPSHOT_DIFF,
    CaptureMode,
    sample_frames,
    sample_sequential_frames,
)
from .recon import _stack

__all__ = [
    "LinearFit",
    "RatioEstimate",
    "NoiseReport",
    "variance_field",
    "variance_histogram",
    "weighted_linear_fit",
    "intensity_sweep",
    "ratio_at_zero",
    "report_to_csv",
    "report_to_json",
]


def variance_field(frames) -> np.ndarray:
    """Per-pixel unbiased variance across a stack of frames."""
    stack = _stack(frames)
    if stack.shape[0] < 2:
        raise ValueError("variance field needs at least 2 frames")
    return stack.var(axis=0, ddof=1)


def variance_histogram(field: np.ndarray, bins="fd") -> tuple[np.ndarray, np.ndarray]:
    """Histogram (edges, counts) of a per-pixel variance field.

    Default binning is the Freedman-Diaconis rule; pass an int or edge
    array to override.
    """
    counts, edges = np.histogram(np.asarray(field).ravel(), bins=bins)
    return edges, counts


@dataclass(frozen=True)
class LinearFit:
    """y = intercept + slope * x with per-point known sigmas."""

    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    chi2: float
    n_points: int


def weighted_linear_fit(x, y, sigma) -> LinearFit:
    """Least squares with weights 1/sigma^2; parameter errors from the
    normal-equation covariance (sigmas taken as known)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if x.size != y.size or x.size != sigma.size:
        raise ValueError("x, y, sigma must have equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.allclose(x, x[0]):
        raise ValueError("all abscissae equal; fit is degenerate")
    if np.any(sigma <= 0.0):
        raise ValueError("sigmas must be positive")
    w = 1.0 / (sigma * sigma)
    s = w.sum()
    sx = (w * x).sum()
    sy = (w * y).sum()
    sxx = (w * x * x).sum()
    sxy = (w * x * y).sum()
    delta = s * sxx - sx * sx
    slope = (s * sxy - sx * sy) / delta
    intercept = (sxx * sy - sx * sxy) / delta
    resid = y - (intercept + slope * x)
    chi2 = float((w * resid * resid).sum())
    return LinearFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_se=float(math.sqrt(s / delta)),
        intercept_se=float(math.sqrt(sxx / delta)),
        chi2=chi2,
        n_points=int(x.size),
    )


@dataclass(frozen=True)
class RatioEstimate:
    """Zero-intensity variance ratio (sequential over snapshot)."""

    value: float
    sigma: float
    defined: bool
    note: str = ""


@dataclass(frozen=True, eq=False)
class NoiseReport:
    """Sweep results: per-level mean pixel variances, fits, and the ratio.

    var_pre / var_post are the spatial means of the per-pixel variance
    fields (snapshot and sequential readout), with standard errors from
    the pixel-to-pixel scatter. Histograms describe the variance fields
    at the first (lowest) level. mean_variance_* average the per-level
    values.
    """

    levels: np.ndarray
    var_pre: np.ndarray
    var_post: np.ndarray
    se_pre: np.ndarray
    se_post: np.ndarray
    fit_pre: LinearFit
    fit_post: LinearFit
    hist_pre: tuple[np.ndarray, np.ndarray]
    hist_post: tuple[np.ndarray, np.ndarray]
    ratio: RatioEstimate
    n_frames: int
    read_variance: float

    @property
    def mean_variance_pre(self) -> float:
        return float(self.var_pre.mean())

    @property
    def mean_variance_post(self) -> float:
        return float(self.var_post.mean())


def ratio_at_zero(report: "NoiseReport") -> RatioEstimate:
    """Intercept ratio post/pre with first-order error propagation.

    A non-positive snapshot intercept leaves the ratio undefined; the
    estimate is returned flagged instead of raising.
    """
    return _ratio_from_fits(report.fit_pre, report.fit_post)


def _ratio_from_fits(fit_pre: LinearFit, fit_post: LinearFit) -> RatioEstimate:
    a = fit_pre.intercept
    b = fit_post.intercept
    if a <= 0.0:
        return RatioEstimate(
            value=float("nan"),
            sigma=float("nan"),
            defined=False,
            note=f"snapshot intercept {a:.4g} <= 0; ratio undefined",
        )
    value = b / a
    sigma = abs(value) * math.sqrt(
        (fit_post.intercept_se / b) ** 2 + (fit_pre.intercept_se / a) ** 2
    ) if b != 0.0 else fit_post.intercept_se / a
    return RatioEstimate(value=float(value), sigma=float(sigma), defined=True)


def _flat_variance(level, config, n_frames, seed, sequential):
    wells = ExpectedWells.constant(level, level, config.shape)
    indices = np.arange(n_frames, dtype=np.uint64)
    sampler = sample_sequential_frames if sequential else sample_frames
    frames = sampler(wells, config, seed, indices)
    field = variance_field(frames)
    # a noise-free level yields an exactly-zero field; floor its SE so the
    # fit weight stays finite
    se = max(float(field.std(ddof=1) / math.sqrt(field.size)), 1e-12)
    return field, float(field.mean()), se


def intensity_sweep(
    levels,
    config: SensorConfig,
    n_frames: int,
    seed: int = 0,
    modes: tuple[CaptureMode, CaptureMode] = (CaptureMode.snapshot(), CaptureMode.sequential()),
    bins="fd",
) -> NoiseReport:
    """Run the variance-vs-intensity comparison between the two readouts.

    Each level fills both wells with the same expected count, so the
    expected difference is zero and the variance carries the signal.
    Every (level, mode) cell draws from an independently derived seed.
    """
    levels = np.asarray(sorted(float(v) for v in levels))
    if levels.size < 3:
        raise ValueError("need at least 3 intensity levels")
    if np.unique(levels).size < 2:
        raise ValueError("levels are all equal; fit is degenerate")
    if np.any(levels < 0.0):
        raise ValueError("levels must be non-negative")
    if n_frames < 2:
        raise ValueError("need at least 2 frames per level")
    kinds = tuple(m.kind for m in modes)
    if kinds != (SNAPSHOT_DIFF, SEQUENTIAL_PAIR):
        raise ValueError("mode pair must be (snapshot_diff, sequential_pair)")

    var_pre = np.empty(levels.size)
    var_post = np.empty(levels.size)
    se_pre = np.empty(levels.size)
    se_post = np.empty(levels.size)
    hist_pre = hist_post = None
    for i, level in enumerate(levels):
        f_pre, var_pre[i], se_pre[i] = _flat_variance(
            level, config, n_frames, rng.derive_seed(seed, 2 * i), sequential=False
        )
        f_post, var_post[i], se_post[i] = _flat_variance(
            level, config, n_frames, rng.derive_seed(seed, 2 * i + 1), sequential=True
        )
        if i == 0:
            hist_pre = variance_histogram(f_pre, bins=bins)
            hist_post = variance_histogram(f_post, bins=bins)

    fit_pre = weighted_linear_fit(levels, var_pre, se_pre)
    fit_post = weighted_linear_fit(levels, var_post, se_post)
    return NoiseReport(
        levels=levels,
        var_pre=var_pre,
        var_post=var_post,
        se_pre=se_pre,
        se_post=se_post,
        fit_pre=fit_pre,
        fit_post=fit_post,
        hist_pre=hist_pre,
        hist_post=hist_post,
        ratio=_ratio_from_fits(fit_pre, fit_post),
        n_frames=int(n_frames),
        read_variance=config.read_variance,
    )


def report_to_csv(report: NoiseReport, path) -> None:
    """One row per level: level, var_pre, se_pre, var_post, se_post."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["level", "var_pre", "se_pre", "var_post", "se_post"])
        for i in range(report.levels.size):
            writer.writerow(
                [
                    f"{report.levels[i]:.10g}",
                    f"{report.var_pre[i]:.10g}",
                    f"{report.se_pre[i]:.10g}",
                    f"{report.var_post[i]:.10g}",
                    f"{report.se_post[i]:.10g}",
                ]
            )


def report_to_json(report: NoiseReport, path) -> None:
    """Summary document: fits, intercepts, and the zero-intensity ratio."""
    doc = {
        "n_frames": report.n_frames,
        "read_variance": report.read_variance,
        "levels": [float(v) for v in report.levels],
        "intercept_pre": report.fit_pre.intercept,
        "intercept_pre_se": report.fit_pre.intercept_se,
        "intercept_post": report.fit_post.intercept,
        "intercept_post_se": report.fit_post.intercept_se,
        "slope_pre": report.fit_pre.slope,
        "slope_post": report.fit_post.slope,
        "ratio": report.ratio.value if report.ratio.defined else None,
        "ratio_se": report.ratio.sigma if report.ratio.defined else None,
        "ratio_defined": report.ratio.defined,
        "note": report.ratio.note,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
