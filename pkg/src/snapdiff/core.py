"""Domain types and the moment algebra of two-bucket difference pixels.

A two-bucket pixel steers photoelectrons into one of two wells and reads
out the analog difference. With expected well counts (i_plus, i_minus),
demodulation contrast eta and conversion gain rho, the digitized value is
a scaled Skellam variable plus read noise:

    mean     = rho * eta * (i_plus - i_minus)
    variance = rho**2 * eta**2 * (i_plus + i_minus) + read_variance

The (mean, variance) pair is linear in the well counts; in the rho = 1
frame the map is the 2x2 mixing matrix [[eta, -eta], [eta**2, eta**2]],
invertible for every eta > 0. Inverting measured moments therefore
recovers both latent wells from difference statistics alone, which is
what the recon module builds on.

ADC quantization is neglected throughout; images are double precision in
electron or digital units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

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
]


@dataclass(frozen=True)
class SensorConfig:
    """Device constants of the simulated sensor.

    contrast uses the demodulation-contrast convention: it scales the
    measured difference, not the photon counts. gain converts electron
    counts to digital units; read_variance is the post-difference readout
    noise in digital units squared. exposure is informational (scene
    units are electrons per exposure).
    """

    contrast: float
    gain: float = 1.0
    read_variance: float = 0.0
    exposure: float = 1.0
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if not 0.0 < self.contrast <= 1.0:
            raise ValueError(f"contrast must be in (0, 1], got {self.contrast}")
        if not self.gain > 0.0:
            raise ValueError(f"gain must be positive, got {self.gain}")
        if self.read_variance < 0.0:
            raise ValueError(f"read_variance must be >= 0, got {self.read_variance}")
        if not self.exposure > 0.0:
            raise ValueError(f"exposure must be positive, got {self.exposure}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def _as_image(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ExpectedWells:
    """Per-pixel expected electron counts of the two wells."""

    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "plus", _as_image(self.plus))
        object.__setattr__(self, "minus", _as_image(self.minus))
        if self.plus.shape != self.minus.shape:
            raise ValueError(
                f"well images differ in shape: {self.plus.shape} vs {self.minus.shape}"
            )
        for name, img in (("plus", self.plus), ("minus", self.minus)):
            if not np.all(np.isfinite(img)):
                raise ValueError(f"well image '{name}' contains non-finite entries")
            if np.any(img < 0.0):
                raise ValueError(f"well image '{name}' contains negative entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.plus.shape

    @classmethod
    def constant(cls, plus: float, minus: float, shape: tuple[int, int]) -> "ExpectedWells":
        return cls(np.full(shape, plus), np.full(shape, minus))


@dataclass(frozen=True, eq=False)
class DifferenceFrame:
    """One captured difference frame in signed digital units.

    Values may be negative; differencing happens before digitization.
    border_mask marks pixels whose expectation is undefined (True =
    invalid), used by the spatial-shift capture mode.
    """

    values: np.ndarray
    frame_index: int
    seed: int
    border_mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_image(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frame contains non-finite values")
        if self.border_mask is not None:
            mask = np.asarray(self.border_mask, dtype=bool)
            if mask.shape != self.values.shape:
                raise ValueError("border_mask shape does not match frame")
            object.__setattr__(self, "border_mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class MomentField:
    """Per-pixel (mean, variance) estimates of the difference signal.

    sample_count is the number of temporal samples behind each estimate,
    or a marker string ("spatial", "analytic") when the estimates do not
    come from a per-pixel time series. valid is an optional mask (True =
    usable estimate); invalid pixels carry zeros, never NaN.
    """

    mean: np.ndarray
    variance: np.ndarray
    sample_count: Union[int, str] = "spatial"
    valid: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_image(self.mean))
        object.__setattr__(self, "variance", _as_image(self.variance))
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance shapes differ")
        if np.any(self.variance < 0.0):
            raise ValueError("variance entries must be >= 0")
        if isinstance(self.sample_count, int) and self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != self.mean.shape:
                raise ValueError("valid mask shape does not match moments")
            object.__setattr__(self, "valid", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape


@dataclass(frozen=True, eq=False)
class SkellamMixingMatrix:
    """The 2x2 map from well counts to (mean, variance - read_variance)."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.shape != (2, 2):
            raise ValueError("mixing matrix must be 2x2")
        object.__setattr__(self, "entries", arr)

    @property
    def determinant(self) -> float:
        e = self.entries
        return float(e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0])

    @property
    def inverse(self) -> np.ndarray:
        e = self.entries
        det = self.determinant
        return np.array([[e[1, 1], -e[0, 1]], [-e[1, 0], e[0, 0]]]) / det


def skellam_moments(wells: ExpectedWells, config: SensorConfig):
    """Analytic (mean, variance) of the difference signal, elementwise.

    With gain = 1 this is the plain Skellam relation: mean is the
    contrast-scaled well difference, variance the contrast-squared well
    sum plus the read term.
    """
    g = config.gain * config.contrast
    mean = g * (wells.plus - wells.minus)
    variance = g * g * (wells.plus + wells.minus) + config.read_variance
    return mean, variance


def mixing_matrix(config: SensorConfig) -> SkellamMixingMatrix:
    """Mixing matrix in the gain-normalized (rho = 1) frame."""
    eta = config.contrast
    return SkellamMixingMatrix(
        np.array([[eta, -eta], [eta * eta, eta * eta]])
    )


def normalize_gain(m: MomentField, config: SensorConfig) -> MomentField:
    """Rescale moments into the rho = 1 frame the mixing matrix assumes.

    Mean divides by gain; the shot-noise part of the variance divides by
    gain squared, with the read term re-added unscaled. Identity when
    gain = 1. The result is floored at zero to keep the variance
    invariant; estimates below the read floor should go through
    invert_moments, which rescales without the floor.
    """
    rho = config.gain
    if rho == 1.0:
        return m
    mean = m.mean / rho
    shot = (m.variance - config.read_variance) / (rho * rho)
    return MomentField(
        mean,
        np.maximum(shot + config.read_variance, 0.0),
        sample_count=m.sample_count,
        valid=m.valid,
    )


def invert_moments(m: MomentField, config: SensorConfig) -> tuple[ExpectedWells, int]:
    """Recover expected wells from difference moments.

    Applies the inverse mixing matrix to the gain-normalized
    (mean, variance - read_variance) pair per pixel. Noise-driven
    negative wells are clamped to zero and counted; clamping is the
    defined behavior, not an error. Returns (wells, clamp_count).
    """
    # Same scaling as normalize_gain, but without its variance floor so
    # below-read-floor estimates invert exactly before clamping.
    rho = config.gain
    mean = m.mean / rho
    shot = (m.variance - config.read_variance) / (rho * rho)
    hinv = mixing_matrix(config).inverse
    plus = hinv[0, 0] * mean + hinv[0, 1] * shot
    minus = hinv[1, 0] * mean + hinv[1, 1] * shot
    if m.valid is not None:
        invalid = ~m.valid
        plus = np.where(invalid, 0.0, plus)
        minus = np.where(invalid, 0.0, minus)
    clamped = int(np.count_nonzero(plus < 0.0) + np.count_nonzero(minus < 0.0))
    return ExpectedWells(np.maximum(plus, 0.0), np.maximum(minus, 0.0)), clamped
