"""Forward image formation for two-bucket difference capture.

The pipeline is: integrate per-source irradiance against the sensor
modulation into expected well counts, then draw a noisy frame. Two
readout models are supported:

* snapshot: the wells are subtracted in analog and digitized once, so a
  frame carries a single read-noise draw;
* sequential: each well is digitized separately and subtracted after the
  fact, costing two read-noise draws per difference value.

Both draw the same Poisson photon counts for a given (seed, frame_index),
which makes paired comparisons of the two readout models exact.

Capture modes beyond the plain difference: a temporal-gradient mode that
integrates a time-sampled scene against a single-transition modulation
(early light lands in the minus well, late light in the plus well), and
a spatial-shift mode that images one scene twice, displaced by a pixel
offset and with opposite polarity.

Determinism contract: every sampled value is a pure function of (scene,
pattern, mode, config, seed, frame_index, pixel); thread count and
chunking cannot change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import DifferenceFrame, ExpectedWells, SensorConfig, _as_image

__all__ = [
    "ModulationPattern",
    "SceneSpec",
    "CaptureMode",
    "integrate_wells",
    "integrate_sequence",
    "shifted_wells",
    "sample_frame",
    "sample_frames",
    "sample_sequential_pair",
    "sample_sequential_frames",
    "capture",
    "capture_wells",
]

# Slot bases partition each per-pixel stream by purpose. Poisson rejection
# never consumes more than rng._MAX_REJECTION_ROUNDS slots, far below the
# spacing.
_SLOT_WELL_PLUS = 0
_SLOT_WELL_MINUS = 1 << 20
_SLOT_READ = 1 << 21

# Frame batches are chunked so the RNG working set stays around 100 MB.
_CHUNK_ELEMENTS = 1 << 20

SQUARE_5050 = "square_5050"
ASYMMETRIC_SPLIT = "asymmetric_split"
CONSTANT_ON = "constant_on"
CONSTANT_OFF = "constant_off"


@dataclass(frozen=True)
class ModulationPattern:
    """Binary sensor modulation f(t) over one exposure, t normalized to [0, 1].

    transitions lists the times where f flips, strictly increasing;
    initial_level is the value of f at t = 0. The square_5050 kind stands
    for the high-frequency 50% duty wave: uncorrelated light splits
    evenly between the wells at every instant, while anti-phase driven
    sources still route cleanly.
    """

    kind: str
    transitions: tuple[float, ...] = ()
    initial_level: int = 1

    def __post_init__(self):
        if self.kind not in (SQUARE_5050, ASYMMETRIC_SPLIT, CONSTANT_ON, CONSTANT_OFF):
            raise ValueError(f"unknown modulation kind: {self.kind!r}")
        if self.initial_level not in (0, 1):
            raise ValueError("initial_level must be 0 or 1")
        ts = tuple(float(t) for t in self.transitions)
        if any(not 0.0 <= t <= 1.0 for t in ts):
            raise ValueError("transitions must lie in [0, 1]")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("transitions must be strictly increasing")
        object.__setattr__(self, "transitions", ts)

    @classmethod
    def square_5050(cls) -> "ModulationPattern":
        return cls(SQUARE_5050)

    @classmethod
    def single_transition(cls, split: float, initial_level: int = 0) -> "ModulationPattern":
        """One flip at t = split; with initial_level 0, late light is in-phase."""
        if not 0.0 < split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {split}")
        return cls(ASYMMETRIC_SPLIT, (split,), initial_level)

    @classmethod
    def constant_on(cls) -> "ModulationPattern":
        return cls(CONSTANT_ON, (), 1)

    @classmethod
    def constant_off(cls) -> "ModulationPattern":
        return cls(CONSTANT_OFF, (), 0)

    def complement(self) -> "ModulationPattern":
        if self.kind == SQUARE_5050:
            return self
        if self.kind == CONSTANT_ON:
            return ModulationPattern.constant_off()
        if self.kind == CONSTANT_OFF:
            return ModulationPattern.constant_on()
        return ModulationPattern(self.kind, self.transitions, 1 - self.initial_level)

    def segments(self) -> list[tuple[float, float, int]]:
        """Piecewise-constant description [(t0, t1, level), ...] covering [0, 1]."""
        bounds = [0.0, *self.transitions, 1.0]
        level = self.initial_level
        out = []
        for a, b in zip(bounds, bounds[1:]):
            if b > a:
                out.append((a, b, level))
            level = 1 - level
        return out

    def duty(self) -> float:
        """Fraction of the exposure spent at level 1."""
        if self.kind == SQUARE_5050:
            return 0.5
        return sum(b - a for a, b, lv in self.segments() if lv == 1)

    def in_phase_overlap(self, t0: float, t1: float) -> float:
        """Measure of {t in [t0, t1): f(t) = 1}."""
        if self.kind == SQUARE_5050:
            return 0.5 * (t1 - t0)
        total = 0.0
        for a, b, lv in self.segments():
            if lv == 1:
                total += max(0.0, min(b, t1) - max(a, t0))
        return total


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Physical input to the simulator, in photoelectrons per exposure.

    source_a is the budget delivered by the light source driven in phase
    with the sensor, source_b the anti-phase source, ambient the
    uncorrelated background. All three share one resolution.
    """

    source_a: np.ndarray
    source_b: np.ndarray
    ambient: np.ndarray

    def __post_init__(self):
        a = _as_image(self.source_a)
        b = _as_image(self.source_b)
        amb = _as_image(self.ambient)
        if not (a.shape == b.shape == amb.shape):
            raise ValueError("scene images must share one shape")
        for name, img in (("source_a", a), ("source_b", b), ("ambient", amb)):
            if not np.all(np.isfinite(img)) or np.any(img < 0.0):
                raise ValueError(f"{name} must be finite and non-negative")
        object.__setattr__(self, "source_a", a)
        object.__setattr__(self, "source_b", b)
        object.__setattr__(self, "ambient", amb)

    @property
    def shape(self) -> tuple[int, int]:
        return self.source_a.shape

    def total_image(self) -> np.ndarray:
        """Unmodulated view of the scene (all light summed)."""
        return self.source_a + self.source_b + self.ambient


SNAPSHOT_DIFF = "snapshot_diff"
SEQUENTIAL_PAIR = "sequential_pair"
TEMPORAL_GRADIENT = "temporal_gradient"
SPATIAL_SHIFT = "spatial_shift"


@dataclass(frozen=True)
class CaptureMode:
    kind: str
    split: float = 0.5
    dx: int = 0
    dy: int = 0

    def __post_init__(self):
        if self.kind not in (SNAPSHOT_DIFF, SEQUENTIAL_PAIR, TEMPORAL_GRADIENT, SPATIAL_SHIFT):
            raise ValueError(f"unknown capture mode: {self.kind!r}")
        if self.kind == TEMPORAL_GRADIENT and not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")

    @classmethod
    def snapshot(cls) -> "CaptureMode":
        return cls(SNAPSHOT_DIFF)

    @classmethod
    def sequential(cls) -> "CaptureMode":
        return cls(SEQUENTIAL_PAIR)

    @classmethod
    def temporal_gradient(cls, split: float = 0.5) -> "CaptureMode":
        return cls(TEMPORAL_GRADIENT, split=split)

    @classmethod
    def spatial_shift(cls, dx: int, dy: int) -> "CaptureMode":
        return cls(SPATIAL_SHIFT, dx=int(dx), dy=int(dy))


def integrate_wells(
    scene: SceneSpec, pattern: ModulationPattern, config: SensorConfig
) -> ExpectedWells:
    """Expected well counts for a static scene.

    The two sources are driven in exact anti-phase with the sensor, so
    source_a lands entirely in the plus well and source_b in the minus
    well (whenever the respective drive window is non-empty). Ambient
    light is uncorrelated and splits by duty cycle.
    """
    if scene.shape != config.shape:
        raise ValueError(
            f"scene shape {scene.shape} does not match sensor {config.shape}"
        )
    duty = pattern.duty()
    plus = (scene.source_a if duty > 0.0 else 0.0) + duty * scene.ambient
    minus = (scene.source_b if duty < 1.0 else 0.0) + (1.0 - duty) * scene.ambient
    return ExpectedWells(plus, minus)


def integrate_sequence(
    sequence: np.ndarray, pattern: ModulationPattern, config: SensorConfig
) -> ExpectedWells:
    """Expected wells for a time-varying unmodulated scene.

    sequence has shape (K, H, W): K instantaneous photoelectron rates
    (electrons per exposure) sampled across one exposure, interpreted as
    piecewise constant on the K equal sub-intervals. Each sample's mass
    splits between the wells by its overlap with the in-phase windows.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[0] < 2:
        raise ValueError("scene sequence must have shape (K >= 2, H, W)")
    if seq.shape[1:] != config.shape:
        raise ValueError(
            f"sequence shape {seq.shape[1:]} does not match sensor {config.shape}"
        )
    if not np.all(np.isfinite(seq)) or np.any(seq < 0.0):
        raise ValueError("scene sequence must be finite and non-negative")
    k = seq.shape[0]
    edges = np.linspace(0.0, 1.0, k + 1)
    w_plus = np.array(
        [pattern.in_phase_overlap(a, b) for a, b in zip(edges, edges[1:])]
    )
    w_minus = (1.0 / k) - w_plus
    plus = np.tensordot(w_plus, seq, axes=(0, 0))
    minus = np.tensordot(w_minus, seq, axes=(0, 0))
    # guard tiny negatives from the w_minus subtraction
    return ExpectedWells(np.maximum(plus, 0.0), np.maximum(minus, 0.0))


def shifted_wells(image: np.ndarray, dx: int, dy: int, config: SensorConfig):
    """Wells for the spatial-shift mode: plus = image, minus = translated copy.

    Translation is zero-padded; the band of pixels whose translated
    sample falls outside the frame is returned as an invalid-border mask.
    """
    img = _as_image(image)
    if img.shape != config.shape:
        raise ValueError(f"image shape {img.shape} does not match sensor {config.shape}")
    if not np.all(np.isfinite(img)) or np.any(img < 0.0):
        raise ValueError("image must be finite and non-negative")
    h, w = img.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise ValueError("shift magnitude must be smaller than the image")
    minus = np.zeros_like(img)
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    minus[ys, xs] = img[ys_src, xs_src]
    border = np.ones_like(img, dtype=bool)
    border[ys, xs] = False
    return ExpectedWells(img, minus), border


def _frame_iter(n_total: int, n_pixels: int):
    per_chunk = max(1, _CHUNK_ELEMENTS // max(n_pixels, 1))
    for start in range(0, n_total, per_chunk):
        yield start, min(start + per_chunk, n_total)


def _check_wells(wells: ExpectedWells, config: SensorConfig):
    if wells.shape != config.shape:
        raise ValueError(
            f"wells shape {wells.shape} does not match sensor {config.shape}"
        )
    if config.n_pixels > 2**32:
        raise ValueError("pixel count exceeds the 32-bit stream index space")


def sample_frames(
    wells: ExpectedWells,
    config: SensorConfig,
    seed: int,
    frame_indices,
) -> np.ndarray:
    """Draw a batch of snapshot difference frames, shape (N, H, W).

    Per pixel: independent Poisson counts for the two wells, subtracted
    and scaled by gain * contrast, plus one Gaussian read draw.
    """
    _check_wells(wells, config)
    frames = np.atleast_1d(np.asarray(frame_indices, dtype=np.uint64))
    n = frames.size
    pix = np.arange(config.n_pixels, dtype=np.uint64)
    mp = wells.plus.ravel()
    mm = wells.minus.ravel()
    scale = config.gain * config.contrast
    sigma = math.sqrt(config.read_variance)
    out = np.empty((n, config.n_pixels), dtype=np.float64)
    for a, b in _frame_iter(n, config.n_pixels):
        f = frames[a:b, None]
        p_plus = rng.poisson(seed, f, pix, mp, _SLOT_WELL_PLUS)
        p_minus = rng.poisson(seed, f, pix, mm, _SLOT_WELL_MINUS)
        vals = scale * (p_plus - p_minus).astype(np.float64)
        if sigma > 0.0:
            n0, _ = rng.normal_pair(seed, f, pix, _SLOT_READ)
            vals += sigma * n0
        out[a:b] = vals
    return out.reshape(n, *config.shape)


def sample_sequential_frames(
    wells: ExpectedWells,
    config: SensorConfig,
    seed: int,
    frame_indices,
) -> np.ndarray:
    """Like sample_frames, but each well is read out separately.

    The digital subtraction carries two independent read draws. Photon
    counts reuse the snapshot slots, so with equal (seed, frame_index)
    the two readout models see identical photons.
    """
    _check_wells(wells, config)
    frames = np.atleast_1d(np.asarray(frame_indices, dtype=np.uint64))
    n = frames.size
    pix = np.arange(config.n_pixels, dtype=np.uint64)
    mp = wells.plus.ravel()
    mm = wells.minus.ravel()
    scale = config.gain * config.contrast
    sigma = math.sqrt(config.read_variance)
    out = np.empty((n, config.n_pixels), dtype=np.float64)
    for a, b in _frame_iter(n, config.n_pixels):
        f = frames[a:b, None]
        p_plus = rng.poisson(seed, f, pix, mp, _SLOT_WELL_PLUS)
        p_minus = rng.poisson(seed, f, pix, mm, _SLOT_WELL_MINUS)
        vals = scale * (p_plus - p_minus).astype(np.float64)
        if sigma > 0.0:
            n0, n1 = rng.normal_pair(seed, f, pix, _SLOT_READ)
            vals += sigma * (n0 - n1)
        out[a:b] = vals
    return out.reshape(n, *config.shape)


def sample_frame(
    wells: ExpectedWells, config: SensorConfig, seed: int, frame_index: int
) -> DifferenceFrame:
    """One snapshot difference frame."""
    values = sample_frames(wells, config, seed, [frame_index])[0]
    return DifferenceFrame(values, frame_index=int(frame_index), seed=int(seed))


def sample_sequential_pair(
    wells: ExpectedWells, config: SensorConfig, seed: int, frame_index: int
) -> DifferenceFrame:
    """One digitally subtracted pair of per-well captures."""
    values = sample_sequential_frames(wells, config, seed, [frame_index])[0]
    return DifferenceFrame(values, frame_index=int(frame_index), seed=int(seed))


def capture_wells(scene, pattern: ModulationPattern, mode: CaptureMode, config: SensorConfig):
    """Expected wells (and border mask, if any) for a capture configuration.

    The scene argument depends on the mode: a SceneSpec for the plain
    difference modes, a (K, H, W) sequence for temporal_gradient, and a
    single non-negative image for spatial_shift.
    """
    if mode.kind in (SNAPSHOT_DIFF, SEQUENTIAL_PAIR):
        if not isinstance(scene, SceneSpec):
            raise ValueError(f"{mode.kind} requires a SceneSpec")
        return integrate_wells(scene, pattern, config), None
    if mode.kind == TEMPORAL_GRADIENT:
        seq = np.asarray(scene, dtype=np.float64) if not isinstance(scene, SceneSpec) else None
        if seq is None or seq.ndim != 3:
            raise ValueError(
                "temporal_gradient requires a scene sequence of shape (K, H, W)"
            )
        tg_pattern = ModulationPattern.single_transition(mode.split, initial_level=0)
        return integrate_sequence(seq, tg_pattern, config), None
    # spatial shift
    if isinstance(scene, SceneSpec) or np.asarray(scene).ndim != 2:
        raise ValueError("spatial_shift requires a single 2-D image")
    return shifted_wells(scene, mode.dx, mode.dy, config)


def capture(
    scene,
    pattern: ModulationPattern,
    mode: CaptureMode,
    config: SensorConfig,
    seed: int,
    frame_index: int,
) -> DifferenceFrame:
    """Simulate one capture in the requested mode."""
    wells, border = capture_wells(scene, pattern, mode, config)
    if mode.kind == SEQUENTIAL_PAIR:
        frame = sample_sequential_pair(wells, config, seed, frame_index)
    else:
        frame = sample_frame(wells, config, seed, frame_index)
    if border is None:
        return frame
    return DifferenceFrame(
        frame.values, frame_index=frame.frame_index, seed=frame.seed, border_mask=border
    )
