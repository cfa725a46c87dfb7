"""Synthetic scene generators for the difference-imaging test configurations.

Each generator returns a SceneSpec (or a time sequence for the dynamic
scenes) in photoelectrons per exposure. SceneRecipe is the serializable
form consumed by the CLI; its JSON schema is documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .simulator import SceneSpec

__all__ = [
    "SceneRecipe",
    "chart_reflectances",
    "color_chart",
    "chart_labels",
    "polarization_scene",
    "depth_edge_scene",
    "falling_objects",
    "rotating_fan",
    "dynamic_scene",
    "flat_target",
    "build_scene",
]

# Edge softness of generated objects, in pixels. Keeps dynamic scenes
# band-limited so 16 time samples per exposure are enough.
_EDGE_PX = 2.0


def chart_reflectances() -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Default (red, blue) reflectances and names of the 24-patch chart."""
    text = resources.files("snapdiff.data").joinpath("colorchart_rb.json").read_text()
    doc = json.loads(text)
    red = np.array([p["red"] for p in doc["patches"]])
    blue = np.array([p["blue"] for p in doc["patches"]])
    names = [p["name"] for p in doc["patches"]]
    return red, blue, names


def color_chart(
    rows: int = 4,
    cols: int = 6,
    red_reflectances=None,
    blue_reflectances=None,
    illum_red: float = 1000.0,
    illum_blue: float = 1000.0,
    patch_px: int = 16,
    ambient: float = 0.0,
) -> SceneSpec:
    """Chart scene under red (in-phase) and blue (anti-phase) illumination.

    Patch p reflects red_reflectances[p] of the red source into source_a
    and blue_reflectances[p] of the blue source into source_b; grayscale
    patches have matching reflectances and cancel in expectation.
    """
    if red_reflectances is None or blue_reflectances is None:
        red, blue, _ = chart_reflectances()
        if rows * cols != red.size:
            raise ValueError(
                f"default chart has {red.size} patches; requested {rows}x{cols}"
            )
        red_reflectances = red if red_reflectances is None else red_reflectances
        blue_reflectances = blue if blue_reflectances is None else blue_reflectances
    red = np.asarray(red_reflectances, dtype=np.float64).reshape(rows, cols)
    blue = np.asarray(blue_reflectances, dtype=np.float64).reshape(rows, cols)
    for name, refl in (("red", red), ("blue", blue)):
        if np.any(refl < 0.0) or np.any(refl > 1.0):
            raise ValueError(f"{name} reflectances must lie in [0, 1]")
    if illum_red < 0.0 or illum_blue < 0.0 or ambient < 0.0:
        raise ValueError("illumination levels must be non-negative")
    a = np.kron(illum_red * red, np.ones((patch_px, patch_px)))
    b = np.kron(illum_blue * blue, np.ones((patch_px, patch_px)))
    return SceneSpec(a, b, np.full_like(a, ambient))


def chart_labels(rows: int = 4, cols: int = 6, patch_px: int = 16, margin_px: int = 0) -> np.ndarray:
    """Label image for the chart: patches 1..rows*cols, 0 outside margins."""
    ids = np.arange(1, rows * cols + 1).reshape(rows, cols)
    labels = np.kron(ids, np.ones((patch_px, patch_px), dtype=np.int64))
    if margin_px > 0:
        tile = np.zeros((patch_px, patch_px), dtype=bool)
        tile[margin_px : patch_px - margin_px, margin_px : patch_px - margin_px] = True
        keep = np.kron(np.ones((rows, cols), dtype=bool), tile)
        labels = np.where(keep, labels, 0)
    return labels


def polarization_scene(direct_map, global_map) -> SceneSpec:
    """Crossed-polarizer configuration isolating directly reflected light.

    Multiple scattering depolarizes, so half of the indirect light passes
    the analyzer under either illumination direction: source_a carries
    direct + global/2, source_b carries global/2, and the expected
    difference is the direct component alone.
    """
    direct = np.asarray(direct_map, dtype=np.float64)
    glob = np.asarray(global_map, dtype=np.float64)
    if direct.shape != glob.shape:
        raise ValueError("direct and global maps must share one shape")
    if np.any(direct < 0.0) or np.any(glob < 0.0):
        raise ValueError("component maps must be non-negative")
    return SceneSpec(direct + 0.5 * glob, 0.5 * glob, np.zeros_like(direct))


def depth_edge_scene(
    background: np.ndarray,
    occluder: tuple[int, int, int, int],
    light_offset_px: int,
) -> SceneSpec:
    """Two horizontally displaced sources shadowed by a rectangular occluder.

    occluder is (x, y, w, h) in pixels. The in-phase source sits left of
    the camera and casts a hard shadow band of width light_offset_px on
    the right flank of the occluder; the anti-phase source mirrors it on
    the left. Everywhere else the sources agree, so the expected
    difference is nonzero only in the two flanking bands.
    """
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim != 2:
        raise ValueError("background must be a 2-D image")
    if np.any(bg < 0.0):
        raise ValueError("background must be non-negative")
    x, y, w, h = (int(v) for v in occluder)
    height, width = bg.shape
    if w < 0 or h < 0 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise ValueError("occluder must lie within the frame")
    if light_offset_px < 1:
        raise ValueError("light_offset_px must be >= 1")
    a = bg.copy()
    b = bg.copy()
    if w > 0 and h > 0:
        rows = slice(y, y + h)
        a[rows, min(x + w, width) : min(x + w + light_offset_px, width)] = 0.0
        b[rows, max(x - light_offset_px, 0) : max(x, 0)] = 0.0
    return SceneSpec(a, b, np.zeros_like(bg))


def _soft_disk(xx, yy, cx, cy, radius, peak):
    r = np.hypot(xx - cx, yy - cy)
    return peak * np.clip((radius - r) / _EDGE_PX + 0.5, 0.0, 1.0)


def falling_objects(
    n_samples: int = 16,
    width: int = 64,
    height: int = 64,
    n_objects: int = 4,
    radius: float = 3.5,
    velocity: tuple[float, float] = (0.0, 8.0),
    peak: float = 500.0,
) -> np.ndarray:
    """Bright pellets on dark background drifting by `velocity` px/exposure."""
    if n_samples < 2:
        raise ValueError("need at least 2 time samples")
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    vx, vy = velocity
    seq = np.zeros((n_samples, height, width))
    for k in range(n_samples):
        t = (k + 0.5) / n_samples
        for i in range(n_objects):
            # fixed quasi-uniform start positions, no randomness
            cx = width * ((0.618 * (i + 1)) % 1.0)
            cy = height * ((0.382 * (i + 1) + 0.25) % 1.0)
            seq[k] += _soft_disk(xx, yy, cx + vx * (t - 0.5), cy + vy * (t - 0.5), radius, peak)
    return seq


def rotating_fan(
    n_samples: int = 16,
    size: int = 64,
    n_blades: int = 3,
    sweep_deg: float = 25.0,
    blade_deg: float = 36.0,
    peak: float = 500.0,
) -> np.ndarray:
    """Fan blades sweeping sweep_deg over one exposure (positive = CCW)."""
    if n_samples < 2:
        raise ValueError("need at least 2 time samples")
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = cy = (size - 1) / 2.0
    r = np.hypot(xx - cx, yy - cy)
    theta = np.arctan2(yy - cy, xx - cx)
    r_outer = 0.45 * size
    radial = np.clip((r_outer - r) / _EDGE_PX + 0.5, 0.0, 1.0)
    half = np.deg2rad(blade_deg) / 2.0
    ang_soft = np.deg2rad(_EDGE_PX * 360.0 / (2.0 * np.pi * max(r_outer, 1.0)))
    seq = np.zeros((n_samples, size, size))
    for k in range(n_samples):
        t = (k + 0.5) / n_samples
        phase = np.deg2rad(sweep_deg) * (t - 0.5)
        frame = np.zeros((size, size))
        for b in range(n_blades):
            center = phase + 2.0 * np.pi * b / n_blades
            d = np.abs((theta - center + np.pi) % (2.0 * np.pi) - np.pi)
            frame = np.maximum(frame, np.clip((half - d) / ang_soft + 0.5, 0.0, 1.0))
        seq[k] = peak * frame * radial
    return seq


def dynamic_scene(kind: str, n_samples: int = 16, **params) -> np.ndarray:
    """Time-sampled irradiance sequence for the temporal-gradient mode."""
    if kind == "falling_objects":
        return falling_objects(n_samples=n_samples, **params)
    if kind == "rotating_fan":
        return rotating_fan(n_samples=n_samples, **params)
    raise ValueError(f"unknown dynamic scene kind: {kind!r}")


def flat_target(
    distance: float = 1.0,
    strength: float = 100.0,
    width: int = 64,
    height: int = 64,
    ambient: float = 0.0,
) -> SceneSpec:
    """Homogeneous white target; both sources deliver strength / distance**2."""
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    level = strength / (distance * distance)
    img = np.full((height, width), level)
    return SceneSpec(img, img.copy(), np.full_like(img, ambient))


@dataclass(frozen=True)
class SceneRecipe:
    """Serializable scene description: a generator kind plus its parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = (
        "color_chart",
        "polarization",
        "depth_edge",
        "falling_objects",
        "rotating_fan",
        "flat_target",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scene kind: {self.kind!r}")

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneRecipe":
        doc = json.loads(text)
        return cls(doc["kind"], doc.get("params", {}))

    @property
    def is_dynamic(self) -> bool:
        return self.kind in ("falling_objects", "rotating_fan")


def build_scene(recipe: SceneRecipe, width: int, height: int):
    """Materialize a recipe at the given resolution.

    Returns a SceneSpec, or a (K, H, W) sequence for dynamic kinds.
    Generators with intrinsic geometry (the chart) must match the
    requested resolution.
    """
    p = dict(recipe.params)
    if recipe.kind == "color_chart":
        scene = color_chart(**p)
        if scene.shape != (height, width):
            raise ValueError(
                f"chart geometry yields {scene.shape}, sensor expects {(height, width)}"
            )
        return scene
    if recipe.kind == "polarization":
        direct = np.asarray(p["direct"], dtype=np.float64)
        glob = np.asarray(p["global"], dtype=np.float64)
        if direct.ndim == 0:
            direct = np.full((height, width), float(direct))
        if glob.ndim == 0:
            glob = np.full((height, width), float(glob))
        return polarization_scene(direct, glob)
    if recipe.kind == "depth_edge":
        bg = p.get("background", 100.0)
        bg_img = np.full((height, width), float(bg)) if np.ndim(bg) == 0 else np.asarray(bg)
        return depth_edge_scene(bg_img, tuple(p["occluder"]), int(p["light_offset_px"]))
    if recipe.kind == "flat_target":
        return flat_target(width=width, height=height, **p)
    # dynamic kinds
    if recipe.kind == "falling_objects":
        return falling_objects(width=width, height=height, **p)
    if width != height:
        raise ValueError("rotating_fan requires a square sensor")
    return rotating_fan(size=width, **{k: v for k, v in p.items() if k != "size"})
