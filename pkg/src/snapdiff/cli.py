"""Command-line front end.

Subcommands: simulate, reconstruct, noise-sweep, scene-gen,
dark-calibrate. Configuration is a single JSON document; --seed, --out
and --threads override or extend it. Exit codes: 0 ok, 1 usage, 2 I/O,
3 numeric failure. Identical config and seed produce byte-identical
outputs regardless of --threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, pfmio, recon, scenes, simulator
from .core import SensorConfig

# Fixed default so reruns reproduce by default; never wall clock.
DEFAULT_SEED = 0xD1FFCA5E

_SENSOR_KEYS = {"contrast", "gain", "read_variance", "exposure", "width", "height"}


class UsageError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Fully validated simulate configuration: everything a run needs."""

    sensor: SensorConfig
    scene: object  # SceneSpec, (K, H, W) sequence, or single image per mode
    pattern: simulator.ModulationPattern
    mode: simulator.CaptureMode
    frames: int
    seed: int
    out: Path


def _parse_sensor(doc: dict) -> SensorConfig:
    if not isinstance(doc, dict):
        raise UsageError("config field 'sensor' must be an object")
    unknown = set(doc) - _SENSOR_KEYS
    if unknown:
        raise UsageError(f"unknown sensor field(s): {sorted(unknown)}")
    if "contrast" not in doc:
        raise UsageError("sensor field 'contrast' is required")
    try:
        return SensorConfig(**doc)
    except ValueError as e:
        raise UsageError(f"sensor config: {e}") from e


def _parse_pattern(doc: dict | None) -> simulator.ModulationPattern:
    if doc is None:
        return simulator.ModulationPattern.square_5050()
    kind = doc.get("kind")
    try:
        if kind == simulator.SQUARE_5050:
            return simulator.ModulationPattern.square_5050()
        if kind == simulator.CONSTANT_ON:
            return simulator.ModulationPattern.constant_on()
        if kind == simulator.CONSTANT_OFF:
            return simulator.ModulationPattern.constant_off()
        if kind == simulator.ASYMMETRIC_SPLIT:
            return simulator.ModulationPattern(
                kind,
                tuple(doc.get("transitions", ())),
                int(doc.get("initial_level", 0)),
            )
    except ValueError as e:
        raise UsageError(f"pattern config: {e}") from e
    raise UsageError(f"pattern field 'kind' invalid: {kind!r}")


def _parse_mode(doc: dict | None) -> simulator.CaptureMode:
    if doc is None:
        return simulator.CaptureMode.snapshot()
    kind = doc.get("kind")
    try:
        if kind in (simulator.SNAPSHOT_DIFF, simulator.SEQUENTIAL_PAIR):
            return simulator.CaptureMode(kind)
        if kind == simulator.TEMPORAL_GRADIENT:
            return simulator.CaptureMode.temporal_gradient(float(doc.get("split", 0.5)))
        if kind == simulator.SPATIAL_SHIFT:
            return simulator.CaptureMode.spatial_shift(doc.get("dx", 0), doc.get("dy", 0))
    except ValueError as e:
        raise UsageError(f"mode config: {e}") from e
    raise UsageError(f"mode field 'kind' invalid: {kind!r}")


def _load_scene(doc: dict, sensor: SensorConfig, base: Path):
    """Scene from a recipe or from PFM files, per the capture mode's needs."""
    if not isinstance(doc, dict):
        raise UsageError("config field 'scene' must be an object")
    if "files" in doc:
        files = doc["files"]
        def _read(rel):
            path = base / rel
            if path.suffix.lower() == ".pgm":
                return pfmio.read_pgm16(path).astype(np.float64)
            return pfmio.read_pfm(path).astype(np.float64)
        def _img(name):
            return _read(files[name])
        if "image" in files:
            return _img("image")
        if "sequence" in files:
            return np.stack([_read(p) for p in files["sequence"]])
        missing = {"source_a", "source_b"} - set(files)
        if missing:
            raise UsageError(f"scene files missing: {sorted(missing)}")
        a = _img("source_a")
        b = _img("source_b")
        amb = _img("ambient") if "ambient" in files else np.zeros_like(a)
        return simulator.SceneSpec(a, b, amb)
    if "kind" in doc:
        try:
            recipe = scenes.SceneRecipe(doc["kind"], doc.get("params", {}))
            return scenes.build_scene(recipe, sensor.width, sensor.height)
        except TypeError as e:
            raise UsageError(f"scene config: {e}") from e
        except ValueError as e:
            raise UsageError(f"scene config: {e}") from e
    raise UsageError("scene config needs either 'kind' or 'files'")


def _load_config(path: str) -> tuple[dict, Path]:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise UsageError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise UsageError("config root must be a JSON object")
    return doc, p.parent


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _frame_name(i: int) -> str:
    return f"frame_{i:05d}.pfm"


def _parse_run_config(args) -> tuple[RunConfig, dict]:
    doc, base = _load_config(args.config)
    sensor = _parse_sensor(doc.get("sensor", {}))
    n_frames = int(doc.get("frames", 1))
    if n_frames < 1:
        raise UsageError("config field 'frames' must be >= 1 (N >= 1)")
    if "scene" not in doc:
        raise UsageError("config field 'scene' is required")
    run = RunConfig(
        sensor=sensor,
        scene=_load_scene(doc["scene"], sensor, base),
        pattern=_parse_pattern(doc.get("pattern")),
        mode=_parse_mode(doc.get("mode")),
        frames=n_frames,
        seed=args.seed if args.seed is not None else int(doc.get("seed", DEFAULT_SEED)),
        out=Path(args.out or doc.get("out", ".")),
    )
    return run, doc


def cmd_simulate(args) -> int:
    run, doc = _parse_run_config(args)
    # full validation happens here, before any output exists
    wells, border = simulator.capture_wells(run.scene, run.pattern, run.mode, run.sensor)

    run.out.mkdir(parents=True, exist_ok=True)

    sequential = run.mode.kind == simulator.SEQUENTIAL_PAIR
    sampler = (
        simulator.sample_sequential_frames if sequential else simulator.sample_frames
    )
    indices = np.arange(run.frames, dtype=np.uint64)
    chunks = np.array_split(indices, max(1, min(args.threads * 4, run.frames)))
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        parts = list(pool.map(lambda c: sampler(wells, run.sensor, run.seed, c), chunks))
    frames = np.concatenate(parts, axis=0)

    entries = []
    for i in range(run.frames):
        name = _frame_name(i)
        pfmio.write_pfm(run.out / name, frames[i])
        entries.append({"index": i, "file": name, "sha256": _sha256(run.out / name)})
    manifest = {"config": doc, "seed": run.seed, "frames": entries}
    if border is not None:
        pfmio.write_pgm16(run.out / "border_mask.pgm", border.astype(np.int64))
        manifest["border_mask"] = "border_mask.pgm"
    _write_json(run.out / "manifest.json", manifest)
    if args.png:
        pfmio.write_png(run.out / "frame_00000.png", frames[0])
    print(f"wrote {run.frames} frame(s) to {run.out}")
    return 0


def _read_frame_dir(path: Path) -> np.ndarray:
    files = sorted(path.glob("*.pfm"))
    if not files:
        raise FileNotFoundError(f"no PFM frames in {path}")
    return np.stack([pfmio.read_pfm(f).astype(np.float64) for f in files])


def _rel_rmse(est: np.ndarray, truth: np.ndarray) -> float:
    scale = float(np.sqrt(np.mean(truth**2)))
    if scale == 0.0:
        return float(np.sqrt(np.mean((est - truth) ** 2)))
    return float(np.sqrt(np.mean((est - truth) ** 2)) / scale)


def cmd_reconstruct(args) -> int:
    doc, _ = _load_config(args.config)
    sensor = _parse_sensor(doc.get("sensor", {}))
    if args.method == "m1":
        if args.frames is None:
            raise UsageError("m1 needs --frames DIR with N >= 2 frames")
        stack = _read_frame_dir(Path(args.frames))
        if stack.shape[0] < 2:
            raise UsageError("m1 requires a frame sequence (N >= 2)")
        field = recon.estimate_moments_m1(stack)
        extra = {"n_frames": int(stack.shape[0])}
    else:
        if args.frame is None:
            raise UsageError(f"{args.method} needs --frame FILE")
        frame = pfmio.read_pfm(args.frame).astype(np.float64)
        if args.method == "m2":
            if args.labels is None:
                raise UsageError("m2 needs --labels FILE (label image, 0 = unassigned)")
            labels = pfmio.read_pgm16(args.labels)
            field, undersized = recon.estimate_moments_m2(frame, recon.Segmentation(labels))
            extra = {"undersized_patches": undersized}
        else:
            sigma_range = args.sigma_range or recon.default_sigma_range(frame)
            params = recon.BilateralParams(
                sigma_range=sigma_range,
                sigma_domain=args.sigma_domain,
                window_radius=args.window_radius,
            )
            field = recon.estimate_moments_m3(frame, params)
            extra = {"sigma_range": sigma_range}
    if field.shape != sensor.shape:
        raise UsageError(
            f"input frames are {field.shape}, sensor config says {sensor.shape}"
        )

    dark_offset = None
    if args.dark_offset:
        dark_offset = pfmio.read_pfm(args.dark_offset).astype(np.float64)
    result = recon.separate_sources(
        field, sensor, dark_offset=dark_offset, zero_read_noise=args.zero_read_noise
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pfmio.write_pfm(out / "plus.pfm", result.wells.plus)
    pfmio.write_pfm(out / "minus.pfm", result.wells.minus)
    # the estimated moment field travels alongside the recovered pair
    pfmio.write_pfm(out / "mean.pfm", field.mean)
    pfmio.write_pfm(out / "variance.pfm", field.variance)
    valid = result.valid if result.valid is not None else np.ones(field.shape, bool)
    pfmio.write_pgm16(out / "valid.pgm", valid.astype(np.int64))
    metrics = {
        "method": args.method,
        "clamp_count": result.clamp_count,
        "valid_fraction": float(valid.mean()),
        **extra,
    }
    if args.truth_plus and args.truth_minus:
        tp = pfmio.read_pfm(args.truth_plus).astype(np.float64)
        tm = pfmio.read_pfm(args.truth_minus).astype(np.float64)
        metrics["rel_rmse_plus"] = _rel_rmse(result.wells.plus[valid], tp[valid])
        metrics["rel_rmse_minus"] = _rel_rmse(result.wells.minus[valid], tm[valid])
    _write_json(out / "metrics.json", metrics)
    if args.png:
        pfmio.write_png(out / "plus.png", result.wells.plus, symmetric=False)
        pfmio.write_png(out / "minus.png", result.wells.minus, symmetric=False)
    print(f"wrote recovered pair to {out}")
    return 0


def cmd_noise_sweep(args) -> int:
    doc, _ = _load_config(args.config)
    sensor = _parse_sensor(doc.get("sensor", {}))
    levels = doc.get("levels")
    if not isinstance(levels, list) or len(levels) < 3:
        raise UsageError("config field 'levels' must list at least 3 intensities")
    n_frames = int(doc.get("frames", 400))
    seed = args.seed if args.seed is not None else int(doc.get("seed", DEFAULT_SEED))
    report = analysis.intensity_sweep(levels, sensor, n_frames, seed=seed)
    out = Path(args.out or doc.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    analysis.report_to_csv(report, out / "sweep.csv")
    analysis.report_to_json(report, out / "sweep.json")
    if report.ratio.defined:
        print(f"zero-intensity ratio: {report.ratio.value:.3f} +- {report.ratio.sigma:.3f}")
    else:
        print(f"zero-intensity ratio undefined: {report.ratio.note}")
    return 0


def cmd_scene_gen(args) -> int:
    doc, base = _load_config(args.config)
    sensor = _parse_sensor(doc.get("sensor", {}))
    if "scene" not in doc:
        raise UsageError("config field 'scene' is required")
    scene = _load_scene(doc["scene"], sensor, base)
    out = Path(args.out or doc.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(scene, simulator.SceneSpec):
        pfmio.write_pfm(out / "source_a.pfm", scene.source_a)
        pfmio.write_pfm(out / "source_b.pfm", scene.source_b)
        pfmio.write_pfm(out / "ambient.pfm", scene.ambient)
        if doc["scene"].get("kind") == "color_chart":
            p = doc["scene"].get("params", {})
            labels = scenes.chart_labels(
                rows=p.get("rows", 4),
                cols=p.get("cols", 6),
                patch_px=p.get("patch_px", 16),
            )
            pfmio.write_pgm16(out / "labels.pgm", labels)
        print(f"wrote scene images to {out}")
    elif isinstance(scene, np.ndarray) and scene.ndim == 3:
        for k in range(scene.shape[0]):
            pfmio.write_pfm(out / f"sample_{k:03d}.pfm", scene[k])
        print(f"wrote {scene.shape[0]} sequence samples to {out}")
    else:
        pfmio.write_pfm(out / "image.pfm", scene)
        print(f"wrote image to {out}")
    return 0


def cmd_dark_calibrate(args) -> int:
    stack = _read_frame_dir(Path(args.frames))
    if stack.shape[0] < 2:
        raise UsageError("dark calibration needs at least 2 frames")
    offset, read_variance = recon.dark_frame_calibrate(stack)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pfmio.write_pfm(out / "offset.pfm", offset)
    _write_json(
        out / "calibration.json",
        {"read_variance": read_variance, "n_frames": int(stack.shape[0])},
    )
    print(f"read variance estimate: {read_variance:.4f}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse defaults to exit code 2; reserve that for I/O errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snapdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="64-bit RNG root seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (speed only, never results)")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="synthesize difference frames")
    common(p)
    p.add_argument("--png", action="store_true", help="also write a PNG preview of frame 0")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="recover the two source images")
    common(p)
    p.add_argument("--method", choices=["m1", "m2", "m3"], required=True)
    p.add_argument("--frames", help="directory of PFM frames (m1)")
    p.add_argument("--frame", help="single PFM frame (m2/m3)")
    p.add_argument("--labels", help="PGM label image (m2)")
    p.add_argument("--sigma-range", type=float, default=None)
    p.add_argument("--sigma-domain", type=float, default=3.0)
    p.add_argument("--window-radius", type=int, default=4)
    p.add_argument("--dark-offset", help="PFM offset image from dark-calibrate")
    p.add_argument("--zero-read-noise", action="store_true",
                   help="invert without subtracting the read term")
    p.add_argument("--truth-plus", help="ground-truth plus image (PFM) for metrics")
    p.add_argument("--truth-minus", help="ground-truth minus image (PFM) for metrics")
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_reconstruct, out=".")

    p = sub.add_parser("noise-sweep", help="variance vs intensity for both readouts")
    common(p)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("scene-gen", help="materialize a scene recipe as PFM images")
    common(p)
    p.set_defaults(func=cmd_scene_gen)

    p = sub.add_parser("dark-calibrate", help="offset and read variance from dark frames")
    p.add_argument("--frames", required=True, help="directory of dark PFM frames")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_dark_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("snapdiff: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as e:
        print(f"snapdiff: error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"snapdiff: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"snapdiff: I/O error: {e}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as e:
        print(f"snapdiff: numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
