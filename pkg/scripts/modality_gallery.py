#!/usr/bin/env python3
"""One simulated frame per imaging modality, written as PFM (and PNG).

Covers: polarization-based direct-only imaging, bipolar red/blue color,
depth edges from displaced light sources, a temporal gradient of a
rotating fan, and a spatial gradient of a resolution-chart-like target.

Usage: python scripts/modality_gallery.py [--out DIR] [--png]
"""

import argparse
from pathlib import Path

import numpy as np

from snapdiff import CaptureMode, ModulationPattern, SensorConfig, capture
from snapdiff import pfmio, scenes

SEED = 0xCA11E47


def resolution_target(size):
    img = np.full((size, size), 30.0)
    for period in (4, 8, 16):
        x0 = 6 + (period - 4) * 3
        for x in range(x0, min(x0 + 3 * period, size - 6), period):
            img[8 : size - 8, x : x + period // 2] = 400.0
    return img


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/gallery", type=Path)
    ap.add_argument("--png", action="store_true")
    ap.add_argument("--size", default=64, type=int)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    s = args.size
    pattern = ModulationPattern.square_5050()

    yy, xx = np.mgrid[0:s, 0:s].astype(float)
    blob = np.exp(-((xx - s / 3) ** 2 + (yy - s / 2) ** 2) / (s * 2.0))
    shots = {}

    pol = scenes.polarization_scene(300.0 * blob, np.full((s, s), 400.0))
    cfg = SensorConfig(contrast=0.8, read_variance=8.0, width=s, height=s)
    shots["polarization_direct"] = capture(pol, pattern, CaptureMode.snapshot(), cfg, SEED, 0)

    chart = scenes.color_chart(illum_red=1500.0, illum_blue=1500.0, patch_px=s // 8, rows=4, cols=6)
    ch, cw = chart.shape
    ccfg = SensorConfig(contrast=0.8, read_variance=8.0, width=cw, height=ch)
    shots["bipolar_color"] = capture(chart, pattern, CaptureMode.snapshot(), ccfg, SEED, 1)

    edges = scenes.depth_edge_scene(
        np.full((s, s), 250.0), (s // 3, s // 4, s // 4, s // 2), light_offset_px=3
    )
    shots["depth_edges"] = capture(edges, pattern, CaptureMode.snapshot(), cfg, SEED, 2)

    fan = scenes.rotating_fan(n_samples=16, size=s, sweep_deg=30.0, peak=600.0)
    shots["temporal_gradient_fan"] = capture(
        fan, pattern, CaptureMode.temporal_gradient(0.5), cfg, SEED, 3
    )

    target = resolution_target(s)
    shots["spatial_gradient_chart"] = capture(
        target, pattern, CaptureMode.spatial_shift(1, 0), cfg, SEED, 4
    )

    for name, frame in shots.items():
        pfmio.write_pfm(args.out / f"{name}.pfm", frame.values)
        if args.png:
            pfmio.write_png(args.out / f"{name}.png", frame.values)
        print(f"{name:<24} range [{frame.values.min():8.1f}, {frame.values.max():8.1f}]")
    print(f"\nframes written to {args.out}")


if __name__ == "__main__":
    main()
