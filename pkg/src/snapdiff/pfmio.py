"""PFM and PGM image file handling.

Difference frames are signed floats, so the native exchange format is
grayscale PFM (magic "Pf"): 32-bit floats, bottom-up row order, scale
line whose sign encodes endianness (-1.0 = little endian, our default).
Non-negative integer data (label images, masks) travel as binary 16-bit
PGM (magic "P5", big-endian samples per the format).
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_pfm", "write_pfm", "read_pgm16", "write_pgm16", "write_png"]


def _read_token(f) -> bytes:
    # skip whitespace and '#' comment lines, return one token
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise ValueError("unexpected end of header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a grayscale or 3-channel PFM file as float32, top-down rows."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"Pf", b"PF"):
            raise ValueError(f"not a PFM file: magic {magic!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        channels = 1 if magic == b"Pf" else 3
        count = width * height * channels
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
        if data.size != count:
            raise ValueError("truncated PFM payload")
    shape = (height, width) if channels == 1 else (height, width, 3)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, image: np.ndarray) -> None:
    """Write a 2-D array as grayscale little-endian PFM (scale -1.0)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("only grayscale PFM output is supported")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(img).astype("<f4").tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a binary PGM (maxval <= 65535) as an integer array."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM file: magic {magic!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if not 0 < maxval < 65536:
            raise ValueError(f"bad PGM maxval {maxval}")
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(f.read(width * height * np.dtype(dtype).itemsize), dtype=dtype)
        if data.size != width * height:
            raise ValueError("truncated PGM payload")
    return data.reshape(height, width).astype(np.int64)


def write_pgm16(path, image: np.ndarray) -> None:
    """Write non-negative integers (< 65536) as 16-bit binary PGM."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM output must be 2-D")
    if np.any(img < 0) or np.any(img > 65535):
        raise ValueError("PGM-16 values must be in [0, 65535]")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(img.astype(">u2").tobytes())


def write_png(path, image: np.ndarray, symmetric: bool = True) -> None:
    """Optional visualization export with a diverging colormap.

    Signed data is mapped symmetrically about zero so polarity is
    readable. Requires matplotlib.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    img = np.asarray(image, dtype=np.float64)
    if symmetric:
        lim = float(np.max(np.abs(img))) or 1.0
        vmin, vmax = -lim, lim
    else:
        vmin, vmax = float(img.min()), float(img.max())
    fig, ax = plt.subplots(figsize=(6, 6 * img.shape[0] / max(img.shape[1], 1)))
    im = ax.imshow(img, cmap="RdBu_r", vmin=vmin, vmax=vmax)
    ax.set_axis_off()
    fig.colorbar(im, ax=ax, fraction=0.046, label=f"scale: [{vmin:.3g}, {vmax:.3g}]")
    fig.savefig(path, bbox_inches="tight", dpi=120)
    plt.close(fig)
