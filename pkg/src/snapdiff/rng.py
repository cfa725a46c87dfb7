"""Deterministic counter-based random streams for Monte Carlo frame synthesis.

All randomness is derived from Philox4x32-10 blocks. The 64-bit root seed
forms the cipher key and the counter words carry (slot, pixel index,
frame index), so every draw is a pure function of

    (seed, frame_index, pixel_index, slot)

and is independent of execution order, array chunking, and thread count.
One block yields 128 bits, i.e. two double-precision uniforms.

Poisson sampling inverts the CDF for means below ``PTRS_SWITCH`` and uses
Hormann's PTRS transformed rejection above it. Rejection retries advance
the slot, consuming successive blocks of the same per-pixel stream, so
the retry count of one element never perturbs any other element.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# Means below the switch use CDF inversion (one block per draw); above it,
# PTRS rejection (one block per attempt). PTRS is valid for means >= 10.
PTRS_SWITCH = 30.0

# A rejection round accepts with probability > 0.8, so surviving this many
# rounds signals a broken sampler, not bad luck.
_MAX_REJECTION_ROUNDS = 4096

# derive_seed() occupies slots with the top bit set; frame synthesis must
# keep its slot bases below this.
_DERIVE_SLOT = np.uint64(1) << np.uint64(31)


def _philox_words(seed: int, frame_index, pixel, slot):
    """Run Philox4x32-10 and return the four 32-bit output words.

    ``frame_index``, ``pixel`` and ``slot`` broadcast against each other;
    each element gets its own independent 128-bit block. Values are held
    in uint64 arrays for vectorized 32x32 -> 64 bit products.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    k0 = np.uint64(seed & 0xFFFFFFFF)
    k1 = np.uint64(seed >> 32)

    frame = np.asarray(frame_index, dtype=np.uint64)
    pix = np.asarray(pixel, dtype=np.uint64)
    sl = np.asarray(slot, dtype=np.uint64)

    b0, b1, b2, b3 = np.broadcast_arrays(
        sl & _MASK32, pix & _MASK32, frame & _MASK32, frame >> _SHIFT32
    )
    # real copies: the loop writes into these buffers
    x0 = np.array(b0, dtype=np.uint64)
    x1 = np.array(b1, dtype=np.uint64)
    x2 = np.array(b2, dtype=np.uint64)
    x3 = np.array(b3, dtype=np.uint64)
    p0 = np.empty_like(x0)
    p1 = np.empty_like(x0)
    t = np.empty_like(x0)
    for _ in range(10):
        np.multiply(x0, _M0, out=p0)
        np.multiply(x2, _M1, out=p1)
        np.right_shift(p1, _SHIFT32, out=t)
        np.bitwise_xor(t, x1, out=t)
        np.bitwise_xor(t, k0, out=t)
        np.bitwise_and(p1, _MASK32, out=x1)
        x0, t = t, x0
        np.right_shift(p0, _SHIFT32, out=t)
        np.bitwise_xor(t, x3, out=t)
        np.bitwise_xor(t, k1, out=t)
        np.bitwise_and(p0, _MASK32, out=x3)
        x2, t = t, x2
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return x0, x1, x2, x3


def _to_unit(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Map two 32-bit words to a double in the open interval (0, 1)."""
    bits = (hi << _SHIFT32) | lo
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def uniform_pair(seed: int, frame_index, pixel, slot):
    """Two independent U(0,1) doubles per (seed, frame, pixel, slot)."""
    w0, w1, w2, w3 = _philox_words(seed, frame_index, pixel, slot)
    return _to_unit(w0, w1), _to_unit(w2, w3)


def normal_pair(seed: int, frame_index, pixel, slot):
    """Two independent standard-normal doubles per stream position."""
    u0, u1 = uniform_pair(seed, frame_index, pixel, slot)
    return ndtri(u0), ndtri(u1)


def derive_seed(seed: int, a: int, b: int = 0, c: int = 0) -> int:
    """Derive an independent 64-bit sub-seed from (seed, a, b, c).

    Lives in a reserved slot namespace so derived seeds never collide with
    blocks consumed by frame synthesis under the same root seed.
    """
    if not 0 <= a < 2**31:
        raise ValueError("derive_seed word a must be in [0, 2**31)")
    w0, w1, _, _ = _philox_words(seed, c, b, _DERIVE_SLOT + np.uint64(a))
    return int(((w0 << _SHIFT32) | w1).reshape(()))


def poisson(seed: int, frame_index, pixel, mean, slot_base: int):
    """Poisson counts, one per broadcast element of (frame, pixel, mean).

    Each element consumes blocks ``slot_base, slot_base+1, ...`` of its own
    stream as needed; the low-mean branch always uses exactly one block.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if not np.all(np.isfinite(mean)) or np.any(mean < 0.0):
        raise ValueError("poisson means must be finite and non-negative")

    frame = np.asarray(frame_index, dtype=np.uint64)
    pix = np.asarray(pixel, dtype=np.uint64)
    frame_b, pix_b, mean_b = np.broadcast_arrays(frame, pix, mean)
    shape = mean_b.shape
    frame_f = frame_b.ravel()
    pix_f = pix_b.ravel()
    mean_f = mean_b.ravel()

    out = np.zeros(mean_f.shape, dtype=np.int64)
    low = mean_f < PTRS_SWITCH
    if low.any():
        idx = np.nonzero(low)[0]
        out[idx] = _poisson_inverse(
            seed, frame_f[idx], pix_f[idx], mean_f[idx], slot_base
        )
    high = ~low
    if high.any():
        idx = np.nonzero(high)[0]
        out[idx] = _poisson_ptrs(
            seed, frame_f[idx], pix_f[idx], mean_f[idx], slot_base
        )
    return out.reshape(shape)


def _poisson_inverse(seed, frame, pixel, mean, slot_base):
    """CDF inversion from a single uniform; exact for small means."""
    u, _ = uniform_pair(seed, frame, pixel, slot_base)
    out = np.zeros(mean.shape, dtype=np.int64)

    term = np.exp(-mean)
    cdf = term.copy()
    idx = np.nonzero(u > cdf)[0]
    k = np.zeros(idx.size, dtype=np.float64)
    term = term[idx]
    cdf = cdf[idx]
    mu = mean[idx]
    uu = u[idx]
    rounds = 0
    while idx.size:
        rounds += 1
        if rounds > 10_000:
            raise RuntimeError("poisson CDF inversion failed to terminate")
        k += 1.0
        term *= mu / k
        cdf += term
        done = uu <= cdf
        if done.any():
            out[idx[done]] = k[done].astype(np.int64)
            keep = ~done
            idx, k, term, cdf, mu, uu = (
                idx[keep], k[keep], term[keep], cdf[keep], mu[keep], uu[keep]
            )
    return out


def _poisson_ptrs(seed, frame, pixel, mean, slot_base):
    """PTRS transformed rejection; one block per attempt per element."""
    lam = mean
    loglam = np.log(lam)
    b = 0.931 + 2.53 * np.sqrt(lam)
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.zeros(lam.shape, dtype=np.int64)
    idx = np.arange(lam.size)
    attempt = 0
    while idx.size:
        if attempt >= _MAX_REJECTION_ROUNDS:
            raise RuntimeError("poisson rejection sampler exhausted its retry budget")
        u0, u1 = uniform_pair(
            seed, frame[idx], pixel[idx], slot_base + attempt
        )
        big_u = u0 - 0.5
        v = u1
        us = 0.5 - np.abs(big_u)
        kf = np.floor((2.0 * a[idx] / us + b[idx]) * big_u + lam[idx] + 0.43)

        accept = (us >= 0.07) & (v <= vr[idx])
        candidate = ~accept & (kf >= 0) & ~((us < 0.013) & (v > us))
        if candidate.any():
            with np.errstate(all="ignore"):
                lhs = (
                    np.log(v)
                    + np.log(invalpha[idx])
                    - np.log(a[idx] / (us * us) + b[idx])
                )
                rhs = -lam[idx] + kf * loglam[idx] - gammaln(kf + 1.0)
            accept |= candidate & (lhs <= rhs)

        out[idx[accept]] = kf[accept].astype(np.int64)
        idx = idx[~accept]
        attempt += 1
    return out
