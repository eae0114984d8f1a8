"""Numpy reference implementations of the pooling and quantization kernels.

These are used when the compiled extension is unavailable, and serve as the
reference the compiled kernels are tested against.
"""

import numpy as np


def pool_blocks(data, weights, k, gray):
    """Average k x k blocks of an (m, n, c) array.

    With ``gray`` set, every block collapses all channels into one value
    (one resistor network over k*k*c branches). Otherwise each channel is
    pooled on its own. ``weights`` are per-pixel branch conductances; None
    means identical branches, i.e. a plain mean.
    """
    m, n, c = data.shape
    oh, ow = m // k, n // k
    blocks = data.reshape(oh, k, ow, k, c)
    axes = (1, 3, 4) if gray else (1, 3)
    if weights is None:
        out = blocks.mean(axis=axes)
    else:
        wblocks = weights.reshape(oh, k, ow, k, c)
        out = (wblocks * blocks).sum(axis=axes) / wblocks.sum(axis=axes)
    if gray:
        out = out[..., np.newaxis]
    return np.ascontiguousarray(out, dtype=np.float64)


def quantize(values, vdd, bits):
    """Round-half-away-from-zero quantizer onto ``bits``-bit codes, clamped."""
    full = float((1 << bits) - 1)
    scaled = np.asarray(values, dtype=np.float64) / vdd * full
    base = np.floor(scaled)
    codes = base + (scaled - base >= 0.5)
    return np.clip(codes, 0.0, full).astype(np.uint16)
