"""Behavioral model of the pixel array and the in-sensor pooling circuit.

Each pooled output pixel is produced by one resistor network: N pixel
branches of resistance N*R each, joined at a common node that is pulled to
-VDD through a single resistor R. The source follower reading that node is
treated as an ideal unity-gain buffer, so the averaged output is simply the
conductance-weighted mean of the branch inputs.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from hirise import kernels
from hirise.errors import ConfigError, EmptyBranchSet, GeometryError


class ColorMode(str, Enum):
    RGB = "rgb"
    GRAY = "gray"

    @property
    def channels(self):
        return 1 if self is ColorMode.GRAY else 3


@dataclass(frozen=True)
class CircuitParams:
    resistance: float = 10e3
    vth: float | None = None  # None -> 0.3 * VDD
    mismatch_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.resistance <= 0:
            raise ConfigError(f"resistance must be > 0, got {self.resistance}")
        if self.mismatch_sigma < 0:
            raise ConfigError(f"mismatch_sigma must be >= 0, got {self.mismatch_sigma}")

    def threshold(self, vdd):
        vth = 0.3 * vdd if self.vth is None else self.vth
        if not 0 < vth < vdd:
            raise ConfigError(f"V_TH must lie in (0, VDD), got {vth}")
        return vth

    def branch_factors(self, shape):
        """Multiplicative resistor perturbations, one per branch."""
        if self.mismatch_sigma == 0:
            return None
        rng = np.random.default_rng(self.rng_seed)
        return rng.lognormal(0.0, self.mismatch_sigma, size=shape)


@dataclass(frozen=True)
class SensorConfig:
    n: int
    m: int
    k: int = 1
    color_mode: ColorMode = ColorMode.RGB
    adc_bits: int = 8
    vdd: float = 1.0
    word_bits: int = 16
    circuit: CircuitParams = field(default_factory=CircuitParams)

    def __post_init__(self):
        object.__setattr__(self, "color_mode", ColorMode(self.color_mode))
        if self.n < 1 or self.m < 1:
            raise GeometryError(f"array must be at least 1x1, got {self.n}x{self.m}")
        if self.k < 1:
            raise GeometryError(f"pool factor must be >= 1, got {self.k}")
        if self.n % self.k:
            raise GeometryError(f"k={self.k} does not divide width {self.n}")
        if self.m % self.k:
            raise GeometryError(f"k={self.k} does not divide height {self.m}")
        if not 1 <= self.adc_bits <= 16:
            raise ConfigError(f"adc_bits must be in [1, 16], got {self.adc_bits}")
        if self.word_bits not in (8, 16, 32):
            raise ConfigError(f"word_bits must be 8, 16 or 32, got {self.word_bits}")
        if self.vdd <= 0:
            raise ConfigError(f"vdd must be > 0, got {self.vdd}")
        self.circuit.threshold(self.vdd)

    @property
    def stage1_channels(self):
        return self.color_mode.channels


@dataclass(frozen=True, eq=False)
class PixelArray:
    """Full-resolution analog image, shape (height, width, 3), in volts."""

    data: np.ndarray
    vdd: float = 1.0

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise GeometryError(f"pixel data must have shape (m, n, 3), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise GeometryError("pixel array must be at least 1x1")
        if data.size and (data.min() < 0 or data.max() > self.vdd):
            raise ValueError(f"pixel values must lie in [0, {self.vdd}]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class AnalogFrame:
    data: np.ndarray  # (height, width, channels)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class DigitalFrame:
    codes: np.ndarray  # uint16, (height, width, channels)
    bits: int
    conversion_count: int

    @property
    def width(self):
        return self.codes.shape[1]

    @property
    def height(self):
        return self.codes.shape[0]

    @property
    def channels(self):
        return self.codes.shape[2]

    @property
    def nbytes(self):
        """Bit-packed payload size, rounded up to whole bytes."""
        return -(-self.codes.size * self.bits // 8)


def _check_inputs(inputs, vdd):
    v = np.asarray(inputs, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyBranchSet("EmptyBranchSet: resistor network needs at least one input")
    if v.min() < 0 or v.max() > vdd:
        raise ValueError(f"inputs must lie in [0, {vdd}]")
    return v


def _branch_conductances(count, params):
    g = np.full(count, 1.0 / (count * params.resistance))
    factors = params.branch_factors(count)
    if factors is not None:
        g /= factors
    return g


def resistor_network_node_voltage(inputs, params=CircuitParams(), vdd=1.0):
    """Voltage of the common node G of the averaging network.

    Kirchhoff's current law at G with branch conductances g_i and the
    pull-down conductance 1/R gives
    G = (sum g_i v_i - VDD / R) / (sum g_i + 1 / R).
    """
    v = _check_inputs(inputs, vdd)
    if params.mismatch_sigma == 0:
        # identical branches: sum g_i == 1/R exactly
        return float((v.mean() - vdd) / 2)
    g = _branch_conductances(v.size, params)
    g0 = 1.0 / params.resistance
    return float((g @ v - g0 * vdd) / (g.sum() + g0))


def analog_average(inputs, params=CircuitParams(), vdd=1.0):
    v = _check_inputs(inputs, vdd)
    if params.mismatch_sigma == 0:
        avg = v.mean()
    else:
        g = _branch_conductances(v.size, params)
        avg = g @ v / g.sum()
    return float(min(max(avg, 0.0), vdd))


def check_operating_region(inputs, params=CircuitParams(), vdd=1.0):
    """True when the common node sits in [-VDD/2, 0].

    Keeping G at or below zero is what lets the source-follower and row
    select transistors stay on when many pixels share one node.
    """
    g = resistor_network_node_voltage(inputs, params, vdd)
    params.threshold(vdd)
    return -vdd / 2 <= g <= 0.0


def pool_frame(src, cfg):
    """In-sensor average pooling, optionally fused with grayscale."""
    if src.width != cfg.n or src.height != cfg.m:
        raise GeometryError(
            f"array is {src.width}x{src.height}, config expects {cfg.n}x{cfg.m}"
        )
    if src.width % cfg.k or src.height % cfg.k:
        raise GeometryError(f"k={cfg.k} does not divide {src.width}x{src.height}")
    gray = cfg.color_mode is ColorMode.GRAY
    if cfg.k == 1 and not gray:
        return AnalogFrame(src.data.copy())
    factors = cfg.circuit.branch_factors(src.data.shape)
    weights = None if factors is None else np.ascontiguousarray(1.0 / factors)
    out = kernels.pool_blocks(src.data, weights, cfg.k, gray)
    np.clip(out, 0.0, cfg.vdd, out=out)
    return AnalogFrame(out)


def adc_convert(frame, cfg):
    data = np.ascontiguousarray(frame.data, dtype=np.float64)
    codes = kernels.quantize(data.ravel(), cfg.vdd, cfg.adc_bits).reshape(data.shape)
    return DigitalFrame(codes, cfg.adc_bits, int(codes.size))


def reconstruct(frame, vdd=1.0):
    """Map ADC codes back to the voltages they represent."""
    return frame.codes.astype(np.float64) / ((1 << frame.bits) - 1) * vdd


def extract_roi(src, box):
    """Full-resolution RGB crop of ``box``; no pooling in stage 2."""
    if box.w < 1 or box.h < 1:
        raise GeometryError(f"ROI must be at least 1x1, got {box.w}x{box.h}")
    if box.x < 0 or box.y < 0 or box.x + box.w > src.width or box.y + box.h > src.height:
        raise GeometryError(f"ROI {box} exceeds {src.width}x{src.height} array")
    return AnalogFrame(src.data[box.y:box.y + box.h, box.x:box.x + box.w, :].copy())


def read_ppm(path, vdd=1.0):
    """Load a binary P6 PPM (maxval 255) as a PixelArray scaled to [0, vdd]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P6" or maxval != 255:
        raise ValueError(f"{path}: only P6 with maxval 255 is supported")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height * 3, offset=pos)
    data = pixels.reshape(height, width, 3).astype(np.float64) / 255.0 * vdd
    return PixelArray(data, vdd)


def write_ppm(path, src):
    codes = np.rint(src.data / src.vdd * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (src.width, src.height))
        fh.write(codes.tobytes())
