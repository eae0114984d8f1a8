"""Closed-form data-transfer, memory, conversion and energy accounting.

All byte and conversion counts are exact integers. Sizes are bit-packed per
message and rounded up to whole bytes, which is exact for 8-bit ADCs.
Kilobytes are decimal (1 kB = 1000 B) everywhere.
"""

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

from hirise.boxes import RoiBox, union_area
from hirise.errors import ConfigError, GeometryError, UndefinedRatio

STREAMED = "streamed"
BATCHED = "batched"

CSV_COLUMNS = (
    "d_old", "d1_sp", "d1_ps", "d2_sp", "d_new", "mem_new",
    "c_old", "c_new", "e_stage1", "e_stage2", "e_total", "e_baseline",
)

# 1.85 mJ for a full 2560x1920 RGB frame at 8 bits.
DEFAULT_E_ADC = 1.85e-3 / (2560 * 1920 * 3)


def packed_bytes(count, bits):
    return -(-count * bits // 8)


def kb(nbytes):
    return nbytes / 1000


@dataclass(frozen=True)
class CostInputs:
    n: int
    m: int
    k: int = 1
    adc_bits: int = 8
    word_bits: int = 16
    stage1_channels: int = 3
    rois: tuple = ()
    memory_mode: str = STREAMED
    dedup_union: bool = False

    def __post_init__(self):
        if self.n < 0 or self.m < 0 or self.k < 1:
            raise GeometryError(f"bad geometry n={self.n} m={self.m} k={self.k}")
        if self.n % self.k or self.m % self.k:
            raise GeometryError(f"k={self.k} does not divide {self.n}x{self.m}")
        if self.stage1_channels not in (1, 3):
            raise ConfigError(f"stage1_channels must be 1 or 3, got {self.stage1_channels}")
        if self.memory_mode not in (STREAMED, BATCHED):
            raise ConfigError(f"unknown memory mode {self.memory_mode!r}")
        rois = tuple(r if isinstance(r, RoiBox) else tuple(r) for r in self.rois)
        object.__setattr__(self, "rois", rois)
        if self.dedup_union and not all(isinstance(r, RoiBox) for r in rois):
            raise ConfigError("dedup_union needs positioned RoiBox entries, not (W, H) sizes")

    @property
    def sizes(self):
        return [(r.w, r.h) if isinstance(r, RoiBox) else r for r in self.rois]


@dataclass(frozen=True)
class CostReport:
    d_old: int
    d1_sp: int
    d1_ps: int
    d2_sp: int
    d_new: int
    mem_old: int
    m1_sp: int
    m1_ps: int
    m2_sp: int
    mem_new: int
    c_old: int
    c1_sp: int
    c2_sp: int
    c_new: int

    def to_dict(self):
        return asdict(self)


def analytical_costs(inputs):
    n, m, k, bits = inputs.n, inputs.m, inputs.k, inputs.adc_bits
    sizes = inputs.sizes
    j = len(sizes)

    c_old = n * m * 3
    d_old = packed_bytes(c_old, bits)

    c1_sp = n * m * inputs.stage1_channels // (k * k)
    d1_sp = packed_bytes(c1_sp, bits)
    d1_ps = j * 4 * inputs.word_bits // 8

    roi_pixels = union_area(inputs.rois) if inputs.dedup_union else sum(w * h for w, h in sizes)
    c2_sp = 3 * roi_pixels
    d2_sp = packed_bytes(c2_sp, bits)

    if inputs.memory_mode == STREAMED:
        m2_sp = max((packed_bytes(3 * w * h, bits) for w, h in sizes), default=0)
    else:
        m2_sp = d2_sp

    return CostReport(
        d_old=d_old,
        d1_sp=d1_sp,
        d1_ps=d1_ps,
        d2_sp=d2_sp,
        d_new=d1_sp + d1_ps + d2_sp,
        mem_old=d_old,
        m1_sp=d1_sp,
        m1_ps=d1_ps,
        m2_sp=m2_sp,
        mem_new=max(d1_sp, m2_sp),
        c_old=c_old,
        c1_sp=c1_sp,
        c2_sp=c2_sp,
        c_new=c1_sp + c2_sp,
    )


@dataclass(frozen=True)
class Reductions:
    data: Fraction
    memory: Fraction
    conversion: Fraction

    @property
    def satisfied(self):
        return self.data > 1, self.memory > 1, self.conversion > 1


def reduction_factors(rep):
    for name in ("d_new", "mem_new", "c_new"):
        if getattr(rep, name) == 0:
            raise UndefinedRatio(f"{name} is zero; reduction ratio undefined")
    return Reductions(
        Fraction(rep.d_old, rep.d_new),
        Fraction(rep.mem_old, rep.mem_new),
        Fraction(rep.c_old, rep.c_new),
    )


@dataclass(frozen=True)
class StageFractions:
    stage1: float
    stage2: float
    request: float


def stage_fractions(rep):
    if rep.d_new == 0:
        raise UndefinedRatio("d_new is zero; stage fractions undefined")
    return StageFractions(rep.d1_sp / rep.d_new, rep.d2_sp / rep.d_new, rep.d1_ps / rep.d_new)


@dataclass(frozen=True)
class EnergyParams:
    e_adc: float = DEFAULT_E_ADC
    e_pool_per_frame: float = 0.0  # circuit measured at 1.71 nJ .. 91.4 nJ
    e_transfer_per_bit: float = 0.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if val < 0:
                raise ConfigError(f"{name} must be >= 0, got {val}")


@dataclass(frozen=True)
class EnergyReport:
    e_stage1: float
    e_stage2: float
    e_pooling: float
    e_total: float
    e_baseline: float

    @property
    def reduction_factor(self):
        if self.e_total == 0:
            raise UndefinedRatio("e_total is zero")
        return self.e_baseline / self.e_total

    def to_dict(self):
        out = asdict(self)
        out["reduction_factor"] = self.reduction_factor if self.e_total else None
        return out


def energy(rep, params=EnergyParams()):
    """ADC (and optional link) energy per stage, in joules.

    Pooling energy is kept out of the stage terms and reported on its own.
    """
    per_bit = params.e_transfer_per_bit
    e1 = rep.c1_sp * params.e_adc + (rep.d1_sp + rep.d1_ps) * 8 * per_bit
    e2 = rep.c2_sp * params.e_adc + rep.d2_sp * 8 * per_bit
    e_pool = params.e_pool_per_frame
    baseline = rep.c_old * params.e_adc + rep.d_old * 8 * per_bit
    return EnergyReport(e1, e2, e_pool, e1 + e2 + e_pool, baseline)


@dataclass(frozen=True)
class MemoryProfile:
    name: str
    peak_activation_sram: int
    weight_flash: int = 0

    def __post_init__(self):
        if self.peak_activation_sram < 0 or self.weight_flash < 0:
            raise ConfigError("memory profile sizes must be >= 0")


BASELINE = "baseline"
HIRISE = "hirise"


def peak_sram(profile_stage1: Optional[MemoryProfile], profile_stage2: Optional[MemoryProfile],
              rep: CostReport, mode: str = HIRISE):
    """Peak SRAM (largest model activation plus resident image) and total flash."""
    profiles = [p for p in (profile_stage1, profile_stage2) if p is not None]
    peak_act = max((p.peak_activation_sram for p in profiles), default=0)
    flash = sum(p.weight_flash for p in profiles)
    if mode == BASELINE:
        image = rep.mem_old
    elif mode == HIRISE:
        image = rep.mem_new
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return peak_act + image, flash


def csv_row(rep, en):
    values = {**rep.to_dict(), **{k: v for k, v in asdict(en).items()}}
    return {col: values[col] for col in CSV_COLUMNS}
