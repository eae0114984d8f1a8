"""Simulator and cost model for two-stage in-sensor pooling with selective ROI readout."""

from hirise.boxes import RoiBox, union_area
from hirise.cost import (
    CostInputs, CostReport, EnergyParams, EnergyReport, MemoryProfile, analytical_costs,
    energy, peak_sram, reduction_factors, stage_fractions,
)
from hirise.errors import ConfigError, EmptyBranchSet, GeometryError, HiriseError, UndefinedRatio
from hirise.kernels import BACKEND
from hirise.protocol import (
    TransferLedger, SessionTrace, oracle_detector, run_baseline, run_two_stage, upscale_and_clamp,
)
from hirise.sensor import (
    AnalogFrame, CircuitParams, ColorMode, DigitalFrame, PixelArray, SensorConfig, adc_convert,
    analog_average, check_operating_region, extract_roi, pool_frame,
    resistor_network_node_voltage,
)

__version__ = "0.1.0"
