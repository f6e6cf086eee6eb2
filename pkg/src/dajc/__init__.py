"""Behavioral simulator of an analog-domain JPEG encoder with a sparsity-aware ADC."""

__version__ = "0.1.0"

from .adc_rle import AdcConfig, EnergyReport, Run, Sample, comm_power, encode_block, energy_ratio
from .calib import build_inverse_q, characterize, load_calibration, save_calibration
from .errors import CalibrationError, ConfigError, DajcError, FormatError
from .nonideal import MismatchModel, NoiseContext, ParasiticModel, input_referred_noise
from .sc_sim import PipelineConfig, run_block, run_blocks
from .stream import Frame, decode_frame, encode_frame, load_pgm, save_pgm

__all__ = [
    "AdcConfig", "CalibrationError", "ConfigError", "DajcError", "EnergyReport", "Frame",
    "FormatError", "MismatchModel", "NoiseContext", "ParasiticModel", "PipelineConfig", "Run",
    "Sample", "build_inverse_q", "characterize", "comm_power", "decode_frame", "encode_block",
    "encode_frame", "energy_ratio", "input_referred_noise", "load_calibration", "load_pgm",
    "run_block", "run_blocks", "save_calibration", "save_pgm",
]
