"""Constant-envelope CP-OFDMA link-level simulator."""

from .config import WaveformConfig
from .errors import (CapacityError, CeOfdmaError, ConfigurationError, CrcError, DimensionError,
                     DomainError, IndeterminateSpectrumError, NumericalError, OptimizationError,
                     SingularityError)
from .filters import ShapingFilter, build_nce, half_sine, optimize_ce_filter
from .pilots import PilotSequence, ideal_pilot, optimize_pilot, random_pilot
from .waveform import SymbolBlock, synthesize_baseline, synthesize_block

__version__ = "0.1.0"

__all__ = [
    "WaveformConfig", "ShapingFilter", "PilotSequence", "SymbolBlock",
    "half_sine", "optimize_ce_filter", "build_nce", "optimize_pilot", "random_pilot",
    "ideal_pilot", "synthesize_block", "synthesize_baseline",
    "CeOfdmaError", "ConfigurationError", "DimensionError", "DomainError", "SingularityError",
    "NumericalError", "OptimizationError", "CapacityError", "CrcError",
    "IndeterminateSpectrumError",
]
