"""Spectral and time-domain analysis of a tensioned tube conveying fluid under boundary feedback."""
from .errors import PipeflowError
from .model import StateVector, TubeParams, energy, validate_params
from .spectrum import Spectrum, find_spectrum

__all__ = ["PipeflowError", "StateVector", "TubeParams", "Spectrum", "energy",
           "find_spectrum", "validate_params"]
__version__ = "0.1.0"
