"""Two-ion driven-dissipative Bell-state preparation simulator."""

from .qops import HilbertSpec
from .scheme import Generator, SchemeParams, build_eliminated_generator, build_full_generator
from .evolve import (
    DensityState,
    SteadyStateCriteria,
    TimeSeries,
    initial_state,
    integrate,
    propagate_no_detection,
    steady_state,
)

__all__ = [
    "HilbertSpec",
    "Generator",
    "SchemeParams",
    "build_eliminated_generator",
    "build_full_generator",
    "DensityState",
    "SteadyStateCriteria",
    "TimeSeries",
    "initial_state",
    "integrate",
    "propagate_no_detection",
    "steady_state",
]

__version__ = "0.1.0"
