"""
ndo-sim - driven dissipative Kerr oscillator simulator.

Exact quantum dynamics (Lindblad master equation and quantum state
diffusion trajectories), Wigner-function phase-space analysis and the
semiclassical Duffing equation, run side by side on the same parameters.
"""

__version__ = "0.1.0"
__author__ = "ndo-sim developers"

from .errors import (
    ConfigError,
    InvalidParameterError,
    NdoError,
    NumericalError,
    UnknownPresetError,
)
from .model import ConstantDrive, FockSpace, ModelParams, PulseTrain, make_fock_space
from .master import evolve_density, exact_mean_excitation, steady_state
from .trajectories import QSDConfig, ensemble_run, run_trajectory
from .wigner import GridSpec, WignerGrid, wigner_grid
from .semiclassical import DampingConvention, lyapunov_exponent, steady_amplitudes
from .experiment import ExperimentConfig, load_config

__all__ = [
    "ConfigError",
    "ConstantDrive",
    "DampingConvention",
    "ExperimentConfig",
    "FockSpace",
    "GridSpec",
    "InvalidParameterError",
    "ModelParams",
    "NdoError",
    "NumericalError",
    "PulseTrain",
    "QSDConfig",
    "UnknownPresetError",
    "WignerGrid",
    "ensemble_run",
    "evolve_density",
    "exact_mean_excitation",
    "load_config",
    "lyapunov_exponent",
    "make_fock_space",
    "run_trajectory",
    "steady_amplitudes",
    "steady_state",
    "wigner_grid",
]
