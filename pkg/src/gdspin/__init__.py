"""Gain-dissipative minimisation of XY, Ising and Potts Hamiltonians, with baselines and benchmarks."""

__version__ = "0.1.0"

from .baselines import BasinHoppingParams, basin_hopping, lbfgs_minimize, mc_multistart
from .dynamics import CouplingMode, GdParams, IntegrationError, OscillatorState, run_gd, run_gd_batch
from .lbfgs import LbfgsParams
from .model import (
    CouplingMatrix,
    FieldSpec,
    SpinConfiguration,
    WeightedGraph,
    discretize,
    generalized_energy,
    ising_from_maxcut,
    maxcut_value,
    xy_energy,
    xy_gradient,
)
from .records import RunRecord

__all__ = [
    "BasinHoppingParams", "CouplingMatrix", "CouplingMode", "FieldSpec", "GdParams", "IntegrationError",
    "LbfgsParams", "OscillatorState", "RunRecord", "SpinConfiguration", "WeightedGraph", "basin_hopping",
    "discretize", "generalized_energy", "ising_from_maxcut", "lbfgs_minimize", "maxcut_value", "mc_multistart",
    "run_gd", "run_gd_batch", "xy_energy", "xy_gradient",
]
