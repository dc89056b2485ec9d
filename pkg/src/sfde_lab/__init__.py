"""Numerical laboratory for stochastic fast diffusion with Dirichlet data in 1D."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .grid import Domain1D, DirichletLaplacian, GridFunction
from .noise import Additive, GeneralLipschitz, LinearMultiplicative, WienerPath, sample_path
from .scalar import DeltaSmoothing, PowerNonlinearity, YosidaRegularization, verify_scalar_inequalities
from .solver import SolverConfig, Trajectory, simulate, simulate_coupled

__all__ = [
    "BACKEND", "Domain1D", "DirichletLaplacian", "GridFunction",
    "Additive", "GeneralLipschitz", "LinearMultiplicative", "WienerPath", "sample_path",
    "DeltaSmoothing", "PowerNonlinearity", "YosidaRegularization", "verify_scalar_inequalities",
    "SolverConfig", "Trajectory", "simulate", "simulate_coupled",
]
