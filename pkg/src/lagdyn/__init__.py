"""Discovery of Lagrangian densities and diffusion terms from ensemble data.

The package simulates stochastically excited mechanical systems and fields,
builds candidate descriptor libraries, and recovers interpretable models
(Lagrangian, noise gain, equations of motion, Hamiltonian) by sparse
regression on ensemble statistics.
"""

from lagdyn.errors import (
    ConfigError,
    LagdynError,
    RegressionError,
    SimulationDivergedError,
    StabilityError,
    UnsupportedFormError,
)

__all__ = [
    "ConfigError",
    "LagdynError",
    "RegressionError",
    "SimulationDivergedError",
    "StabilityError",
    "UnsupportedFormError",
]

__version__ = "0.1.0"
