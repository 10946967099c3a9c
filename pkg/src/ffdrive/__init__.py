"""Fast-forward driving for excited bound states of 1-D Hamiltonians.

Builds a divergence-free velocity field on the adiabatic energy shell of a
time-dependent potential, derives the auxiliary driving potential from it,
and verifies the resulting shortcut both quantum mechanically (wavefunction
propagation, eigenstate populations) and classically (trajectory ensembles,
angle distributions, sideband weights).
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalError

__all__ = ["ConfigError", "NumericalError", "__version__"]
