"""Invariant-based design and simulation of two-ion separation through a junction."""
from importlib.metadata import PackageNotFoundError, version

from ._backend import BACKEND
from .model import GaussianState, IonSpecies, QuadraticHamiltonian, UnitSystem
from .protocols import SeparationSpec, build_separation, run, sweep

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "BACKEND",
    "GaussianState",
    "IonSpecies",
    "QuadraticHamiltonian",
    "SeparationSpec",
    "UnitSystem",
    "build_separation",
    "run",
    "sweep",
    "__version__",
]
