"""Reaction-diffusion particle system on the discrete torus.

Simulation (compiled kernel with pure-Python fallback), exact small-system
verification, discrete mass flows, fluctuation-field statistics, and
concentration-inequality checks.
"""

__version__ = "0.1.0"

from . import concentration, dynamics, exact, flows, fluct, lattice  # noqa: F401
from .engine import active_engine, have_compiled  # noqa: F401
