"""Certified Fourier-analytic upper bounds on Wasserstein distances.

Computes explicit upper bounds on generalized transport distances W_g
between probability measures on torus(1..3), su2 and so3, together with
independent oracles (exact linear programs, entropic solvers, Monte Carlo)
that every certified number is checked against.
"""

__version__ = "0.1.0"

from ._util import DominanceError, SolverError

__all__ = ["DominanceError", "SolverError", "__version__"]
