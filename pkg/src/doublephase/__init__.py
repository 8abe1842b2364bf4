"""Variable-exponent double phase Dirichlet problems on box grids."""

from .mesh import Grid, ScalarField, unit_square, gradient, truncate, connected_components, integrate
from .problem import Expr, ExponentField, WeightField, NonlinearitySpec, ProblemConfig
from .energy import energy_phi, residual, pairing
from .nehari import project_ray, project_pair, fibering, fibering_profile

__version__ = "0.1.0"
