"""Series solutions, diffusion Monte Carlo and convexity checks for

    (1/2) sum_ij (delta_ij + x_i x_j) d_i d_j u = c   on R^d,

with linear growth u(r theta) ~ r g(theta) prescribed at infinity.
"""

from .convexity import ConvexityReport, cone_function, midpoint_scan, theorem2_harness
from .diffusion import McConfig, McEstimate
from .harmonics import BoundarySpec, project
from .radial import f_0, f_l, mode, scale_h
from .solver import EllipticSolution, boundary_gap, constant_c, residual, solve
from .specfun import gamma_d, hyp2f1_negaxis, log_gamma

__all__ = [
    "BoundarySpec", "ConvexityReport", "EllipticSolution", "McConfig", "McEstimate",
    "boundary_gap", "cone_function", "constant_c", "f_0", "f_l", "gamma_d",
    "hyp2f1_negaxis", "log_gamma", "midpoint_scan", "mode", "project", "residual",
    "scale_h", "solve", "theorem2_harness",
]
