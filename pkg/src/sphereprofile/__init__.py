"""Numerical experiments on extension estimates for the sphere region Gamma:
quadrature, extension norms, cap decompositions and constant comparisons."""

__version__ = "0.1.0"

from .errors import DomainError, FitError, ResolutionError, SphereProfileError, ValidationError
from .geometry import CapNet, CapSpec, build_cap_net, whitney_pairs
from .quadrature import (DiskGrid, FlatGrid, FlatSamples, NormEstimate, SpaceTimeGrid,
                         SurfaceDensity, build_ball_grid, build_cap_grid, build_disk_grid,
                         lp_norm)
from .extension import (ConventionTag, ModulationParams, extend_sphere,
                        even_norm_via_convolution, sphere_quotient)
from .refinement import bilinear_interaction, cap_concentration, decay_fit, xpq_norm
from .decomposition import (DecompositionReport, Profile, extract_profiles, first_decomposition,
                            orthogonality_report, plant_sequence, synthesize)
from .constants import ComparisonReport, ascend_R, comparison_report, estimate_R_P
