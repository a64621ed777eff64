"""Computational laboratory for random interlacements on Z^d.

Modules
-------
green        lattice Green function and return probabilities
potential    equilibrium measure, capacity, hitting and vacancy laws
sampler      leveled interlacement traces on box windows
percolation  vacant clusters, crossing events, finite-volume critical levels
renorm       multiscale scale/level sequences and induction checks
bounds       exponential moment bounds and the Peierls dimension condition
"""

__version__ = "0.1.0"

from .errors import DimensionError, InterlacementError, NumericalError, PreconditionError
from .green import GreenBlock, GreenTable, get_table, green_at, return_prob
from .potential import (EquilibriumProfile, FiniteSet, capacity, covariance_asymptote,
                        equilibrium, exact_covariance, fdd_prob, hit_prob, hit_prob_bounds,
                        separates_sphere, vacancy_prob)
from .sampler import (LeveledOccupancy, Trajectory, escape_bias_bound, occupation_functional,
                      occupied_mask, sample_interlacement, vacant_mask)
from .percolation import (ClusterLabels, CrossingEstimate, CrossingGeometry, bracket_u_star,
                          empirical_covariance, estimate_crossing, eta_proxy, eta_samples,
                          label_clusters, occupied_planar_crossing, vacant_crossing)
from .renorm import (ScaleLevelSequence, build_levels, build_scales, integer_root,
                     verify_induction_planar, verify_induction_vacant)
from .bounds import (BoundParams, chi, exp_moment_bound, lambda_tilde, peierls_condition,
                     u1_threshold)
