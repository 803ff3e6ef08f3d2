"""Equilibrium measures, Fekete configurations and ensemble sampling for
weighted energies with a doubled Vandermonde interaction."""

from .errors import (DomainError, NoConvergenceError, NumericalError,
                     ParameterError, ResourceError, StructuralError)
from .geometry import (AdmissibilityReport, DomainSet, GridSet, MapSpec,
                       ShellSchedule, TruncationOptions, WeightSpec,
                       adaptive_truncation, build_grid, check_f_admissible,
                       check_strong_f_admissible, psi)
from .kernel import (DiscreteMeasure, KernelMatrix, assemble_kernel_matrix,
                     classical_capacity, energy, log_energy, modified_kernel,
                     modified_potential, potential, pushforward_energy,
                     weighted_log_energy)
from .equilibrium import (EquilibriumResult, ResidualReport, SolverOptions,
                          certify_minimizer, frostman_check, minimize_energy,
                          project_simplex, rate_function, solve_on_domain,
                          solve_on_grid)
from .fekete import (Configuration, FeketeSeries, delta_k, empirical_measure,
                     exchange_optimize, fekete_sequence, greedy_leja, log_vdm,
                     make_configuration, tightness_report)
from .ensemble import (BaseMeasure, CdfBall, ChainState, LdpReport,
                       MassDensityReport, NeighborhoodMass, SampleBatch,
                       ZkEstimate, ZkSeries, estimate_zk_mc, exact_zk_grid,
                       ldp_slope, mass_density_check, mcmc_sample,
                       neighborhood_mass, tail_probability, zk_root_sequence)
from .extremal import (BwBoundReport, GreenFunctionSpec, bw_bound_check,
                       green_disk, green_interval, wkq_lower_estimate)

__version__ = "0.1.0"
