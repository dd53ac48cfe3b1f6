"""Nonlocal maximum principle toolkit for dissipative active scalars.

Moduli of continuity, the nonlocal dissipation and velocity bounds they induce,
the key differential inequality with a constant search, and a pseudo-spectral
solver for fractional Burgers, SQG and modified SQG.
"""
from .analysis import (breakthrough_margin, empirical_modulus, holder_seminorm, regularization_experiment,
                       scale_to_obey)
from .criterion import (CriterionConstants, CriterionReport, GridSpec, check_keyineq, dt_omega_family,
                        find_constants, xi0_solve)
from .dissipation import (QuadratureConfig, d_alpha, d_alpha_tail_bound, d_perp, fractional_laplacian_constant,
                          kernel_table, verify_kernel_bounds)
from .errors import BlowUpError, DomainError, QuadratureError, ValidationError
from .fields import BreakthroughPair, ExperimentRecord, ScalarField
from .moduli import (ModulusParams, PiecewiseModulus, d2_omega, d_omega, eval_omega, tangent_cap,
                     validate_modulus)
from .solver import SimConfig, run, simulate, step, velocity_from_theta
from .velocity import (EquationParams, omega_bound_burgers, omega_bound_msqg, omega_bound_sqg, verify_lemma43,
                       verify_ll23)

__version__ = "0.1.0"
