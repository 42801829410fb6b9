"""Max-plus solver for steady HJB equations of switching linear-quadratic control.

The value function is kept as a maximum of quadratic forms.  Each step
pushes every form through the indefinite Riccati flow of every mode, and a
pruning rule keeps the basis small with a certified relative error.
"""
__version__ = "0.1.0"

from .errors import (AssumptionError, BasisLimitError, DegenerateInstanceError, DomainError,
                     FiniteEscapeError, HJBMaxPlusError, NumericalFailure, ParseError,
                     SamplingError, UsageError)
from .io import bundled_instance, load_instance, load_value, save_instance, save_value
from .problem import (InstanceConstants, ModeData, SwitchedLQInstance, derive_constants,
                      effective_sigma, hamiltonian, mode_hamiltonians)
from .propagation import (MaxPlusValue, PruneConfig, QuadraticForm, evaluate, gradient, prune,
                          residual_sup, solve, step, value_distance, value_distance_upper)
from .report import GridSpec, SolveReport
from .riccati import FlowConfig, flow, flow_composed, phi
from .symmat import (OrderInterval, dominance_factor, eigen_sym, loewner_leq, opnorm,
                     thompson_distance)

__all__ = [name for name in dir() if not name.startswith("_")]
