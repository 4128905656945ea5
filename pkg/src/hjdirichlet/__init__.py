"""Hamilton-Jacobi Dirichlet problems via action minimization.

The value function ``u(x) = inf_y g(y) + Phi(y, x)`` over boundary points is
computed from constrained least-action paths; its singular set is traced
with generalized characteristics.
"""
from .action import MinimizerResult, action_integral, fundamental_solution, grad_x, grad_y, lipschitz_bound
from .config import Scenario
from .config import load as load_scenario
from .errors import *  # noqa: F401,F403
from .geometry import Disk, ImplicitDomain, Polygon, Rectangle, make_domain
from .kernels import BACKEND
from .lagrangian import (
    LagrangianSpec,
    ScalarField,
    gauge_transform,
    hamiltonian,
    hamiltonian_p,
    kinetic,
    legendre,
    inverse_legendre,
    mechanical,
    polynomial_kinetic,
    quadratic,
    tonelli_check,
)
from .mane import critical_value, potential, time_horizon_bound
from .options import DEFAULT, Options
from .singular import (
    SingularChain,
    Superdifferential,
    is_critical,
    is_cut,
    is_singular,
    limiting_gradients,
    minimal_selection,
    step_maximizer,
    trace_general,
    trace_mechanical,
)
from .solver import (
    BoundaryData,
    Problem,
    ValueField,
    ValueResult,
    backtrace,
    boundary_covector,
    check_compatibility,
    exit_time,
    solve_field,
    value,
)
from .verify import VerificationReport, run_checks

__version__ = "0.1.0"
