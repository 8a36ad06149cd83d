"""Output-feedback stabilization toolkit for positive cooperative systems.

Models of the class ``xdot = u*f(x) + c*psi(x)`` with a measured scalar
output ``psi`` are represented, machine-checked against the structural
hypotheses that make the feedback ``u = gamma*psi(x)`` globally stabilizing,
solved for equilibria, and simulated (including switched open-to-closed-loop
runs, limit-cycle peak analysis, and Lyapunov-exponent chaos detection).

Hot stepping loops run in a compiled extension when available; see
:func:`kernel_backend` for the active backend.
"""

from ._core import compiled_available, kernel_backend
from .equilibrium import (
    EquilibriumResult,
    StabilityRecord,
    classify_stability,
    closed_loop_equilibrium,
    enumerate_open_loop_equilibria,
    s2_x3_fixed_point,
    solve_constant_input,
)
from .errors import (
    ConvergenceError,
    EvaluationError,
    ExpressionSyntaxError,
    IntegrationError,
    ModelFileError,
    PosctrlError,
)
from .expr import differentiate, evaluate, jacobian, parse_expression, parse_model_file, serialize
from .metzler import Eigenpair, dominant_eigenpair, is_hurwitz, is_metzler, luenberger_test
from .model import (
    ConstantInput,
    Scenario,
    SystemModel,
    builtin,
    builtin_names,
    rhs_closed_loop,
    rhs_constant_input,
    rhs_open_loop,
)
from .sim import (
    IntegratorConfig,
    Trajectory,
    detect_convergence,
    integrate,
    largest_lyapunov_exponent,
    peak_amplitudes,
)
from .verify import (
    SampleDomain,
    VerificationReport,
    check_h2,
    check_order_preservation,
    compute_beta_m,
    gas_evidence,
)

__version__ = "0.1.0"
