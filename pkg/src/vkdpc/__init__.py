"""Offset-free predictive control with velocity-form kernel models.

A pendulum plant, kernel regression of velocity-form matrices, terminal
ingredients and a sequential-QP controller that runs on either a learned
or an analytic model.
"""

from .analytic import AnalyticVelocityModel, analytic_gradients, analytic_velocity_matrices
from .controller import (
    ControllerConfig,
    ControllerError,
    ControllerState,
    ScheduleSequence,
    SolveReport,
    condense_qp,
    control_update,
    shift_warm_start,
    solve_vkdpc,
    solve_vnmpc,
)
from .kernels import CenterSet, KernelSpec, gram, kernel_eval, kernel_matrix, kernel_vector
from .learning import (
    ExtendedState,
    VelocityKernelModel,
    build_prediction_matrices,
    build_regressors,
    fit_from_dataset,
    fit_velocity_model,
    validate_open_loop,
)
from .optim import QpProblem, QpSolution, min_norm_lstsq, solve_dare, solve_lp, solve_qp
from .plant import (
    Dataset,
    DisturbanceProfile,
    ExcitationConfig,
    PendulumParams,
    collect_dataset,
    generate_excitation,
    multisine,
    pendulum_step,
)
from .polytope import Polytope, hausdorff, polytope_pre, polytope_reduce
from .terminal import (
    TerminalCache,
    TerminalIngredients,
    check_assumption1,
    compute_terminal_ingredients,
    max_invariant_set,
)

__version__ = "0.1.0"
