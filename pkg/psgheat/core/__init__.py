from .fem import (
    build_mesh, assemble_stiffness, assemble_mass, solve_dirichlet, conjugate_gradient,
    restrict_by_injection, P1Space, function_space, l2_inner, l2_norm, h1_seminorm
)
from .sampling import draw, field_from_draw, inverse_moments
from .heat_model import HeatModel, project_box, analytic_case, initial_control
from .psg import (
    tau, run_psg, averaged_iterate, averaging_weights, step_sums, RunningAverage,
    GradientOracle, HeatGradientOracle, BiasedOracle, wrap_with_bias, check_bias_schedule
)
from .analysis import (
    lemma_constants, predicted_envelopes, fit_rate, model_constants, gradient_bound,
    recursion_violations, random_admissible_tuples
)

__all__ = [
    'build_mesh', 'assemble_stiffness', 'assemble_mass', 'solve_dirichlet', 'conjugate_gradient',
    'restrict_by_injection', 'P1Space', 'function_space', 'l2_inner', 'l2_norm', 'h1_seminorm',
    'draw', 'field_from_draw', 'inverse_moments',
    'HeatModel', 'project_box', 'analytic_case', 'initial_control',
    'tau', 'run_psg', 'averaged_iterate', 'averaging_weights', 'step_sums', 'RunningAverage',
    'GradientOracle', 'HeatGradientOracle', 'BiasedOracle', 'wrap_with_bias', 'check_bias_schedule',
    'lemma_constants', 'predicted_envelopes', 'fit_rate', 'model_constants', 'gradient_bound',
    'recursion_violations', 'random_admissible_tuples'
]
