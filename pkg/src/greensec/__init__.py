"""Security games with community informants: tip-aware patrols against quantal-response attackers."""

from .bilevel import BiLevelSolution, expected_attack_mass, inner_lp, level0_pair, outer_optimize
from .evaluate import (
    EvaluationResult,
    InformantEvaluator,
    eval_exact,
    eval_monte_carlo,
    eval_sampled,
    eval_sisi,
    eval_truncated,
    truncation_bound,
)
from .levelk import iterate_levels, iterate_levels_single, solve_fixed_point, solve_fixed_point_single
from .model import (
    GameInstance,
    InstanceError,
    SocialGraph,
    TargetPayoffs,
    generate_instance,
    load_instance,
    quantal_response,
    save_instance,
    validate_instance,
)
from .qri import solve_qri
from .routine import solve_routine
from .select import budget_tradeoff, select_exhaustive, select_greedy_baseline, select_gsa
from .tips import greedy_allocate

__version__ = "0.1.0"

__all__ = [
    "BiLevelSolution",
    "EvaluationResult",
    "GameInstance",
    "InformantEvaluator",
    "InstanceError",
    "SocialGraph",
    "TargetPayoffs",
    "budget_tradeoff",
    "eval_exact",
    "eval_monte_carlo",
    "eval_sampled",
    "eval_sisi",
    "eval_truncated",
    "expected_attack_mass",
    "generate_instance",
    "greedy_allocate",
    "inner_lp",
    "iterate_levels",
    "iterate_levels_single",
    "truncation_bound",
    "level0_pair",
    "load_instance",
    "outer_optimize",
    "quantal_response",
    "save_instance",
    "select_exhaustive",
    "select_greedy_baseline",
    "select_gsa",
    "solve_fixed_point",
    "solve_fixed_point_single",
    "solve_qri",
    "solve_routine",
    "validate_instance",
]
