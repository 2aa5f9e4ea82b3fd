"""Adaptive iteratively linearized FEM for strongly monotone semilinear PDEs."""

from .adaptivity import (AdaptiveConfig, AdaptivityError, AitkenResult, MarkResult,
                         QuasiError, RunLog, StepRecord, aitken_extrapolate,
                         approx_class_sup, doerfler_mark, fit_loglog_slope,
                         quasi_error, rate_fit, record_from_csv, record_to_csv,
                         run_ailfem_idealized, run_ailfem_practical, stopping_met)
from .estimator import (IndicatorField, dual_indicators, eps_robust_indicators,
                        indicators_for, residual_indicators, total)
from .goal import (GOAL_REFERENCE, GoalSetup, default_goal_setup, goal_value,
                   product_estimator, run_gailfem, solve_dual)
from .mesh import (MeshError, Triangulation, geometry, initial_mesh, refine_nvb,
                   uniform_refine)
from .problem import (ModelProblem, Nonlinearity, Operators, builtin_problem,
                      energy, error_norm, estimate_M, list_builtin_problems,
                      residual_functional)
from .solver import LinearSolveReport, SolverError, solve_spd, zarantonello_step
from .space import (DiscreteFunction, FeSpace, QuadratureRule, build_space,
                    evaluate, prolongate, triangle_rule)
from .theory import (TheoryInputs, Thresholds, energy_bracket,
                     estimator_monotonicity_constant, q_energy, q_norm, thresholds)

__version__ = "0.1.0"
