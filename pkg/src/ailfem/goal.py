"""Goal-oriented driver: linearized dual problem, goal functional, product
estimator, and combined primal/dual marking.

The goal functional G(v) = -int_{Omega_g} dv/dx1 integrates over the corner
region Omega_g = {x1 + x2 >= 3/2}; every mesh must keep elements entirely
inside or outside that region (guaranteed by bisection of the aligned initial
mesh).  Marking refines the smaller of the two minimal bulk sets computed
from the primal and dual indicators, ties going to the primal set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .adaptivity import (AdaptiveConfig, AdaptivityError, LevelState, MarkResult,
                         RunLog, _run_driver, doerfler_mark)
from .estimator import dual_indicators, total
from .mesh import Triangulation
from .problem import (GOAL_G_LINE, ModelProblem, builtin_problem,
                      characteristic_field)
from .space import (DiscreteFunction, FeSpace, assemble_load, assemble_stiffness,
                    assemble_weighted_mass, function_at, gradient_at,
                    nonlinear_rule, triangle_rule)

GOAL_REFERENCE = -0.0015849518088245


class GoalError(Exception):
    pass


@dataclass(frozen=True)
class GoalSetup:
    primal: ModelProblem
    g: object
    goal_reference: Optional[float] = GOAL_REFERENCE


def default_goal_setup() -> GoalSetup:
    return GoalSetup(primal=builtin_problem("goal"),
                     g=characteristic_field(GOAL_G_LINE, "above", (-1.0, 0.0)))


def goal_region_elements(mesh: Triangulation, tol: float = 1e-12) -> np.ndarray:
    """Bool mask of elements inside Omega_g; raises on misalignment."""
    s = mesh.vertices[mesh.elements].sum(axis=-1)            # (e, 3) x1 + x2
    inside = s.min(axis=1) >= GOAL_G_LINE - tol
    outside = s.max(axis=1) <= GOAL_G_LINE + tol
    if not np.all(inside | outside):
        raise GoalError("mesh is not aligned with the goal region boundary")
    return inside


def goal_value(u: DiscreteFunction) -> float:
    """G(u) = -int over the goal region of du/dx1 (exact per-element integral)."""
    space = u.space
    inside = goal_region_elements(space.mesh)
    if not inside.any():
        return 0.0
    rule = triangle_rule(max(space.degree, 1))
    grads = gradient_at(space, u.full(), rule.points)        # (e, q, 2)
    per_elem = np.einsum("q,eq->e", rule.weights, grads[..., 0])
    return float(-(per_elem[inside] @ space.mesh.geom.area[inside]))


def solve_dual(space: FeSpace, w: DiscreteFunction, problem: ModelProblem,
               g, tol: float = 1e-12) -> DiscreteFunction:
    """Linearized adjoint solve: (grad z, grad v) + (b'(w) z, v) = (g, grad v)."""
    rule = nonlinear_rule(space.degree)
    wq = function_at(space, w.full(), rule.points)
    weight = np.asarray(problem.nonlinearity.b_prime(wq))
    if np.any(weight < -1e-12):
        raise GoalError("dual weight b'(w) is negative")
    matrix = assemble_stiffness(space) + assemble_weighted_mass(
        space, np.maximum(weight, 0.0), rule)
    rhs = assemble_load(space, vecf=g)
    idx = space.interior_idx
    mat_int = matrix[idx][:, idx].tocsc()
    rhs_int = rhs[idx]
    lu = spla.splu(mat_int)
    z = lu.solve(rhs_int)
    bnorm = np.linalg.norm(rhs_int)
    if bnorm > 0:
        for _ in range(3):
            res = rhs_int - mat_int @ z
            if np.linalg.norm(res) <= tol * bnorm:
                break
            z = z + lu.solve(res)
        else:
            raise GoalError("dual solve did not reach the requested tolerance")
    return space.function(z)


def product_estimator(eta: float, zeta: float) -> float:
    """Combined steering quantity eta * sqrt(eta^2 + zeta^2) from the totals."""
    return eta * math.hypot(eta, zeta)


def combined_marking(eta_field, zeta_field, theta: float, c_mark: float) -> MarkResult:
    """Smaller of the minimal primal/dual bulk sets; ties favor the primal set."""
    primal = doerfler_mark(eta_field, theta, c_mark)
    if primal.exact:
        return primal
    dual = doerfler_mark(zeta_field, theta, c_mark)
    if dual.exact:
        return primal
    if len(dual.elements) < len(primal.elements):
        return dual
    return primal


def run_gailfem(setup: GoalSetup, config: AdaptiveConfig, sink=None) -> RunLog:
    """Practical driver plus one dual solve per level, product-estimator and
    goal-error logging, and combined marking."""
    problem = setup.primal
    if not config.adaptive_delta:
        config = replace(config, adaptive_delta=True)
    stash = {}

    def level_hook(state: LevelState) -> dict:
        z = solve_dual(state.space, state.u, problem, setup.g)
        zeta_field = dual_indicators(problem, state.space, state.u, z, g=setup.g)
        zeta = total(zeta_field)
        stash["zeta_field"] = zeta_field
        gval = goal_value(state.u)
        gerr = (abs(gval - setup.goal_reference)
                if setup.goal_reference is not None else math.nan)
        return dict(zeta=zeta, product_estimator=product_estimator(state.eta, zeta),
                    goal_value=gval, goal_error=gerr)

    def mark_hook(state: LevelState) -> MarkResult:
        zeta_field = stash.pop("zeta_field", None)
        if zeta_field is None:
            raise AdaptivityError("dual indicators missing at marking time")
        return combined_marking(state.eta_field, zeta_field, config.theta,
                                config.c_mark)

    return _run_driver(problem, config, sink=sink, level_hook=level_hook,
                       mark_hook=mark_hook)
