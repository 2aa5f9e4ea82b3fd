"""Built-in semilinear model problems, energies, residuals, and the bound M.

A problem couples the diffusion scale eps (A = eps*I), a monotone reaction b
with derivative and antiderivative, loads f and vecf, and the norm variant
inducing the inner product.  For the singularly perturbed problem the norm
  |v|^2 = eps (grad v, grad v) + (v, v)
absorbs one copy of the identity from the strong-form reaction 2v + sin(v),
leaving the operator nonlinearity b(v) = v + sin(v); this makes the strong
monotonicity constant alpha = 1 exact for every built-in.  Estimators see the
untouched strong-form reaction, stored separately as ``reaction``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .space import (DiscreteFunction, FeSpace, assemble_inner_product,
                    assemble_load, assemble_semilinear_term, function_at,
                    nonlinear_rule)


class ProblemError(Exception):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    """Monotone scalar reaction: b with b(0) = 0, b' >= 0, antiderivative B."""

    b: Callable[[np.ndarray], np.ndarray]
    b_prime: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray]
    growth_degree: int
    formula: str = ""


ZERO_NONLINEARITY = Nonlinearity(
    b=lambda v: np.zeros_like(v),
    b_prime=lambda v: np.zeros_like(v),
    antiderivative=lambda v: np.zeros_like(v),
    growth_degree=1,
    formula="0",
)


@dataclass(frozen=True)
class ModelProblem:
    name: str
    epsilon: float
    nonlinearity: Nonlinearity          # operator reaction (after norm absorption)
    norm_variant: str                   # "energy" | "eps_weighted_h1"
    estimator_variant: str              # "standard" | "eps_robust"
    domain: str                         # initial-mesh name
    f: Optional[Callable] = None
    vecf: Optional[Callable] = None
    reaction: Optional[Nonlinearity] = None   # strong-form reaction for estimators
    exact: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    alpha: float = 1.0
    notes: str = ""

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ProblemError("epsilon must be positive")
        if self.reaction is None:
            object.__setattr__(self, "reaction", self.nonlinearity)


def _sine_gordon() -> ModelProblem:
    def exact(x):
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    def exact_gradient(x):
        s1, c1 = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        s2, c2 = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        return np.pi * np.stack([c1 * s2, s1 * c2], axis=-1)

    def f(x):
        u = exact(x)
        return 2.0 * np.pi**2 * u + u**3 + np.sin(u)

    nl = Nonlinearity(
        b=lambda v: v**3 + np.sin(v),
        b_prime=lambda v: 3.0 * v**2 + np.cos(v),
        antiderivative=lambda v: 0.25 * v**4 + 1.0 - np.cos(v),
        growth_degree=3,
        formula="v^3 + sin(v)",
    )
    return ModelProblem(
        name="sine_gordon", epsilon=1.0, nonlinearity=nl,
        norm_variant="energy", estimator_variant="standard",
        domain="unit_square", f=f, exact=exact, exact_gradient=exact_gradient,
        notes="manufactured load for u = sin(pi x1) sin(pi x2)")


def _singular_perturbation() -> ModelProblem:
    nl = Nonlinearity(
        b=lambda v: v + np.sin(v),
        b_prime=lambda v: 1.0 + np.cos(v),
        antiderivative=lambda v: 0.5 * v**2 + 1.0 - np.cos(v),
        growth_degree=1,
        formula="v + sin(v)",
    )
    reaction = Nonlinearity(
        b=lambda v: 2.0 * v + np.sin(v),
        b_prime=lambda v: 2.0 + np.cos(v),
        antiderivative=lambda v: v**2 + 1.0 - np.cos(v),
        growth_degree=1,
        formula="2v + sin(v)",
    )
    return ModelProblem(
        name="singular_perturbation", epsilon=1e-5, nonlinearity=nl,
        norm_variant="eps_weighted_h1", estimator_variant="eps_robust",
        domain="unit_square", f=lambda x: np.ones(x.shape[:-1]),
        reaction=reaction,
        notes="strong-form reaction 2v + sin(v); one identity absorbed by the norm")


def characteristic_field(line_value: float, side: str, direction) -> Callable:
    """Vector field chi * direction with chi the indicator of a half-plane
    {x1 + x2 <= c} (side 'below') or {x1 + x2 >= c} (side 'above')."""
    direction = np.asarray(direction, dtype=float)

    def field(x):
        s = x[..., 0] + x[..., 1]
        inside = s <= line_value if side == "below" else s >= line_value
        return inside[..., None] * direction

    return field


GOAL_F_LINE = 0.5
GOAL_G_LINE = 1.5


def _goal() -> ModelProblem:
    nl = Nonlinearity(
        b=lambda v: v**3,
        b_prime=lambda v: 3.0 * v**2,
        antiderivative=lambda v: 0.25 * v**4,
        growth_degree=3,
        formula="v^3",
    )
    return ModelProblem(
        name="goal", epsilon=1.0, nonlinearity=nl,
        norm_variant="energy", estimator_variant="standard",
        domain="goal", vecf=characteristic_field(GOAL_F_LINE, "below", (-1.0, 0.0)),
        notes="goal functional G(v) = -int_{x1+x2>=3/2} dv/dx1")


_BUILTINS = {
    "sine_gordon": _sine_gordon,
    "singular_perturbation": _singular_perturbation,
    "goal": _goal,
}


def builtin_problem(name: str) -> ModelProblem:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ProblemError(f"unknown problem {name!r}") from None


def list_builtin_problems():
    """Stable-ordered (name, problem) pairs of the built-ins."""
    return [(name, make()) for name, make in _BUILTINS.items()]


class Operators:
    """Assembled forms of one problem on one space.

    The inner-product matrix doubles as the linearization system matrix and
    is assembled (and factorized) once per mesh.
    """

    def __init__(self, problem: ModelProblem, space: FeSpace):
        self.problem = problem
        self.space = space
        self.matrix_full = assemble_inner_product(space, problem.norm_variant,
                                                  problem.epsilon)
        idx = space.interior_idx
        self.matrix = self.matrix_full[idx][:, idx].tocsc()
        self.load_full = assemble_load(space, problem.f, problem.vecf)
        self.load = self.load_full[idx]
        self._factor = None

    @property
    def factor(self):
        if self._factor is None:
            if self.matrix.shape[0] == 0:
                raise ProblemError("space has no interior dofs")
            self._factor = spla.splu(self.matrix)
        return self._factor

    def solve(self, rhs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Direct solve with one round of iterative refinement at need."""
        x = self.factor.solve(rhs)
        bnorm = np.linalg.norm(rhs)
        if bnorm > 0:
            for _ in range(3):
                res = rhs - self.matrix @ x
                if np.linalg.norm(res) <= tol * bnorm:
                    break
                x = x + self.factor.solve(res)
        return x

    def norm(self, vec_or_function) -> float:
        """Energy norm of an interior coefficient vector or function."""
        v = (vec_or_function.coefficients
             if isinstance(vec_or_function, DiscreteFunction) else np.asarray(vec_or_function))
        return float(np.sqrt(max(v @ (self.matrix @ v), 0.0)))

    def semilinear(self, u: DiscreteFunction) -> np.ndarray:
        return assemble_semilinear_term(self.space, self.problem.nonlinearity.b, u)[
            self.space.interior_idx]

    def residual(self, u: DiscreteFunction) -> np.ndarray:
        """Interior vector of F(phi_i) - <A u, phi_i>."""
        return self.load - self.matrix @ u.coefficients - self.semilinear(u)

    def dual_norm(self, residual_vec: np.ndarray) -> float:
        """Discrete dual norm via the Riesz solve r -> K^{-1} r."""
        riesz = self.solve(residual_vec)
        return float(np.sqrt(max(residual_vec @ riesz, 0.0)))

    def energy(self, u: DiscreteFunction) -> float:
        """E(u) = 1/2 <u, u> + int B(u) - F(u) via over-integration."""
        quad = 0.5 * float(u.coefficients @ (self.matrix @ u.coefficients))
        rule = nonlinear_rule(self.space.degree)
        uq = function_at(self.space, u.full(), rule.points)
        bq = np.asarray(self.problem.nonlinearity.antiderivative(uq))
        _, _, _, det = self.space.affine
        nonlin = float(np.einsum("q,eq->e", rule.weights, bq) @ (0.5 * det))
        return quad + nonlin - float(self.load @ u.coefficients)


def energy(problem: ModelProblem, u: DiscreteFunction,
           operators: Optional[Operators] = None) -> float:
    ops = operators or Operators(problem, u.space)
    return ops.energy(u)


def residual_functional(problem: ModelProblem, space: FeSpace, w: DiscreteFunction,
                        operators: Optional[Operators] = None) -> np.ndarray:
    ops = operators or Operators(problem, space)
    return ops.residual(w)


def estimate_M(problem: ModelProblem, space: FeSpace, safety: float = 2.0,
               operators: Optional[Operators] = None) -> float:
    """Bound on |u*| from the discrete dual norm of F (b(0) = 0 gives A0 = 0).

    The discrete Riesz estimate underestimates the continuous dual norm, so a
    fixed safety factor keeps the criterion |u| <= 2M meaningful.
    """
    ops = operators or Operators(problem, space)
    return safety * ops.dual_norm(ops.load) / problem.alpha


def error_norm(problem: ModelProblem, u: DiscreteFunction, exact, exact_gradient) -> float:
    """Energy-norm distance of a discrete function to a smooth reference."""
    space = u.space
    rule = nonlinear_rule(space.degree)
    x = space.element_points(rule.points)
    full = u.full()
    gh = np.einsum("ei,eqid->eqd", full[space.elem_dofs],
                   space.physical_gradients(rule.points))
    gref = np.asarray(exact_gradient(x))
    diff2 = problem.epsilon * ((gref - gh) ** 2).sum(-1)
    if problem.norm_variant == "eps_weighted_h1":
        uh = function_at(space, full, rule.points)
        diff2 = diff2 + (np.asarray(exact(x)) - uh) ** 2
    _, _, _, det = space.affine
    return float(np.sqrt(np.einsum("q,eq->e", rule.weights, diff2) @ (0.5 * det)))
