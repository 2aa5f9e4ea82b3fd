import numpy as np
import pytest
import scipy.sparse as sp

from ailfem.mesh import initial_mesh, uniform_refine
from ailfem.problem import ModelProblem, Operators, ZERO_NONLINEARITY, builtin_problem
from ailfem.solver import SolverError, solve_spd, zarantonello_step
from ailfem.space import build_space


def random_spd(n, rng):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_solve_identity():
    rhs = np.arange(1.0, 6.0)
    x, report = solve_spd(sp.identity(5, format="csr"), rhs, tol=1e-12)
    assert np.allclose(x, rhs, atol=1e-12)
    assert report.relative_residual <= 1e-12


def test_solve_zero_rhs():
    x, report = solve_spd(sp.identity(4, format="csr"), np.zeros(4))
    assert np.all(x == 0.0)
    assert report.iterations == 0


def test_solve_against_dense_elimination():
    rng = np.random.default_rng(0)
    A = random_spd(50, rng)
    b = rng.standard_normal(50)
    oracle = np.linalg.solve(A, b)
    for method in ("pcg", "direct"):
        x, report = solve_spd(sp.csr_matrix(A), b, tol=1e-12, method=method)
        assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)
        assert np.allclose(x, oracle, atol=1e-9)


def test_solve_rejects_bad_tolerance():
    with pytest.raises(SolverError):
        solve_spd(sp.identity(3, format="csr"), np.ones(3), tol=1e-3)


def fixed_setup(name="sine_gordon", m=1, refinements=2):
    prob = builtin_problem(name)
    mesh = initial_mesh(prob.domain)
    for _ in range(refinements):
        mesh = uniform_refine(mesh)
    space = build_space(mesh, m)
    return prob, space, Operators(prob, space)


def test_linear_problem_one_step_exactness():
    problem = ModelProblem(name="linear", epsilon=1.0,
                           nonlinearity=ZERO_NONLINEARITY,
                           norm_variant="energy", estimator_variant="standard",
                           domain="unit_square",
                           f=lambda x: np.ones(x.shape[:-1]))
    mesh = uniform_refine(uniform_refine(initial_mesh("unit_square")))
    space = build_space(mesh, 1)
    ops = Operators(problem, space)
    galerkin = ops.solve(ops.load)
    rng = np.random.default_rng(1)
    for _ in range(3):
        start = space.function(rng.standard_normal(space.dimension))
        result = zarantonello_step(problem, space, start, 1.0, operators=ops)
        assert np.allclose(result.coefficients, galerkin, atol=1e-10)


def test_fixed_point_is_stationary():
    prob, space, ops = fixed_setup()
    u = space.function()
    for _ in range(300):
        u_next = zarantonello_step(prob, space, u, 0.5, operators=ops)
        if ops.norm(u_next.coefficients - u.coefficients) < 1e-14:
            u = u_next
            break
        u = u_next
    moved = zarantonello_step(prob, space, u, 0.5, operators=ops)
    assert ops.norm(moved.coefficients - u.coefficients) <= 1e-12


def test_one_step_move_equals_scaled_dual_norm():
    prob, space, ops = fixed_setup()
    rng = np.random.default_rng(2)
    for delta in (0.25, 0.5, 1.0):
        w = space.function(rng.standard_normal(space.dimension))
        res = ops.residual(w)
        moved = zarantonello_step(prob, space, w, delta, operators=ops)
        lhs = ops.norm(moved.coefficients - w.coefficients)
        rhs = delta * ops.dual_norm(res)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_measured_contraction_below_q_norm_bound():
    prob, space, ops = fixed_setup()
    # discrete solution by stagnation
    u = space.function()
    for _ in range(300):
        u_next = zarantonello_step(prob, space, u, 0.5, operators=ops)
        if ops.norm(u_next.coefficients - u.coefficients) < 1e-14:
            u = u_next
            break
        u = u_next
    u_star = u

    def apply_op(v):
        return ops.matrix @ v.coefficients + ops.semilinear(v)

    rng = np.random.default_rng(4)
    delta = 0.5
    ratios, lhat = [], 0.0
    for _ in range(20):
        scale = rng.uniform(0.05, 1.0)
        d = rng.standard_normal(space.dimension)
        v = space.function(u_star.coefficients + scale * d / ops.norm(d))
        diff = ops.norm(v.coefficients - u_star.coefficients)
        lhat = max(lhat, ops.dual_norm(apply_op(v) - apply_op(u_star)) / diff)
        phi = zarantonello_step(prob, space, v, delta, operators=ops)
        ratios.append(ops.norm(phi.coefficients - u_star.coefficients) / diff)
    assert max(ratios) < 1.0
    bound = np.sqrt(1.0 - delta * (2.0 - delta * lhat**2))
    assert max(ratios) <= bound * 1.05


def test_step_requires_positive_delta():
    prob, space, ops = fixed_setup()
    with pytest.raises(SolverError):
        zarantonello_step(prob, space, space.function(), 0.0, operators=ops)
