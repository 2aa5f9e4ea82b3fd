import math

import numpy as np
import pytest

from ailfem.theory import (TheoryError, TheoryInputs, energy_bracket,
                           estimator_monotonicity_constant, q_energy, q_norm,
                           thresholds)


def test_q_norm_golden_values():
    assert q_norm(0.25, 1.0, 2.0) ** 2 == pytest.approx(0.75, abs=1e-12)
    # linear symmetric case: alpha = L, delta = 1/L gives exact annihilation
    assert q_norm(1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_q_norm_limit_and_domain():
    assert q_norm(1e-9, 1.0, 2.0) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(TheoryError):
        q_norm(0.5, 1.0, 2.0)      # 2 alpha / L^2 = 0.5 boundary excluded
    with pytest.raises(TheoryError):
        q_norm(0.0, 1.0, 2.0)


def test_q_norm_minimal_at_optimal_delta():
    alpha, L = 1.0, 2.0
    best = alpha / L**2
    q_best = q_norm(best, alpha, L)
    assert q_best**2 == pytest.approx(1.0 - alpha**2 / L**2, abs=1e-14)
    for delta in np.linspace(0.01, 2 * alpha / L**2 - 0.01, 37):
        assert q_norm(float(delta), alpha, L) >= q_best - 1e-14


def test_q_energy_golden_values():
    # global Lipschitz case (delta = 1/L admissible for L < 2 alpha):
    # the optimum reproduces 1 - alpha^2 / L^2
    for alpha, L in ((1.0, 1.25), (1.0, 1.5), (1.0, 1.9), (2.0, 3.0)):
        val = q_energy(1.0 / L, alpha, L, L)
        assert val**2 == pytest.approx(1.0 - alpha**2 / L**2, abs=1e-12)
    assert q_energy(1.0, 1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert q_energy(1e-9, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-8)


def test_q_energy_optimal_delta_in_global_case():
    alpha, L = 1.0, 1.5
    ref = q_energy(1.0 / L, alpha, L, L)
    for delta in np.linspace(0.02, 2 * alpha / L**2 - 0.02, 29):
        assert q_energy(float(delta), alpha, L, L) >= ref - 1e-14


def test_q_energy_domain():
    with pytest.raises(TheoryError):
        q_energy(0.51, 1.0, 2.0, 2.0)


def test_energy_bracket_golden():
    kappa, big_k = energy_bracket(0.5, 1.0, 2.0)
    assert kappa == pytest.approx(1.0, abs=1e-12)
    assert big_k == pytest.approx(1.5, abs=1e-12)


def test_energy_bracket_ordering_and_domain():
    for delta, alpha, L in ((0.1, 1.0, 3.0), (0.4, 0.5, 2.0), (0.9, 1.0, 1.5)):
        kappa, big_k = energy_bracket(delta, alpha, L)
        assert 0.0 < kappa <= big_k
    with pytest.raises(TheoryError):
        energy_bracket(1.0, 1.0, 2.0)


def test_thresholds_formulas():
    inputs = TheoryInputs(alpha=2.0, L_values={"2M": 3.0, "3M": 2.0},
                          delta=0.25, M=1.0, C_stab=1.0)
    out = thresholds(inputs, q_e=0.5, theta=0.4, lam=0.05)
    assert out.lambda_opt == pytest.approx((0.5 / 0.5) * 1.0, abs=1e-12)
    ratio = 0.05 / out.lambda_opt
    assert out.theta_prime == pytest.approx((0.4 + ratio) / (1 - ratio), abs=1e-12)
    assert out.c_cea == pytest.approx(3.0 / 2.0, abs=1e-12)
    assert out.tau == pytest.approx(2.0 * (1.0 + 3.0 * math.sqrt(2.0 / 2.0)))
    assert out.tau_linear == pytest.approx(2.0 * (1.0 + 3.0 * (2.0 / 2.0)))


def test_theta_prime_increases_with_lambda():
    inputs = TheoryInputs(alpha=1.0, L_values={"2M": 2.0, "3M": 2.0},
                          delta=0.25, M=1.0, C_stab=1.0)
    values = [thresholds(inputs, q_e=0.5, theta=0.3, lam=lam).theta_prime
              for lam in (1e-9, 0.05, 0.1, 0.2)]
    assert values[0] == pytest.approx(0.3, abs=1e-6)
    assert all(b > a for a, b in zip(values, values[1:]))


def test_thresholds_validation():
    inputs = TheoryInputs(alpha=1.0, L_values={"2M": 2.0, "3M": 2.0},
                          delta=0.25, M=1.0, C_stab=1.0)
    with pytest.raises(TheoryError):
        thresholds(inputs, q_e=1.0, theta=0.5, lam=0.1)
    lam_opt = thresholds(inputs, q_e=0.5, theta=0.5, lam=0.01).lambda_opt
    with pytest.raises(TheoryError):
        thresholds(inputs, q_e=0.5, theta=0.5, lam=1.1 * lam_opt)
    with pytest.raises(TheoryError):
        TheoryInputs(alpha=1.0, L_values={}, delta=0.1, M=1.0).L("6M")


def test_monotonicity_constant_formula():
    val = estimator_monotonicity_constant(1.0, 1.0, 1.0)
    assert val == pytest.approx(math.sqrt(2.0 + 8.0 * 2.0), abs=1e-14)
