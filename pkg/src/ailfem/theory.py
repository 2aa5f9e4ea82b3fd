"""Closed-form contraction constants and thresholds for diagnostics.

All functions are pure.  Conventions: alpha is the strong-monotonicity
constant, L[r] a local Lipschitz bound valid on the ball of radius r, delta
the damping parameter.  The iterate bound tau is computed with the square
root on L/alpha (the self-consistent variant); the linear variant is exposed
alongside for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional


class TheoryError(Exception):
    pass


@dataclass(frozen=True)
class TheoryInputs:
    alpha: float
    L_values: Dict[str, float]          # radius label ("2M", "3M", "6M", ...) -> bound
    delta: float
    M: float
    q_red: Optional[float] = None
    C_stab: Optional[float] = None
    C_rel: Optional[float] = None
    C_drel: Optional[float] = None

    def L(self, label: str) -> float:
        try:
            return self.L_values[label]
        except KeyError:
            raise TheoryError(f"no Lipschitz bound for radius {label!r}") from None


def q_norm(delta: float, alpha: float, L: float) -> float:
    """Norm-contraction factor sqrt(1 - delta (2 alpha - delta L^2)).

    Defined for 0 < delta < 2 alpha / L^2; minimal at delta = alpha / L^2
    with value sqrt(1 - alpha^2 / L^2)."""
    if not 0.0 < delta < 2.0 * alpha / L**2:
        raise TheoryError("delta outside (0, 2 alpha / L^2)")
    q2 = 1.0 - delta * (2.0 * alpha - delta * L**2)
    return math.sqrt(q2)


def q_energy(delta: float, alpha: float, L3M: float, L6M: float) -> float:
    """Energy-contraction factor sqrt(1 - (1 - delta L6M / 2) 2 delta alpha^2 / L3M).

    Defined for 0 < delta < 2 alpha / L6M^2; with a global Lipschitz bound L
    it is minimal at delta = 1/L with value sqrt(1 - alpha^2 / L^2)."""
    if not 0.0 < delta < 2.0 * alpha / L6M**2:
        raise TheoryError("delta outside (0, 2 alpha / L6M^2)")
    q2 = 1.0 - (1.0 - 0.5 * delta * L6M) * (2.0 * delta * alpha**2 / L3M)
    if not 0.0 <= q2 < 1.0:
        raise TheoryError(f"energy contraction factor {q2} outside [0, 1)")
    return math.sqrt(q2)


def energy_bracket(delta: float, alpha: float, L6M: float):
    """Per-step energy decrease bounds (kappa, K):
    kappa |du|^2 <= E(u^k) - E(u^{k+1}) <= K |du|^2 with
    kappa = 1/delta - L6M/2 and K = 1/delta - alpha/2."""
    if not 0.0 < delta < 2.0 / L6M:
        raise TheoryError("delta outside (0, 2 / L6M)")
    kappa = 1.0 / delta - 0.5 * L6M
    big_k = 1.0 / delta - 0.5 * alpha
    return kappa, big_k


@dataclass(frozen=True)
class Thresholds:
    lambda_opt: float
    theta_prime: float
    c_cea: float
    tau: float                          # 2 (M + 3M sqrt(L3M / alpha))
    tau_linear: float                   # 2 (M + 3M L3M / alpha), for comparison


def thresholds(inputs: TheoryInputs, q_e: float, theta: float,
               lam: float) -> Thresholds:
    """Adaptivity thresholds derived from a computed energy-contraction factor.

    lambda_opt = (1 - q_E) / (q_E C_stab) sqrt(alpha / 2);
    theta' = (theta + lam/lambda_opt) / (1 - lam/lambda_opt);
    C_cea = L[2M] / alpha.
    """
    if not 0.0 < q_e < 1.0:
        raise TheoryError("q_E must lie in (0, 1)")
    if inputs.C_stab is None or inputs.C_stab <= 0:
        raise TheoryError("thresholds require a fitted C_stab")
    lambda_opt = (1.0 - q_e) / (q_e * inputs.C_stab) * math.sqrt(inputs.alpha / 2.0)
    ratio = lam / lambda_opt
    if ratio >= 1.0:
        raise TheoryError("lambda exceeds lambda_opt; theta' undefined")
    theta_prime = (theta + ratio) / (1.0 - ratio)
    c_cea = inputs.L("2M") / inputs.alpha
    root = math.sqrt(inputs.L("3M") / inputs.alpha)
    tau = 2.0 * (inputs.M + 3.0 * inputs.M * root)
    tau_linear = 2.0 * (inputs.M + 3.0 * inputs.M * inputs.L("3M") / inputs.alpha)
    return Thresholds(lambda_opt=lambda_opt, theta_prime=theta_prime,
                      c_cea=c_cea, tau=tau, tau_linear=tau_linear)


def estimator_monotonicity_constant(c_stab_2m: float, c_cea: float,
                                    c_rel: float) -> float:
    """C_mon = sqrt(2 + 8 C_stab^2 (1 + C_cea^2) C_rel^2) over fitted inputs."""
    return math.sqrt(2.0 + 8.0 * c_stab_2m**2 * (1.0 + c_cea**2) * c_rel**2)
