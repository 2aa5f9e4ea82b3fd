"""Bulk marking, stopping criteria, and the adaptive solve-estimate-mark-refine
drivers with work accounting.

The drivers interleave an inner damped-linearization loop with mesh
refinement.  The idealized driver runs a fixed damping parameter delta; the
practical driver adapts a running Lipschitz estimate L (delta = 1/L,
q^2 = 1 - delta^2) and discards any step that violates the energy-descent
guard E(u^k) <= q^2 E(u^{k-1}), doubling-in-sqrt(2) L on each failure.
Work is counted as the cumulative number of elements over all performed
linearization solves, discarded attempts included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .estimator import IndicatorField, indicators_for, total
from .mesh import Triangulation, initial_mesh, refine_nvb, uniform_refine
from .problem import ModelProblem, Operators, error_norm, estimate_M
from .solver import zarantonello_step
from .space import DiscreteFunction, build_space, prolongate


class AdaptivityError(Exception):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


# -- configuration and records ---------------------------------------------

STOPPING_VARIANTS = ("ib", "ib_prime", "ib_double_prime")


@dataclass(frozen=True)
class AdaptiveConfig:
    degree: int = 1
    theta: float = 0.5
    lam: float = 0.1
    c_mark: float = 1.0
    delta: Optional[float] = None      # fixed damping (idealized driver)
    adaptive_delta: bool = False       # practical driver: delta_l = 1/L_l
    L0: float = 1.0
    beta: float = math.sqrt(2.0)
    stopping: str = "ib"
    work_budget: float = 5e6
    eta_tol: float = 0.0
    max_inner: int = 500
    max_discards: int = 200
    M_override: Optional[float] = None
    M_safety: float = 2.0

    def validate(self):
        if not 0.0 < self.theta <= 1.0:
            raise AdaptivityError("theta must lie in (0, 1]")
        if self.lam <= 0:
            raise AdaptivityError("lambda must be positive")
        if self.c_mark < 1.0:
            raise AdaptivityError("C_mark must be >= 1")
        if self.stopping not in STOPPING_VARIANTS:
            raise AdaptivityError(f"unknown stopping variant {self.stopping!r}")
        if self.adaptive_delta:
            if self.L0 <= 0 or self.beta <= 1.0:
                raise AdaptivityError("adaptive damping needs L0 > 0 and beta > 1")
        elif self.delta is None or self.delta <= 0:
            raise AdaptivityError("fixed driver needs delta > 0")
        if self.work_budget <= 0:
            raise AdaptivityError("work budget must be positive")


@dataclass(frozen=True)
class StepRecord:
    ell: int
    k: int
    total_step: int
    nelem: int
    ndof: int
    work: int
    eta: float
    energy: float
    energy_diff: float
    u_norm: float
    delta: float
    L: float
    event: str                          # accepted | stopped_inner | discarded_ii_c
    zeta: float = math.nan
    product_estimator: float = math.nan
    goal_value: float = math.nan
    goal_error: float = math.nan


@dataclass(frozen=True)
class LevelSummary:
    ell: int
    nelem: int
    ndof: int
    k_final: int                        # number of accepted solver steps
    marked: int
    eta: float
    delta: float
    L: float
    discards: int


@dataclass
class RunLog:
    problem: str
    config: AdaptiveConfig
    M: float
    records: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    status: str = "running"

    @property
    def k_trace(self) -> list:
        return [lvl.k_final for lvl in self.levels]

    @property
    def delta_trace(self) -> list:
        """Distinct damping values in order of first appearance."""
        out = []
        for rec in self.records:
            if not out or rec.delta != out[-1]:
                out.append(rec.delta)
        return out

    @property
    def work_total(self) -> int:
        return self.records[-1].work if self.records else 0

    def rows(self, events: Sequence[str] = ("accepted", "stopped_inner")):
        return [r for r in self.records if r.event in events]


# -- CSV schema -------------------------------------------------------------

CSV_COLUMNS = ["ell", "k", "total_step", "nelem", "ndof", "work", "eta", "energy",
               "energy_diff", "u_norm", "delta", "L", "event"]
GOAL_COLUMNS = CSV_COLUMNS + ["zeta", "product_estimator", "goal_value", "goal_error"]
_INT_COLUMNS = {"ell", "k", "total_step", "nelem", "ndof", "work"}


def csv_header(goal: bool = False) -> str:
    return ",".join(GOAL_COLUMNS if goal else CSV_COLUMNS)


def record_to_csv(rec: StepRecord, goal: bool = False) -> str:
    cols = GOAL_COLUMNS if goal else CSV_COLUMNS
    parts = []
    for name in cols:
        value = getattr(rec, name)
        if name in _INT_COLUMNS:
            parts.append(str(int(value)))
        elif name == "event":
            parts.append(value)
        else:
            parts.append(f"{value:.17g}")
    return ",".join(parts)


def record_from_csv(line: str, goal: bool = False) -> StepRecord:
    cols = GOAL_COLUMNS if goal else CSV_COLUMNS
    values = line.strip().split(",")
    if len(values) != len(cols):
        raise AdaptivityError("CSV row does not match schema")
    kwargs = {}
    for name, raw in zip(cols, values):
        if name in _INT_COLUMNS:
            kwargs[name] = int(raw)
        elif name == "event":
            kwargs[name] = raw
        else:
            kwargs[name] = float(raw)
    return StepRecord(**kwargs)


# -- marking and stopping ----------------------------------------------------

@dataclass(frozen=True)
class MarkResult:
    elements: np.ndarray
    exact: bool                          # all indicators vanish: u is exact


def doerfler_mark(indicators: IndicatorField, theta: float,
                  c_mark: float = 1.0) -> MarkResult:
    """Minimal-cardinality bulk marking: smallest set with
    theta * eta^2 <= sum of marked eta_T^2 (descending sort, greedy prefix,
    ties by element index)."""
    if not 0.0 < theta <= 1.0:
        raise AdaptivityError("theta must lie in (0, 1]")
    if c_mark < 1.0:
        raise AdaptivityError("C_mark must be >= 1")
    eta2 = indicators.eta2
    if eta2.sum() == 0.0:
        return MarkResult(elements=np.empty(0, dtype=np.int64), exact=True)
    order = np.argsort(-eta2, kind="stable")
    csum = np.cumsum(eta2[order])
    count = int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1
    return MarkResult(elements=np.sort(order[:count]), exact=False)


def stopping_met(variant: str, e_prev: float, e_curr: float, eta: float,
                 step_norm: float, u_norm: float, lam: float, m_bound: float) -> bool:
    """Inner-loop termination test.

    ib:              |E(u^{k-1}) - E(u^k)| <= lam^2 eta^2  and  |u^k| <= 2M
    ib_prime:        energy test alone
    ib_double_prime: |u^k - u^{k-1}| <= lam eta  and  |u^k| <= 2M
    """
    energy_test = abs(e_prev - e_curr) <= lam**2 * eta**2
    norm_test = u_norm <= 2.0 * m_bound
    if variant == "ib":
        return energy_test and norm_test
    if variant == "ib_prime":
        return energy_test
    if variant == "ib_double_prime":
        return step_norm <= lam * eta and norm_test
    raise AdaptivityError(f"unknown stopping variant {variant!r}")


# -- driver ------------------------------------------------------------------

@dataclass
class LevelState:
    """Working state handed to per-level hooks (dual solves, logging)."""
    ell: int
    space: object
    operators: Operators
    u: DiscreteFunction
    eta_field: IndicatorField
    eta: float


def _lipschitz_estimate(L0: float, beta: float, increments: int) -> float:
    """L0 * beta^increments, evaluated so that beta = sqrt(2) doubles L
    exactly every two increments (keeps delta = 1/L at clean binary values)."""
    if beta == math.sqrt(2.0):
        value = L0 * float(2 ** (increments // 2))
        return value * math.sqrt(2.0) if increments % 2 else value
    return L0 * beta**increments


def _bound_M(problem: ModelProblem, config: AdaptiveConfig,
             mesh0: Triangulation) -> float:
    if config.M_override is not None:
        M = float(config.M_override)
    else:
        probe = build_space(uniform_refine(uniform_refine(mesh0)), config.degree)
        M = estimate_M(problem, probe, safety=config.M_safety)
    if M <= 0.0:
        raise AdaptivityError("trivial right-hand side: M = 0")
    return M


def _run_driver(problem: ModelProblem, config: AdaptiveConfig,
                sink: Optional[Callable[[StepRecord], None]] = None,
                level_hook: Optional[Callable[[LevelState], dict]] = None,
                mark_hook: Optional[Callable[[LevelState], MarkResult]] = None,
                ) -> RunLog:
    config.validate()
    mesh = initial_mesh(problem.domain)
    M = _bound_M(problem, config, mesh)
    log = RunLog(problem=problem.name, config=config, M=M)

    def push(rec: StepRecord):
        log.records.append(rec)
        if sink is not None:
            sink(rec)

    L_increments = 0
    L = config.L0
    work = 0
    total_step_base = 0
    u_coarse: Optional[DiscreteFunction] = None
    ell = 0
    try:
        while True:
            space = build_space(mesh, config.degree)
            ops = Operators(problem, space)
            u = (space.function() if u_coarse is None
                 else prolongate(u_coarse, space))
            e_prev = ops.energy(u)
            if config.adaptive_delta:
                delta = 1.0 / L
            else:
                delta = float(config.delta)
            q2 = 1.0 - delta**2
            k = 0
            discards = 0
            consecutive = 0
            eta_field = None
            eta = math.inf

            while True:
                if k >= config.max_inner:
                    raise AdaptivityError(
                        f"inner loop exceeded {config.max_inner} steps on level {ell}",
                        log=log)
                candidate = zarantonello_step(problem, space, u, delta, operators=ops)
                work += mesh.num_elements
                cand_field = indicators_for(problem, space, candidate)
                cand_eta = total(cand_field)
                e_curr = ops.energy(candidate)
                step_norm = ops.norm(candidate.coefficients - u.coefficients)
                u_norm = ops.norm(candidate)
                attempt = k + 1
                base = dict(ell=ell, k=attempt, total_step=total_step_base + attempt,
                            nelem=mesh.num_elements, ndof=space.dimension, work=work,
                            eta=cand_eta, energy=e_curr,
                            energy_diff=abs(e_prev - e_curr), u_norm=u_norm,
                            delta=delta, L=L)
                stop = stopping_met(config.stopping, e_prev, e_curr, cand_eta,
                                    step_norm, u_norm, config.lam, M)
                if stop:
                    u, eta_field, eta, k = candidate, cand_field, cand_eta, attempt
                    state = LevelState(ell, space, ops, u, eta_field, eta)
                    extras = level_hook(state) if level_hook else {}
                    push(StepRecord(event="stopped_inner", **base, **extras))
                    break
                if config.adaptive_delta and e_curr > q2 * e_prev:
                    push(StepRecord(event="discarded_ii_c", **base))
                    discards += 1
                    consecutive += 1
                    if consecutive > config.max_discards:
                        raise AdaptivityError(
                            f"{consecutive} consecutive energy-guard failures "
                            f"on level {ell}", log=log)
                    L_increments += 1
                    L = _lipschitz_estimate(config.L0, config.beta, L_increments)
                    delta = 1.0 / L
                    q2 = 1.0 - delta**2
                    continue
                push(StepRecord(event="accepted", **base))
                consecutive = 0
                u, eta_field, eta, e_prev, k = candidate, cand_field, cand_eta, e_curr, attempt

            state = LevelState(ell, space, ops, u, eta_field, eta)
            marking = mark_hook(state) if mark_hook else doerfler_mark(
                eta_field, config.theta, config.c_mark)
            log.levels.append(LevelSummary(
                ell=ell, nelem=mesh.num_elements, ndof=space.dimension, k_final=k,
                marked=len(marking.elements), eta=eta, delta=delta, L=L,
                discards=discards))
            total_step_base += k

            if marking.exact:
                log.status = "exact_solution"
                break
            if config.eta_tol > 0.0 and eta <= config.eta_tol:
                log.status = "tolerance_reached"
                break
            if work >= config.work_budget:
                log.status = "budget_exhausted"
                break
            refined = refine_nvb(mesh, marking.elements)
            if work + refined.num_elements > config.work_budget:
                log.status = "budget_exhausted"
                break
            mesh = refined
            u_coarse = u
            ell += 1
    except AdaptivityError as exc:
        if exc.log is None:
            exc.log = log
        raise
    return log


def run_ailfem_idealized(problem: ModelProblem, config: AdaptiveConfig,
                         sink=None) -> RunLog:
    """Fixed-damping driver (initial guess zero, nested iteration)."""
    if config.adaptive_delta:
        config = replace(config, adaptive_delta=False)
    return _run_driver(problem, config, sink=sink)


def run_ailfem_practical(problem: ModelProblem, config: AdaptiveConfig,
                         sink=None) -> RunLog:
    """Adaptive-damping driver with the energy-descent guard."""
    if not config.adaptive_delta:
        config = replace(config, adaptive_delta=True)
    return _run_driver(problem, config, sink=sink)


# -- diagnostics ---------------------------------------------------------------

@dataclass(frozen=True)
class QuasiError:
    value: float
    error: float
    estimator: float
    has_reference: bool


def quasi_error(problem: ModelProblem, u: DiscreteFunction, eta: float,
                reference=None) -> QuasiError:
    """Energy-norm error against a reference plus the total estimator.

    ``reference`` is a pair (value, gradient) of callables; without one the
    result degrades to the estimator alone, flagged accordingly.
    """
    if reference is None:
        return QuasiError(value=eta, error=math.nan, estimator=eta,
                          has_reference=False)
    exact, exact_gradient = reference
    err = error_norm(problem, u, exact, exact_gradient)
    return QuasiError(value=err + eta, error=err, estimator=eta,
                      has_reference=True)


@dataclass(frozen=True)
class AitkenResult:
    value: float
    degenerate: bool


def aitken_extrapolate(values) -> AitkenResult:
    """Delta-squared extrapolation of the last three entries.

    Exact for geometric sequences a + c q^n; a vanishing second difference is
    flagged and the last raw value returned.
    """
    values = [float(v) for v in values]
    if len(values) < 3:
        raise AdaptivityError("Aitken extrapolation needs at least 3 values")
    a0, a1, a2 = values[-3:]
    denom = (a2 - a1) - (a1 - a0)
    if denom == 0.0:
        return AitkenResult(value=a2, degenerate=True)
    return AitkenResult(value=a2 - (a2 - a1) ** 2 / denom, degenerate=False)


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    lx = lx - lx.mean()
    return float((lx @ (ly - ly.mean())) / (lx @ lx))


def rate_fit(log: RunLog, x: str = "work", y: str = "eta",
             window: float = 1.0, min_points: int = 5) -> float:
    """Log-log decay rate of column y against column x over the trailing
    ``window`` decades of x, using accepted steps only."""
    xs, ys = [], []
    for rec in log.rows():
        xv, yv = getattr(rec, x), getattr(rec, y)
        if xv > 0 and yv > 0 and math.isfinite(yv):
            xs.append(xv)
            ys.append(yv)
    if not xs:
        raise AdaptivityError("no usable rows for rate fit")
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    sel = xs >= xs.max() / 10.0**window
    if sel.sum() < min_points:
        raise AdaptivityError("insufficient data in the trailing window")
    return fit_loglog_slope(xs[sel], ys[sel])


def approx_class_sup(log: RunLog, s: float, y: str = "eta") -> float:
    """Computable rate diagnostic: sup over steps of (nelem - nelem0 + 1)^s * y."""
    rows = log.rows()
    if not rows:
        raise AdaptivityError("empty run log")
    n0 = rows[0].nelem
    return max((rec.nelem - n0 + 1) ** s * getattr(rec, y) for rec in rows
               if math.isfinite(getattr(rec, y)))
