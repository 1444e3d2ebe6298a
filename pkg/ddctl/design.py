"""Data-driven stability analysis, stabilization and LQR design.

Only the data matrices ``(S, H)`` of a :class:`~ddctl.collect.DataRecord` are used.
Strict inequalities are decided by margin maximization; the homogeneity of the
Lyapunov conditions is removed by normalizing the Lyapunov matrix ``S P S <= I``.
Data is divided by ``lambda_max(S)`` before assembling the problems, and the
returned ``P`` matrices are mapped back to the scale of the record.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import (
    ConditioningError,
    DimensionError,
    InfeasibleError,
    InstabilityError,
    InvalidDataError,
)
from ddctl.core.lmi import LmiProblem, VariableSpace, bmat, max_margin, solve
from ddctl.core.linalg import is_positive_definite, max_eigenvalue, symmetrize
from ddctl.lti import CostWeights

logger = logging.getLogger(__name__)


@dataclass
class StabilityVerdict:
    stable: bool
    margin: float
    P: np.ndarray = None

    def to_record(self):
        return {
            "stable": self.stable,
            "margin": self.margin,
            "P": None if self.P is None else self.P.tolist(),
            "status": "stable" if self.stable else "unstable",
        }


@dataclass
class DesignResult:
    """Recovered gain ``F = X' G'^-1`` with the solver variables and Lyapunov matrix ``S P S``."""

    F: np.ndarray
    P: np.ndarray
    G: np.ndarray
    X: np.ndarray
    lyapunov: np.ndarray
    margin: float
    objective: float = None
    status: str = "optimal"

    def to_record(self):
        return {
            "F": self.F.tolist(),
            "P": self.P.tolist(),
            "G": self.G.tolist(),
            "X": self.X.tolist(),
            "lyapunov": self.lyapunov.tolist(),
            "margin": self.margin,
            "objective": self.objective,
            "status": self.status,
        }


@dataclass
class CostCertificate:
    value: float
    P: np.ndarray
    status: str = "optimal"

    def to_record(self):
        return {
            "value": self.value,
            "objective": self.value,
            "P": self.P.tolist(),
            "status": self.status,
        }


def _scaled_data(record, kind):
    """Return ``(S / c, H / c, c)`` with ``c = lambda_max(S)``, after validity checks."""
    record.require(kind)
    if not is_positive_definite(record.S):
        raise InvalidDataError(
            "Data matrix S is not positive definite",
            details={"min_eigenvalue": record.min_eigenvalue()},
        )
    scale = max_eigenvalue(record.S)
    return record.S / scale, record.H / scale, scale


def _lambda(record, weights):
    if isinstance(weights, CostWeights):
        if (weights.n, weights.m) != (record.n, record.m):
            raise DimensionError(
                f"Weights are ({weights.n}, {weights.m}), data is ({record.n}, {record.m})"
            )
        return weights.Lambda
    Lambda = np.atleast_2d(np.asarray(weights, dtype=float))
    p = record.n + record.m
    if Lambda.shape != (p, p):
        raise DimensionError(f"Lambda has shape {Lambda.shape}, expected {(p, p)}")
    return symmetrize(Lambda)


def _recover_gain(G, X, condition_limit):
    """``F = X' (G')^-1``, refusing nearly singular ``G``."""
    condition = np.linalg.cond(G)
    if not np.isfinite(condition) or condition > condition_limit:
        raise ConditioningError(
            f"G is ill-conditioned (cond={condition:.3g})",
            details={"condition_number": float(condition)},
        )
    return linalg.solve(G, X).T


def _stability_problem(S, H):
    p = S.shape[0]
    space = VariableSpace()
    P = space.symmetric("P", p).expr()
    lyapunov = P.congruence(S)
    problem = LmiProblem.build(
        space,
        [
            ("decrease", lyapunov - P.congruence(H)),
            ("positive", lyapunov),
            ("normalization", np.eye(p) - lyapunov),
        ],
    )
    return space, problem


def eval_stability(
    record, strict_tol=DEFAULT_SETTINGS["strict_tol"], **solver_options
):
    """Decide whether the gain that generated on-policy data is stabilizing.

    Maximizes ``t`` with ``S P S - H' P H >= t I`` and ``S P S >= t I`` under ``S P S <= I``.

    :raises InvalidDataError: if ``S`` is singular.
    :rtype: StabilityVerdict
    """
    S, H, scale = _scaled_data(record, "on-policy")
    space, problem = _stability_problem(S, H)
    margin = max_margin(problem, designated=["decrease", "positive"], **solver_options)
    margin.solution.raise_for_status()
    stable = margin.t > strict_tol
    P = margin.values()["P"] / scale ** 2
    logger.info(f"Stability margin t={margin.t:.6g}: {'stable' if stable else 'not stable'}")
    return StabilityVerdict(stable=stable, margin=margin.t, P=P if stable else None)


def _design_variables(S, H, n):
    p = S.shape[0]
    space = VariableSpace()
    P = space.symmetric("P", p).expr()
    G = space.matrix("G", n, n).expr()
    X = space.matrix("X", n, p - n).expr()
    W = bmat([[G, X]])
    return space, P, G, W


def _stabilization_margin(S, H, n, **solver_options):
    p = S.shape[0]
    space, P, G, W = _design_variables(S, H, n)
    lmi = bmat([[-P.congruence(S), W.T], [W, P.congruence(H) - G - G.T]])
    problem = LmiProblem.build(
        space, [("lmi", -lmi), ("normalization", np.eye(p) - P.congruence(S))]
    )
    margin = max_margin(problem, designated=["lmi"], **solver_options)
    margin.solution.raise_for_status()
    return margin


def design_stabilizing(
    record,
    strict_tol=DEFAULT_SETTINGS["strict_tol"],
    condition_limit=DEFAULT_SETTINGS["condition_limit"],
    **solver_options,
):
    """Stabilizing gain from off-policy data.

    Solves ``[[-S P S, *], [[G X], H' P H - G - G']] < 0`` by margin maximization
    under ``S P S <= I`` and returns ``F = X' (G')^-1``.

    :raises InfeasibleError: if the margin is not above ``strict_tol``.
    :raises ConditioningError: if ``G`` is nearly singular.
    :rtype: DesignResult
    """
    S, H, scale = _scaled_data(record, "off-policy")
    margin = _stabilization_margin(S, H, record.n, **solver_options)
    if margin.t <= strict_tol:
        raise InfeasibleError(
            "Stabilization LMI is infeasible", details={"margin": margin.t}
        )
    values = margin.values()
    F = _recover_gain(values["G"], values["X"], condition_limit)
    P = values["P"] / scale ** 2
    logger.info(f"Stabilizing gain found with margin t={margin.t:.6g}")
    return DesignResult(
        F=F,
        P=P,
        G=values["G"],
        X=values["X"],
        lyapunov=symmetrize(record.S @ P @ record.S),
        margin=margin.t,
    )


def eval_cost(record, weights, strict_tol=DEFAULT_SETTINGS["strict_tol"], **solver_options):
    """Cost of the gain that generated on-policy data.

    Minimizes ``Tr(Lambda S P S)`` subject to ``H' P H + I <= S P S``.

    :param weights: :class:`~ddctl.lti.CostWeights` or an explicit ``Lambda`` matrix.
    :raises InstabilityError: if the gain is not stabilizing (the constraint is infeasible).
    :rtype: CostCertificate
    """
    Lambda = _lambda(record, weights)
    verdict = eval_stability(record, strict_tol=strict_tol, **solver_options)
    if not verdict.stable:
        raise InstabilityError(
            "Cost inequality is infeasible: the data comes from a non stabilizing gain",
            details={"margin": verdict.margin},
        )

    if not np.any(Lambda):
        return CostCertificate(value=0.0, P=verdict.P / verdict.margin)

    S, H, scale = _scaled_data(record, "on-policy")
    p = S.shape[0]
    space = VariableSpace()
    P = space.symmetric("P", p).expr()
    lyapunov = P.congruence(S)
    problem = LmiProblem.build(
        space,
        [("cost", lyapunov - P.congruence(H) - np.eye(p))],
        objective=lyapunov.trace(Lambda),
    )
    solution = solve(problem, **solver_options).raise_for_status()
    P_bar = solution.values()["P"] / scale ** 2
    logger.info(f"Evaluated cost {solution.objective_value:.10g}")
    return CostCertificate(value=float(solution.objective_value), P=P_bar)


def design_lqr(
    record,
    weights,
    epsilon=DEFAULT_SETTINGS["lqr_epsilon"],
    strict_tol=DEFAULT_SETTINGS["strict_tol"],
    condition_limit=DEFAULT_SETTINGS["condition_limit"],
    **solver_options,
):
    """Optimal gain from off-policy data.

    Minimizes ``Tr(Lambda S P S)`` subject to
    ``[[-S P S + (1 + epsilon) I, *], [[G X], H' P H - G - G']] <= -strict_tol I``
    and returns ``F = X' (G')^-1`` with the objective value.

    :raises InfeasibleError: if the plant behind the data is not stabilizable.
    :rtype: DesignResult
    """
    if not epsilon > 0:
        raise DimensionError("epsilon must be positive")
    Lambda = _lambda(record, weights)
    S, H, scale = _scaled_data(record, "off-policy")
    n = record.n
    p = S.shape[0]

    feasibility = _stabilization_margin(S, H, n, **solver_options)
    if feasibility.t <= strict_tol:
        raise InfeasibleError(
            "LQR design LMI is infeasible", details={"margin": feasibility.t}
        )

    space, P, G, W = _design_variables(S, H, n)
    lyapunov = P.congruence(S)
    lmi = bmat(
        [
            [-lyapunov + (1.0 + epsilon) * np.eye(p), W.T],
            [W, P.congruence(H) - G - G.T],
        ]
    )
    size = p + n
    problem = LmiProblem.build(
        space, [("lmi", -lmi - strict_tol * np.eye(size))], objective=lyapunov.trace(Lambda)
    )
    solution = solve(problem, **solver_options)
    if solution.status == "infeasible":
        raise InfeasibleError("LQR design LMI is infeasible", details={"status": solution.status})
    solution.raise_for_status()

    values = solution.values()
    F = _recover_gain(values["G"], values["X"], condition_limit)
    P_bar = values["P"] / scale ** 2
    logger.info(f"LQR design objective {solution.objective_value:.10g}")
    return DesignResult(
        F=F,
        P=P_bar,
        G=values["G"],
        X=values["X"],
        lyapunov=symmetrize(record.S @ P_bar @ record.S),
        margin=feasibility.t,
        objective=float(solution.objective_value),
    )
