"""Data-driven dynamic programming on Q-function matrices.

Both algorithms only read :class:`~ddctl.collect.DataRecord` contents. Policy
iteration obtains fresh on-policy data from a collector callable, which owns the plant.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ddctl.collect import on_collect
from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import (
    DimensionError,
    InvalidDataError,
    NonConvergenceError,
    SingularBlockError,
    UnstablePolicyError,
)
from ddctl.core.linalg import is_positive_semidefinite, symmetrize
from ddctl.core.utils import as_matrix
from ddctl.lti import CostWeights

logger = logging.getLogger(__name__)

ORIENTATIONS = ("q-bellman", "printed")


class QMatrix:
    """Symmetric ``(n + m) x (n + m)`` matrix of a quadratic Q-function, split in blocks
    ``P11`` (``n x n``), ``P12`` (``n x m``) and ``P22`` (``m x m``).
    """

    def __init__(self, P, n):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[0] != P.shape[1] or not 0 < n <= P.shape[0]:
            raise DimensionError(f"Invalid Q-function matrix shape {P.shape} for n={n}")
        self.P = symmetrize(P)
        self.n = int(n)

    @property
    def m(self):
        return self.P.shape[0] - self.n

    @property
    def P11(self):
        return self.P[: self.n, : self.n]

    @property
    def P12(self):
        return self.P[: self.n, self.n :]

    @property
    def P22(self):
        return self.P[self.n :, self.n :]

    def gain(self):
        return greedy_gain(self)

    def __sub__(self, other):
        return self.P - other.P

    def to_record(self):
        return self.P.tolist()

    def __repr__(self):
        return f"<QMatrix n={self.n} m={self.m}>"


def _factor_p22(P):
    try:
        return linalg.cho_factor(P.P22)
    except linalg.LinAlgError as e:
        raise SingularBlockError(
            "P22 block is not positive definite", details={"P22": P.P22.tolist()}, original=e
        )


def riccati_update(P):
    """Schur complement ``P11 - P12 P22^-1 P12'``, with the zero matrix mapped to zero.

    :raises SingularBlockError: if ``P22`` is not positive definite and ``P`` is not zero.
    """
    if not np.any(P.P):
        return np.zeros((P.n, P.n))
    factor = _factor_p22(P)
    return symmetrize(P.P11 - P.P12 @ linalg.cho_solve(factor, P.P12.T))


def greedy_gain(P):
    """Gain ``F = -P22^-1 P12'`` minimizing ``u -> Q(z, u)`` for every ``z``."""
    factor = _factor_p22(P)
    return -linalg.cho_solve(factor, P.P12.T)


@dataclass
class DpTrace:
    """Iterates ``P_1, P_2, ...`` with their greedy gains and step residuals."""

    method: str
    iterates: list = field(default_factory=list)
    gains: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False
    initial_gain: np.ndarray = None

    @property
    def iterations(self):
        return len(self.iterates)

    @property
    def final_P(self):
        return self.iterates[-1].P if self.iterates else None

    @property
    def final_F(self):
        return self.gains[-1] if self.gains else self.initial_gain

    def record(self, P, F, residual):
        self.iterates.append(P)
        self.gains.append(F)
        self.residuals.append(float(residual))

    def to_record(self):
        return {
            "method": self.method,
            "iterates": self.iterations,
            "residuals": self.residuals,
            "final_P": None if self.final_P is None else self.final_P.tolist(),
            "final_F": None if self.final_F is None else self.final_F.tolist(),
            "converged": self.converged,
        }

    def csv_rows(self, Fstar=None):
        """Rows ``(iteration, residual[, ||F_k - F*||_F])`` for trace files."""
        rows = []
        for k, (residual, F) in enumerate(zip(self.residuals, self.gains), start=1):
            row = [k, residual]
            if Fstar is not None:
                row.append(float(np.linalg.norm(F - Fstar)))
            rows.append(row)
        return rows

    def csv_header(self, with_oracle=False):
        header = ["iteration", "residual"]
        if with_oracle:
            header.append("gain_error")
        return header


def _lambda(weights, n, m):
    if (weights.n, weights.m) != (n, m):
        raise DimensionError(f"Weights are ({weights.n}, {weights.m}), data is ({n}, {m})")
    return weights.Lambda


def value_iteration(
    record,
    weights,
    eps_stop=DEFAULT_SETTINGS["vi_eps"],
    max_iter=DEFAULT_SETTINGS["vi_max_iter"],
):
    """Q-value iteration from ``P_0 = 0`` on off-policy data.

    Each step solves ``S P_{k+1} S = S Lambda S + H R(P_k) H'`` as
    ``P_{k+1} = Lambda + (S^-1 H) R(P_k) (S^-1 H)'`` with a Cholesky factor of ``S``.

    :raises NonConvergenceError: after ``max_iter`` steps, carrying the partial trace.
    :rtype: DpTrace
    """
    if not eps_stop > 0:
        raise DimensionError("eps_stop must be positive")
    record.require("off-policy")
    Lambda = _lambda(weights, record.n, record.m)
    try:
        factor = linalg.cho_factor(record.S, lower=True)
    except linalg.LinAlgError as e:
        raise InvalidDataError("Data matrix S is not positive definite", original=e)
    model = linalg.cho_solve(factor, record.H)

    trace = DpTrace(method="vi")
    P = QMatrix(np.zeros_like(Lambda), record.n)
    for _ in range(max_iter):
        P_next = QMatrix(Lambda + model @ riccati_update(P) @ model.T, record.n)
        residual = np.linalg.norm(P_next - P)
        trace.record(P_next, greedy_gain(P_next), residual)
        P = P_next
        logger.debug(f"VI iteration {trace.iterations}: residual={residual:.3e}")
        if residual <= eps_stop:
            trace.converged = True
            return trace
    raise NonConvergenceError(
        f"Value iteration did not converge in {max_iter} iterations",
        details={"residual": trace.residuals[-1], "iterations": max_iter},
        partial=trace,
    )


def _svec_basis(p):
    rows, cols = np.tril_indices(p)
    basis = np.zeros((rows.size, p, p))
    index = np.arange(rows.size)
    basis[index, rows, cols] = 1.0
    basis[index, cols, rows] = 1.0
    return basis, (rows, cols)


def evaluate_policy(
    record,
    Lambda,
    orientation="q-bellman",
    condition_limit=DEFAULT_SETTINGS["condition_limit"],
):
    """Solve the policy evaluation equation on on-policy data for a symmetric ``P``.

    ``q-bellman``: ``H P H' + S Lambda S = S P S``. ``printed``: ``H' P H + S Lambda S = S P S``.

    :raises UnstablePolicyError: if the equation is singular or its solution indefinite,
        which happens when the generating gain is not stabilizing.
    """
    if orientation not in ORIENTATIONS:
        raise DimensionError(f"Unknown orientation {orientation!r}")
    record.require("on-policy")
    S, H = record.S, record.H
    p = S.shape[0]
    basis, tril = _svec_basis(p)
    if orientation == "q-bellman":
        images = [S @ E @ S - H @ E @ H.T for E in basis]
    else:
        images = [S @ E @ S - H.T @ E @ H for E in basis]
    system = np.stack([image[tril] for image in images], axis=1)
    rhs = (S @ Lambda @ S)[tril]

    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > condition_limit:
        raise UnstablePolicyError(
            "Policy evaluation equation is singular",
            details={"condition_number": float(condition)},
        )
    coords = linalg.solve(system, rhs)
    P = np.tensordot(coords, basis, axes=1)
    if not is_positive_semidefinite(P) or not is_positive_semidefinite(P - Lambda):
        raise UnstablePolicyError(
            "Policy evaluation has no positive solution: the gain is not stabilizing",
            details={"P": P.tolist()},
        )
    return QMatrix(P, record.n)


class OnPolicyCollector:
    """Collector callable ``F -> DataRecord`` running exploring starts on a simulator.

    :param int N: steps per trajectory (default ``n + m + 2``).
    """

    def __init__(self, sim, N=None, seed=0):
        self.sim = sim
        self.N = N or sim.n + sim.m + 2
        self.seed = seed
        self.calls = 0

    def __call__(self, F):
        self.calls += 1
        return on_collect(self.sim, F, self.N, seed=self.seed)


def policy_iteration(
    collector,
    weights,
    F0,
    eps_stop=DEFAULT_SETTINGS["pi_eps"],
    max_iter=DEFAULT_SETTINGS["pi_max_iter"],
    orientation="q-bellman",
):
    """Policy iteration with fresh on-policy data each round.

    Round ``k`` collects data under ``F_k``, evaluates ``P_{k+1}`` and improves the gain
    to ``F_{k+1} = -P22^-1 P12'``. Stops when ``||P_{k+1} - P_k||_F <= eps_stop``
    (with ``P_0 = 0``).

    :param collector: callable returning an on-policy :class:`~ddctl.collect.DataRecord`
        for a gain.
    :raises UnstablePolicyError: if an evaluated gain is not stabilizing.
    :raises NonConvergenceError: after ``max_iter`` rounds, carrying the partial trace.
    :rtype: DpTrace
    """
    if not eps_stop > 0:
        raise DimensionError("eps_stop must be positive")
    if not isinstance(weights, CostWeights):
        raise DimensionError("policy_iteration expects CostWeights")
    F = as_matrix(F0, "F0", shape=(weights.m, weights.n))
    trace = DpTrace(method="pi", initial_gain=F)
    P = QMatrix(np.zeros((weights.n + weights.m,) * 2), weights.n)
    for _ in range(max_iter):
        record = collector(F)
        Lambda = _lambda(weights, record.n, record.m)
        P_next = evaluate_policy(record, Lambda, orientation)
        F = greedy_gain(P_next)
        residual = np.linalg.norm(P_next - P)
        trace.record(P_next, F, residual)
        P = P_next
        logger.debug(f"PI round {trace.iterations}: residual={residual:.3e}")
        if residual <= eps_stop:
            trace.converged = True
            return trace
    raise NonConvergenceError(
        f"Policy iteration did not converge in {max_iter} rounds",
        details={"residual": trace.residuals[-1], "iterations": max_iter},
        partial=trace,
    )
