"""Model-based references: Riccati fixed point, Lyapunov costs and data identity checks.

These functions read the true ``(A, B)`` and only serve validation of the data-driven paths.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import (
    InfiniteCostError,
    InstabilityError,
    NonConvergenceError,
    NumericalFailure,
)
from ddctl.core.linalg import (
    lyapunov_solve,
    min_eigenvalue,
    relative_residual,
    spectral_radius,
    symmetrize,
)
from ddctl.core.utils import as_vector
from ddctl.lti import augment, gain_matrix

logger = logging.getLogger(__name__)


@dataclass
class RiccatiSolution:
    """Stabilizing solution of the algebraic Riccati equation.

    ``Pstar`` is the Q-function matrix ``[[Q + A'XA, A'XB], [B'XA, R + B'XB]]``.
    """

    X: np.ndarray
    Fstar: np.ndarray
    Pstar: np.ndarray
    residual: float
    iterations: int

    @property
    def cost(self):
        return float(np.trace(self.X))

    def to_record(self):
        return {
            "X": self.X.tolist(),
            "Fstar": self.Fstar.tolist(),
            "Pstar": self.Pstar.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "cost": self.cost,
        }


def _riccati_map(system, weights, X):
    A, B = system.A, system.B
    BtXA = B.T @ X @ A
    gram = weights.R + B.T @ X @ B
    try:
        factor = linalg.cho_factor(gram)
    except linalg.LinAlgError as e:
        raise NumericalFailure("R + B'XB is singular", original=e)
    correction = BtXA.T @ linalg.cho_solve(factor, BtXA)
    return symmetrize(A.T @ X @ A - correction + weights.Q), factor, BtXA


def are_residual(system, weights, X):
    """Relative residual of the Riccati equation at ``X``."""
    image, _, _ = _riccati_map(system, weights, X)
    return relative_residual(image - X, X)


def q_matrix(system, weights, X):
    """Q-function matrix associated with a value matrix ``X``."""
    A, B = system.A, system.B
    return symmetrize(
        np.block(
            [
                [weights.Q + A.T @ X @ A, A.T @ X @ B],
                [B.T @ X @ A, weights.R + B.T @ X @ B],
            ]
        )
    )


def solve_dare(
    system,
    weights,
    tol=DEFAULT_SETTINGS["dare_tol"],
    max_iter=DEFAULT_SETTINGS["dare_max_iter"],
):
    """Iterate the Riccati map from ``X0 = Q`` until
    ``||X_{k+1} - X_k||_F <= tol (1 + ||X_k||_F)``.

    :raises NonConvergenceError: after ``max_iter`` steps, with the last residual as details.
    :raises NumericalFailure: if ``R + B'XB`` cannot be factorized.
    :rtype: RiccatiSolution
    """
    weights.check(system)
    X = weights.Q.copy()
    step = np.inf
    for iteration in range(1, max_iter + 1):
        X_next, factor, BtXA = _riccati_map(system, weights, X)
        step = np.linalg.norm(X_next - X)
        converged = step <= tol * (1.0 + np.linalg.norm(X))
        X = X_next
        if converged:
            break
    else:
        raise NonConvergenceError(
            f"Riccati iteration did not converge in {max_iter} steps",
            details={"residual": float(step), "iterations": max_iter},
            partial=X,
        )

    _, factor, BtXA = _riccati_map(system, weights, X)
    Fstar = -linalg.cho_solve(factor, BtXA)
    residual = are_residual(system, weights, X)
    rho = spectral_radius(system.A + system.B @ Fstar)
    logger.debug(f"Riccati iteration converged in {iteration} steps (residual={residual:.3g})")
    if rho >= 1.0:
        raise NumericalFailure(
            "Riccati fixed point is not stabilizing", details={"spectral_radius": rho}
        )
    return RiccatiSolution(
        X=X,
        Fstar=Fstar,
        Pstar=q_matrix(system, weights, X),
        residual=residual,
        iterations=iteration,
    )


def is_stabilizing(system, F):
    """Whether ``F`` belongs to the stabilizing set, ``rho(A + B F) < 1``."""
    return spectral_radius(system.closed_loop(F)) < 1.0


def value_matrix(system, weights, F, tol=DEFAULT_SETTINGS["lyapunov_tol"]):
    """``X_F`` solving ``(A + BF)' X_F (A + BF) + Q + F'RF = X_F``.

    :raises InfiniteCostError: if ``F`` is not stabilizing.
    """
    weights.check(system)
    F = gain_matrix(system, F)
    closed = system.A + system.B @ F
    try:
        return lyapunov_solve(closed.T, weights.Q + F.T @ weights.R @ F, tol=tol)
    except InstabilityError as e:
        raise InfiniteCostError("Cost of a non stabilizing gain is infinite", details=e.details)


def cost_index(system, weights, F, tol=DEFAULT_SETTINGS["lyapunov_tol"]):
    """``J(F) = Tr(X_F)``, the cost summed over the state basis starts."""
    return float(np.trace(value_matrix(system, weights, F, tol)))


def cost_from(system, weights, F, z, tol=DEFAULT_SETTINGS["lyapunov_tol"]):
    """``J(F, z) = z' X_F z``, the cost of a single initial state."""
    z = as_vector(z, "z", size=system.n)
    return float(z @ value_matrix(system, weights, F, tol) @ z)


def augmented_gramian(system, F, tol=DEFAULT_SETTINGS["lyapunov_tol"]):
    """``sum_k A_F^k (A_F')^k``, solution of ``A_F P A_F' + I = P``."""
    A_F = augment(system, F)
    try:
        return lyapunov_solve(A_F, np.eye(A_F.shape[0]), tol=tol)
    except InstabilityError as e:
        raise InfiniteCostError("Cost of a non stabilizing gain is infinite", details=e.details)


def augmented_cost(system, weights, F, tol=DEFAULT_SETTINGS["lyapunov_tol"], Lambda=None):
    """``Tr(Lambda P)`` with ``P`` the augmented gramian, i.e. the cost over the ``n + m``
    augmented basis starts.

    :param Lambda: optional weight overriding ``diag(Q, R)``.
    """
    if Lambda is None:
        Lambda = weights.Lambda
    return float(np.trace(Lambda @ augmented_gramian(system, F, tol)))


def q_function(P, z, u):
    """Quadratic Q-function ``[z; u]' P [z; u]``."""
    v = np.concatenate([np.ravel(z), np.ravel(u)]).astype(float)
    return float(v @ P @ v)


def identity_residual(record, system, F=None):
    """Relative residual of the data identity of a record against the true plant.

    On-policy records satisfy ``S A_F' = H``, off-policy records ``S [A'; B'] = H``.
    """
    if record.kind == "on-policy":
        if F is None:
            F = record.params["F"]
        right = augment(system, F).T
    else:
        right = np.vstack([system.A.T, system.B.T])
    return relative_residual(record.S @ right - record.H, record.H)


def lyapunov_certificate_holds(M, L):
    """Whether ``V(v) = v' L v`` strictly decreases along ``v+ = M' v``: ``M L M' < L``."""
    gap = symmetrize(L - M @ L @ M.T)
    return min_eigenvalue(gap) > 0.0
