"""Dense linear algebra helpers shared by the oracle and the data-driven paths.

General (non symmetric) eigenproblems go through :func:`scipy.linalg.eigvals`,
definiteness checks through the symmetric solver :func:`scipy.linalg.eigvalsh`.
"""
import logging

import numpy as np
from scipy import linalg

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import DimensionError, InstabilityError, NumericalFailure

logger = logging.getLogger(__name__)


def _square(M, name="M"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def symmetrize(M):
    M = np.asarray(M)
    return (M + M.T) / 2.0


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix.

    :raises NumericalFailure: on non finite input or eigensolver failure.
    """
    M = _square(M)
    if not np.all(np.isfinite(M)):
        raise NumericalFailure("Spectral radius of a non finite matrix")
    try:
        eigenvalues = linalg.eigvals(M)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(original=e)
    if eigenvalues.size == 0:
        return 0.0
    return float(np.max(np.abs(eigenvalues)))


def is_schur(M):
    return spectral_radius(M) < 1.0


def min_eigenvalue(M):
    """Smallest eigenvalue of the symmetric part of ``M``."""
    M = _square(M)
    try:
        return float(linalg.eigvalsh(symmetrize(M))[0])
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(original=e)


def max_eigenvalue(M):
    M = _square(M)
    try:
        return float(linalg.eigvalsh(symmetrize(M))[-1])
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(original=e)


def defect_tolerance(M, defect_tol=DEFAULT_SETTINGS["defect_tol"]):
    """Definiteness threshold scaled by the matrix size: ``defect_tol * max(1, ||M||_2)``."""
    M = np.asarray(M)
    if M.size == 0:
        return defect_tol
    return defect_tol * max(1.0, float(np.linalg.norm(M, 2)))


def is_positive_definite(M, defect_tol=DEFAULT_SETTINGS["defect_tol"]):
    return min_eigenvalue(M) > defect_tolerance(M, defect_tol)


def is_positive_semidefinite(M, defect_tol=DEFAULT_SETTINGS["defect_tol"]):
    return min_eigenvalue(M) >= -defect_tolerance(M, defect_tol)


def relative_residual(residual, reference):
    """Frobenius norm of ``residual`` relative to ``1 + ||reference||_F``."""
    return float(np.linalg.norm(residual) / (1.0 + np.linalg.norm(reference)))


def lyapunov_solve(M, W, tol=DEFAULT_SETTINGS["lyapunov_tol"]):
    """Solve the discrete Lyapunov equation ``M P M^T + W = P``.

    The equation is vectorized as ``(I - M (x) M) vec(P) = vec(W)`` and solved densely,
    the result is symmetrized.

    :raises InstabilityError: if ``M`` is not Schur stable.
    :raises NumericalFailure: if the residual contract ``tol * (1 + ||P||)`` is violated.
    """
    M = _square(M, "M")
    W = _square(W, "W")
    if W.shape != M.shape:
        raise DimensionError(f"W has shape {W.shape}, expected {M.shape}")

    rho = spectral_radius(M)
    if rho >= 1.0:
        raise InstabilityError(
            f"Lyapunov equation has no solution for spectral radius {rho:.6g}",
            details={"spectral_radius": rho},
        )

    p = M.shape[0]
    system = np.eye(p * p) - np.kron(M, M)
    try:
        vec_p = linalg.solve(system, symmetrize(W).reshape(-1))
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(original=e)
    P = symmetrize(vec_p.reshape(p, p))

    residual = np.linalg.norm(M @ P @ M.T + W - P)
    if residual > tol * (1.0 + np.linalg.norm(P)):
        raise NumericalFailure(
            "Lyapunov residual above tolerance",
            details={"residual": float(residual), "spectral_radius": rho},
        )
    return P


def controllability_matrix(A, B, k=None):
    """``[B, AB, ..., A^(k-1) B]``, with ``k`` defaulting to the state dimension."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    k = A.shape[0] if k is None else k
    blocks = []
    block = B
    for _ in range(k):
        blocks.append(block)
        block = A @ block
    if not blocks:
        return np.zeros((A.shape[0], 0))
    return np.hstack(blocks)


def numerical_rank(M, rtol=1e-10):
    """Rank from singular values above ``rtol * sigma_max``."""
    M = np.asarray(M)
    if M.size == 0:
        return 0
    singular_values = linalg.svdvals(M)
    if singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > rtol * singular_values[0]))
