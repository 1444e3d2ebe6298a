"""Dense primal-dual interior point method for block diagonal LMI problems.

The primal problem is::

    minimize    c'y
    subject to  F(y) = F0 + sum_i y_i F_i >= 0   (every block)
                A y = b

and its dual::

    maximize    -Tr(F0 Z) + b'nu
    subject to  Tr(F_i Z) + (A'nu)_i = c_i,   Z >= 0

Iterates start infeasible from scaled identities and follow the central path with
the HKM search direction and a Mehrotra predictor-corrector step. Steps are shortened
until the slack and dual matrices still admit a Cholesky factorization, and the best
iterate seen is the one reported when the iterations stop without convergence.
"""
import logging

import numpy as np
from scipy import linalg

from ddctl.core.errors import NumericalFailure

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.98
STALL_STEP = 1e-10
STALL_COUNT = 5
BACKTRACK_LIMIT = 40
BACKTRACK_FACTOR = 0.5


def _sym(M):
    return (M + M.T) / 2.0


def _initial_scales(block, c):
    """Diagonal starting values ``(eta, xi)`` for the slack and dual matrices of a block."""
    p = block.size
    norms = np.sqrt(np.einsum("iab,iab->i", block.F, block.F))
    eta = max(10.0, np.sqrt(p), np.linalg.norm(block.F0), norms.max(initial=0.0))
    active = norms > 0
    if np.any(active):
        ratios = (1.0 + np.abs(c[active])) / (1.0 + norms[active])
        xi = max(10.0, np.sqrt(p), p * ratios.max())
    else:
        xi = max(10.0, np.sqrt(p))
    return eta, xi


def _factor(matrices):
    return [linalg.cholesky(m, lower=True) for m in matrices]


def _step_length(factors, directions, fraction=STEP_FRACTION):
    """Largest step in ``(0, 1]`` keeping ``X + alpha dX`` positive definite,
    damped by ``fraction``.
    """
    alpha = 1.0
    for lower, dX in zip(factors, directions):
        half = linalg.solve_triangular(lower, dX, lower=True)
        scaled = linalg.solve_triangular(lower, half.T, lower=True)
        smallest = linalg.eigvalsh(_sym(scaled))[0]
        if smallest < 0:
            alpha = min(alpha, -fraction / smallest)
    return alpha


def _advance(X, dX, alpha):
    """Move to ``X + alpha dX``, shortening ``alpha`` until every block factorizes.

    :returns: ``(matrices, factors, alpha)``, or ``None`` when no step length works.
    """
    for _ in range(BACKTRACK_LIMIT):
        trial = [_sym(x + alpha * dx) for x, dx in zip(X, dX)]
        try:
            return trial, _factor(trial), alpha
        except (linalg.LinAlgError, ValueError):
            alpha *= BACKTRACK_FACTOR
    return None


def _solve_normal(M, A, rhs, re):
    """Solve ``[[M, -A'], [A, 0]] [dy; dnu] = [rhs; re]`` through Cholesky factors of ``M``."""
    try:
        factor = linalg.cho_factor(M, lower=True)

        def solve_m(v):
            return linalg.cho_solve(factor, v)

    except linalg.LinAlgError:
        logger.debug("Schur matrix is not positive definite, falling back to least squares")

        def solve_m(v):
            return np.linalg.lstsq(M, v, rcond=None)[0]

    if A.shape[0] == 0:
        return solve_m(rhs), np.zeros(0)

    m_rhs = solve_m(rhs)
    m_at = solve_m(A.T)
    reduced = A @ m_at
    try:
        dnu = linalg.solve(reduced, re - A @ m_rhs, assume_a="sym")
    except (linalg.LinAlgError, ValueError):
        dnu = np.linalg.lstsq(reduced, re - A @ m_rhs, rcond=None)[0]
    return m_rhs + m_at @ dnu, dnu


def _dual_correction(blocks, A, Z, nu, rd):
    """Least norm change of ``(Z, nu)`` cancelling the dual residual ``rd``.

    ``Z`` moves along ``sum_i w_i F_i`` and ``nu`` along ``dnu`` with
    ``Gram(F) w + A' dnu = rd``.
    """
    d = rd.shape[0]
    gram = sum(np.einsum("iab,jab->ij", block.F, block.F) for block in blocks)
    coefficients = np.hstack([gram, A.T])
    solution = np.linalg.lstsq(coefficients, rd, rcond=None)[0]
    w, dnu = solution[:d], solution[d:]
    Z = [_sym(z + np.tensordot(w, block.F, axes=1)) for block, z in zip(blocks, Z)]
    return Z, nu + dnu


class _Measures:
    """Residuals, objectives and gap of the iterate ``(y, S, Z, nu)``."""

    def __init__(self, problem, y, S, Z, nu, norms):
        blocks = problem.blocks
        A, b, c = problem.A_eq, problem.b_eq, problem.c
        norm_f0, norm_b, norm_c = norms
        n_total = sum(block.size for block in blocks)

        self.Fy = [block.assemble(y) for block in blocks]
        self.rp = [f - s for f, s in zip(self.Fy, S)]
        self.AZ = sum(np.einsum("iab,ab->i", block.F, z) for block, z in zip(blocks, Z))
        self.rd = c - self.AZ - A.T @ nu
        self.re = b - A @ y

        f0z = sum(np.sum(block.F0 * z) for block, z in zip(blocks, Z))
        self.pobj = float(c @ y)
        self.dobj = float(-f0z + b @ nu)
        self.gap = float(sum(np.sum(s * z) for s, z in zip(S, Z)))
        self.mu = self.gap / n_total

        squares = sum(np.linalg.norm(r) ** 2 for r in self.rp) + np.linalg.norm(self.re) ** 2
        rel_p = np.sqrt(squares)
        self.rel_p = float(rel_p / (1.0 + norm_f0 + norm_b))
        self.rel_d = float(np.linalg.norm(self.rd) / (1.0 + norm_c))
        self.rel_gap = float(
            max(self.gap, abs(self.pobj - self.dobj)) / (1.0 + abs(self.pobj) + abs(self.dobj))
        )
        self.min_eig = float(min(linalg.eigvalsh(_sym(f))[0] for f in self.Fy))

    def converged(self, feas_tol, gap_tol):
        return (
            self.rel_p <= feas_tol
            and self.rel_d <= feas_tol
            and self.rel_gap <= gap_tol
            and self.min_eig >= -feas_tol
        )

    def only_dual_residual_left(self, feas_tol, gap_tol):
        return (
            self.rel_p <= feas_tol
            and self.rel_gap <= gap_tol
            and self.min_eig >= -feas_tol
            and self.rel_d > feas_tol
        )

    def score(self, feas_tol, gap_tol):
        """Distance to the stopping criteria, below 1 once converged."""
        if self.min_eig < -feas_tol:
            return np.inf
        return max(self.rel_p / feas_tol, self.rel_d / feas_tol, self.rel_gap / gap_tol)

    def info(self, iteration):
        return {
            "iterations": iteration,
            "primal_objective": self.pobj,
            "dual_objective": self.dobj,
            "primal_residual": self.rel_p,
            "dual_residual": self.rel_d,
            "gap": self.rel_gap,
            "min_block_eigenvalue": self.min_eig,
        }


def solve(problem, feas_tol, gap_tol, max_iter, infeasibility_tol):
    """Run the interior point iterations on ``problem``.

    :returns: a tuple ``(status, y, Z, nu, info)`` where ``info`` holds residuals and counters.
    """
    blocks = problem.blocks
    c = problem.c
    A = problem.A_eq
    d = problem.dim
    norms = (
        np.sqrt(sum(np.linalg.norm(block.F0) ** 2 for block in blocks)),
        np.linalg.norm(problem.b_eq),
        np.linalg.norm(c),
    )

    y = np.zeros(d)
    nu = np.zeros(A.shape[0])
    S, Z = [], []
    for block in blocks:
        eta, xi = _initial_scales(block, c)
        S.append(eta * np.eye(block.size))
        Z.append(xi * np.eye(block.size))
    try:
        s_factors, z_factors = _factor(S), _factor(Z)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"Interior point failed before the first iteration: {e}")

    status = "max-iterations"
    stalled = 0
    best = None
    measures = None
    for iteration in range(max_iter + 1):
        measures = _Measures(problem, y, S, Z, nu, norms)
        logger.debug(
            f"ipm {iteration:3d} pobj={measures.pobj:+.8e} dobj={measures.dobj:+.8e} "
            f"p={measures.rel_p:.1e} d={measures.rel_d:.1e} gap={measures.rel_gap:.1e}"
        )

        if measures.converged(feas_tol, gap_tol):
            status = "optimal"
            break

        if measures.only_dual_residual_left(feas_tol, gap_tol):
            corrected_Z, corrected_nu = _dual_correction(blocks, A, Z, nu, measures.rd)
            corrected = _Measures(problem, y, S, corrected_Z, corrected_nu, norms)
            cone = min(linalg.eigvalsh(z)[0] / (1.0 + np.linalg.norm(z)) for z in corrected_Z)
            if corrected.converged(feas_tol, gap_tol) and cone >= -feas_tol:
                logger.debug(f"Dual residual corrected at iteration {iteration}")
                Z, nu, measures = corrected_Z, corrected_nu, corrected
                status = "optimal"
                break

        score = measures.score(feas_tol, gap_tol)
        if best is None or score < best[0]:
            best = (score, y, Z, nu, measures.info(iteration))

        # Improving ray of the dual: A*(Z) + A'nu ~ 0 with -Tr(F0 Z) + b'nu > 0.
        tau = measures.dobj
        ray = np.linalg.norm(measures.AZ + A.T @ nu)
        certified = tau > max(measures.gap, 0.0) and ray <= infeasibility_tol * tau
        if certified and measures.rel_p > feas_tol:
            status = "infeasible"
            break

        if iteration == max_iter:
            break

        rp, rd, re, mu = measures.rp, measures.rd, measures.re, measures.mu
        s_inv = [_sym(linalg.cho_solve((L, True), np.eye(L.shape[0]))) for L in s_factors]

        M = np.zeros((d, d))
        for block, z, si in zip(blocks, Z, s_inv):
            U = np.einsum("ab,jbc,cd->jad", z, block.F, si)
            M += np.einsum("iab,jba->ij", block.F, U)
        M = _sym(M)

        def direction(Rc):
            g = np.zeros(d)
            for block, rc, z, r, si in zip(blocks, Rc, Z, rp, s_inv):
                g += np.einsum("iab,ba->i", block.F, rc - z @ r @ si)
            dy, dnu = _solve_normal(M, A, g - rd, re)
            dS = [np.tensordot(dy, block.F, axes=1) + r for block, r in zip(blocks, rp)]
            dZ = [rc - _sym(z @ ds @ si) for rc, z, ds, si in zip(Rc, Z, dS, s_inv)]
            return dy, dnu, dS, dZ

        try:
            # Predictor, aiming at mu = 0.
            dy, dnu, dS, dZ = direction([-z for z in Z])
            alpha_p = _step_length(s_factors, dS)
            alpha_d = _step_length(z_factors, dZ)
            mu_aff = sum(
                np.sum((s + alpha_p * ds) * (z + alpha_d * dz))
                for s, ds, z, dz in zip(S, dS, Z, dZ)
            )
            mu_aff /= sum(block.size for block in blocks)
            sigma = min(1.0, max(0.0, mu_aff / mu) ** 3) if mu > 0 else 0.0

            # Corrector, with the second order term of the predictor.
            Rc = [
                sigma * mu * si - z - _sym(si @ ds @ dz)
                for si, z, ds, dz in zip(s_inv, Z, dS, dZ)
            ]
            dy, dnu, dS, dZ = direction(Rc)
            alpha_p = _step_length(s_factors, dS)
            alpha_d = _step_length(z_factors, dZ)
        except (linalg.LinAlgError, ValueError) as e:
            logger.debug(f"Search direction failed at iteration {iteration}: {e}")
            status = "numerical-failure"
            break

        if not (np.all(np.isfinite(dy)) and np.isfinite(alpha_p) and np.isfinite(alpha_d)):
            status = "numerical-failure"
            break

        primal = _advance(S, dS, alpha_p)
        dual = _advance(Z, dZ, alpha_d)
        if primal is None or dual is None:
            logger.debug(f"No step keeps the iterate factorizable at iteration {iteration}")
            status = "numerical-failure"
            break
        S, s_factors, alpha_p = primal
        Z, z_factors, alpha_d = dual
        y = y + alpha_p * dy
        nu = nu + alpha_d * dnu

        if max(alpha_p, alpha_d) < STALL_STEP:
            stalled += 1
            if stalled >= STALL_COUNT:
                logger.debug(f"Interior point stalled at iteration {iteration}")
                break
        else:
            stalled = 0

    if status in ("optimal", "infeasible"):
        return status, y, Z, nu, measures.info(iteration)

    score, y, Z, nu, info = best
    if score <= 1.0:
        status = "optimal"
    logger.debug(f"Interior point stopped ({status}), best iterate at {info['iterations']}")
    return status, y, Z, nu, info
