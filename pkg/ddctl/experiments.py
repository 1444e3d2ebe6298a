"""Random plants and Monte Carlo studies of the collection schemes.

The analytic means below read the true ``(A, B)``: they are references for the
empirical averages, never inputs of the data-driven algorithms.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ddctl.collect import off_collect_periodic, off_collect_restart
from ddctl.core import DEFAULT_SETTINGS
from ddctl.core import rng as rng_streams
from ddctl.core.errors import DimensionError, GenerationFailure
from ddctl.core.linalg import (
    controllability_matrix,
    min_eigenvalue,
    numerical_rank,
    spectral_radius,
    symmetrize,
)
from ddctl.core.utils import as_matrix, as_vector
from ddctl.lti import CostWeights, LtiSystem, Simulator

logger = logging.getLogger(__name__)

MC_SCHEMES = ("restarting", "periodic")


def is_controllable(A, B, rtol=1e-10):
    return numerical_rank(controllability_matrix(A, B), rtol=rtol) == A.shape[0]


def is_detectable(A, C, rtol=1e-10):
    """PBH test on the eigenvalues of ``A`` outside the open unit disc."""
    n = A.shape[0]
    for eigenvalue in linalg.eigvals(A):
        if abs(eigenvalue) >= 1.0:
            pencil = np.vstack([A - eigenvalue * np.eye(n), C])
            if numerical_rank(pencil, rtol=rtol) < n:
                return False
    return True


def gen_system(
    n,
    m,
    stable_open_loop=False,
    spectral_radius_cap=DEFAULT_SETTINGS["spectral_radius_cap"],
    seed=0,
    attempts=DEFAULT_SETTINGS["generation_attempts"],
):
    """Random controllable plant with detectable cost weights.

    ``Q = C'C`` with a random full row rank ``C``, ``R = I + W W' / m``. With
    ``stable_open_loop``, ``A`` is rescaled so that ``rho(A) <= spectral_radius_cap``.

    :raises GenerationFailure: if ``attempts`` draws are all rejected.
    :rtype: tuple(LtiSystem, CostWeights)
    """
    if n < 1 or m < 1:
        raise DimensionError(f"Dimensions must be positive, got n={n}, m={m}")
    if stable_open_loop and not 0 < spectral_radius_cap < 1:
        raise DimensionError("spectral_radius_cap must lie in (0, 1)")

    generator = rng_streams.master(seed)
    for attempt in range(1, attempts + 1):
        A = generator.standard_normal((n, n)) / np.sqrt(n)
        B = generator.standard_normal((n, m))
        rows = int(generator.integers(1, n + 1))
        C = generator.standard_normal((rows, n))
        W = generator.standard_normal((m, m))

        if stable_open_loop:
            rho = spectral_radius(A)
            if rho > spectral_radius_cap:
                A = A * (spectral_radius_cap / rho) * (1.0 - 1e-12)
        if not is_controllable(A, B):
            continue
        if numerical_rank(C) < rows or not is_detectable(A, C):
            continue

        system = LtiSystem(A, B)
        weights = CostWeights(symmetrize(C.T @ C), np.eye(m) + symmetrize(W @ W.T) / m)
        logger.debug(f"Generated system n={n} m={m} after {attempt} draws")
        return system, weights

    raise GenerationFailure(
        f"No acceptable system in {attempts} draws", details={"n": n, "m": m, "seed": seed}
    )


def controllability_blocks(A, B, k):
    """``O_k = [B, AB, ..., A^(k-1) B]`` (``n x 0`` for ``k = 0``)."""
    return controllability_matrix(A, B, k)


def _noise_covariance(A, B, U, k):
    """``O_k U_k O_k'`` with ``U_k = diag(U, ..., U)``."""
    blocks = controllability_blocks(A, B, k)
    if blocks.shape[1] == 0:
        return np.zeros((A.shape[0], A.shape[0]))
    return blocks @ np.kron(np.eye(k), U) @ blocks.T


@dataclass
class TheoremOneMean:
    """Mean of the per-trajectory sums over the ``n + 1`` pairs of a restarted run."""

    M: np.ndarray
    n: int
    m: int

    @property
    def pairs(self):
        return self.n + 1

    @property
    def per_sample(self):
        return self.M / self.pairs

    def min_eigenvalue(self):
        return min_eigenvalue(self.M)

    def to_record(self):
        return {
            "M": self.M.tolist(),
            "min_eigenvalue": self.min_eigenvalue(),
            "per_sample_min_eigenvalue": min_eigenvalue(self.per_sample),
            "pairs_per_trajectory": self.pairs,
        }


def theorem1_mean(system, z, U):
    """``sum_{k=0..n} diag(A^k z z' A'^k + O_k U_k O_k', U)``.

    :rtype: TheoremOneMean
    """
    A, B = system.A, system.B
    n, m = system.n, system.m
    z = as_vector(z, "z", size=n)
    U = as_matrix(U, "U", shape=(m, m))
    M = np.zeros((n + m, n + m))
    free = z.copy()
    for k in range(n + 1):
        M[:n, :n] += np.outer(free, free) + _noise_covariance(A, B, U, k)
        M[n:, n:] += U
        free = A @ free
    return TheoremOneMean(M=symmetrize(M), n=n, m=m)


def theorem2_bound(system, K, U, epsilon):
    """``(1 - epsilon) diag(sum_{k=0..n} O_k U_k O_k', U)`` with blocks built on ``A + B K``."""
    K = as_matrix(K, "K", shape=(system.m, system.n))
    U = as_matrix(U, "U", shape=(system.m, system.m))
    closed = system.A + system.B @ K
    X = sum(_noise_covariance(closed, system.B, U, k) for k in range(system.n + 1))
    return (1.0 - epsilon) * linalg.block_diag(X, U)


@dataclass
class McReport:
    scheme: str
    trials: int
    seed: int
    checkpoints: list = field(default_factory=list)
    analytic_min_eigenvalue: float = None
    per_sample_min_eigenvalue: float = None
    bound_min_eigenvalue: float = None

    @property
    def final_min_eigenvalue(self):
        return self.checkpoints[-1]["min_eigenvalue"]

    def to_record(self):
        return {
            "scheme": self.scheme,
            "trials": self.trials,
            "seed": self.seed,
            "checkpoints": self.checkpoints,
            "analytic_min_eigenvalue": self.analytic_min_eigenvalue,
            "per_sample_min_eigenvalue": self.per_sample_min_eigenvalue,
            "bound_min_eigenvalue": self.bound_min_eigenvalue,
            "normalization": (
                "S_N averages per-trajectory sums over n + 1 pairs; analytic values use the "
                "same convention, per_sample divides by n + 1"
            ),
        }

    def csv_header(self):
        return ["N", "min_eigenvalue", "relative_error"]

    def csv_rows(self):
        return [[c["N"], c["min_eigenvalue"], c.get("relative_error")] for c in self.checkpoints]


def _checkpoint_list(checkpoints, N_max):
    values = sorted({int(c) for c in checkpoints or ()} | {int(N_max)})
    if values[0] < 1 or values[-1] > N_max:
        raise DimensionError(f"Checkpoints must lie in [1, {N_max}]")
    return values


def mc_validity(
    system,
    spec,
    scheme="restarting",
    N_max=10000,
    checkpoints=None,
    seed=0,
    settle_max=10000,
    threads=None,
):
    """Track ``lambda_min(S_N)`` of a collection scheme as trials accumulate.

    The restarting scheme is compared with :func:`theorem1_mean`, the periodic one
    with :func:`theorem2_bound` (``spec.epsilon`` as settle threshold).

    :param spec: :class:`~ddctl.collect.ExcitationSpec` of the scheme.
    :rtype: McReport
    """
    if scheme not in MC_SCHEMES:
        raise DimensionError(f"Unknown Monte Carlo scheme {scheme!r}")
    if N_max < 1:
        raise DimensionError(f"N_max must be positive, got {N_max}")
    points = _checkpoint_list(checkpoints, N_max)
    sim = Simulator(system)
    report = McReport(scheme=scheme, trials=int(N_max), seed=int(seed))

    if scheme == "restarting":
        mean = theorem1_mean(system, spec.z, spec.U)
        report.analytic_min_eigenvalue = mean.min_eigenvalue()
        report.per_sample_min_eigenvalue = min_eigenvalue(mean.per_sample)
        reference = mean.M
    else:
        bound = theorem2_bound(system, spec.gain(), spec.U, spec.epsilon)
        report.bound_min_eigenvalue = min_eigenvalue(bound)
        reference = None

    def on_checkpoint(count, S, H):
        point = {"N": count, "min_eigenvalue": min_eigenvalue(S)}
        if reference is not None:
            point["relative_error"] = float(
                np.linalg.norm(S - reference) / np.linalg.norm(reference)
            )
        logger.debug(f"Checkpoint N={count}: lambda_min={point['min_eigenvalue']:.6g}")
        report.checkpoints.append(point)

    if scheme == "restarting":
        off_collect_restart(
            sim,
            spec,
            N_max,
            seed=seed,
            threads=threads,
            on_checkpoint=on_checkpoint,
            checkpoints=points,
        )
    else:
        off_collect_periodic(
            sim,
            spec,
            N_max,
            settle_max,
            seed=seed,
            on_checkpoint=on_checkpoint,
            checkpoints=points,
        )
    return report
