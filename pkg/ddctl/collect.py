"""Trajectory data collection.

Every scheme returns a :class:`DataRecord` holding the averaged second moment
``S`` of the stacked samples ``v(k) = [x(k); u(k)]`` and the cross moment ``H``
with the successor (``v(k+1)`` on-policy, ``x(k+1)`` off-policy).
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ddctl.core import rng as rng_streams
from ddctl.core.errors import (
    DimensionError,
    DivergenceError,
    InvalidDataError,
    PersistentExcitationError,
    SettleTimeoutError,
)
from ddctl.core.linalg import is_positive_definite, min_eigenvalue, symmetrize
from ddctl.core.utils import as_matrix, as_vector, env_setting, to_plain
from ddctl.lti import ExploringStart, NoisyGain

logger = logging.getLogger(__name__)

KINDS = ("on-policy", "off-policy")
SCHEMES = ("exploring-starts", "exploration", "restarting", "periodic-excitation")
CHUNK_SIZE = 256


class DataRecord:
    """Averaged data matrices and their provenance.

    :param str kind: ``on-policy`` (``H`` is ``(n+m) x (n+m)``) or ``off-policy``
        (``H`` is ``(n+m) x n``).
    """

    def __init__(self, kind, scheme, n, m, S, H, sample_count, seed=0, params=None):
        if kind not in KINDS:
            raise DimensionError(f"Unknown data kind {kind!r}")
        if scheme not in SCHEMES:
            raise DimensionError(f"Unknown collection scheme {scheme!r}")
        self.kind = kind
        self.scheme = scheme
        self.n, self.m = int(n), int(m)
        p = self.n + self.m
        S = as_matrix(S, "S", shape=(p, p))
        if not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise InvalidDataError("S is not symmetric")
        self.S = symmetrize(S)
        columns = p if kind == "on-policy" else self.n
        self.H = as_matrix(H, "H", shape=(p, columns))
        if int(sample_count) < 1:
            raise InvalidDataError("Data record has no samples")
        self.sample_count = int(sample_count)
        self.seed = int(seed)
        self.params = params or {}

    @property
    def on_policy(self):
        return self.kind == "on-policy"

    def min_eigenvalue(self):
        return min_eigenvalue(self.S)

    def scaled(self, factor):
        """Record with ``(c S, c H)``; every data-driven decision is invariant under it."""
        return DataRecord(
            self.kind,
            self.scheme,
            self.n,
            self.m,
            self.S * factor,
            self.H * factor,
            self.sample_count,
            self.seed,
            dict(self.params),
        )

    def require(self, kind):
        if self.kind != kind:
            raise InvalidDataError(f"Expected {kind} data, got {self.kind}")
        return self

    def to_record(self):
        return {
            "kind": self.kind,
            "scheme": self.scheme,
            "n": self.n,
            "m": self.m,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "S": self.S.tolist(),
            "H": self.H.tolist(),
            "params": to_plain(self.params),
        }

    @classmethod
    def from_record(cls, record):
        return cls(
            record["kind"],
            record["scheme"],
            record["n"],
            record["m"],
            record["S"],
            record["H"],
            record["sample_count"],
            record.get("seed", 0),
            record.get("params", {}),
        )

    def __repr__(self):
        return (
            f"<DataRecord {self.kind} {self.scheme} n={self.n} m={self.m} "
            f"samples={self.sample_count}>"
        )


class ExcitationSpec:
    """Exploration noise ``zeta ~ N(0, U)``, fixed initial state ``z``, threshold ``epsilon``
    and an optional exploration gain ``K`` (``u = K x + zeta``).
    """

    def __init__(self, U, z, epsilon, K=None):
        self.U = as_matrix(U, "U")
        if self.U.shape[0] != self.U.shape[1] or not np.allclose(self.U, self.U.T):
            raise DimensionError("U must be a symmetric square matrix")
        if not is_positive_definite(self.U):
            raise DimensionError("U must be positive definite")
        self.z = as_vector(z, "z")
        self.epsilon = float(epsilon)
        if not self.epsilon > 0:
            raise DimensionError("epsilon must be positive")
        self.K = None if K is None else as_matrix(K, "K", shape=(self.m, self.n))

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def m(self):
        return self.U.shape[0]

    def gain(self):
        return np.zeros((self.m, self.n)) if self.K is None else self.K

    def check(self, sim):
        if (self.n, self.m) != (sim.n, sim.m):
            raise DimensionError(
                f"Excitation is for ({self.n}, {self.m}), plant is ({sim.n}, {sim.m})"
            )
        return self

    def to_record(self):
        record = {"U": self.U.tolist(), "z": self.z.tolist(), "epsilon": self.epsilon}
        if self.K is not None:
            record["K"] = self.K.tolist()
        return record


def is_valid(record, threshold=0.0):
    """Whether the data is valid, ``lambda_min(S) > threshold``."""
    if threshold < 0:
        raise DimensionError("Validity threshold must be non negative")
    return record.min_eigenvalue() > threshold


class RunningMoments:
    """Running averages ``S`` and ``H`` updated by convex combinations ``k/(k+1)``."""

    def __init__(self, rows, columns):
        self.count = 0
        self.S = np.zeros((rows, rows))
        self.H = np.zeros((rows, columns))

    def add(self, S_term, H_term):
        weight = self.count / (self.count + 1.0)
        self.S = weight * self.S + S_term / (self.count + 1.0)
        self.H = weight * self.H + H_term / (self.count + 1.0)
        self.count += 1


def worker_count(threads=None):
    """Number of worker threads: explicit value, ``DDCTL_THREADS`` or machine parallelism."""
    if threads is None:
        threads = env_setting("ddctl.threads", None)
    if threads is None:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def _exploring_run(sim, start, F, N):
    """Exploring-start trajectory cut at the last finite state when ``u = F x`` diverges.

    :returns: the stacked samples and the number of steps kept.
    """
    n = sim.n
    policy = ExploringStart(start[n:], F)
    try:
        trajectory = sim.run(start[:n], policy, N, include_last_input=True)
    except DivergenceError as e:
        steps = e.step
        if steps < 1:
            return None, 0
        trajectory = sim.run(start[:n], policy, steps, include_last_input=True)
        return trajectory.stacked(), steps
    return trajectory.stacked(), N


def on_collect(sim, F, N, seed=0):
    """On-policy data with exploring starts over the ``n + m`` augmented basis vectors.

    Trajectory ``i`` starts from ``v(0) = e_i`` (state and first input), then follows
    ``u = F x``. The ``(n + m) N`` samples are averaged with a running mean. A trajectory
    leaving the divergence guard is cut at its last finite state, and the cut is kept in
    ``params["truncated"]`` as ``{index: steps}``.

    :raises DivergenceError: if fewer than ``n + m`` samples survive the cuts.
    """
    if N < 1:
        raise DimensionError(f"Number of steps must be positive, got {N}")
    n, m = sim.n, sim.m
    F = as_matrix(F, "F", shape=(m, n))
    p = n + m
    moments = RunningMoments(p, p)
    truncated = {}
    for i in range(p):
        v, steps = _exploring_run(sim, np.eye(p)[i], F, N)
        if steps < N:
            truncated[str(i)] = steps
        for k in range(steps):
            moments.add(np.outer(v[k], v[k]), np.outer(v[k], v[k + 1]))
    if moments.count < p:
        raise DivergenceError(
            min(truncated.values()),
            message=f"Only {moments.count} finite on-policy samples, {p} needed",
            details={"samples": moments.count, "truncated": truncated},
        )
    params = {"F": F.tolist(), "N": N}
    if truncated:
        logger.warning(
            f"Closed loop diverged, {len(truncated)} of {p} trajectories truncated",
            extra={"truncated": truncated},
        )
        params["truncated"] = truncated
    logger.debug(f"Collected {moments.count} on-policy samples")
    return DataRecord(
        "on-policy",
        "exploring-starts",
        n,
        m,
        moments.S,
        moments.H,
        moments.count,
        seed,
        params,
    )


def off_collect(sim, spec, max_steps, seed=0):
    """Off-policy data from a single trajectory started at ``z`` under ``u = K x + zeta``.

    Stops at the first sample count with ``lambda_min(S) > epsilon``.

    :raises PersistentExcitationError: if ``max_steps`` samples do not reach the threshold.
    """
    spec.check(sim)
    n, m = sim.n, sim.m
    policy = NoisyGain(spec.gain(), spec.U)
    generator = rng_streams.master(seed)
    moments = RunningMoments(n + m, n)
    x = spec.z.copy()
    for k in range(max_steps):
        u = policy(k, x, generator)
        x_next = sim.step(x, u, k)
        v = np.concatenate([x, u])
        moments.add(np.outer(v, v), np.outer(v, x_next))
        x = x_next
        if moments.count >= n + m and min_eigenvalue(moments.S) > spec.epsilon:
            logger.debug(f"Excitation witnessed after {moments.count} samples")
            return DataRecord(
                "off-policy",
                "exploration",
                n,
                m,
                moments.S,
                moments.H,
                moments.count,
                seed,
                {**spec.to_record(), "steps": moments.count},
            )
    raise PersistentExcitationError(
        f"lambda_min(S) stayed below {spec.epsilon} after {max_steps} steps",
        details={"max_steps": max_steps, "min_eigenvalue": min_eigenvalue(moments.S)},
    )


def restart_trajectory(sim, spec, seed, index):
    """Per-trajectory sums over the ``n + 1`` pairs ``k = 0..n`` of a restarted run."""
    n = sim.n
    generator = rng_streams.stream(seed, index)
    policy = NoisyGain(np.zeros((sim.m, n)), spec.U)
    x = spec.z.copy()
    S_sum = np.zeros((n + sim.m, n + sim.m))
    H_sum = np.zeros((n + sim.m, n))
    for k in range(n + 1):
        u = policy.noise(generator)
        x_next = sim.step(x, u, k)
        v = np.concatenate([x, u])
        S_sum += np.outer(v, v)
        H_sum += np.outer(v, x_next)
        x = x_next
    return S_sum, H_sum


def _restart_chunk(sim, spec, seed, indices):
    return [restart_trajectory(sim, spec, seed, i) for i in indices]


def off_collect_restart(sim, spec, N, seed=0, threads=None, on_checkpoint=None, checkpoints=()):
    """Off-policy data from ``N`` pure-noise trajectories restarted at ``z``.

    Trajectories run concurrently on per-trajectory random streams and are averaged
    in ascending index order, so the result does not depend on scheduling.

    :param on_checkpoint: optional callable ``(count, S, H)`` invoked when the number
        of averaged trajectories reaches a value of ``checkpoints``.
    """
    if N < 1:
        raise DimensionError(f"Number of trajectories must be positive, got {N}")
    spec.check(sim)
    n, m = sim.n, sim.m
    checkpoints = set(checkpoints)
    moments = RunningMoments(n + m, n)
    chunks = [range(start, min(start + CHUNK_SIZE, N)) for start in range(0, N, CHUNK_SIZE)]
    workers = min(worker_count(threads), len(chunks))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = executor.map(lambda chunk: _restart_chunk(sim, spec, seed, chunk), chunks)
        for chunk in results:
            for S_sum, H_sum in chunk:
                moments.add(S_sum, H_sum)
                if on_checkpoint is not None and moments.count in checkpoints:
                    on_checkpoint(moments.count, moments.S.copy(), moments.H.copy())
    logger.debug(f"Averaged {N} restarted trajectories on {workers} threads")
    return DataRecord(
        "off-policy",
        "restarting",
        n,
        m,
        moments.S,
        moments.H,
        N * (n + 1),
        seed,
        {**spec.to_record(), "trajectories": N, "pairs_per_trajectory": n + 1},
    )


def off_collect_periodic(sim, spec, N, settle_max, seed=0, on_checkpoint=None, checkpoints=()):
    """Off-policy data from one trajectory alternating settle and excitation phases.

    Each window first applies ``u = K x`` until ``||x|| <= epsilon``, then ``n + 1`` steps
    of ``u = K x + zeta`` whose pairs are summed. Windows are averaged like restarts.

    :raises SettleTimeoutError: if a settle phase exceeds ``settle_max`` steps.
    """
    if spec.K is None:
        raise DimensionError("Periodic excitation requires an exploration gain K")
    if N < 1:
        raise DimensionError(f"Number of excitation windows must be positive, got {N}")
    spec.check(sim)
    n, m = sim.n, sim.m
    checkpoints = set(checkpoints)
    policy = NoisyGain(spec.K, spec.U)
    moments = RunningMoments(n + m, n)
    x = spec.z.copy()
    step = 0
    settle_steps = []
    for window in range(N):
        settled = 0
        while np.linalg.norm(x) > spec.epsilon:
            if settled >= settle_max:
                raise SettleTimeoutError(
                    f"State did not settle below {spec.epsilon} in {settle_max} steps",
                    details={"window": window, "norm": float(np.linalg.norm(x))},
                )
            x = sim.step(x, spec.K @ x, step)
            settled += 1
            step += 1
        settle_steps.append(settled)

        generator = rng_streams.stream(seed, window)
        S_sum = np.zeros((n + m, n + m))
        H_sum = np.zeros((n + m, n))
        for k in range(n + 1):
            u = policy(k, x, generator)
            x_next = sim.step(x, u, step)
            v = np.concatenate([x, u])
            S_sum += np.outer(v, v)
            H_sum += np.outer(v, x_next)
            x = x_next
            step += 1
        moments.add(S_sum, H_sum)
        if on_checkpoint is not None and moments.count in checkpoints:
            on_checkpoint(moments.count, moments.S.copy(), moments.H.copy())

    return DataRecord(
        "off-policy",
        "periodic-excitation",
        n,
        m,
        moments.S,
        moments.H,
        N * (n + 1),
        seed,
        {
            **spec.to_record(),
            "windows": N,
            "pairs_per_window": n + 1,
            "settle_steps": int(sum(settle_steps)),
            "first_settle_steps": settle_steps[0],
        },
    )
