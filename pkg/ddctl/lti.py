"""Ground-truth plant ``x(k+1) = A x(k) + B u(k)``, cost weights, input rules and simulation.

Data-driven code never reads ``A`` or ``B``: it only receives a :class:`Simulator`,
which exposes trajectories and single steps of the plant it wraps.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core.errors import DimensionError, DivergenceError
from ddctl.core.linalg import is_positive_definite, is_positive_semidefinite
from ddctl.core.utils import as_matrix, as_vector

logger = logging.getLogger(__name__)


class LtiSystem:
    """Discrete-time linear time-invariant plant.

    :param A: ``n x n`` state matrix.
    :param B: ``n x m`` input matrix.
    """

    def __init__(self, A, B):
        self.A = as_matrix(A, "A")
        if self.A.shape[0] != self.A.shape[1]:
            raise DimensionError(f"A must be square, got shape {self.A.shape}")
        self.B = as_matrix(B, "B")
        if self.B.shape[0] != self.A.shape[0]:
            raise DimensionError(f"B has {self.B.shape[0]} rows, expected {self.A.shape[0]}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def closed_loop(self, F):
        """``A + B F``."""
        return self.A + self.B @ gain_matrix(self, F)

    def to_record(self):
        return {"n": self.n, "m": self.m, "A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_record(cls, record):
        system = cls(record["A"], record["B"])
        n, m = record.get("n", system.n), record.get("m", system.m)
        if (n, m) != (system.n, system.m):
            raise DimensionError(
                f"Declared dimensions ({n}, {m}) do not match matrices ({system.n}, {system.m})"
            )
        return system

    def __repr__(self):
        return f"<LtiSystem n={self.n} m={self.m}>"


class CostWeights:
    """Quadratic stage cost ``x^T Q x + u^T R u``.

    The block diagonal ``Lambda = diag(Q, R)`` is derived on access.
    """

    def __init__(self, Q, R, defect_tol=DEFAULT_SETTINGS["defect_tol"]):
        self.Q = as_matrix(Q, "Q")
        self.R = as_matrix(R, "R")
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got shape {M.shape}")
            if not np.allclose(M, M.T, rtol=0, atol=defect_tol * max(1.0, np.abs(M).max())):
                raise DimensionError(f"{name} must be symmetric")
        self.Q = (self.Q + self.Q.T) / 2.0
        self.R = (self.R + self.R.T) / 2.0
        if not is_positive_semidefinite(self.Q, defect_tol):
            raise DimensionError("Q must be positive semidefinite")
        if not is_positive_definite(self.R, defect_tol):
            raise DimensionError("R must be positive definite")

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]

    @property
    def Lambda(self):
        return linalg.block_diag(self.Q, self.R)

    def check(self, system):
        if (self.n, self.m) != (system.n, system.m):
            raise DimensionError(
                f"Weights are ({self.n}, {self.m}), system is ({system.n}, {system.m})"
            )
        return self

    def to_record(self):
        return {"Q": self.Q.tolist(), "R": self.R.tolist()}

    @classmethod
    def from_record(cls, record):
        return cls(record["Q"], record["R"])

    @classmethod
    def identity(cls, n, m):
        return cls(np.eye(n), np.eye(m))


def gain_matrix(system, F):
    """Validate a state-feedback gain ``u = F x`` against ``system`` and return it as array."""
    return as_matrix(F, "F", shape=(system.m, system.n))


def augment(system, F):
    """Augmented matrix ``A_F = [[A, B], [F A, F B]]`` driving ``v = [x; u]`` under ``u = F x``."""
    F = gain_matrix(system, F)
    return np.block([[system.A, system.B], [F @ system.A, F @ system.B]])


@dataclass
class Trajectory:
    """States ``x(0..N)`` and inputs ``u(0..N-1)``, or ``u(0..N)`` when requested."""

    states: np.ndarray
    inputs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.states.shape[0] - 1

    def stacked(self):
        """Rows ``v(k) = [x(k); u(k)]`` for every ``k`` carrying both a state and an input."""
        count = min(self.states.shape[0], self.inputs.shape[0])
        return np.hstack([self.states[:count], self.inputs[:count]])

    def to_record(self):
        return {"states": self.states.tolist(), "inputs": self.inputs.tolist(), "meta": self.meta}


class Policy:
    """Input rule ``u(k)`` given the step index and the current state."""

    def __call__(self, k, x, rng):
        raise NotImplementedError

    def describe(self):
        return {"policy": self.__class__.__name__}


class FixedGain(Policy):
    def __init__(self, F):
        self.F = np.atleast_2d(np.asarray(F, dtype=float))

    def __call__(self, k, x, rng):
        return self.F @ x

    def describe(self):
        return {"policy": "fixed-gain", "F": self.F.tolist()}


class NoisyGain(Policy):
    """``u = K x + zeta`` with ``zeta ~ N(0, U)`` drawn through the Cholesky factor of ``U``."""

    def __init__(self, K, U):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.U = np.atleast_2d(np.asarray(U, dtype=float))
        self._factor = linalg.cholesky(self.U, lower=True)

    def noise(self, rng):
        return self._factor @ rng.standard_normal(self._factor.shape[0])

    def __call__(self, k, x, rng):
        return self.K @ x + self.noise(rng)

    def describe(self):
        return {"policy": "noisy-gain", "K": self.K.tolist(), "U": self.U.tolist()}


class PureNoise(NoisyGain):
    def __init__(self, U, n):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        super().__init__(np.zeros((U.shape[0], n)), U)

    def __call__(self, k, x, rng):
        return self.noise(rng)

    def describe(self):
        return {"policy": "pure-noise", "U": self.U.tolist()}


class PrescribedInputs(Policy):
    def __init__(self, inputs):
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float))

    def __call__(self, k, x, rng):
        if k >= self.inputs.shape[0]:
            raise DimensionError(f"No prescribed input for step {k}")
        return self.inputs[k]

    def describe(self):
        return {"policy": "prescribed", "inputs": self.inputs.tolist()}


class ExploringStart(Policy):
    """Prescribed first input ``u(0)``, then ``u = F x``."""

    def __init__(self, u0, F):
        self.u0 = np.asarray(u0, dtype=float).reshape(-1)
        self.F = np.atleast_2d(np.asarray(F, dtype=float))

    def __call__(self, k, x, rng):
        if k == 0:
            return self.u0
        return self.F @ x

    def describe(self):
        return {"policy": "exploring-start", "u0": self.u0.tolist(), "F": self.F.tolist()}


class Simulator:
    """Simulation access to a plant without exposing its matrices.

    :param LtiSystem system: the hidden plant.
    :param float guard: any state norm above it aborts with :class:`DivergenceError`.
    """

    def __init__(self, system, guard=DEFAULT_SETTINGS["divergence_guard"]):
        self._system = system
        self.guard = guard

    @property
    def n(self):
        return self._system.n

    @property
    def m(self):
        return self._system.m

    def step(self, x, u, k=0):
        """Next state from ``x`` under input ``u``.

        :param int k: index of ``x``, reported as last finite step on divergence.
        """
        x_next = self._system.A @ x + self._system.B @ u
        if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > self.guard:
            raise DivergenceError(k)
        return x_next

    def run(self, x0, policy, N, rng=None, include_last_input=False):
        return simulate(
            self._system,
            x0,
            policy,
            N,
            rng=rng,
            include_last_input=include_last_input,
            guard=self.guard,
        )


def simulate(
    system,
    x0,
    policy,
    N,
    rng=None,
    include_last_input=False,
    guard=DEFAULT_SETTINGS["divergence_guard"],
):
    """Run ``N`` steps of the plant from ``x0`` under ``policy``.

    :param rng: a :class:`numpy.random.Generator`, required by noisy policies.
    :param bool include_last_input: also evaluate ``u(N)`` at the final state.
    :raises DivergenceError: when a state leaves the guard, carrying the last finite step.
    :rtype: Trajectory
    """
    if N < 1:
        raise DimensionError(f"Number of steps must be positive, got {N}")
    x = as_vector(x0, "x0", size=system.n)
    if np.linalg.norm(x) > guard:
        raise DivergenceError(-1)

    states = np.empty((N + 1, system.n))
    inputs = np.empty((N + 1 if include_last_input else N, system.m))
    states[0] = x
    for k in range(N):
        u = np.asarray(policy(k, x, rng), dtype=float).reshape(-1)
        if u.shape[0] != system.m:
            raise DimensionError(f"Policy returned {u.shape[0]} inputs, expected {system.m}")
        inputs[k] = u
        x = system.A @ x + system.B @ u
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > guard:
            logger.debug(f"Trajectory left the divergence guard at step {k + 1}")
            raise DivergenceError(k)
        states[k + 1] = x
    if include_last_input:
        inputs[N] = np.asarray(policy(N, x, rng), dtype=float).reshape(-1)

    meta = policy.describe() if isinstance(policy, Policy) else {}
    return Trajectory(states=states, inputs=inputs, meta=meta)
