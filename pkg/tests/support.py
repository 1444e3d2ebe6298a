import unittest

import numpy as np

from ddctl.collect import ExcitationSpec, off_collect_restart, on_collect
from ddctl.core import rng as rng_streams
from ddctl.core.linalg import controllability_matrix, numerical_rank, spectral_radius
from ddctl.lti import CostWeights, LtiSystem, Simulator

# x(k+1) = 0.5 x(k) + u(k), Q = R = 1
SCALAR_A = [[0.5]]
SCALAR_B = [[1.0]]
SCALAR_X = (0.25 + np.sqrt(4.0625)) / 2.0
SCALAR_FSTAR = -0.5 * SCALAR_X / (1.0 + SCALAR_X)
SCALAR_PSTAR = [[1.0 + 0.25 * SCALAR_X, 0.5 * SCALAR_X], [0.5 * SCALAR_X, 1.0 + SCALAR_X]]


def scalar_system(A=SCALAR_A, B=SCALAR_B):
    return LtiSystem(A, B)


def scalar_weights():
    return CostWeights([[1.0]], [[1.0]])


def random_system(seed, n, m, stable=False):
    """Controllable plant with identity weights, ``rho(A) <= 0.9`` if ``stable``."""
    rng = rng_streams.stream(seed, 1000)
    while True:
        A = rng.standard_normal((n, n)) / np.sqrt(n)
        B = rng.standard_normal((n, m))
        if stable:
            A = A * 0.9 / max(spectral_radius(A), 0.9)
        if numerical_rank(controllability_matrix(A, B)) == n:
            return LtiSystem(A, B), CostWeights.identity(n, m)


def closed_loop_gain(system, rho):
    """Scalar gain placing the closed loop pole at ``rho``."""
    a, b = system.A[0, 0], system.B[0, 0]
    return np.array([[(rho - a) / b]])


def on_policy_data(system, F, N=None, seed=0):
    sim = Simulator(system)
    return on_collect(sim, F, N or system.n + system.m + 2, seed=seed)


def off_policy_data(system, N=200, seed=0, z=None):
    spec = ExcitationSpec(np.eye(system.m), np.ones(system.n) if z is None else z, 1e-6)
    return off_collect_restart(Simulator(system), spec, N, seed=seed, threads=1)


class ArrayTestCase(unittest.TestCase):
    def assertArrayAlmostEqual(self, actual, expected, atol=1e-10, rtol=0.0):
        np.testing.assert_allclose(np.asarray(actual), np.asarray(expected), atol=atol, rtol=rtol)
