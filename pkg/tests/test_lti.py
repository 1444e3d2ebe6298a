import unittest

import numpy as np

from ddctl.core import rng
from ddctl.core.errors import DimensionError, DivergenceError
from ddctl.lti import (
    CostWeights,
    ExploringStart,
    FixedGain,
    LtiSystem,
    NoisyGain,
    PrescribedInputs,
    PureNoise,
    Simulator,
    augment,
    gain_matrix,
    simulate,
)

from .support import ArrayTestCase, scalar_system, scalar_weights


class LtiSystemTest(ArrayTestCase):
    def test_dimensions(self):
        system = LtiSystem(np.eye(3), np.ones((3, 2)))
        self.assertEqual((system.n, system.m), (3, 2))

    def test_state_matrix_must_be_square(self):
        with self.assertRaises(DimensionError):
            LtiSystem(np.ones((2, 3)), np.ones((2, 1)))

    def test_input_matrix_rows(self):
        with self.assertRaises(DimensionError):
            LtiSystem(np.eye(2), np.ones((3, 1)))

    def test_closed_loop(self):
        self.assertArrayAlmostEqual(scalar_system().closed_loop([[-0.25]]), [[0.25]])

    def test_record_round_trip_checks_declared_dimensions(self):
        record = scalar_system().to_record()
        self.assertEqual(LtiSystem.from_record(record).n, 1)
        with self.assertRaises(DimensionError):
            LtiSystem.from_record({**record, "m": 2})

    def test_gain_shape_is_checked(self):
        with self.assertRaises(DimensionError):
            gain_matrix(scalar_system(), [[1.0, 2.0]])

    def test_augmented_matrix(self):
        A_F = augment(scalar_system(), [[0.1]])
        self.assertArrayAlmostEqual(A_F, [[0.5, 1.0], [0.05, 0.1]])


class CostWeightsTest(ArrayTestCase):
    def test_lambda_is_block_diagonal(self):
        weights = CostWeights(np.eye(2), [[3.0]])
        self.assertArrayAlmostEqual(weights.Lambda, np.diag([1.0, 1.0, 3.0]))

    def test_input_weight_must_be_definite(self):
        with self.assertRaises(DimensionError):
            CostWeights([[1.0]], [[0.0]])

    def test_state_weight_may_be_singular(self):
        self.assertEqual(CostWeights([[0.0]], [[1.0]]).n, 1)

    def test_state_weight_must_be_symmetric(self):
        with self.assertRaises(DimensionError):
            CostWeights([[1.0, 1.0], [0.0, 1.0]], [[1.0]])

    def test_weights_must_match_the_system(self):
        with self.assertRaises(DimensionError):
            CostWeights.identity(2, 1).check(scalar_system())
        self.assertIsNotNone(scalar_weights().check(scalar_system()))


class SimulateTest(ArrayTestCase):
    def test_free_response(self):
        trajectory = simulate(scalar_system(), [1.0], FixedGain([[0.0]]), 3)
        self.assertArrayAlmostEqual(trajectory.states[:, 0], [1.0, 0.5, 0.25, 0.125])
        self.assertEqual(trajectory.inputs.shape, (3, 1))
        self.assertEqual(trajectory.steps, 3)
        self.assertEqual(trajectory.meta["policy"], "fixed-gain")

    def test_last_input_is_evaluated_on_request(self):
        trajectory = simulate(
            scalar_system(), [1.0], FixedGain([[-0.5]]), 2, include_last_input=True
        )
        self.assertArrayAlmostEqual(trajectory.inputs[:, 0], [-0.5, 0.0, 0.0])
        self.assertEqual(trajectory.stacked().shape, (3, 2))

    def test_prescribed_inputs(self):
        trajectory = simulate(scalar_system(), [0.0], PrescribedInputs([[1.0], [2.0]]), 2)
        self.assertArrayAlmostEqual(trajectory.states[:, 0], [0.0, 1.0, 2.5])

    def test_missing_prescribed_input(self):
        with self.assertRaises(DimensionError):
            simulate(scalar_system(), [0.0], PrescribedInputs([[1.0]]), 2)

    def test_exploring_start(self):
        trajectory = simulate(scalar_system(), [0.0], ExploringStart([1.0], [[0.0]]), 2)
        self.assertArrayAlmostEqual(trajectory.inputs[:, 0], [1.0, 0.0])

    def test_noisy_policies_are_reproducible(self):
        policy = NoisyGain([[0.0]], [[4.0]])
        first = simulate(scalar_system(), [0.0], policy, 5, rng=rng.stream(1, 0))
        second = simulate(scalar_system(), [0.0], policy, 5, rng=rng.stream(1, 0))
        self.assertArrayAlmostEqual(first.states, second.states, atol=0)

    def test_pure_noise_ignores_the_state(self):
        policy = PureNoise([[1.0]], 1)
        u = policy(0, np.array([1e6]), rng.stream(2))
        self.assertLess(abs(u[0]), 10.0)

    def test_positive_step_count(self):
        with self.assertRaises(DimensionError):
            simulate(scalar_system(), [1.0], FixedGain([[0.0]]), 0)

    def test_divergence_reports_last_finite_step(self):
        sim = Simulator(LtiSystem([[10.0]], [[1.0]]), guard=1e3)
        with self.assertRaises(DivergenceError) as cm:
            sim.run([1.0], FixedGain([[0.0]]), 10)
        self.assertEqual(cm.exception.step, 3)
        self.assertEqual(cm.exception.details["last_finite_step"], 3)


class SimulatorTest(unittest.TestCase):
    def test_matrices_are_hidden(self):
        sim = Simulator(scalar_system())
        self.assertFalse(hasattr(sim, "A"))
        self.assertEqual((sim.n, sim.m), (1, 1))

    def test_single_step(self):
        sim = Simulator(scalar_system())
        self.assertAlmostEqual(sim.step(np.array([2.0]), np.array([1.0]))[0], 2.0)

    def test_step_guard(self):
        sim = Simulator(scalar_system(), guard=1.0)
        with self.assertRaises(DivergenceError):
            sim.step(np.array([4.0]), np.array([0.0]), k=7)


class AugmentedSystemTest(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(17)

    def random_plant(self, i):
        n, m = 1 + i % 5, 1 + i % 3
        system = LtiSystem(self.rng.standard_normal((n, n)), self.rng.standard_normal((n, m)))
        return system, self.rng.standard_normal((m, n))

    def test_same_spectral_radius_as_the_closed_loop(self):
        for i in range(100):
            system, F = self.random_plant(i)
            closed = np.max(np.abs(np.linalg.eigvals(system.closed_loop(F))))
            augmented = np.max(np.abs(np.linalg.eigvals(augment(system, F))))
            self.assertLessEqual(abs(closed - augmented), 1e-9 * (1.0 + closed), f"plant {i}")

    def test_stacked_samples_follow_the_augmented_matrix(self):
        for i in range(20):
            system, F = self.random_plant(i)
            F *= 0.1
            u0 = self.rng.standard_normal(system.m)
            x0 = self.rng.standard_normal(system.n)
            trajectory = simulate(system, x0, ExploringStart(u0, F), 8, include_last_input=True)
            v = trajectory.stacked()
            A_F = augment(system, F)
            for k in range(8):
                scale = 1.0 + np.linalg.norm(v[k])
                np.testing.assert_allclose(v[k + 1], A_F @ v[k], rtol=0, atol=1e-12 * scale)
