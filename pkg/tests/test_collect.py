import os
import unittest
from unittest import mock

import numpy as np

from ddctl.collect import (
    DataRecord,
    ExcitationSpec,
    RunningMoments,
    is_valid,
    off_collect,
    off_collect_periodic,
    off_collect_restart,
    on_collect,
    restart_trajectory,
    worker_count,
)
from ddctl.core.errors import (
    DimensionError,
    DivergenceError,
    InvalidDataError,
    PersistentExcitationError,
    SettleTimeoutError,
)
from ddctl.lti import LtiSystem, Simulator, augment
from ddctl.oracle import identity_residual

from .support import ArrayTestCase, random_system, scalar_system


def excitation(system, epsilon=1e-6, K=None, z=None):
    z = np.ones(system.n) if z is None else z
    return ExcitationSpec(np.eye(system.m), z, epsilon, K=K)


class DataRecordTest(ArrayTestCase):
    def setUp(self):
        self.record = DataRecord("off-policy", "restarting", 1, 1, np.eye(2), np.ones((2, 1)), 4)

    def test_unknown_kind(self):
        with self.assertRaises(DimensionError):
            DataRecord("sideways", "restarting", 1, 1, np.eye(2), np.ones((2, 1)), 4)

    def test_shapes_follow_the_kind(self):
        with self.assertRaises(DimensionError):
            DataRecord("on-policy", "exploring-starts", 1, 1, np.eye(2), np.ones((2, 1)), 4)

    def test_second_moment_must_be_symmetric(self):
        with self.assertRaises(InvalidDataError):
            DataRecord("off-policy", "restarting", 1, 1, [[1, 1], [0, 1]], np.ones((2, 1)), 4)

    def test_needs_samples(self):
        with self.assertRaises(InvalidDataError):
            DataRecord("off-policy", "restarting", 1, 1, np.eye(2), np.ones((2, 1)), 0)

    def test_required_kind(self):
        with self.assertRaises(InvalidDataError):
            self.record.require("on-policy")
        self.assertIs(self.record.require("off-policy"), self.record)

    def test_scaling(self):
        scaled = self.record.scaled(3.0)
        self.assertArrayAlmostEqual(scaled.S, 3.0 * np.eye(2))
        self.assertEqual(scaled.sample_count, 4)

    def test_record_round_trip(self):
        copy = DataRecord.from_record(self.record.to_record())
        self.assertArrayAlmostEqual(copy.S, self.record.S)
        self.assertEqual(copy.scheme, "restarting")

    def test_validity(self):
        self.assertTrue(is_valid(self.record))
        self.assertFalse(is_valid(self.record, threshold=1.0))
        with self.assertRaises(DimensionError):
            is_valid(self.record, threshold=-1.0)


class RunningMomentsTest(ArrayTestCase):
    def test_running_average(self):
        moments = RunningMoments(1, 1)
        for value in (1.0, 2.0, 6.0):
            moments.add(np.array([[value]]), np.array([[2 * value]]))
        self.assertArrayAlmostEqual(moments.S, [[3.0]])
        self.assertArrayAlmostEqual(moments.H, [[6.0]])
        self.assertEqual(moments.count, 3)


class ExcitationSpecTest(unittest.TestCase):
    def test_covariance_must_be_definite(self):
        with self.assertRaises(DimensionError):
            ExcitationSpec([[0.0]], [1.0], 1e-6)

    def test_threshold_must_be_positive(self):
        with self.assertRaises(DimensionError):
            ExcitationSpec([[1.0]], [1.0], 0.0)

    def test_dimensions_are_checked_against_the_plant(self):
        spec = ExcitationSpec(np.eye(2), [1.0], 1e-6)
        with self.assertRaises(DimensionError):
            spec.check(Simulator(scalar_system()))


class OnCollectTest(ArrayTestCase):
    def test_scalar_identity(self):
        system = scalar_system()
        F = [[-0.25]]
        record = on_collect(Simulator(system), F, 10)
        self.assertEqual(record.kind, "on-policy")
        self.assertEqual(record.sample_count, 20)
        self.assertArrayAlmostEqual(record.S @ augment(system, F).T, record.H, atol=1e-10)

    def test_identity_for_random_plant(self):
        system, _ = random_system(11, 4, 2, stable=True)
        F = np.zeros((2, 4))
        record = on_collect(Simulator(system), F, 12)
        self.assertLess(identity_residual(record, system, F), 1e-10)
        self.assertTrue(is_valid(record))

    def test_diverging_closed_loop_is_truncated(self):
        record = on_collect(Simulator(LtiSystem([[3.0]], [[1.0]])), [[0.0]], 400)
        self.assertEqual(record.params["truncated"], {"0": 314, "1": 315})
        self.assertEqual(record.sample_count, 314 + 315)
        self.assertGreater(record.min_eigenvalue(), 0.0)

    def test_truncation_within_guard(self):
        sim = Simulator(LtiSystem([[10.0]], [[1.0]]), guard=1e6)
        record = on_collect(sim, [[1.0]], 50)
        self.assertIn("truncated", record.params)
        self.assertLess(record.sample_count, 100)

    def test_too_few_finite_samples(self):
        sim = Simulator(LtiSystem([[10.0]], [[1.0]]), guard=0.5)
        with self.assertRaises(DivergenceError) as cm:
            on_collect(sim, [[1.0]], 50)
        self.assertEqual(cm.exception.details["samples"], 0)

    def test_stable_closed_loop_is_not_truncated(self):
        record = on_collect(Simulator(scalar_system()), [[-0.25]], 10)
        self.assertNotIn("truncated", record.params)

    def test_positive_step_count(self):
        with self.assertRaises(DimensionError):
            on_collect(Simulator(scalar_system()), [[0.0]], 0)


class OffCollectTest(ArrayTestCase):
    def test_single_trajectory_reaches_threshold(self):
        system, _ = random_system(12, 3, 1, stable=True)
        record = off_collect(Simulator(system), excitation(system), 10000)
        self.assertEqual(record.scheme, "exploration")
        self.assertGreater(record.min_eigenvalue(), 1e-6)
        self.assertLess(identity_residual(record, system), 1e-10)

    def test_excitation_failure(self):
        # The second state is unreachable and starts at zero.
        system = LtiSystem(np.eye(2) * 0.5, [[1.0], [0.0]])
        spec = excitation(system, epsilon=1e-3, z=[1.0, 0.0])
        with self.assertRaises(PersistentExcitationError) as cm:
            off_collect(Simulator(system), spec, 50)
        self.assertEqual(cm.exception.details["max_steps"], 50)


class RestartTest(ArrayTestCase):
    def test_identity_and_sample_count(self):
        system, _ = random_system(13, 3, 2)
        record = off_collect_restart(Simulator(system), excitation(system), 40, seed=5, threads=1)
        self.assertEqual(record.scheme, "restarting")
        self.assertEqual(record.sample_count, 40 * 4)
        self.assertEqual(record.params["pairs_per_trajectory"], 4)
        self.assertLess(identity_residual(record, system), 1e-10)

    def test_result_does_not_depend_on_threads(self):
        system, _ = random_system(14, 2, 1)
        spec = excitation(system)
        sim = Simulator(system)
        single = off_collect_restart(sim, spec, 600, seed=3, threads=1)
        pooled = off_collect_restart(sim, spec, 600, seed=3, threads=4)
        np.testing.assert_array_equal(single.S, pooled.S)
        np.testing.assert_array_equal(single.H, pooled.H)

    def test_average_of_trajectory_sums(self):
        system = scalar_system()
        spec = excitation(system)
        sim = Simulator(system)
        record = off_collect_restart(sim, spec, 3, seed=9, threads=1)
        sums = [restart_trajectory(sim, spec, 9, i)[0] for i in range(3)]
        self.assertArrayAlmostEqual(record.S, sum(sums) / 3.0, atol=1e-12)

    def test_checkpoints(self):
        system = scalar_system()
        seen = []
        off_collect_restart(
            Simulator(system),
            excitation(system),
            300,
            threads=2,
            on_checkpoint=lambda count, S, H: seen.append(count),
            checkpoints=(1, 10, 300),
        )
        self.assertEqual(seen, [1, 10, 300])

    def test_positive_trajectory_count(self):
        system = scalar_system()
        with self.assertRaises(DimensionError):
            off_collect_restart(Simulator(system), excitation(system), 0)


class PeriodicTest(ArrayTestCase):
    def test_identity_and_validity(self):
        system, _ = random_system(15, 2, 1, stable=True)
        spec = excitation(system, epsilon=1e-3, K=np.zeros((1, 2)))
        record = off_collect_periodic(Simulator(system), spec, 200, settle_max=10000, seed=1)
        self.assertEqual(record.scheme, "periodic-excitation")
        self.assertEqual(record.sample_count, 200 * 3)
        self.assertTrue(is_valid(record))
        self.assertLess(identity_residual(record, system), 1e-10)

    def test_requires_exploration_gain(self):
        system = scalar_system()
        with self.assertRaises(DimensionError):
            off_collect_periodic(Simulator(system), excitation(system), 5, settle_max=10)

    def test_settle_timeout(self):
        system = scalar_system()
        spec = excitation(system, epsilon=1e-9, K=[[0.5]])
        with self.assertRaises(SettleTimeoutError) as cm:
            off_collect_periodic(Simulator(system), spec, 5, settle_max=10)
        self.assertEqual(cm.exception.details["window"], 0)


class WorkerCountTest(unittest.TestCase):
    def test_explicit_value(self):
        self.assertEqual(worker_count(3), 3)
        self.assertEqual(worker_count(0), 1)

    def test_environment(self):
        with mock.patch.dict(os.environ, {"DDCTL_THREADS": "2"}):
            self.assertEqual(worker_count(), 2)
