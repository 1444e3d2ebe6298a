import unittest

import numpy as np

from ddctl.collect import ExcitationSpec
from ddctl.core.errors import DimensionError, GenerationFailure
from ddctl.core.linalg import numerical_rank, spectral_radius
from ddctl.experiments import (
    controllability_blocks,
    gen_system,
    is_controllable,
    is_detectable,
    mc_validity,
    theorem1_mean,
    theorem2_bound,
)
from ddctl.lti import LtiSystem

from .support import ArrayTestCase, scalar_system


class GenSystemTest(ArrayTestCase):
    def test_same_seed_same_plant(self):
        first, first_weights = gen_system(3, 2, seed=12)
        second, second_weights = gen_system(3, 2, seed=12)
        self.assertArrayAlmostEqual(first.A, second.A, atol=0)
        self.assertArrayAlmostEqual(first.B, second.B, atol=0)
        self.assertArrayAlmostEqual(first_weights.Q, second_weights.Q, atol=0)

    def test_different_seeds(self):
        first, _ = gen_system(3, 2, seed=1)
        second, _ = gen_system(3, 2, seed=2)
        self.assertFalse(np.allclose(first.A, second.A))

    def test_generated_plant_is_controllable_and_detectable(self):
        for seed in range(5):
            system, weights = gen_system(4, 1, seed=seed)
            self.assertTrue(is_controllable(system.A, system.B))
            eigenvalues, vectors = np.linalg.eigh(weights.Q)
            C = (vectors[:, eigenvalues > 1e-9] * np.sqrt(eigenvalues[eigenvalues > 1e-9])).T
            self.assertTrue(is_detectable(system.A, C))
            self.assertGreaterEqual(np.linalg.eigvalsh(weights.R)[0], 1.0 - 1e-12)

    def test_spectral_radius_cap(self):
        for seed in range(5):
            system, _ = gen_system(5, 2, stable_open_loop=True, spectral_radius_cap=0.8, seed=seed)
            self.assertLessEqual(spectral_radius(system.A), 0.8)

    def test_invalid_dimensions(self):
        with self.assertRaises(DimensionError):
            gen_system(0, 1)

    def test_invalid_cap(self):
        with self.assertRaises(DimensionError):
            gen_system(2, 1, stable_open_loop=True, spectral_radius_cap=1.5)

    def test_no_attempt_left(self):
        with self.assertRaises(GenerationFailure) as cm:
            gen_system(2, 1, seed=3, attempts=0)
        self.assertEqual(cm.exception.details["seed"], 3)


class StructureTest(unittest.TestCase):
    def test_uncontrollable_pair(self):
        self.assertFalse(is_controllable(np.diag([0.5, 0.7]), np.array([[1.0], [0.0]])))

    def test_unobserved_unstable_mode(self):
        A = np.diag([2.0, 0.5])
        self.assertFalse(is_detectable(A, np.array([[0.0, 1.0]])))
        self.assertTrue(is_detectable(A, np.array([[1.0, 0.0]])))

    def test_unobserved_unstable_complex_pair(self):
        c, s = np.cos(0.7), np.sin(0.7)
        A = np.zeros((3, 3))
        A[:2, :2] = 1.2 * np.array([[c, -s], [s, c]])
        A[2, 2] = 0.3
        self.assertFalse(is_detectable(A, np.array([[0.0, 0.0, 1.0]])))
        self.assertTrue(is_detectable(A, np.array([[1.0, 0.0, 0.0]])))

    def test_rank_of_complex_matrix(self):
        M = np.array([[1.0, 1j], [1j, -1.0]])
        self.assertEqual(numerical_rank(M), 1)

    def test_empty_controllability_blocks(self):
        self.assertEqual(controllability_blocks(np.eye(2), np.ones((2, 1)), 0).shape, (2, 0))


class AnalyticMeansTest(ArrayTestCase):
    def test_restart_mean_for_scalar_plant(self):
        mean = theorem1_mean(scalar_system(), [1.0], [[1.0]])
        # 1 + (0.25 + 1) on the state, U twice on the input.
        self.assertArrayAlmostEqual(mean.M, np.diag([2.25, 2.0]))
        self.assertArrayAlmostEqual(mean.per_sample, np.diag([1.125, 1.0]))
        self.assertAlmostEqual(mean.min_eigenvalue(), 2.0)
        self.assertEqual(mean.to_record()["pairs_per_trajectory"], 2)

    def test_periodic_bound_for_scalar_plant(self):
        bound = theorem2_bound(scalar_system(), [[0.0]], [[1.0]], 0.01)
        self.assertArrayAlmostEqual(bound, 0.99 * np.eye(2))

    def test_bound_sums_controllability_blocks(self):
        system = LtiSystem([[0.5, 0.0], [1.0, 0.0]], [[1.0], [0.0]])
        bound = theorem2_bound(system, [[0.0, 0.0]], [[1.0]], 0.0)
        # B B' counted twice plus A B B' A'.
        self.assertArrayAlmostEqual(bound[:2, :2], [[2.25, 0.5], [0.5, 1.0]])
        self.assertArrayAlmostEqual(bound[2:, 2:], [[1.0]])

    def test_bound_uses_the_closed_loop(self):
        system = LtiSystem([[0.5, 0.0], [1.0, 0.0]], [[1.0], [0.0]])
        shifted = theorem2_bound(system, [[-0.5, 0.0]], [[1.0]], 0.0)
        closed = LtiSystem([[0.0, 0.0], [1.0, 0.0]], [[1.0], [0.0]])
        self.assertArrayAlmostEqual(shifted, theorem2_bound(closed, [[0.0, 0.0]], [[1.0]], 0.0))
        self.assertArrayAlmostEqual(shifted[:2, :2], np.diag([2.0, 1.0]))


class McValidityTest(unittest.TestCase):
    def spec(self, K=None, epsilon=1e-6):
        return ExcitationSpec([[1.0]], [1.0], epsilon, K=K)

    def test_single_trial(self):
        report = mc_validity(scalar_system(), self.spec(), N_max=1, threads=1)
        self.assertEqual([c["N"] for c in report.checkpoints], [1])
        self.assertEqual(report.trials, 1)

    def test_restart_average_approaches_analytic_mean(self):
        report = mc_validity(
            scalar_system(), self.spec(), N_max=10000, checkpoints=[10, 100], seed=4, threads=2
        )
        self.assertEqual([c["N"] for c in report.checkpoints], [10, 100, 10000])
        self.assertLess(report.checkpoints[-1]["relative_error"], 0.1)
        self.assertAlmostEqual(report.analytic_min_eigenvalue, 2.0)
        self.assertAlmostEqual(report.per_sample_min_eigenvalue, 1.0)
        self.assertGreater(report.final_min_eigenvalue, 0.0)

    def test_periodic_scheme(self):
        spec = self.spec(K=[[0.0]], epsilon=1e-3)
        report = mc_validity(scalar_system(), spec, scheme="periodic", N_max=500, seed=2)
        self.assertGreater(report.final_min_eigenvalue, 0.0)
        self.assertAlmostEqual(report.bound_min_eigenvalue, 1.0 - 1e-3)
        self.assertNotIn("relative_error", report.checkpoints[-1])

    def test_restart_error_shrinks_with_trials(self):
        early, late = [], []
        for seed in range(5):
            report = mc_validity(
                scalar_system(), self.spec(), N_max=10000, checkpoints=[100], seed=seed, threads=1
            )
            early.append(report.checkpoints[0]["relative_error"])
            late.append(report.checkpoints[-1]["relative_error"])
        self.assertLess(np.mean(late), np.mean(early))
        self.assertLess(max(late), 0.1)

    def test_periodic_scheme_respects_the_lower_bound(self):
        fixtures = [
            (scalar_system(), ExcitationSpec([[1.0]], [1.0], 1e-6, K=[[0.0]])),
            (
                LtiSystem([[0.5, 0.2], [0.0, 0.3]], [[0.0], [1.0]]),
                ExcitationSpec([[1.0]], [1.0, 1.0], 1e-6, K=[[0.0, 0.0]]),
            ),
        ]
        for system, spec in fixtures:
            report = mc_validity(system, spec, scheme="periodic", N_max=10000, seed=3)
            self.assertGreater(report.final_min_eigenvalue, 0.0)
            self.assertGreaterEqual(report.final_min_eigenvalue, 0.9 * report.bound_min_eigenvalue)

    def test_report_rows(self):
        report = mc_validity(scalar_system(), self.spec(), N_max=20, checkpoints=[5], threads=1)
        self.assertEqual(report.csv_header(), ["N", "min_eigenvalue", "relative_error"])
        self.assertEqual([row[0] for row in report.csv_rows()], [5, 20])
        self.assertEqual(report.to_record()["scheme"], "restarting")

    def test_checkpoints_must_not_exceed_trials(self):
        with self.assertRaises(DimensionError):
            mc_validity(scalar_system(), self.spec(), N_max=10, checkpoints=[20])

    def test_unknown_scheme(self):
        with self.assertRaises(DimensionError):
            mc_validity(scalar_system(), self.spec(), scheme="sometimes")
