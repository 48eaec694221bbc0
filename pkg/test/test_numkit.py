#!/usr/bin/env python3
"""
Tests for the dense matrix kernel
"""

import sys
import os
import time
import unittest

import numpy as np

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import NonFiniteEntries, NotSymmetric, Overflow, ShapeMismatch, Singular
from utils import numkit
from utils.logger import app_logger


class NumkitTestSuite(unittest.TestCase):
    """Kernel operations against closed-form answers"""

    def setUp(self):
        self.start_time = time.time()
        app_logger.log_performance_metric("test_start", self.start_time)
        self.rng = np.random.default_rng(7)

    def tearDown(self):
        duration = time.time() - self.start_time
        app_logger.log_performance_metric("test_duration", duration, "s")

    def random_spd(self, n, shift=1.0):
        g = self.rng.standard_normal((n, n))
        return g @ g.T + shift * np.eye(n)

    def test_from_entries_row_major(self):
        a = numkit.from_entries(2, 3, [1, 2, 3, 4, 5, 6])
        np.testing.assert_array_equal(a, [[1, 2, 3], [4, 5, 6]])
        self.assertEqual(numkit.to_entries(a), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])

    def test_from_entries_wrong_count(self):
        with self.assertRaises(ShapeMismatch):
            numkit.from_entries(2, 2, [1, 2, 3])

    def test_non_finite_entries_rejected(self):
        with self.assertRaises(NonFiniteEntries):
            numkit.as_matrix([[1.0, float('nan')], [0.0, 1.0]])

    def test_kron_small_example(self):
        result = numkit.kron([[1, 2], [3, 4]], [[0, 1], [1, 0]])
        expected = np.array([[0, 1, 0, 2],
                             [1, 0, 2, 0],
                             [0, 3, 0, 4],
                             [3, 0, 4, 0]], dtype=float)
        np.testing.assert_array_equal(result, expected)

    def test_kron_identities(self):
        a, b, c = (self.rng.standard_normal((2, 3)), self.rng.standard_normal((3, 2)),
                   self.rng.standard_normal((2, 2)))
        np.testing.assert_allclose(numkit.kron(numkit.kron(a, b), c), numkit.kron(a, numkit.kron(b, c)),
                                   atol=1e-12)
        d = self.rng.standard_normal((3, 4))
        e = self.rng.standard_normal((2, 3))
        # (A kron B)(D kron E) = AD kron BE
        np.testing.assert_allclose(numkit.kron(a, b) @ numkit.kron(d, e), numkit.kron(a @ d, b @ e),
                                   atol=1e-12)

    def test_sym_eig_two_by_two(self):
        eig = numkit.sym_eig([[2, 1], [1, 2]])
        np.testing.assert_allclose(eig.values, [1.0, 3.0], atol=1e-12)
        np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(2), atol=1e-12)

    def test_sym_eig_reconstructs(self):
        s = self.random_spd(6, shift=0.0) - 3.0 * np.eye(6)
        eig = numkit.sym_eig(s)
        np.testing.assert_allclose(eig.reconstruct(), s, atol=1e-10)
        self.assertTrue(np.all(np.diff(eig.values) >= 0))

    def test_sym_eig_rejects_asymmetric(self):
        with self.assertRaises(NotSymmetric):
            numkit.sym_eig([[1.0, 2.0], [0.0, 1.0]])

    def test_is_pd_examples(self):
        self.assertTrue(numkit.is_pd([[2, 1], [1, 2]]).positive)
        report = numkit.is_pd([[1, 2], [2, 1]])
        self.assertFalse(report.positive)
        self.assertAlmostEqual(report.min_eigenvalue, -1.0, places=12)
        self.assertFalse(numkit.is_pd(np.zeros((2, 2))))

    def test_is_pd_matches_leading_minors(self):
        for _ in range(20):
            g = self.rng.standard_normal((4, 4))
            s = g + g.T
            minors = [np.linalg.det(s[:k, :k]) for k in range(1, 5)]
            if min(abs(v) for v in minors) < 1e-6:
                continue
            self.assertEqual(bool(numkit.is_pd(s)), all(v > 0 for v in minors))

    def test_is_pd_margin(self):
        self.assertFalse(numkit.is_pd(1e-8 * np.eye(3), margin=1e-7))
        self.assertTrue(numkit.is_pd(1e-6 * np.eye(3), margin=1e-7))

    def test_solve_vector_and_matrix(self):
        x = numkit.solve([[2, 0], [0, 4]], [2, 8])
        np.testing.assert_allclose(x, [1.0, 2.0])
        self.assertEqual(x.shape, (2,))
        a = self.random_spd(5)
        b = self.rng.standard_normal((5, 3))
        np.testing.assert_allclose(a @ numkit.solve(a, b), b, atol=1e-10)

    def test_solve_singular(self):
        with self.assertRaises(Singular):
            numkit.solve([[1, 2], [2, 4]], [1, 2])

    def test_solve_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            numkit.solve(np.eye(3), np.ones(2))

    def test_expm_examples(self):
        np.testing.assert_allclose(numkit.expm(np.zeros((3, 3))), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(numkit.expm([[0, 1], [0, 0]], 2.0), [[1, 2], [0, 1]], atol=1e-14)
        rotation = numkit.expm([[0, -1], [1, 0]], np.pi / 2)
        np.testing.assert_allclose(rotation, [[0, -1], [1, 0]], atol=1e-12)

    def test_expm_semigroup(self):
        a = 0.5 * self.rng.standard_normal((4, 4))
        np.testing.assert_allclose(numkit.expm(a, 0.3) @ numkit.expm(a, 0.7), numkit.expm(a, 1.0),
                                   rtol=1e-10, atol=1e-12)

    def test_expm_overflow(self):
        with self.assertRaises(Overflow):
            numkit.expm([[1000.0]], 10.0)

    def test_rk4_polynomial_matches_expm_to_fifth_order(self):
        m = 0.5 * self.rng.standard_normal((4, 4))
        h = 1e-2
        hm = h * m
        taylor = np.eye(4)
        term = np.eye(4)
        for k in range(1, 5):
            term = term @ hm / k
            taylor = taylor + term
        # Local error of one step is O(h^5)
        self.assertLess(np.linalg.norm(taylor - numkit.expm(m, h)), 1e-9)

    def test_symmetry_residual(self):
        self.assertEqual(numkit.symmetry_residual(np.eye(3)), 0.0)
        self.assertGreater(numkit.symmetry_residual([[0.0, 1.0], [0.0, 0.0]]), 0.1)


if __name__ == '__main__':
    unittest.main()
