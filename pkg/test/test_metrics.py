#!/usr/bin/env python3

import itertools
import math
import unittest
import numpy
import scipy.stats
import pychaos

metrics = pychaos.metrics


class TestWasserstein(unittest.TestCase):

    def setUp(self):
        self.rng = numpy.random.default_rng(11)

    def test_exact_against_permutations(self):
        a = self.rng.standard_normal((5, 2))
        b = self.rng.standard_normal((5, 2)) + 1.0
        best = min(((a - b[list(p)])**2).sum(axis=1).mean()
                   for p in itertools.permutations(range(5)))
        self.assertAlmostEqual(metrics.w2_exact(a, b), math.sqrt(best), 12)

    def test_pairing_bound(self):
        a = self.rng.standard_normal((30, 3))
        b = self.rng.standard_normal((30, 3))
        self.assertLessEqual(metrics.w2_exact(a, b), metrics.w2_pairing_bound(a, b) + 1e-12)

    def test_sorted_1d(self):
        a = self.rng.standard_normal(40)
        b = 2*self.rng.standard_normal(40) - 1
        self.assertAlmostEqual(metrics.w2_sorted_1d(a, b), metrics.w2_exact(a, b), 10)
        with self.assertRaises(metrics.MetricsException):
            metrics.w2_sorted_1d(numpy.zeros((3, 2)), numpy.zeros((3, 2)))

    def test_identical_clouds(self):
        a = metrics.PointCloud(self.rng.standard_normal((10, 2)))
        self.assertEqual(metrics.w2_exact(a, a), 0.0)

    def test_size_mismatch(self):
        with self.assertRaises(metrics.MetricsException):
            metrics.w2_exact(numpy.zeros((3, 1)), numpy.zeros((4, 1)))

    def test_sinkhorn(self):
        a = self.rng.standard_normal((100, 1))
        b = self.rng.standard_normal((100, 1)) + 2.0
        exact = metrics.w2_exact(a, b)
        approx = metrics.w2_sinkhorn(a, b, eps=0.01)
        self.assertLess(abs(approx - exact), 0.05*exact)

    def test_sinkhorn_errors(self):
        a = self.rng.standard_normal((20, 1))
        with self.assertRaises(metrics.MetricsException):
            metrics.w2_sinkhorn(a, a, eps=0.0)
        with self.assertRaises(metrics.SinkhornConvergenceError):
            metrics.w2_sinkhorn(a, a + 3.0, eps=1e-3, max_iter=1, tol=1e-14,
                                eps_scaling=False)

    def test_marginal_bound(self):
        self.assertEqual(metrics.marginal_chaos_bound(2.0, 3, 12), 0.5)
        with self.assertRaises(metrics.MetricsException):
            metrics.marginal_chaos_bound(1.0, 0, 10)
        with self.assertRaises(metrics.MetricsException):
            metrics.marginal_chaos_bound(1.0, 11, 10)


class TestGaussian(unittest.TestCase):

    def test_w2_scalar(self):
        g1 = metrics.GaussianLaw([1.0], [[4.0]])
        g2 = metrics.GaussianLaw([-1.0], [[1.0]])
        self.assertAlmostEqual(metrics.gaussian_w2(g1, g2), math.sqrt(4.0 + 1.0), 12)

    def test_w2_diagonal(self):
        g1 = metrics.GaussianLaw([0.0, 1.0], numpy.diag([1.0, 9.0]))
        g2 = ([0.0, 0.0], numpy.diag([4.0, 1.0]))
        self.assertAlmostEqual(metrics.gaussian_w2(g1, g2), math.sqrt(1.0 + 1.0 + 4.0), 12)

    def test_kl_scalar(self):
        m1, s1, m2, s2 = 0.3, 1.5, -0.2, 0.8
        expected = math.log(s2/s1) + (s1**2 + (m1 - m2)**2)/(2*s2**2) - 0.5
        value = metrics.gaussian_kl(([m1], [[s1**2]]), ([m2], [[s2**2]]))
        self.assertAlmostEqual(value, expected, 12)

    def test_kl_matrix(self):
        rng = numpy.random.default_rng(2)
        L1, L2 = rng.standard_normal((2, 3, 3))
        S1 = L1 @ L1.T + numpy.eye(3)
        S2 = L2 @ L2.T + numpy.eye(3)
        m1, m2 = rng.standard_normal((2, 3))
        inv = numpy.linalg.inv(S2)
        expected = 0.5*(numpy.trace(inv @ S1) + (m2 - m1) @ inv @ (m2 - m1) - 3 +
                        math.log(numpy.linalg.det(S2)/numpy.linalg.det(S1)))
        self.assertAlmostEqual(metrics.gaussian_kl((m1, S1), (m2, S2)), expected, 10)

    def test_kl_small(self):
        eps = 1e-6
        value = metrics.gaussian_kl(([0.0], [[1.0 + eps]]), ([0.0], [[1.0]]))
        self.assertAlmostEqual(value/(eps**2/4), 1.0, 5)

    def test_kl_degenerate(self):
        self.assertEqual(metrics.gaussian_kl(([0.0], [[0.0]]), ([0.0], [[1.0]])), math.inf)
        with self.assertRaises(metrics.MetricsException):
            metrics.gaussian_kl(([0.0], [[1.0]]), ([0.0], [[0.0]]))

    def test_pinsker(self):
        g1 = metrics.GaussianLaw([0.0], [[1.0]])
        g2 = metrics.GaussianLaw([0.5], [[1.5]])
        tv = metrics.gaussian_tv_quadrature(g1, g2)
        self.assertLessEqual(tv, metrics.pinsker_tv_bound(metrics.gaussian_kl(g1, g2)))
        self.assertAlmostEqual(metrics.gaussian_tv_quadrature(g1, g1), 0.0, 12)
        with self.assertRaises(metrics.MetricsException):
            metrics.pinsker_tv_bound(-1.0)

    def test_tv_shifted(self):
        tv = metrics.gaussian_tv_quadrature(([0.0], [[1.0]]), ([1.0], [[1.0]]))
        expected = 2*(2*scipy.stats.norm.cdf(0.5) - 1)
        self.assertAlmostEqual(tv, expected, 8)


class TestEstimates(unittest.TestCase):

    def test_mean_ci(self):
        est = metrics.mean_ci([1.0, 2.0, 3.0])
        self.assertEqual(est.mean, 2.0)
        self.assertAlmostEqual(est.stderr, 1/math.sqrt(3), 14)
        self.assertLess(est.ci_low, 2.0)
        self.assertGreater(est.ci_high, 2.0)
        self.assertEqual(est.trials, 3)
        self.assertTrue(math.isnan(metrics.mean_ci([4.0]).stderr))
        with self.assertRaises(metrics.MetricsException):
            metrics.mean_ci([])

    def test_coverage(self):
        rng = numpy.random.default_rng(2024)
        hits = 0
        for _ in range(1000):
            est = metrics.mean_ci(rng.standard_normal(200) + 3.0)
            hits += est.ci_low <= 3.0 <= est.ci_high
        self.assertGreaterEqual(hits/1000, 0.93)
        self.assertLessEqual(hits/1000, 0.97)

    def test_lln_bernoulli(self):
        N = 50
        est = metrics.lln_gap(lambda v, w: w, lambda rng, shape: rng.integers(0, 2, shape),
                              N, 20000, conditional=lambda v: 0.5, seed=3)
        self.assertLess(abs(est.mean - 0.25/N), 4*est.stderr)

    def test_lln_inner_average(self):
        N = 20
        est = metrics.lln_gap(lambda v, w: w, lambda rng, shape: rng.standard_normal(shape),
                              N, 4000, inner_size=2000, seed=1)
        self.assertLess(abs(est.mean - (1/N + 1/2000)), 4*est.stderr)

    def test_lln_constant(self):
        est = metrics.lln_gap(lambda v, w: numpy.ones(numpy.broadcast_shapes(v.shape, w.shape)),
                              lambda rng, shape: rng.standard_normal(shape), 10, 100,
                              conditional=lambda v: 1.0)
        self.assertEqual(est.mean, 0.0)

    def test_lln_seeded(self):
        args = (lambda v, w: w, lambda rng, shape: rng.standard_normal(shape), 10, 500)
        a = metrics.lln_gap(*args, conditional=lambda v: 0.0, seed=9)
        b = metrics.lln_gap(*args, conditional=lambda v: 0.0, seed=9)
        self.assertEqual(a, b)
        with self.assertRaises(metrics.MetricsException):
            metrics.lln_gap(*args[:2], 0, 10)

    def test_lln_conditional_shape(self):
        def sampler(rng, shape):
            return rng.standard_normal(shape + (2,))
        with self.assertRaises(metrics.MetricsException):
            metrics.lln_gap(lambda v, w: w, sampler, 5, 10,
                            conditional=lambda v: numpy.zeros((v.shape[0], 3)))


def wasserstein_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestWasserstein)


def gaussian_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestGaussian)


def estimates_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestEstimates)


def get_suite():
    suite_list = []
    suite_list.append(wasserstein_suite())
    suite_list.append(gaussian_suite())
    suite_list.append(estimates_suite())
    return unittest.TestSuite(suite_list)


if __name__ == '__main__':
    unittest.TextTestRunner(verbosity=2).run(get_suite())
