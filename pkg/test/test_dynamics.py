#!/usr/bin/env python3

import csv
import os
import tempfile
import unittest
import numpy
import pychaos
import models

dynamics = pychaos.dynamics


class TestNoisePlan(unittest.TestCase):

    def test_deterministic(self):
        plan = dynamics.NoisePlan(42, 3)
        numpy.testing.assert_array_equal(plan.increments(7, 10, 2, 0.01),
                                         plan.increments(7, 10, 2, 0.01))

    def test_rows_independent_of_N(self):
        plan = dynamics.NoisePlan(42, 3)
        numpy.testing.assert_array_equal(plan.normals(5, 100, 2)[:10], plan.normals(5, 10, 2))

    def test_streams_steps_purposes_differ(self):
        plan = dynamics.NoisePlan(1, 1)
        base = plan.normals(0, 4, 1)
        self.assertFalse(numpy.array_equal(base, dynamics.NoisePlan(1, 2).normals(0, 4, 1)))
        self.assertFalse(numpy.array_equal(base, dynamics.NoisePlan(2, 1).normals(0, 4, 1)))
        self.assertFalse(numpy.array_equal(base, plan.normals(1, 4, 1)))
        self.assertFalse(numpy.array_equal(
            base, plan.normals(0, 4, 1, dynamics.NoisePlan.INITIAL)))

    def test_replica_streams(self):
        self.assertEqual(dynamics.NoisePlan.for_replica(9, 0), dynamics.NoisePlan(9, 1))
        self.assertEqual(dynamics.NoisePlan.for_reference(9).stream,
                         dynamics.NoisePlan.REFERENCE_STREAM)

    def test_seed_range(self):
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.NoisePlan(-1)
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.NoisePlan(2**64)

    def test_initial_states(self):
        plan = dynamics.NoisePlan(3, 1)
        x = dynamics.initial_states(plan, 50, 2, mean=[1.0, -1.0], std=2.0)
        y = dynamics.initial_states(plan, 20, 2, mean=[1.0, -1.0], std=2.0)
        numpy.testing.assert_array_equal(x[:20], y)
        numpy.testing.assert_allclose(x, [1.0, -1.0] + 2.0*plan.normals(0, 50, 2,
                                      dynamics.NoisePlan.INITIAL))


class TestSteps(unittest.TestCase):

    def setUp(self):
        rng = numpy.random.default_rng(5)
        self.x = rng.standard_normal((6, 1))
        self.dW = 0.1*rng.standard_normal((6, 1))
        self.model = models.create_tanh_model()

    def test_interaction_fields(self):
        ens = dynamics.Ensemble(self.x)
        drift, diffusion = dynamics.interaction_fields(ens, self.model)
        x = self.x[:, 0]
        expected = -2*x + 0.2*numpy.tanh(x[None, :] - x[:, None]).mean(axis=1)
        numpy.testing.assert_allclose(drift[:, 0], expected, atol=1e-14)
        expected = 1.0 + 0.1*numpy.tanh(x[:, None] + x[None, :]).mean(axis=1)
        numpy.testing.assert_allclose(diffusion[:, 0, 0], expected, atol=1e-14)
        one, sigma = dynamics.interaction_fields(ens, self.model, i=2)
        numpy.testing.assert_allclose(one, drift[2], atol=1e-14)
        self.assertEqual(sigma.shape, (1, 1))

    def test_euler_maruyama(self):
        ens = dynamics.Ensemble(self.x, t=0.5, step=50)
        new = dynamics.em_step_interacting(ens, self.model, 0.01, self.dW)
        drift, diffusion = dynamics.interaction_fields(ens, self.model)
        expected = self.x + 0.01*drift + diffusion[:, :, 0]*self.dW
        numpy.testing.assert_allclose(new.states, expected, atol=1e-14)
        self.assertAlmostEqual(new.t, 0.51, 14)
        self.assertEqual(new.step, 51)

    def test_exchangeable(self):
        perm = numpy.array([3, 0, 5, 1, 4, 2])
        a = dynamics.em_step_interacting(dynamics.Ensemble(self.x), self.model, 0.01, self.dW)
        b = dynamics.em_step_interacting(dynamics.Ensemble(self.x[perm]), self.model, 0.01,
                                         self.dW[perm])
        numpy.testing.assert_allclose(b.states, a.states[perm], rtol=0, atol=1e-12)

    def test_increment_shape(self):
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.em_step_interacting(dynamics.Ensemble(self.x), self.model, 0.01,
                                         numpy.zeros((5, 1)))

    def test_blow_up(self):
        model = models.create_linear_model(A0=1e300, B2=0.0)
        ens = dynamics.Ensemble([[0.0], [1.0], [1e10]])
        with numpy.errstate(over='ignore', invalid='ignore'):
            with self.assertRaises(dynamics.BlowUpException) as ctx:
                dynamics.em_step_interacting(ens, model, 0.01, numpy.zeros((3, 1)))
        self.assertEqual(ctx.exception.particle, 2)
        self.assertEqual(ctx.exception.step, 0)

    def test_non_finite_ensemble(self):
        with self.assertRaises(dynamics.BlowUpException):
            dynamics.Ensemble([[0.0], [numpy.nan]])

    def test_limit_step_uses_frozen_law(self):
        model = models.create_linear_model(A0=-1.0, B2=0.5)
        law = pychaos.metrics.GaussianLaw([2.0], [[1.0]])
        frozen = dynamics.GaussianOracle([0.0, 0.01], [law, law])
        new = dynamics.em_step_limit(dynamics.Ensemble(self.x), model, frozen, 0.01, self.dW)
        expected = self.x + 0.01*(-self.x + 0.5*2.0) + self.dW
        numpy.testing.assert_allclose(new.states, expected, atol=1e-14)

    def test_frozen_time_mismatch(self):
        model = models.create_linear_model()
        law = pychaos.metrics.GaussianLaw([0.0], [[1.0]])
        frozen = dynamics.GaussianOracle([0.0, 0.1], [law, law])
        ens = dynamics.Ensemble(self.x, t=0.05, step=5)
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.em_step_limit(ens, model, frozen, 0.01, self.dW)

    def test_gaussian_oracle_rejects_segments(self):
        law = pychaos.metrics.GaussianLaw([0.0], [[1.0]])
        frozen = dynamics.GaussianOracle([0.0], [law])
        with self.assertRaises(dynamics.DynamicsException):
            frozen.average(pychaos.models.TanhSegmentAttraction(0.1, 1),
                           numpy.zeros((2, 3, 1)), 0, 0.0)

    def test_hamiltonian_step(self):
        model = models.create_hamiltonian_model()
        x = numpy.array([[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]])
        new = dynamics.em_step_hamiltonian(dynamics.Ensemble(x), model, 0.01,
                                           numpy.zeros((3, 1)))
        self.assertIsInstance(new, dynamics.Ensemble)
        x1, x2 = x[:, 0], x[:, 1]
        numpy.testing.assert_allclose(new.states[:, 0], x1 + 0.01*(-3*x1 + 0.05*x2), atol=1e-14)
        coupling = -0.01*x2 + 0.01*x2.mean()
        numpy.testing.assert_allclose(new.states[:, 1], x2 + 0.01*(-3*x2 + coupling),
                                      atol=1e-14)

    def test_hamiltonian_noise_on_velocity_only(self):
        model = models.create_hamiltonian_model()
        x = numpy.zeros((2, 2))
        new = dynamics.em_step_hamiltonian(dynamics.Ensemble(x), model, 0.01, [[0.3], [-0.2]])
        numpy.testing.assert_array_equal(new.states[:, 0], [0.0, 0.0])
        numpy.testing.assert_allclose(new.states[:, 1], [0.3, -0.2], atol=1e-15)


class TestSegments(unittest.TestCase):

    def test_constant_extension(self):
        seg = dynamics.SegmentEnsemble.from_states([[1.0], [2.0]], 3)
        self.assertEqual(seg.lag, 3)
        numpy.testing.assert_array_equal(seg.segments()[:, :, 0], [[1.0]*4, [2.0]*4])

    def test_ring_order(self):
        seg = dynamics.SegmentEnsemble.from_states([[0.0]], 2)
        for value in (1.0, 2.0, 3.0):
            seg = seg.advance([[value]], 0.1)
        numpy.testing.assert_array_equal(seg.segments()[0, :, 0], [1.0, 2.0, 3.0])
        numpy.testing.assert_array_equal(seg.present(), [[3.0]])
        self.assertEqual(seg.step, 3)
        self.assertAlmostEqual(seg.t, 0.3, 14)

    def test_history(self):
        seg = dynamics.SegmentEnsemble.from_states(
            numpy.zeros((2, 1)), 2, history=lambda s: numpy.full((2, 1), s), dt=0.5)
        numpy.testing.assert_array_equal(seg.segments()[0, :, 0], [-1.0, -0.5, 0.0])

    def test_sup_norm(self):
        segment = numpy.array([[3.0, 4.0], [0.0, 1.0], [1.0, 1.0]])
        self.assertEqual(dynamics.segment_sup_norm(segment), 5.0)
        self.assertEqual(dynamics.segment_sup_norm(numpy.stack([segment, -2*segment])).tolist(),
                         [5.0, 10.0])

    def test_delay_step_checks_history(self):
        model = models.create_delay_model(r0=0.1)
        seg = dynamics.SegmentEnsemble.from_states(numpy.zeros((3, 1)), 5)
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.em_step_delay(seg, model, 0.01, numpy.zeros((3, 1)))
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.em_step_delay(dynamics.Ensemble(numpy.zeros((3, 1))), model, 0.01,
                                   numpy.zeros((3, 1)))

    def test_delay_step_reads_lagged_partner(self):
        model = models.create_delay_model(r0=0.02, coupling=0.5, scale=0.0)
        history = {-0.02: [[1.0], [3.0]], -0.01: [[0.0], [0.0]], 0.0: [[0.0], [2.0]]}
        seg = dynamics.SegmentEnsemble.from_states(
            numpy.zeros((2, 1)), 2, history=lambda s: history[round(s, 10)], dt=0.01)
        new = dynamics.em_step_delay(seg, model, 0.01, numpy.zeros((2, 1)))
        now, lagged = numpy.array([0.0, 2.0]), numpy.array([1.0, 3.0])
        coupling = 0.5*numpy.tanh(lagged[None, :] - now[:, None]).mean(axis=1)
        expected = now + 0.01*(-2.5*now + coupling)
        numpy.testing.assert_allclose(new.present()[:, 0], expected, atol=1e-14)


class TestRuns(unittest.TestCase):

    def test_decoupled_gap_is_zero(self):
        model = models.create_linear_model(A0=-1.0, B2=0.0)
        spec = pychaos.gaussian_oracle.LinearModelSpec.from_model(model)
        frozen = dynamics.gaussian_frozen_law(
            pychaos.gaussian_oracle.propagate_limit_moments(spec, 0.0, 1.0, 0.2, 0.01))
        plan = dynamics.NoisePlan(1, 1)
        init = dynamics.Ensemble(dynamics.initial_states(plan, 10, 1))
        run = dynamics.run_coupled(model, init, init, 0.2, 0.01, plan, frozen)
        self.assertEqual(run.times.size, 21)
        self.assertEqual(float(numpy.abs(run.gaps).max()), 0.0)

    def test_gap_matches_exact_moments(self):
        model = models.create_linear_model(A0=-1.0, B2=0.5)
        spec = pychaos.gaussian_oracle.LinearModelSpec.from_model(model)
        T, dt, N = 1.0, 0.001, 20
        frozen = dynamics.gaussian_frozen_law(
            pychaos.gaussian_oracle.propagate_limit_moments(spec, 0.0, 1.0, T, dt))
        finals = []
        for replica in range(40):
            plan = dynamics.NoisePlan.for_replica(17, replica)
            init = dynamics.Ensemble(dynamics.initial_states(plan, N, 1))
            run = dynamics.run_coupled(model, init, init, T, dt, plan, frozen,
                                       record_times=[T])
            finals.append(run.gaps[-1])
        est = pychaos.metrics.mean_ci(finals)
        _, exact = pychaos.gaussian_oracle.coupled_gap_moments(spec, N, 1.0, T, dt)
        self.assertLess(abs(est.mean - exact[-1]), 4*est.stderr + 0.05*exact[-1])

    def test_delay_reduction(self):
        model = models.create_tanh_model()
        delay = pychaos.models.DelayModel.from_mean_field(model)
        T, dt = 0.05, 0.01
        ref_plan = dynamics.NoisePlan.for_reference(4)
        ref_init = dynamics.Ensemble(dynamics.initial_states(ref_plan, 16, 1))
        runs = []
        for m in (model, delay):
            frozen = dynamics.build_reference_ensemble(m, ref_init, T, dt, ref_plan)
            plan = dynamics.NoisePlan.for_replica(4, 0)
            a = dynamics.Ensemble(dynamics.initial_states(plan, 8, 1))
            b = dynamics.Ensemble(dynamics.initial_states(
                plan, 8, 1, purpose=dynamics.NoisePlan.INDEPENDENT_INITIAL))
            runs.append(dynamics.run_coupled(m, a, b, T, dt, plan, frozen))
        numpy.testing.assert_array_equal(runs[0].gaps, runs[1].gaps)
        numpy.testing.assert_array_equal(runs[0].interacting.states,
                                         runs[1].interacting.present())
        self.assertIsNone(runs[0].segment_gaps)
        numpy.testing.assert_allclose(runs[1].segment_gaps, runs[1].gaps, rtol=1e-12, atol=0)

    def test_reference_ensemble(self):
        model = models.create_delay_model(r0=0.02)
        plan = dynamics.NoisePlan.for_reference(2)
        init = dynamics.Ensemble(dynamics.initial_states(plan, 5, 1))
        ref = dynamics.build_reference_ensemble(model, init, 0.05, 0.01, plan)
        self.assertEqual(ref.path.shape, (2 + 5 + 1, 5, 1))
        self.assertEqual(len(ref), 5)
        self.assertEqual(ref.nr_steps, 5)
        numpy.testing.assert_array_equal(ref.states_at(0), init.states)
        self.assertEqual(ref.segments_at(3).shape, (5, 3, 1))
        with self.assertRaises(dynamics.DynamicsException):
            ref.average(model.B_tilde, ref.segments_at(0), 6, 0.06)

    def test_run_interacting_records(self):
        model = models.create_tanh_model()
        plan = dynamics.NoisePlan(1, 1)
        init = dynamics.Ensemble(dynamics.initial_states(plan, 4, 1))
        traj = dynamics.run_interacting(model, init, 0.1, 0.01, plan, record_times=[0.0, 0.1])
        numpy.testing.assert_allclose(traj.times, [0.0, 0.1])
        numpy.testing.assert_array_equal(traj.states[0], init.states)
        numpy.testing.assert_array_equal(traj.states[-1], traj.final.states)
        with self.assertRaises(dynamics.DynamicsException):
            dynamics.run_interacting(model, init, 0.105, 0.01, plan)

    def test_statistic(self):
        sup = numpy.array([1.0, 2.0, 3.0, 4.0, 5.0])
        run = dynamics.CoupledRun([0.0], [0.0], None, sup, sup/10, None, None, {})
        self.assertEqual(run.statistic('sup', 2), 2.5)
        self.assertEqual(run.statistic('sup', 1), 3.0)
        self.assertAlmostEqual(run.statistic('terminal', 5), 0.3, 14)
        with self.assertRaises(dynamics.DynamicsException):
            run.statistic('mean', 1)
        with self.assertRaises(dynamics.DynamicsException):
            run.statistic('sup', 6)

    def test_write_gap_series(self):
        runs = [dynamics.CoupledRun([0.0, 0.5], gaps, None, numpy.zeros(2), numpy.zeros(2),
                                    None, None, {})
                for gaps in ([0.0, 1.0], [0.0, 3.0])]
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, 'gaps.csv')
            dynamics.write_gap_series(runs, path)
            with open(path) as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ['t', 'gap_mean', 'gap_ci_low', 'gap_ci_high'])
        self.assertEqual(float(rows[2][0]), 0.5)
        self.assertEqual(float(rows[2][1]), 2.0)
        self.assertLess(float(rows[2][2]), 2.0)


def noise_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestNoisePlan)


def steps_suite():
    suite_list = []
    suite_list.append(unittest.TestLoader().loadTestsFromTestCase(TestSteps))
    suite_list.append(unittest.TestLoader().loadTestsFromTestCase(TestSegments))
    return unittest.TestSuite(suite_list)


def runs_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestRuns)


def get_suite():
    suite_list = []
    suite_list.append(noise_suite())
    suite_list.append(steps_suite())
    suite_list.append(runs_suite())
    return unittest.TestSuite(suite_list)


if __name__ == '__main__':
    unittest.TextTestRunner(verbosity=2).run(get_suite())
