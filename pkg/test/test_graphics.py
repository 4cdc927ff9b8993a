#!/usr/bin/env python3

import unittest
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as pyplot
import numpy
import pychaos

experiments = pychaos.experiments
graphics = pychaos.graphics


def create_scan_result():
    N = numpy.array([10, 20, 40, 80])
    records = [experiments.Record(int(n), 2.0/n, 1.5/n, 2.5/n, 8) for n in N]
    fit = experiments.fit_power_law(N, [r.stat for r in records])
    return experiments.ScanResult('scan-n', records, fit)


def create_longtime_result():
    t = numpy.linspace(0, 2, 21)
    gaps = numpy.exp(-2*t) + 0.01
    records = [experiments.Record(float(s), g, 0.9*g, 1.1*g, 4) for s, g in zip(t, gaps)]
    fit = experiments.fit_exponential(t, gaps, 0.01)
    plateau = [experiments.Record(10, 0.1, 0.08, 0.12, 4)]
    return experiments.ScanResult('scan-t', records, fit, tables={'plateau': plateau})


class TestGraphics(unittest.TestCase):

    def tearDown(self):
        pyplot.close('all')

    def test_plot_scan(self):
        fig, ax = graphics.plot_scan(create_scan_result(), title='scan')
        self.assertEqual(ax.get_xscale(), 'log')
        self.assertEqual(ax.get_yscale(), 'log')
        self.assertEqual(len(ax.get_lines()), 3)
        self.assertEqual(ax.get_title(), 'scan')

    def test_plot_scan_without_guides(self):
        _, ax = graphics.plot_scan(create_scan_result(), fit=False, reference_slope=None)
        self.assertEqual(len(ax.get_lines()), 1)

    def test_gca(self):
        fig, ax = pyplot.subplots()
        fig2, ax2 = graphics.plot_scan(create_scan_result(), gca=True)
        self.assertIs(ax2, ax)
        self.assertIs(fig2, fig)

    def test_plot_longtime(self):
        result = create_longtime_result()
        _, ax = graphics.plot_longtime(result)
        labels = [line.get_label() for line in ax.get_lines()]
        self.assertIn('gap', labels)
        self.assertIn('plateau', labels)
        self.assertTrue(any(label.startswith('rate 2.0') for label in labels))

    def test_plot_gap_series_linear(self):
        _, ax = graphics.plot_gap_series(create_longtime_result().records, log=False)
        self.assertEqual(ax.get_yscale(), 'linear')

    def test_interactive(self):
        namespace = {}
        exec('from pychaos.interactive import *', namespace)
        for name in ('rate_scan_N', 'plot_scan', 'NoisePlan', 'w2_exact', 'pychaos_version',
                     'propagate_limit_moments'):
            self.assertIn(name, namespace)
        self.assertNotIn('_pychaos', namespace)


def get_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestGraphics)


if __name__ == '__main__':
    unittest.TextTestRunner(verbosity=2).run(get_suite())
