#!/usr/bin/env python3

import contextlib
import io
import json
import os
import tempfile
import unittest
import pychaos.cli
import models


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = pychaos.cli.run(list(argv))
    return code, out.getvalue(), err.getvalue()


def error_of(stderr):
    lines = [line for line in stderr.splitlines() if line.startswith('{')]
    return json.loads(lines[-1])


class TestValidate(unittest.TestCase):

    def test_pass(self):
        code, out, _ = run_cli('validate', '--config', models.config_path('dissipative_pass'))
        self.assertEqual(code, pychaos.cli.EXIT_OK)
        report = json.loads(out)
        self.assertTrue(report['passed'])
        self.assertEqual(report['margin'], 1.0)
        self.assertEqual(report['rate'], 0.5)

    def test_fail(self):
        code, out, err = run_cli('validate', '--config', models.config_path('dissipative_fail'))
        self.assertEqual(code, pychaos.cli.EXIT_VALIDATION)
        self.assertFalse(json.loads(out)['passed'])
        self.assertEqual(error_of(err)['error'], 'ValidationFailed')

    def test_writes_report(self):
        with tempfile.TemporaryDirectory() as folder:
            code, _, _ = run_cli('validate', '--config', models.config_path('dissipative_pass'),
                                 '--out', folder)
            self.assertEqual(code, 0)
            with open(os.path.join(folder, 'manifest.json')) as f:
                manifest = json.load(f)
        self.assertEqual(manifest['command'], 'validate')
        self.assertEqual(manifest['config']['model']['name'], 'margin_one')


class TestErrors(unittest.TestCase):

    def test_misspelled_key(self):
        with tempfile.TemporaryDirectory() as folder:
            code, _, err = run_cli('scan-n', '--config', models.config_path('bad_key'),
                                   '--out', folder)
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        error = error_of(err)
        self.assertEqual(error['error'], 'ConfigException')
        self.assertIn('sead', error['message'])

    def run_edited(self, command, old, new):
        with open(models.config_path('small_scan')) as f:
            text = f.read()
        self.assertIn(old, text)
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, 'edited.toml')
            with open(path, 'w') as f:
                f.write(text.replace(old, new))
            return run_cli(command, '--config', path, '--out', os.path.join(folder, 'out'))

    def test_non_numeric_value(self):
        code, _, err = self.run_edited('scan-n', 'T = 0.5', 'T = "x"')
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        error = error_of(err)
        self.assertEqual(error['error'], 'ConfigException')
        self.assertIn("'T'", error['message'])

    def test_non_numeric_trials(self):
        code, _, err = self.run_edited('lln', 'trials = 2000', 'trials = [1, 2]')
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        self.assertIn("'trials'", error_of(err)['message'])

    def test_initial_mean_size(self):
        code, _, err = self.run_edited('scan-n', 'statistic = "sup"',
                                       'statistic = "sup"\ninitial = { mean = [0.0, 1.0, 2.0] }')
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        error = error_of(err)
        self.assertEqual(error['error'], 'ConfigException')
        self.assertIn("'mean'", error['message'])

    def test_missing_file(self):
        code, _, err = run_cli('validate', '--config', 'no/such/file.toml')
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        self.assertIn('message', error_of(err))

    def test_missing_out(self):
        code, _, err = run_cli('lln', '--config', models.config_path('small_scan'))
        self.assertEqual(code, pychaos.cli.EXIT_ERROR)
        self.assertIn('--out', error_of(err)['message'])

    def test_bad_arguments(self):
        for argv in (['scan-n', '--config', 'x.toml', '--threads', '0'],
                     ['scan-n', '--config', 'x.toml', '--seed', '-1'],
                     ['scan-k', '--config', 'x.toml'],
                     ['scan-n']):
            with contextlib.redirect_stderr(io.StringIO()):
                with self.assertRaises(SystemExit) as ctx:
                    pychaos.cli.run(argv)
            self.assertEqual(ctx.exception.code, 2)


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.folder = tempfile.TemporaryDirectory()
        self.config = models.config_path('small_scan')

    def tearDown(self):
        self.folder.cleanup()

    def path(self, *names):
        return os.path.join(self.folder.name, *names)

    def read(self, *names):
        with open(self.path(*names)) as f:
            return f.read()

    def test_scan_thread_invariance(self):
        for threads in ('1', '4'):
            code, _, _ = run_cli('scan-n', '--config', self.config, '--out', self.path(threads),
                                 '--threads', threads)
            self.assertEqual(code, 0)
        self.assertEqual(self.read('1', 'results.csv'), self.read('4', 'results.csv'))
        self.assertTrue(self.read('1', 'results.csv').startswith(
            'param,stat,ci_low,ci_high,n_replicas'))
        self.assertTrue(os.path.isfile(self.path('1', 'results.dat')))

    def test_seed_override(self):
        code, _, _ = run_cli('scan-n', '--config', self.config, '--out', self.path('a'),
                             '--seed', '7')
        self.assertEqual(code, 0)
        manifest = json.loads(self.read('a', 'manifest.json'))
        self.assertEqual(manifest['seed'], 7)
        self.assertEqual(manifest['config']['scan']['seed'], 7)
        self.assertNotEqual(self.read('a', 'results.csv'), '')

    def test_lln(self):
        code, _, _ = run_cli('lln', '--config', self.config, '--out', self.folder.name,
                             '--threads', 'auto')
        self.assertEqual(code, 0)
        rows = self.read('results.csv').splitlines()
        self.assertEqual(len(rows), 3)
        self.assertTrue(rows[1].startswith('16,'))
        self.assertTrue(json.loads(self.read('report.json'))['flat'])

    def test_oracle(self):
        code, _, _ = run_cli('oracle', '--config', self.config, '--out', self.folder.name)
        self.assertEqual(code, 0)
        for name in ('kl_k1.csv', 'kl_k2.csv', 'w2sq_k1.csv', 'w2sq_k2.csv'):
            self.assertTrue(os.path.isfile(self.path(name)))
        self.assertEqual(json.loads(self.read('report.json'))['kind'], 'oracle')

    def test_simulate_and_couple(self):
        for command in ('simulate', 'couple'):
            code, _, _ = run_cli(command, '--config', self.config, '--out', self.path(command))
            self.assertEqual(code, 0)
        self.assertTrue(self.read('simulate', 'snapshots.csv').startswith('t,particle,x0'))
        self.assertTrue(self.read('couple', 'gaps.csv').startswith(
            't,gap_mean,gap_ci_low,gap_ci_high'))


def validate_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestValidate)


def errors_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestErrors)


def commands_suite():
    return unittest.TestLoader().loadTestsFromTestCase(TestCommands)


def get_suite():
    suite_list = []
    suite_list.append(validate_suite())
    suite_list.append(errors_suite())
    suite_list.append(commands_suite())
    return unittest.TestSuite(suite_list)


if __name__ == '__main__':
    unittest.TextTestRunner(verbosity=2).run(get_suite())
