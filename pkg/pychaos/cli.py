"""Command line front end.

    pychaos validate --config model.toml
    pychaos scan-n --config scan.toml --out results/ --threads auto

Exit codes: 0 on success, 1 when a model fails its validator, 2 on any
error. Errors and validation failures are also written to stderr as a JSON
object {"error": ..., "message": ...}.
"""

import argparse as _argparse
import json as _json
import logging as _logging
import os as _os
import sys as _sys
import time as _time
import pychaos as _pychaos
import pychaos.config as _config
import pychaos.models as _models
import pychaos.dynamics as _dynamics
import pychaos.metrics as _metrics
import pychaos.gaussian_oracle as _oracle
import pychaos.experiments as _experiments


_log = _logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ERROR = 2

COMMANDS = ('validate',) + _experiments.COMMANDS

_ERRORS = (_config.ConfigException, _models.ModelException, _dynamics.DynamicsException,
           _metrics.MetricsException, _oracle.OracleException,
           _experiments.ExperimentException, OSError)


def _threads(value):
    if value == 'auto':
        return value
    try:
        threads = int(value)
    except ValueError:
        raise _argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    if threads < 1:
        raise _argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    return threads


def _seed(value):
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise _argparse.ArgumentTypeError('seed must be a 64-bit unsigned integer')
    return seed


def build_parser():
    parser = _argparse.ArgumentParser(
        prog='pychaos', description='Propagation of chaos experiments for mean-field particle systems.')
    parser.add_argument('--version', action='version', version=_pychaos.__version__)
    commands = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name)
        sub.add_argument('--config', required=True, help='TOML experiment file')
        sub.add_argument('--out', default=None, help='output directory')
        sub.add_argument('--seed', type=_seed, default=None, help='overrides the seed of the config')
        sub.add_argument('--threads', type=_threads, default=1, help="worker threads or 'auto'")
        sub.add_argument('--log-level', default='WARNING',
                         choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    return parser


def _emit_error(kind, message):
    _sys.stderr.write(_json.dumps({'error': kind, 'message': message}) + '\n')


def _with_seed(table, seed):
    if seed is None:
        return table
    for name in ('scan', 'lln'):
        if name in table:
            table = _config.override(table, name + '.seed', seed)
    return table


def _validate(args, table):
    model = _models.model_from_config(_config.section(table, 'model'))
    seed = 0 if args.seed is None else args.seed
    report = _models.validate(model, seed=seed)
    report['model_hash'] = _models.model_hash(model)
    if args.out is not None:
        _os.makedirs(args.out, exist_ok=True)
        _dynamics.write_manifest(_os.path.join(args.out, 'report.json'), **report)
        _dynamics.write_manifest(_os.path.join(args.out, 'manifest.json'),
                                 config=table, command='validate', seed=seed,
                                 model_hash=report['model_hash'],
                                 version=_pychaos.__version__)
    _sys.stdout.write(_json.dumps(report, sort_keys=True, default=str) + '\n')
    if not (report['passed'] and report['constants_consistent']):
        reason = 'threshold not met' if not report['passed'] else \
            'declared constants contradicted by spot checks'
        _emit_error('ValidationFailed', 'model {0!r}: {1}'.format(model.name, reason))
        return EXIT_VALIDATION
    return EXIT_OK


def run(argv=None):
    """Run one command; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _logging.basicConfig(level=getattr(_logging, args.log_level),
                         format='%(asctime)s %(name)s %(levelname)s: %(message)s',
                         stream=_sys.stderr)
    _logging.captureWarnings(True)
    try:
        table = _with_seed(_config.load(args.config), args.seed)
        if args.command == 'validate':
            return _validate(args, table)
        if args.out is None:
            raise _config.ConfigException("command '{0}' needs --out".format(args.command))
        start = _time.perf_counter()
        result, model = _experiments.run_scan(args.command, table, args.threads)
        wall_time = _time.perf_counter() - start
        _experiments.persist(result, args.out, table, args.command, model, wall_time,
                             data_file=args.command in ('scan-n', 'scan-t'))
        _log.info('%s finished in %.1f s, results in %s', args.command, wall_time, args.out)
    except _ERRORS as e:
        _emit_error(type(e).__name__, str(e))
        return EXIT_ERROR
    return EXIT_OK


def main():
    _sys.exit(run())


if __name__ == '__main__':
    main()
