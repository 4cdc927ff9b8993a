"""Pychaos experiments module

Scripted scans over the particle number and over time, built on the
dynamics, metrics and gaussian_oracle modules:

    rate_scan_N      coupling statistic vs N and its log-log slope
    longtime_scan    transient decay rate and plateau of the coupling gap
    lln_scan         N times the law-of-large-numbers gap vs N
    chaos_scan_oracle  exact W2^2 and relative entropy of linear models vs N

Every scan returns a ScanResult whose main table is written to results.csv
with the header param,stat,ci_low,ci_high,n_replicas. Replica runs are
distributed over a thread pool and aggregated in (N, replica) order, so the
output does not depend on the number of threads.
"""

import collections as _collections
import concurrent.futures as _futures
import csv as _csv
import json as _json
import logging as _logging
import math as _math
import os as _os
import time as _time
import warnings as _warnings
import numpy as _np
import scipy.stats as _stats
import pychaos as _pychaos
import pychaos.config as _config
import pychaos.models as _models
import pychaos.dynamics as _dynamics
import pychaos.metrics as _metrics
import pychaos.gaussian_oracle as _oracle
from pychaos.utils import interactive as _interactive
from pychaos.utils import FrozenObject as _FrozenObject


_log = _logging.getLogger(__name__)

RESULTS_HEADER = ('param', 'stat', 'ci_low', 'ci_high', 'n_replicas')
PLATEAU_FRACTION = 0.2
TRANSIENT_FACTOR = 2.0
UNIFORM_RATIO = 2.0
LLN_FLAT_RATIO = 1.5


class ExperimentException(Exception):
    pass


Record = _collections.namedtuple('Record', RESULTS_HEADER)


class FitResult(_collections.namedtuple(
        'FitResult', ['slope', 'intercept', 'stderr', 'r_squared', 'residuals'])):
    """Least squares line. For exponential fits slope = -rate."""

    __slots__ = ()

    @property
    def rate(self):
        return -self.slope

    def as_dict(self):
        return {'slope': self.slope, 'intercept': self.intercept,
                'stderr': self.stderr, 'r_squared': self.r_squared}


# --- configuration ----------------------------------------------------------

_SCAN_KEYS = ('N', 'k', 'T', 'dt', 'replicas', 'seed', 'backend', 'reference_size',
              'initial_coupling', 'offset', 'statistic', 'record_times', 'dt_ode',
              'initial')
_INITIAL_KEYS = ('mean', 'std')
_LLN_KEYS = ('example', 'N', 'trials', 'seed', 'inner_size')
_ORACLE_KEYS = ('N', 'k', 't', 'dt_ode', 'm0', 'S0')

BACKENDS = ('gaussian', 'reference')
COUPLINGS = ('matched', 'independent', 'offset')
STATISTICS = ('sup', 'terminal')


def _grid(values, name, minimum=1):
    if isinstance(values, (int, float)):
        values = [values]
    try:
        values = tuple(int(v) for v in values)
    except (TypeError, ValueError):
        raise _config.ConfigException("'{0}' must be a list of integers".format(name))
    if not values:
        raise _config.ConfigException("'{0}' must not be empty".format(name))
    if any(v < minimum for v in values):
        raise _config.ConfigException("'{0}' entries must be >= {1}".format(name, minimum))
    if any(b <= a for a, b in zip(values, values[1:])):
        raise _config.ConfigException("'{0}' must be strictly increasing".format(name))
    return values


def _number(value, kind, key, where='scan'):
    return _config.coerce(value, kind, key, where)


def _times(values):
    if isinstance(values, (int, float)):
        values = [values]
    if not isinstance(values, (list, tuple)):
        raise _config.ConfigException("'record_times' in [scan] must be a list of numbers")
    return tuple(_number(t, float, 'record_times') for t in values)


def _array(value, key, where='scan'):
    try:
        arr = _np.array(value, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is None or arr.ndim > 1:
        raise _config.ConfigException("'{0}' in [{1}] must be a number or a list of numbers, "
                                      "got {2!r}".format(key, where, value))
    arr.setflags(write=False)
    return arr


def _broadcast(value, dim, key, where='scan'):
    if value.size not in (1, dim):
        raise _config.ConfigException("'{0}' in [{1}] has {2} entries, the state has {3}".format(
            key, where, value.size, dim))
    return _np.broadcast_to(value.reshape(-1), (dim,)).copy()


@_interactive
class ScanConfig(_FrozenObject):
    """Parameters of a coupled-run scan ([scan] table).

    N                -- strictly increasing particle numbers
    k                -- number of tagged particles of the statistic
    T, dt            -- horizon and Euler-Maruyama step
    replicas         -- independent replica runs per N (>= 2)
    seed             -- master seed of the noise plans
    backend          -- frozen law: 'gaussian' (exact, linear models) or
                        'reference' (independent M-particle run)
    reference_size   -- M (default 10 max N)
    initial_coupling -- 'matched', 'independent' or 'offset'
    offset           -- limit initial state minus interacting one ('offset')
    statistic        -- 'sup' over [0, T] or 'terminal' at T
    record_times     -- gap record times (default every step)
    dt_ode           -- step of the gaussian backend ODE (default dt)
    initial_mean, initial_std -- Gaussian initial law of each coordinate
    """

    _exception = _config.ConfigException

    def __init__(self, N, T, dt, replicas, k=1, seed=0, backend='reference',
                 reference_size=None, initial_coupling='matched', offset=None,
                 statistic='sup', record_times=None, dt_ode=None,
                 initial_mean=0.0, initial_std=1.0):
        self.N = _grid(N, 'N')
        self.k = _number(k, int, 'k')
        self.T = _number(T, float, 'T')
        self.dt = _number(dt, float, 'dt')
        self.replicas = _number(replicas, int, 'replicas')
        self.seed = _number(seed, int, 'seed')
        self.backend = backend
        self.reference_size = 10*self.N[-1] if reference_size is None else \
            _number(reference_size, int, 'reference_size')
        self.initial_coupling = initial_coupling
        self.offset = None if offset is None else _array(offset, 'offset')
        self.statistic = statistic
        self.record_times = None if record_times is None else _times(record_times)
        self.dt_ode = self.dt if dt_ode is None else _number(dt_ode, float, 'dt_ode')
        self.initial_mean = _array(initial_mean, 'mean', 'scan.initial')
        self.initial_std = _array(initial_std, 'std', 'scan.initial')
        self._check()
        self._freeze()

    def _check(self):
        if self.replicas < 2:
            raise _config.ConfigException('replicas must be >= 2 for confidence intervals')
        if not 1 <= self.k <= self.N[0]:
            raise _config.ConfigException('k must satisfy 1 <= k <= min N')
        if not (self.T > 0 and self.dt > 0):
            raise _config.ConfigException('T and dt must be positive')
        if self.backend not in BACKENDS:
            raise _config.ConfigException('backend must be one of {0}'.format(BACKENDS))
        if self.initial_coupling not in COUPLINGS:
            raise _config.ConfigException('initial_coupling must be one of {0}'.format(COUPLINGS))
        if self.initial_coupling == 'offset' and self.offset is None:
            raise _config.ConfigException("initial_coupling 'offset' needs an offset")
        if self.statistic not in STATISTICS:
            raise _config.ConfigException('statistic must be one of {0}'.format(STATISTICS))
        if self.reference_size < 2:
            raise _config.ConfigException('reference_size must be >= 2')

    @staticmethod
    def from_config(table):
        """ScanConfig from a [scan] table.

        Raises ConfigException on unknown or missing keys.
        """
        _config.check_keys(table, _SCAN_KEYS, 'scan', required=('N', 'T', 'dt', 'replicas'))
        initial = table.get('initial', {})
        _config.check_keys(initial, _INITIAL_KEYS, 'scan.initial')
        kwargs = {key: table[key] for key in _SCAN_KEYS
                  if key in table and key != 'initial'}
        return ScanConfig(initial_mean=initial.get('mean', 0.0),
                          initial_std=initial.get('std', 1.0), **kwargs)


@_interactive
class LLNConfig(_FrozenObject):
    """Parameters of lln_scan ([lln] table)."""

    _exception = _config.ConfigException

    def __init__(self, example, N, trials, seed=0, inner_size=10**4):
        if not isinstance(example, str) or example not in LLN_EXAMPLES:
            raise _config.ConfigException('unknown lln example {0!r}, expected one of {1}'.format(
                example, sorted(LLN_EXAMPLES)))
        self.example = example
        self.N = _grid(N, 'N')
        self.trials = _number(trials, int, 'trials', 'lln')
        if self.trials < 2:
            raise _config.ConfigException('trials must be >= 2')
        self.seed = _number(seed, int, 'seed', 'lln')
        self.inner_size = _number(inner_size, int, 'inner_size', 'lln')
        self._freeze()

    @staticmethod
    def from_config(table):
        _config.check_keys(table, _LLN_KEYS, 'lln', required=('example', 'N', 'trials'))
        return LLNConfig(**table)


@_interactive
class OracleConfig(_FrozenObject):
    """Parameters of chaos_scan_oracle ([oracle] table)."""

    _exception = _config.ConfigException

    def __init__(self, N, t, k=(1,), dt_ode=_oracle.DEFAULT_DT_ODE, m0=None, S0=None):
        self.N = _grid(N, 'N')
        self.k = _grid(k, 'k')
        if self.k[-1] > self.N[0]:
            raise _config.ConfigException('every k must be <= min N')
        self.t = _number(t, float, 't', 'oracle')
        self.dt_ode = _number(dt_ode, float, 'dt_ode', 'oracle')
        self.m0 = m0
        self.S0 = S0
        self._freeze()

    @staticmethod
    def from_config(table):
        _config.check_keys(table, _ORACLE_KEYS, 'oracle', required=('N', 't'))
        return OracleConfig(**table)


# --- fits -------------------------------------------------------------------

def _line_fit(x, y):
    x = _np.asarray(x, dtype=float)
    y = _np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ExperimentException('a fit needs at least two points')
    if not (_np.isfinite(x).all() and _np.isfinite(y).all()):
        raise ExperimentException('non-finite values in fit data')
    line = _stats.linregress(x, y)
    residuals = y - (line.intercept + line.slope*x)
    ss_tot = float(((y - y.mean())**2).sum())
    ss_res = float((residuals**2).sum())
    r_squared = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1 - ss_res/ss_tot))
    stderr = float(line.stderr) if x.size > 2 else 0.0
    return FitResult(float(line.slope), float(line.intercept), stderr, r_squared, residuals)


@_interactive
def fit_power_law(x, y):
    """Fit log y = intercept + slope log x by least squares.

    Raises ExperimentException for non-positive data.
    """
    x = _np.asarray(x, dtype=float)
    y = _np.asarray(y, dtype=float)
    if (x <= 0).any() or (y <= 0).any():
        raise ExperimentException('power law fit needs positive data')
    return _line_fit(_np.log(x), _np.log(y))


def spread_ratio(values):
    """max/min of nonnegative values; 1 when all vanish, inf when only some do."""
    values = _np.asarray(values, dtype=float)
    if _np.all(values == 0):
        return 1.0
    if values.min() > 0:
        return float(values.max()/values.min())
    return _math.inf


@_interactive
def estimate_plateau(gaps, fraction=PLATEAU_FRACTION):
    """Mean of the last 'fraction' of a gap series."""
    gaps = _np.asarray(gaps, dtype=float)
    size = max(1, int(round(fraction*gaps.size)))
    return float(gaps[-size:].mean())


def transient_window(gaps, plateau, factor=TRANSIENT_FACTOR):
    gaps = _np.asarray(gaps, dtype=float)
    return gaps > factor*plateau if plateau > 0 else gaps > 0


@_interactive
def fit_exponential(t, gaps, plateau=0.0):
    """Fit log(gap - plateau) = intercept - rate t on the transient window,
    the points where gap exceeds twice the plateau.

    Returns:
    FitResult -- rate = -slope, amplitude = exp(intercept)

    Raises ExperimentException when fewer than two points lie in the window.
    """
    t = _np.asarray(t, dtype=float)
    gaps = _np.asarray(gaps, dtype=float)
    window = transient_window(gaps, plateau)
    if window.sum() < 2:
        raise ExperimentException('transient window holds {0} points'.format(int(window.sum())))
    return _line_fit(t[window], _np.log(gaps[window] - plateau))


# --- results ----------------------------------------------------------------

@_interactive
class ScanResult(object):
    """Output of a scan.

    records -- main table (results.csv)
    fit     -- FitResult of the main table or None
    report  -- JSON-serializable summary (report.json)
    tables  -- extra tables in the results.csv schema, name -> records
    frames  -- free-form CSV files, name -> (header, rows)
    """

    def __init__(self, kind, records, fit=None, report=None, tables=None, frames=None):
        self.kind = kind
        self.records = [Record(*r) for r in records]
        self.fit = fit
        self.report = {} if report is None else report
        self.tables = {} if tables is None else tables
        self.frames = {} if frames is None else frames

    def __repr__(self):
        return 'ScanResult({0!r}, {1} records)'.format(self.kind, len(self.records))


def _summary(values, param, level=0.95):
    est = _metrics.mean_ci(values, level)
    return Record(param, est.mean, est.ci_low, est.ci_high, est.trials)


# --- coupled runs -----------------------------------------------------------

def resolve_threads(threads):
    """Thread count from an integer, None (one thread) or 'auto'."""
    if threads is None:
        return 1
    if threads == 'auto':
        return _os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ExperimentException('thread count must be positive')
    return threads


def _state_dim(model):
    if isinstance(model, _models.MeanFieldModel):
        return model.d
    return model.state_dim


def _initial_law(scan, dim):
    return (_broadcast(scan.initial_mean, dim, 'mean', 'scan.initial'),
            _broadcast(scan.initial_std, dim, 'std', 'scan.initial'))


@_interactive
def frozen_law(model, scan):
    """Frozen law of the limit process selected by scan.backend."""
    dim = _state_dim(model)
    mean, std = _initial_law(scan, dim)
    if scan.backend == 'gaussian':
        if not isinstance(model, _models.MeanFieldModel):
            raise ExperimentException('the gaussian backend serves linear mean-field models only')
        try:
            spec = _oracle.LinearModelSpec.from_model(model)
        except _oracle.OracleException as e:
            raise ExperimentException(str(e))
        series = _oracle.propagate_limit_moments(spec, mean, _np.diag(std**2),
                                                 scan.T, scan.dt_ode)
        return _dynamics.gaussian_frozen_law(series)
    plan = _dynamics.NoisePlan.for_reference(scan.seed)
    init = _dynamics.initial_states(plan, scan.reference_size, dim, mean, std)
    _log.info('building reference ensemble: M=%d, T=%g, dt=%g',
              scan.reference_size, scan.T, scan.dt)
    return _dynamics.build_reference_ensemble(model, _dynamics.Ensemble(init),
                                              scan.T, scan.dt, plan)


def coupled_initials(plan, N, dim, scan, coupling=None):
    """Initial states of the interacting system and of the limit copies."""
    coupling = scan.initial_coupling if coupling is None else coupling
    mean, std = _initial_law(scan, dim)
    x = _dynamics.initial_states(plan, N, dim, mean, std)
    if coupling == 'matched':
        y = x
    elif coupling == 'offset':
        y = x + _broadcast(scan.offset, dim, 'offset')
    else:
        y = _dynamics.initial_states(plan, N, dim, mean, std,
                                     _dynamics.NoisePlan.INDEPENDENT_INITIAL)
    return _dynamics.Ensemble(x), _dynamics.Ensemble(y)


def _coupled_task(model, scan, frozen, N, replica, coupling=None, snapshot_times=()):
    plan = _dynamics.NoisePlan.for_replica(scan.seed, replica)
    a, b = coupled_initials(plan, N, _state_dim(model), scan, coupling)
    try:
        return _dynamics.run_coupled(model, a, b, scan.T, scan.dt, plan, frozen,
                                     record_times=scan.record_times,
                                     snapshot_times=snapshot_times)
    except _dynamics.BlowUpException as e:
        exc = ExperimentException('blow-up at N={0}, replica={1}, step={2}, particle={3}'.format(
            N, replica, e.step, e.particle))
        exc.N, exc.replica, exc.step = N, replica, e.step
        raise exc from e


def _run_replicas(model, scan, frozen, threads, coupling=None):
    """Coupled runs for every (N, replica), keyed in sorted order."""
    tasks = [(N, r) for N in scan.N for r in range(scan.replicas)]
    threads = resolve_threads(threads)
    if threads == 1:
        runs = [_coupled_task(model, scan, frozen, N, r, coupling) for N, r in tasks]
    else:
        with _futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_coupled_task, model, scan, frozen, N, r, coupling)
                       for N, r in tasks]
            runs = [f.result() for f in futures]
    grouped = _collections.OrderedDict((N, []) for N in scan.N)
    for (N, _), run in zip(tasks, runs):
        grouped[N].append(run)
    return grouped


@_interactive
def rate_scan_N(model, scan, threads=1, frozen=None):
    """Coupling statistic against N and its log-log slope.

    For every N, 'replicas' coupled runs give the exchangeable k-particle
    statistic (sup over [0, T] or terminal gap); the replica means are
    fitted by a power law.

    Keyword arguments:
    model   -- validated model
    scan    -- ScanConfig
    threads -- worker threads (int or 'auto')
    frozen  -- frozen law (default built from scan.backend)

    Returns:
    ScanResult with one record per N; with explicit record_times also the
    tables 'gap_t<t>' holding the path gap at time t per N

    Raises ExperimentException with (N, replica, step) on blow-up.
    """
    frozen = frozen_law(model, scan) if frozen is None else frozen
    grouped = _run_replicas(model, scan, frozen, threads)
    records, tables = [], {}
    if scan.record_times is not None:
        for j, t in enumerate(next(iter(grouped.values()))[0].times):
            tables['gap_t{0:g}'.format(t)] = [
                _summary([run.path_gaps[j] for run in runs], N) for N, runs in grouped.items()]
    for N, runs in grouped.items():
        record = _summary([run.statistic(scan.statistic, scan.k) for run in runs], N)
        records.append(record)
        _log.info('N=%d: %s statistic %.4e [%.4e, %.4e] over %d replicas',
                  N, scan.statistic, record.stat, record.ci_low, record.ci_high, record.n_replicas)
    fit = None
    report = {'statistic': scan.statistic, 'k': scan.k, 'backend': scan.backend,
              'reference_size': scan.reference_size if scan.backend == 'reference' else None,
              'expected_slope': -1.0}
    if len(records) >= 2:
        fit = fit_power_law([r.param for r in records], [r.stat for r in records])
        report['fit'] = fit.as_dict()
    return ScanResult('scan-n', records, fit, report, tables=tables)


@_interactive
def longtime_scan(model, scan, threads=1, frozen=None):
    """Transient decay rate and plateau of the coupling gap over time.

    Runs the configured (offset or independent) coupling together with a
    matched companion whose late-time mean gives the plateau. The decay rate
    is fitted on the replica-averaged gap of every N and compared with the
    theoretical rate; the chaos bound is uniform in time when plateau N
    varies by at most a factor 2 over the N grid. Delay and Hamiltonian
    models are measured in the sup norm over path segments.

    Returns:
    ScanResult -- gap series of the first N (also frame 'gaps'), tables
                  'plateau' (N plateau per N) and 'rates' (fitted rate per N)
    """
    if scan.initial_coupling == 'matched':
        raise ExperimentException("longtime_scan needs 'offset' or 'independent' initials")
    frozen = frozen_law(model, scan) if frozen is None else frozen
    main = _run_replicas(model, scan, frozen, threads)
    companion = _run_replicas(model, scan, frozen, threads, coupling='matched')
    try:
        theoretical = _models.theoretical_rate(model)
    except _models.ModelException:
        theoretical = None

    plateau_records, rate_records, fitted = [], [], {}
    inconclusive = []
    for N in scan.N:
        times = main[N][0].times
        gaps = _np.mean([run.path_gaps for run in main[N]], axis=0)
        matched = _np.array([run.path_gaps for run in companion[N]])
        plateau = estimate_plateau(matched.mean(axis=0))
        tails = [estimate_plateau(g) for g in matched]
        est = _metrics.mean_ci(tails)
        plateau_records.append(Record(N, N*est.mean, N*est.ci_low, N*est.ci_high, est.trials))
        if plateau > 0 and estimate_plateau(gaps) > TRANSIENT_FACTOR*plateau:
            inconclusive.append(N)
        try:
            fit = fit_exponential(times, gaps, plateau)
        except ExperimentException:
            inconclusive.append(N)
            continue
        fitted[N] = fit
        half = 1.96*fit.stderr
        rate_records.append(Record(N, fit.rate, fit.rate - half, fit.rate + half, len(main[N])))
        _log.info('N=%d: plateau %.4e, fitted rate %.4f', N, plateau, fit.rate)

    ratio = spread_ratio([r.stat for r in plateau_records])
    report = {
        'theoretical_rate': theoretical,
        'fitted_rate': min(f.rate for f in fitted.values()) if fitted else None,
        'plateau_ratio': ratio,
        'initial_coupling': scan.initial_coupling,
    }
    if inconclusive:
        report['verdict'] = 'inconclusive'
        report['inconclusive_N'] = sorted(set(inconclusive))
        _warnings.warn('plateau not reached within T={0} for N={1}'.format(
            scan.T, report['inconclusive_N']))
    else:
        report['verdict'] = 'uniform' if ratio <= UNIFORM_RATIO else 'not_uniform'
    if report['fitted_rate'] is not None and theoretical is not None:
        report['rate_bound_holds'] = bool(report['fitted_rate'] >= theoretical)

    first = scan.N[0]
    rows = _dynamics.gap_series_rows(main[first])
    series = [Record(*row, len(main[first])) for row in rows]
    fit = fitted.get(first)
    if fit is not None:
        report['fit'] = fit.as_dict()
    return ScanResult('scan-t', series, fit, report,
                      tables={'plateau': plateau_records, 'rates': rate_records},
                      frames={'gaps': (_dynamics.GAP_SERIES_HEADER, rows)})


@_interactive
def coupled_gap_scan(model, scan, threads=1, frozen=None):
    """Replica gap series of the largest N (the 'couple' command)."""
    frozen = frozen_law(model, scan) if frozen is None else frozen
    N = scan.N[-1]
    single = ScanConfig(
        [N], scan.T, scan.dt, scan.replicas, scan.k, scan.seed, scan.backend,
        scan.reference_size, scan.initial_coupling, scan.offset, scan.statistic,
        scan.record_times, scan.dt_ode, scan.initial_mean, scan.initial_std)
    runs = _run_replicas(model, single, frozen, threads)[N]
    rows = _dynamics.gap_series_rows(runs)
    records = [Record(*row, len(runs)) for row in rows]
    final = _summary([run.statistic(scan.statistic, scan.k) for run in runs], N)
    report = {'N': N, 'statistic': scan.statistic, 'value': final.stat,
              'ci': [final.ci_low, final.ci_high]}
    return ScanResult('couple', records, None, report,
                      frames={'gaps': (_dynamics.GAP_SERIES_HEADER, rows)})


@_interactive
def simulate(model, scan):
    """Interacting system alone: mean squared norm per record time and
    snapshots of the states (at the record times, or at 0 and T)."""
    N = scan.N[-1]
    dim = _state_dim(model)
    plan = _dynamics.NoisePlan.for_replica(scan.seed, 0)
    mean, std = _initial_law(scan, dim)
    init = _dynamics.Ensemble(_dynamics.initial_states(plan, N, dim, mean, std))
    try:
        traj = _dynamics.run_interacting(model, init, scan.T, scan.dt, plan, scan.record_times)
    except _dynamics.BlowUpException as e:
        raise ExperimentException('blow-up at N={0}, step={1}, particle={2}'.format(
            N, e.step, e.particle)) from e
    records = [_summary((x**2).sum(axis=1), float(t)) for t, x in zip(traj.times, traj.states)]
    keep = range(len(traj.times)) if scan.record_times is not None else \
        sorted({0, len(traj.times) - 1})
    rows = [(float(traj.times[j]), i) + tuple(traj.states[j][i])
            for j in keep for i in range(N)]
    header = ('t', 'particle') + tuple('x{0}'.format(c) for c in range(dim))
    report = {'N': N, 'T': scan.T, 'final_second_moment': records[-1].stat}
    return ScanResult('simulate', records, None, report, frames={'snapshots': (header, rows)})


# --- law of large numbers ---------------------------------------------------

def _bernoulli(rng, shape):
    return rng.binomial(1, 0.5, size=shape).astype(float)


def _normal(rng, shape):
    return rng.standard_normal(shape)


LLNExample = _collections.namedtuple('LLNExample', ['h', 'sampler', 'conditional', 'limit'])

# limit is the N -> infinity value of N times the gap
LLN_EXAMPLES = {
    'bernoulli_mean': LLNExample(
        lambda v, w: w[..., 0], _bernoulli,
        lambda v: _np.full(v.shape[:-1], 0.5), 0.25),
    'constant': LLNExample(
        lambda v, w: _np.ones(_np.broadcast_shapes(v.shape, w.shape)[:-1]), _normal,
        lambda v: _np.ones(v.shape[:-1]), 0.0),
    'gaussian_mean': LLNExample(
        lambda v, w: w[..., 0], _normal,
        lambda v: _np.zeros(v.shape[:-1]), 1.0),
    'product_gaussian': LLNExample(
        lambda v, w: v[..., 0]*w[..., 0], _normal,
        lambda v: _np.zeros(v.shape[:-1]), 1.0),
}


@_interactive
def lln_scan(lln, threads=1):
    """N times the law-of-large-numbers gap for every N of an LLNConfig.

    Each N draws from its own Philox stream. The report holds the max/min
    ratio of N times the estimate ('flat' when at most LLN_FLAT_RATIO).
    """
    example = LLN_EXAMPLES[lln.example]

    def task(i, N):
        rng = _dynamics.NoisePlan(lln.seed, i + 1).generator(_dynamics.NoisePlan.AUXILIARY)
        return _metrics.lln_gap(example.h, example.sampler, N, lln.trials,
                                example.conditional, lln.inner_size, seed=rng)

    threads = resolve_threads(threads)
    with _futures.ThreadPoolExecutor(max_workers=threads) as pool:
        estimates = list(pool.map(task, range(len(lln.N)), lln.N))
    records = []
    for N, est in zip(lln.N, estimates):
        records.append(Record(N, N*est.mean, N*est.ci_low, N*est.ci_high, est.trials))
        _log.info('N=%d: N*gap %.4e', N, N*est.mean)
    ratio = spread_ratio([r.stat for r in records])
    report = {'example': lln.example, 'limit': example.limit, 'ratio': ratio,
              'flat': bool(ratio <= LLN_FLAT_RATIO)}
    return ScanResult('lln', records, None, report)


# --- exact oracle -----------------------------------------------------------

@_interactive
def chaos_scan_oracle(spec, N_list, k_list, t, m0=None, S0=None,
                      dt_ode=_oracle.DEFAULT_DT_ODE):
    """Exact chaos curves of a linear model for several k.

    The main table holds the relative entropy of the first k; tables
    'kl_k<k>' and 'w2sq_k<k>' hold every k. Values are exact, so the
    interval collapses to the value and n_replicas is 0.
    """
    k_list = list(k_list)
    curves = {k: _oracle.exact_chaos_curve(spec, N_list, k, t, m0, S0, dt_ode) for k in k_list}
    tables, report = {}, {'t': float(t), 'k': k_list, 'slopes': {}}
    for k, curve in curves.items():
        tables['kl_k{0}'.format(k)] = [Record(r.N, r.kl, r.kl, r.kl, 0) for r in curve]
        tables['w2sq_k{0}'.format(k)] = [Record(r.N, r.w2_sq, r.w2_sq, r.w2_sq, 0) for r in curve]
        slopes = {}
        for name, values in (('kl', [r.kl for r in curve]), ('w2_sq', [r.w2_sq for r in curve])):
            if len(values) >= 2 and min(values) > 0:
                slopes[name] = fit_power_law(N_list, values).slope
        report['slopes'][str(k)] = slopes
    first = k_list[0]
    base = curves[first][-1].kl
    if base > 0:
        report['kl_ratio_at_max_N'] = {str(k): curves[k][-1].kl/base for k in k_list}
    records = tables['kl_k{0}'.format(first)]
    fit = None
    if len(records) >= 2 and min(r.stat for r in records) > 0:
        fit = fit_power_law([r.param for r in records], [r.stat for r in records])
        report['fit'] = fit.as_dict()
    return ScanResult('oracle', records, fit, report, tables=tables)


# --- dispatch and persistence -----------------------------------------------

COMMANDS = ('simulate', 'couple', 'scan-n', 'scan-t', 'lln', 'oracle')


@_interactive
def run_scan(command, table, threads=1):
    """Run 'command' on a checked configuration table.

    Returns:
    (result, model) -- ScanResult and the model (None for 'lln')
    """
    if command not in COMMANDS:
        raise ExperimentException('unknown command {0!r}'.format(command))
    if command == 'lln':
        return lln_scan(LLNConfig.from_config(_config.section(table, 'lln')), threads), None
    model = _models.model_from_config(_config.section(table, 'model'))
    if command == 'oracle':
        oracle = OracleConfig.from_config(_config.section(table, 'oracle'))
        if not isinstance(model, _models.MeanFieldModel):
            raise ExperimentException('oracle needs a linear mean-field model, got {0!r}'.format(
                model))
        try:
            spec = _oracle.LinearModelSpec.from_model(model)
        except _oracle.OracleException as e:
            raise ExperimentException('oracle needs a linear mean-field model: {0}'.format(e))
        result = chaos_scan_oracle(spec, oracle.N, oracle.k, oracle.t,
                                   oracle.m0, oracle.S0, oracle.dt_ode)
        return result, model
    scan = ScanConfig.from_config(_config.section(table, 'scan'))
    if command != 'simulate':
        report = _models.validate(model, spot=False)
        if not report['passed']:
            _warnings.warn('model {0!r} does not pass its validator'.format(model.name))
    if command == 'simulate':
        return simulate(model, scan), model
    if command == 'couple':
        return coupled_gap_scan(model, scan, threads), model
    if command == 'scan-n':
        return rate_scan_N(model, scan, threads), model
    return longtime_scan(model, scan, threads), model


def _cell(value):
    if isinstance(value, (bool, _np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, _np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = _csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _write_dat(path, header, rows):
    with open(path, 'w') as f:
        f.write('# ' + ' '.join(header) + '\n')
        for row in rows:
            f.write(' '.join(_cell(v) for v in row) + '\n')


@_interactive
def persist(result, out_dir, config=None, command=None, model=None, wall_time=None,
            data_file=False):
    """Write a ScanResult to 'out_dir'.

    Files: results.csv, <table>.csv per extra table, <frame>.csv per frame,
    report.json, manifest.json (config, command, seed, model hash, library
    version, wall time) and, with data_file, results.dat for gnuplot.

    Raises ExperimentException naming the path on I/O failure.
    """
    path = out_dir
    try:
        _os.makedirs(out_dir, exist_ok=True)
        path = _os.path.join(out_dir, 'results.csv')
        _write_csv(path, RESULTS_HEADER, result.records)
        for name, records in result.tables.items():
            path = _os.path.join(out_dir, name + '.csv')
            _write_csv(path, RESULTS_HEADER, records)
        for name, (header, rows) in result.frames.items():
            path = _os.path.join(out_dir, name + '.csv')
            _write_csv(path, header, rows)
        if data_file:
            path = _os.path.join(out_dir, 'results.dat')
            _write_dat(path, RESULTS_HEADER, result.records)
        path = _os.path.join(out_dir, 'report.json')
        report = dict(result.report, kind=result.kind)
        _dynamics.write_manifest(path, **report)
        path = _os.path.join(out_dir, 'manifest.json')
        _dynamics.write_manifest(
            path, config=config, command=command, seed=_seed_of(config),
            model_hash=None if model is None else _models.model_hash(model),
            version=_pychaos.__version__, wall_time=wall_time)
    except OSError as e:
        raise ExperimentException("could not write '{0}': {1}".format(path, e.strerror or e))


def _seed_of(config):
    if not config:
        return None
    for name in ('scan', 'lln'):
        if name in config and 'seed' in config[name]:
            return config[name]['seed']
    return None


@_interactive
def load_results(path):
    """Records of a results.csv file.

    Raises ExperimentException on a wrong header.
    """
    try:
        with open(path, newline='') as f:
            reader = _csv.reader(f)
            header = tuple(next(reader, ()))
            if header != RESULTS_HEADER:
                raise ExperimentException("'{0}' has header {1}, expected {2}".format(
                    path, header, RESULTS_HEADER))
            records = []
            for row in reader:
                param = float(row[0]) if any(c in row[0] for c in '.en') else int(row[0])
                records.append(Record(param, float(row[1]), float(row[2]), float(row[3]),
                                      int(row[4])))
    except OSError as e:
        raise ExperimentException("could not read '{0}': {1}".format(path, e.strerror or e))
    return records


@_interactive
def replay(manifest_path, out_dir, threads=1):
    """Re-run the scan recorded in a manifest and persist it to 'out_dir'."""
    try:
        with open(manifest_path) as f:
            manifest = _json.load(f)
    except (OSError, ValueError) as e:
        raise ExperimentException("could not read manifest '{0}': {1}".format(manifest_path, e))
    config, command = manifest.get('config'), manifest.get('command')
    if config is None or command is None:
        raise ExperimentException("manifest '{0}' lacks config or command".format(manifest_path))
    _config.check_header(config)
    start = _time.perf_counter()
    result, model = run_scan(command, config, threads)
    persist(result, out_dir, config, command, model, _time.perf_counter() - start)
    return result
