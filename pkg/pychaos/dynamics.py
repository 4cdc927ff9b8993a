"""Pychaos dynamics module

Euler-Maruyama integration of mean-field interacting particle systems, of
their non-interacting limit copies and of the delay and Hamiltonian variants,
together with the synchronous coupling that drives both systems with the same
Brownian increments.

States are stored particle first: an Ensemble holds an (N, D) array and a
SegmentEnsemble an (N, L+1, D) ring buffer of the last L+1 grid states of
every particle, where L = r0/dt. All kernel fields of a step are evaluated on
the pre-step states, so a step is a map over particles followed by a single
barrier.

Brownian increments come from a NoisePlan. The increment of particle i at
step s is a pure function of (master seed, stream, s, i), so trajectories do
not depend on evaluation order or thread count.
"""

import collections as _collections
import csv as _csv
import json as _json
import logging as _logging
import math as _math
import numpy as _np
import pychaos.models as _models
import pychaos.metrics as _metrics
from pychaos.utils import interactive as _interactive
from pychaos.utils import FrozenObject as _FrozenObject
from pychaos import utils as _utils


_log = _logging.getLogger(__name__)

_TIME_TOL = 1e-9


class DynamicsException(Exception):
    pass


class BlowUpException(DynamicsException):

    def __init__(self, particle, step, message=None):
        self.particle = int(particle)
        self.step = int(step)
        if message is None:
            message = 'non-finite state for particle {0} at step {1}'.format(
                self.particle, self.step)
        DynamicsException.__init__(self, message)


# --- noise ------------------------------------------------------------------

@_interactive
class NoisePlan(object):
    """Counter-based source of Brownian increments and initial draws.

    Every draw comes from a Philox generator keyed by (master_seed, stream)
    whose counter encodes (step, purpose); rows of one draw belong to
    particles in index order, so the row of particle i does not depend on
    how many particles are drawn.
    """

    INCREMENTS = 0
    INITIAL = 1
    INDEPENDENT_INITIAL = 2
    AUXILIARY = 3

    REFERENCE_STREAM = 0

    def __init__(self, master_seed, stream=0):
        master_seed, stream = int(master_seed), int(stream)
        if not 0 <= master_seed < 2**64:
            raise DynamicsException('master seed must be a 64-bit unsigned integer')
        if not 0 <= stream < 2**64:
            raise DynamicsException('stream must be a 64-bit unsigned integer')
        self.master_seed = master_seed
        self.stream = stream

    def __repr__(self):
        return 'NoisePlan(master_seed={0}, stream={1})'.format(self.master_seed, self.stream)

    def __eq__(self, other):
        if not isinstance(other, NoisePlan):
            return NotImplemented
        return (self.master_seed, self.stream) == (other.master_seed, other.stream)

    def __hash__(self):
        return hash((self.master_seed, self.stream))

    @staticmethod
    def for_replica(master_seed, replica):
        return NoisePlan(master_seed, replica + 1)

    @staticmethod
    def for_reference(master_seed):
        return NoisePlan(master_seed, NoisePlan.REFERENCE_STREAM)

    def generator(self, purpose, step=0):
        key = self.master_seed | (self.stream << 64)
        counter = (int(step) << 128) | (int(purpose) << 192)
        return _np.random.Generator(_np.random.Philox(key=key, counter=counter))

    def normals(self, step, N, n, purpose=INCREMENTS):
        """Standard normals of shape (N, n); row i belongs to particle i,
        so the first rows do not depend on N."""
        return self.generator(purpose, step).standard_normal((N, n))

    def increments(self, step, N, n, dt):
        return _math.sqrt(dt)*self.normals(step, N, n, self.INCREMENTS)


# --- ensembles --------------------------------------------------------------

@_interactive
class Ensemble(_FrozenObject):
    """States of N particles in R^D at time t (step index 'step')."""

    _exception = DynamicsException

    def __init__(self, states, t=0.0, step=0):
        states = _np.array(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2:
            raise DynamicsException('ensemble states must be an N x D array')
        _check_finite(states, step)
        states.setflags(write=False)
        self.states = states
        self.t = float(t)
        self.step = int(step)
        self._freeze()

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    def empirical(self):
        return _metrics.PointCloud(self.states)


@_interactive
class SegmentEnsemble(_FrozenObject):
    """N ring buffers of the last L+1 grid states, oldest overwritten first.

    buffer[:, head] is the present state; segments() returns the histories
    ordered oldest first.
    """

    _exception = DynamicsException

    def __init__(self, buffer, head, t=0.0, step=0):
        buffer = _np.array(buffer, dtype=float)
        if buffer.ndim != 3:
            raise DynamicsException('segment buffer must be N x (L+1) x D')
        if not 0 <= head < buffer.shape[1]:
            raise DynamicsException('head index out of range')
        if not _np.isfinite(buffer).all():
            raise DynamicsException('uninitialized or non-finite history')
        buffer.setflags(write=False)
        self.buffer = buffer
        self.head = int(head)
        self.t = float(t)
        self.step = int(step)
        self._freeze()

    def __len__(self):
        return self.buffer.shape[0]

    @property
    def lag(self):
        return self.buffer.shape[1] - 1

    @property
    def dim(self):
        return self.buffer.shape[2]

    @staticmethod
    def from_states(states, lag, history=None, dt=None, t=0.0, step=0):
        """Initial segments from present states.

        Without 'history' the segment is the constant extension of the
        present state; otherwise history(s) gives the (N, D) states at the
        grid times s = -lag*dt, ..., 0 (history(0) replaces 'states').
        """
        states = _np.array(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        lag = int(lag)
        if history is None:
            buffer = _np.repeat(states[:, None, :], lag + 1, axis=1)
        else:
            if dt is None:
                raise DynamicsException('a history function needs dt')
            buffer = _np.stack([_np.asarray(history(-(lag - j)*dt), dtype=float)
                                for j in range(lag + 1)], axis=1)
            if buffer.shape != (states.shape[0], lag + 1, states.shape[1]):
                raise DynamicsException('history returned shape {0}'.format(buffer.shape[::2]))
        return SegmentEnsemble(buffer, lag, t, step)

    def _order(self):
        size = self.buffer.shape[1]
        return (self.head + 1 + _np.arange(size)) % size

    def segments(self):
        return _np.ascontiguousarray(self.buffer[:, self._order()])

    def present(self):
        return _np.ascontiguousarray(self.buffer[:, self.head])

    def advance(self, states, dt):
        size = self.buffer.shape[1]
        head = (self.head + 1) % size
        buffer = self.buffer.copy()
        buffer[:, head] = states
        return SegmentEnsemble(buffer, head, self.t + dt, self.step + 1)


@_interactive
def segment_sup_norm(segment):
    """Grid sup of the Euclidean norm of a segment (L+1, D) or of a stack of
    segments (..., L+1, D)."""
    segment = _np.asarray(segment, dtype=float)
    if segment.ndim == 1:
        segment = segment[:, None]
    value = _utils.sup_norm(segment)
    return float(value) if _np.ndim(value) == 0 else value


# --- frozen laws ------------------------------------------------------------

class FrozenLaw(object):
    """Stand-in for the law of the limit process along the time grid."""

    def average(self, kernel, x, step, t):
        raise NotImplementedError

    def _check_time(self, expected, t):
        if abs(expected - t) > _TIME_TOL*max(1.0, abs(t)):
            raise DynamicsException('frozen law time mismatch: law at t={0}, state at t={1}'.format(
                expected, t))


@_interactive
class ReferenceEnsemble(FrozenLaw):
    """Empirical law of a separate, independently driven interacting run.

    path[lag + s] holds the M reference states at step s; the first 'lag'
    entries are the initial history.
    """

    def __init__(self, path, lag, dt, t0=0.0):
        path = _np.array(path, dtype=float)
        if path.ndim != 3 or path.shape[0] < lag + 1:
            raise DynamicsException('reference path must be (lag+steps+1) x M x D')
        path.setflags(write=False)
        self.path = path
        self.lag = int(lag)
        self.dt = float(dt)
        self.t0 = float(t0)

    def __len__(self):
        return self.path.shape[1]

    @property
    def nr_steps(self):
        return self.path.shape[0] - self.lag - 1

    def _check_step(self, step, t):
        if not 0 <= step <= self.nr_steps:
            raise DynamicsException('frozen law does not cover step {0} (t={1})'.format(step, t))
        self._check_time(self.t0 + step*self.dt, t)

    def states_at(self, step):
        return self.path[self.lag + step]

    def segments_at(self, step):
        return _np.ascontiguousarray(
            self.path[step:step + self.lag + 1].transpose(1, 0, 2))

    def average(self, kernel, x, step, t):
        self._check_step(step, t)
        if isinstance(kernel, _models.SegmentKernel):
            cloud = self.segments_at(step)
        else:
            cloud = self.states_at(step)
        return kernel.average(x, cloud, t)


@_interactive
class GaussianOracle(FrozenLaw):
    """Exact Gaussian law series of a linear limit process."""

    def __init__(self, times, laws):
        self.times = _np.array(times, dtype=float)
        self.laws = list(laws)
        if len(self.laws) != self.times.size or self.times.size == 0:
            raise DynamicsException('gaussian oracle needs one law per time')

    def law_at(self, t):
        idx = int(_np.argmin(_np.abs(self.times - t)))
        self._check_time(self.times[idx], t)
        return self.laws[idx]

    def average(self, kernel, x, step, t):
        if isinstance(kernel, _models.SegmentKernel) and \
                not isinstance(kernel, _models.HeadKernel):
            raise DynamicsException('the gaussian frozen law only serves point kernels')
        return kernel.expectation(x, self.law_at(t), t)


@_interactive
def gaussian_frozen_law(series):
    """GaussianOracle from a (times, laws) series of the gaussian oracle."""
    times, laws = series
    return GaussianOracle(times, laws)


# --- steps ------------------------------------------------------------------

def _check_finite(states, step):
    if states.size and not _np.isfinite(states).all():
        axes = tuple(range(1, states.ndim))
        bad = ~_np.isfinite(states).all(axis=axes)
        raise BlowUpException(int(_np.argmax(bad)), step)


def _euler_update(x, drift, diffusion, increments, dt):
    return x + drift*dt + _np.einsum('pij,pj->pi', diffusion, increments)


def _field(kernel, x, cloud, frozen, step, t):
    if frozen is None:
        return kernel.average(x, cloud, t)
    return frozen.average(kernel, x, step, t)


def _increments_shape(increments, N, n):
    increments = _np.asarray(increments, dtype=float)
    if increments.shape != (N, n):
        raise DynamicsException('increments must be shaped {0}, got {1}'.format(
            (N, n), increments.shape))
    return increments


def _mean_field_fields(model, x, t, step, frozen=None):
    drift = model.drift.b0(x, t) + _field(model.drift.b1, x, x, frozen, step, t)
    diffusion = _field(model.diffusion.sigma_tilde, x, x, frozen, step, t)
    return drift, diffusion


@_interactive
def interaction_fields(ensemble, model, i=None):
    """Drift and diffusion of the interacting system at the current states.

    drift_i = b0(x_i) + (1/N) sum_m b1(x_i, x_m) and
    diffusion_i = (1/N) sum_m sigma_tilde(x_i, x_m), self term included.

    Keyword arguments:
    ensemble -- Ensemble
    model    -- MeanFieldModel
    i        -- particle index (0-based); None returns all particles

    Returns:
    (drift, diffusion) -- (d,) and (d, n) for one particle, with a leading
                          particle axis otherwise

    Raises BlowUpException on non-finite fields.
    """
    x = ensemble.states
    if i is not None and not 0 <= i < len(ensemble):
        raise DynamicsException('particle index {0} out of range'.format(i))
    target = x if i is None else x[i:i+1]
    drift = model.drift.b0(target, ensemble.t) + model.drift.b1.average(target, x, ensemble.t)
    diffusion = model.diffusion.sigma_tilde.average(target, x, ensemble.t)
    _check_fields(drift, diffusion, ensemble.step, offset=0 if i is None else i)
    if i is None:
        return drift, diffusion
    return drift[0], diffusion[0]


def _check_fields(drift, diffusion, step, offset=0):
    for value in (drift, diffusion):
        if not _np.isfinite(value).all():
            bad = ~_np.isfinite(value).reshape(value.shape[0], -1).all(axis=1)
            raise BlowUpException(offset + int(_np.argmax(bad)), step)


@_interactive
def em_step_interacting(ensemble, model, dt, increments):
    """One Euler-Maruyama step of the interacting system, all fields taken
    at the pre-step ensemble."""
    x = ensemble.states
    increments = _increments_shape(increments, x.shape[0], model.n)
    drift, diffusion = _mean_field_fields(model, x, ensemble.t, ensemble.step)
    _check_fields(drift, diffusion, ensemble.step)
    new = _euler_update(x, drift, diffusion, increments, dt)
    _check_finite(new, ensemble.step + 1)
    return Ensemble(new, ensemble.t + dt, ensemble.step + 1)


@_interactive
def em_step_limit(ensemble, model, frozen, dt, increments):
    """One Euler-Maruyama step of the limit copies, kernel averages taken
    against the frozen law at the current step.

    Raises DynamicsException when the frozen law does not match the
    ensemble time.
    """
    x = ensemble.states
    increments = _increments_shape(increments, x.shape[0], model.n)
    drift, diffusion = _mean_field_fields(model, x, ensemble.t, ensemble.step, frozen)
    _check_fields(drift, diffusion, ensemble.step)
    new = _euler_update(x, drift, diffusion, increments, dt)
    _check_finite(new, ensemble.step + 1)
    return Ensemble(new, ensemble.t + dt, ensemble.step + 1)


@_interactive
def em_step_delay(seg_ensemble, model, dt, increments, frozen=None):
    """One Euler-Maruyama step of a delay model.

    The present state moves with b(x(0)) + B(segment, law) and
    sigma(segment, law); the law is the empirical law of the ensemble's own
    segments (frozen None) or the frozen law. The oldest buffer entry is
    overwritten by the new state.
    """
    if not isinstance(seg_ensemble, SegmentEnsemble):
        raise DynamicsException('em_step_delay needs an initialized SegmentEnsemble')
    if seg_ensemble.lag != model.grid_lag(dt):
        raise DynamicsException('history length {0} does not match r0/dt = {1}'.format(
            seg_ensemble.lag, model.grid_lag(dt)))
    segs = seg_ensemble.segments()
    x = _np.ascontiguousarray(segs[:, -1])
    t, step = seg_ensemble.t, seg_ensemble.step
    increments = _increments_shape(increments, x.shape[0], model.n)
    drift = model.b(x, t) + _field(model.B_tilde, segs, segs, frozen, step, t)
    diffusion = _field(model.sigma_tilde, segs, segs, frozen, step, t)
    _check_fields(drift, diffusion, step)
    new = _euler_update(x, drift, diffusion, increments, dt)
    _check_finite(new, step + 1)
    return seg_ensemble.advance(new, dt)


@_interactive
def em_step_hamiltonian(ensemble, model, dt, increments, frozen=None):
    """One Euler-Maruyama step of a stochastic Hamiltonian model.

    The first m coordinates move without noise under A x1 + M x2; the last d
    under b(x2) + B(segment, law) with constant diffusion sigma. Accepts an
    Ensemble when r0 = 0 and returns the same type it was given.
    """
    plain = isinstance(ensemble, Ensemble)
    seg = SegmentEnsemble.from_states(ensemble.states, 0, t=ensemble.t,
                                      step=ensemble.step) if plain else ensemble
    if seg.lag != model.grid_lag(dt):
        raise DynamicsException('history length {0} does not match r0/dt = {1}'.format(
            seg.lag, model.grid_lag(dt)))
    if seg.dim != model.m + model.d:
        raise DynamicsException('states must have m + d = {0} coordinates'.format(
            model.m + model.d))
    segs = seg.segments()
    x = segs[:, -1]
    x1 = _np.ascontiguousarray(x[:, :model.m])
    x2 = _np.ascontiguousarray(x[:, model.m:])
    t, step = seg.t, seg.step
    increments = _increments_shape(increments, x.shape[0], model.d)
    interaction = _field(model.B_tilde, segs, segs, frozen, step, t)
    drift1 = x1 @ model.A.T + x2 @ model.M.T
    drift2 = model.b(x2, t) + interaction
    _check_fields(drift2, drift1, step)
    new = _np.concatenate([x1 + drift1*dt,
                           x2 + drift2*dt + increments @ model.sigma.T], axis=1)
    _check_finite(new, step + 1)
    if plain:
        return Ensemble(new, ensemble.t + dt, ensemble.step + 1)
    return seg.advance(new, dt)


# --- runs -------------------------------------------------------------------

def _nr_steps(T, dt):
    if not dt > 0:
        raise DynamicsException('dt must be positive, got {0}'.format(dt))
    steps = int(round(T/dt))
    if steps < 0 or abs(steps*dt - T) > _TIME_TOL*max(1.0, T):
        raise DynamicsException('T = {0} is not a multiple of dt = {1}'.format(T, dt))
    return steps


def _record_steps(times, dt, nr_steps):
    if times is None:
        return set(range(nr_steps + 1))
    steps = set()
    for t in times:
        s = _nr_steps(t, dt)
        if s > nr_steps:
            raise DynamicsException('record time {0} beyond the horizon'.format(t))
        steps.add(s)
    return steps


class _Stepper(object):
    """Binds a model to its step function and state layout."""

    def __init__(self, model, dt):
        self.model = model
        self.dt = dt
        if isinstance(model, _models.MeanFieldModel):
            self.lag = None
            self.noise_dim = model.n
        elif isinstance(model, (_models.DelayModel, _models.HamiltonianModel)):
            self.lag = model.grid_lag(dt)
            self.noise_dim = model.n
        else:
            raise DynamicsException('unsupported model {0!r}'.format(model))

    def prepare(self, init):
        if self.lag is None:
            if not isinstance(init, Ensemble):
                raise DynamicsException('mean-field runs start from an Ensemble')
            return init
        if isinstance(init, Ensemble):
            return SegmentEnsemble.from_states(init.states, self.lag, t=init.t, step=init.step)
        if init.lag != self.lag:
            raise DynamicsException('history length {0} does not match r0/dt = {1}'.format(
                init.lag, self.lag))
        return init

    def step(self, state, increments, frozen=None):
        model, dt = self.model, self.dt
        if isinstance(model, _models.MeanFieldModel):
            if frozen is None:
                return em_step_interacting(state, model, dt, increments)
            return em_step_limit(state, model, frozen, dt, increments)
        if isinstance(model, _models.DelayModel):
            return em_step_delay(state, model, dt, increments, frozen)
        return em_step_hamiltonian(state, model, dt, increments, frozen)

    @staticmethod
    def present(state):
        if isinstance(state, Ensemble):
            return state.states
        return state.present()


@_interactive
class CoupledRun(object):
    """Result of a synchronous coupling run.

    times         -- record times
    gaps          -- (1/N) sum_i |X^{i,N}_t - X^i_t|^2 at the record times
    segment_gaps  -- (1/N) sum_i |X^{i,N}_t - X^i_t|_inf^2 over segments
                     (None for mean-field models)
    sup_gaps      -- per particle sup over grid times of |X^{i,N}_t - X^i_t|^2
    terminal_gaps -- per particle gap at the horizon (segment sup norm for
                     segment models)
    interacting, limit -- final ensembles
    snapshots     -- dict time -> (interacting states, limit states)
    """

    def __init__(self, times, gaps, segment_gaps, sup_gaps, terminal_gaps,
                 interacting, limit, snapshots):
        self.times = _np.asarray(times, dtype=float)
        self.gaps = _np.asarray(gaps, dtype=float)
        self.segment_gaps = None if segment_gaps is None else \
            _np.asarray(segment_gaps, dtype=float)
        self.sup_gaps = sup_gaps
        self.terminal_gaps = terminal_gaps
        self.interacting = interacting
        self.limit = limit
        self.snapshots = snapshots

    def __repr__(self):
        return 'CoupledRun(N={0}, records={1}, final gap={2:.3e})'.format(
            self.sup_gaps.size, self.times.size, self.gaps[-1] if self.gaps.size else _math.nan)

    @property
    def path_gaps(self):
        """Gap series in the norm of the model state: segment sup norm for
        segment models, present state otherwise."""
        return self.gaps if self.segment_gaps is None else self.segment_gaps

    def statistic(self, kind='sup', k=1):
        """Exchangeable k-particle coupling statistic.

        'sup' averages sup_t |gap_i|^2 and 'terminal' the gap at the horizon
        over the first floor(N/k)*k particles, which by exchangeability has
        the expectation of (1/k) sum_{i <= k}.
        """
        values = {'sup': self.sup_gaps, 'terminal': self.terminal_gaps}.get(kind)
        if values is None:
            raise DynamicsException("statistic must be 'sup' or 'terminal', got {0!r}".format(kind))
        N = values.size
        if not 1 <= k <= N:
            raise DynamicsException('need 1 <= k <= N, got k={0}, N={1}'.format(k, N))
        return float(values[:(N//k)*k].mean())


@_interactive
def run_coupled(model, init_interacting, init_limit, T, dt, plan, frozen,
                record_times=None, snapshot_times=()):
    """Advance the interacting system and the limit copies with identical
    increments.

    Particle i of both systems reads the increments of particle i of 'plan'.

    Keyword arguments:
    model            -- MeanFieldModel, DelayModel or HamiltonianModel
    init_interacting -- Ensemble (or SegmentEnsemble) of the N-particle system
    init_limit       -- Ensemble (or SegmentEnsemble) of the N limit copies
    T, dt            -- horizon and step; T must be a multiple of dt
    plan             -- NoisePlan
    frozen           -- FrozenLaw of the limit process
    record_times     -- times at which gaps are recorded (default every step)
    snapshot_times   -- times at which both ensembles are stored

    Returns:
    CoupledRun

    Raises BlowUpException with the step and particle index.
    """
    stepper = _Stepper(model, dt)
    a = stepper.prepare(init_interacting)
    b = stepper.prepare(init_limit)
    if len(a) != len(b):
        raise DynamicsException('coupled systems need equal N, got {0} and {1}'.format(
            len(a), len(b)))
    N = len(a)
    nr_steps = _nr_steps(T, dt)
    records = _record_steps(record_times, dt, nr_steps)
    snaps = _record_steps(snapshot_times, dt, nr_steps) if snapshot_times else set()
    segmented = stepper.lag is not None

    times, gaps, segment_gaps, snapshots = [], [], [], {}

    def per_particle(a, b):
        diff = stepper.present(a) - stepper.present(b)
        return (diff**2).sum(axis=1)

    def record(a, b, g):
        times.append(a.t)
        gaps.append(g.mean())
        if segmented:
            segment_gaps.append((_utils.sup_norm(a.segments() - b.segments())**2).mean())

    def snapshot(a, b):
        snapshots[a.t] = (stepper.present(a).copy(), stepper.present(b).copy())

    g = per_particle(a, b)
    sup_gaps = g.copy()
    if 0 in records:
        record(a, b, g)
    if 0 in snaps:
        snapshot(a, b)
    for s in range(nr_steps):
        dW = plan.increments(a.step, N, stepper.noise_dim, dt)
        a = stepper.step(a, dW)
        b = stepper.step(b, dW, frozen)
        g = per_particle(a, b)
        _np.maximum(sup_gaps, g, out=sup_gaps)
        if s + 1 in records:
            record(a, b, g)
        if s + 1 in snaps:
            snapshot(a, b)
    if segmented:
        terminal = _utils.sup_norm(a.segments() - b.segments())**2
    else:
        terminal = g
    return CoupledRun(times, gaps, segment_gaps if segmented else None,
                      sup_gaps, terminal, a, b, snapshots)


Trajectory = _collections.namedtuple('Trajectory', ['times', 'states', 'final'])


@_interactive
def run_interacting(model, init, T, dt, plan, record_times=None):
    """Simulate the interacting system alone.

    Returns:
    Trajectory(times, states, final), where states[j] are the present states
    at times[j]
    """
    stepper = _Stepper(model, dt)
    a = stepper.prepare(init)
    nr_steps = _nr_steps(T, dt)
    records = _record_steps(record_times, dt, nr_steps)
    times, states = [], []
    if 0 in records:
        times.append(a.t)
        states.append(stepper.present(a).copy())
    for s in range(nr_steps):
        a = stepper.step(a, plan.increments(a.step, len(a), stepper.noise_dim, dt))
        if s + 1 in records:
            times.append(a.t)
            states.append(stepper.present(a).copy())
    return Trajectory(_np.array(times), states, a)


@_interactive
def build_reference_ensemble(model, init, T, dt, plan):
    """Run an M-particle interacting system and keep its whole path as the
    frozen law of the limit process.

    'plan' must be independent of the plans of the coupled runs it serves.
    """
    stepper = _Stepper(model, dt)
    a = stepper.prepare(init)
    nr_steps = _nr_steps(T, dt)
    lag = stepper.lag or 0
    path = _np.empty((lag + nr_steps + 1, len(a), a.dim))
    if lag:
        path[:lag + 1] = a.segments().transpose(1, 0, 2)
    else:
        path[0] = stepper.present(a)
    t0 = a.t
    for s in range(nr_steps):
        a = stepper.step(a, plan.increments(a.step, len(a), stepper.noise_dim, dt))
        path[lag + s + 1] = stepper.present(a)
    _log.debug('reference ensemble: M=%d, steps=%d', len(a), nr_steps)
    return ReferenceEnsemble(path, lag, dt, t0)


@_interactive
def initial_states(plan, N, dim, mean=0.0, std=1.0, purpose=NoisePlan.INITIAL):
    """Gaussian initial states mean + std * Z drawn from 'plan'; the row of
    particle i does not depend on N."""
    mean = _utils.as_vector(mean, dim, 'mean')
    std = _np.asarray(std, dtype=float)
    return mean + std*plan.normals(0, N, dim, purpose)


# --- export -----------------------------------------------------------------

GAP_SERIES_HEADER = ('t', 'gap_mean', 'gap_ci_low', 'gap_ci_high')


def gap_series_rows(runs, level=0.95):
    """Replica mean and confidence interval of CoupledRun.path_gaps at every
    record time."""
    runs = list(runs)
    if not runs:
        raise DynamicsException('no runs to summarize')
    times = runs[0].times
    gaps = _np.array([run.path_gaps for run in runs])
    rows = []
    for j, t in enumerate(times):
        est = _metrics.mean_ci(gaps[:, j], level)
        rows.append((float(t), est.mean, est.ci_low, est.ci_high))
    return rows


@_interactive
def write_gap_series(runs, path, level=0.95):
    """Write t,gap_mean,gap_ci_low,gap_ci_high over replica runs."""
    rows = gap_series_rows(runs, level)
    with open(path, 'w', newline='') as f:
        writer = _csv.writer(f)
        writer.writerow(GAP_SERIES_HEADER)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


@_interactive
def write_manifest(path, **fields):
    """Write a JSON run manifest (keys sorted)."""
    with open(path, 'w') as f:
        _json.dump(fields, f, indent=2, sort_keys=True, default=_json_default)
        f.write('\n')


def _json_default(obj):
    if isinstance(obj, _np.ndarray):
        return obj.tolist()
    if isinstance(obj, (_np.floating, _np.integer)):
        return obj.item()
    return str(obj)
