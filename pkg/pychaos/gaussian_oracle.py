"""Pychaos gaussian_oracle module

Exact laws of linear mean-field models

    b0(x) = A0 x + c0,  b1(x, y) = B1 x + B2 y + c1,  sigma = Sigma (constant),

for the limit process and for the N-particle system. With A = A0 + B1,
B = B2 and Q = Sigma Sigma^T, the per-particle covariance of an exchangeable
Gaussian N-particle law splits as Sigma_N = D + C, with C the cross-particle
covariance, and

    D' = A D + D A^T + Q
    C' = (A + B) C + C (A + B)^T + (B D + D B^T)/N
    m' = (A + B) m + c0 + c1.

D obeys the limit covariance equation, so with a common initial law the
interacting system differs from the product of limit laws only through C,
which is of order 1/N. The reduction is checked against RK4 on the full
N d x N d Lyapunov equation.
"""

import collections as _collections
import math as _math
import numpy as _np
import scipy.linalg as _linalg
import pychaos.models as _models
import pychaos.metrics as _metrics
from pychaos.utils import interactive as _interactive
from pychaos import utils as _utils


DEFAULT_DT_ODE = 1e-3
_PSD_TOL = 1e-9


class OracleException(Exception):
    pass


ChaosRecord = _collections.namedtuple('ChaosRecord', ['N', 'k', 't', 'w2_sq', 'kl'])


@_interactive
class LinearModelSpec(object):

    def __init__(self, A0, B1, B2, Sigma, c0=None, c1=None):
        A0 = _np.atleast_2d(_np.array(A0, dtype=float))
        d = A0.shape[0]
        try:
            self.A0 = _utils.as_matrix(A0, (d, d), 'A0')
            self.B1 = _utils.as_matrix(B1, (d, d), 'B1')
            self.B2 = _utils.as_matrix(B2, (d, d), 'B2')
            self.c0 = _utils.as_vector(0.0 if c0 is None else c0, d, 'c0')
            self.c1 = _utils.as_vector(0.0 if c1 is None else c1, d, 'c1')
            Sigma = _np.array(Sigma, dtype=float)
            if Sigma.ndim == 0:
                Sigma = float(Sigma)*_np.eye(d)
            Sigma = Sigma.reshape(d, -1)
        except ValueError as e:
            raise OracleException(str(e))
        self.Sigma = Sigma

    def __repr__(self):
        return 'LinearModelSpec(d={0}, n={1})'.format(self.d, self.n)

    @property
    def d(self):
        return self.A0.shape[0]

    @property
    def n(self):
        return self.Sigma.shape[1]

    @property
    def A(self):
        return self.A0 + self.B1

    @property
    def Q(self):
        return self.Sigma @ self.Sigma.T

    @property
    def c(self):
        return self.c0 + self.c1

    @property
    def K1(self):
        """-2 lambda_max(sym(A0)); dissipativity of b0 when positive."""
        return -2*float(_np.linalg.eigvalsh(0.5*(self.A0 + self.A0.T)).max())

    @property
    def K2(self):
        return _models.spectral_norm(self.B1) + _models.spectral_norm(self.B2)

    @staticmethod
    def from_model(model):
        """Linear spec of a MeanFieldModel built from the linear drift and
        constant diffusion families.

        Raises OracleException for other kernels.
        """
        drift, diffusion = model.drift, model.diffusion
        if not isinstance(drift.b0, _models.LinearDrift) or \
                not isinstance(drift.b1, _models.LinearPairKernel) or \
                not isinstance(diffusion.sigma_tilde, _models.ConstantPairKernel):
            raise OracleException('model {0!r} is not linear with constant diffusion'.format(
                model.name))
        return LinearModelSpec(drift.b0.A, drift.b1.B1, drift.b1.B2,
                               diffusion.sigma_tilde.value, drift.b0.c, drift.b1.c1)

    def to_model(self, regime=_models.Regime.FINITE_TIME, name='linear'):
        """MeanFieldModel with the induced constants declared."""
        norm_A0 = _models.spectral_norm(self.A0)
        K2 = self.K2
        q = _np.linalg.eigvalsh(self.Q)
        delta = _math.inf
        if q.min() > 0:
            delta = max(1.0, q.max(), 1/q.min())
        drift = _models.DriftSpec(
            _models.LinearDrift(self.A0, self.c0),
            _models.LinearPairKernel(self.B1, self.B2, self.c1),
            K_b=max(norm_A0, K2), K1=max(0.0, self.K1), K2=K2)
        diffusion = _models.DiffusionKernelSpec(
            _models.ConstantPairKernel(self.Sigma), K_sigma=0.0, delta=delta,
            distribution_free=True)
        return _models.MeanFieldModel(self.d, self.n, drift, diffusion, regime, name)


def _as_spec(spec):
    if isinstance(spec, LinearModelSpec):
        return spec
    if isinstance(spec, _models.MeanFieldModel):
        return LinearModelSpec.from_model(spec)
    raise OracleException('expected a LinearModelSpec, got {0!r}'.format(spec))


@_interactive
class ExchangeableGaussian(object):
    """Gaussian law of N exchangeable particles in R^d.

    Diagonal blocks Sigma, off-diagonal blocks C. D = Sigma - C is kept
    separately when known exactly.

    Raises OracleException when the joint covariance is not PSD.
    """

    def __init__(self, mean, Sigma, C, N, D=None, tol=_PSD_TOL):
        self.mean = _np.atleast_1d(_np.array(mean, dtype=float))
        self.Sigma = _np.atleast_2d(_np.array(Sigma, dtype=float))
        self.C = _np.atleast_2d(_np.array(C, dtype=float))
        self.N = int(N)
        self.D = self.Sigma - self.C if D is None else _np.atleast_2d(_np.array(D, dtype=float))
        if self.N < 1:
            raise OracleException('N must be positive')
        scale = max(1.0, _np.abs(self.Sigma).max())
        for name, block in (('Sigma - C', self.D),
                            ('Sigma + (N-1) C', self.Sigma + (self.N - 1)*self.C)):
            low = _np.linalg.eigvalsh(0.5*(block + block.T)).min()
            if low < -tol*scale:
                raise OracleException('{0} not positive semidefinite (eigenvalue {1:.3e})'.format(
                    name, low))

    def __repr__(self):
        return 'ExchangeableGaussian(N={0}, d={1})'.format(self.N, self.mean.size)

    def joint(self):
        return k_marginal(self, self.N)


@_interactive
def k_marginal(joint, k):
    """Law of the first k particles of an exchangeable Gaussian.

    Raises OracleException unless 1 <= k <= N.
    """
    if not 1 <= k <= joint.N:
        raise OracleException('need 1 <= k <= N, got k={0}, N={1}'.format(k, joint.N))
    cov = _np.kron(_np.eye(k), joint.D) + _np.kron(_np.ones((k, k)), joint.C)
    return _metrics.GaussianLaw(_np.tile(joint.mean, k), cov)


def _nr_steps(T, dt):
    if not dt > 0:
        raise OracleException('dt_ode must be positive')
    steps = int(round(T/dt))
    if steps < 0 or abs(steps*dt - T) > 1e-9*max(1.0, T):
        raise OracleException('T = {0} is not a multiple of dt_ode = {1}'.format(T, dt))
    return steps


def _rk4(rhs, y0, T, dt):
    """Classical RK4 on a tuple of arrays; returns grid times and states."""
    steps = _nr_steps(T, dt)
    y = tuple(_np.array(v, dtype=float) for v in y0)
    states = [y]
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(tuple(v + 0.5*dt*a for v, a in zip(y, k1)))
        k3 = rhs(tuple(v + 0.5*dt*a for v, a in zip(y, k2)))
        k4 = rhs(tuple(v + dt*a for v, a in zip(y, k3)))
        y = tuple(v + (dt/6)*(a + 2*b + 2*c + e)
                  for v, a, b, c, e in zip(y, k1, k2, k3, k4))
        states.append(y)
    return _np.arange(steps + 1)*dt, states


def _lyapunov_rhs(A, Q, S):
    return A @ S + S @ A.T + Q


def _initial(spec, m0, S0):
    d = spec.d
    try:
        m0 = _utils.as_vector(0.0 if m0 is None else m0, d, 'm0')
        S0 = _utils.as_matrix(_np.eye(d) if S0 is None else S0, (d, d), 'S0')
    except (TypeError, ValueError) as e:
        raise OracleException('initial law: {0}'.format(e))
    return m0, S0


@_interactive
def propagate_limit_moments(spec, m0=None, S0=None, T=1.0, dt_ode=DEFAULT_DT_ODE):
    """Mean and covariance of the limit process by RK4.

    m' = (A0 + B1 + B2) m + c0 + c1
    S' = (A0 + B1) S + S (A0 + B1)^T + Sigma Sigma^T

    Returns:
    (times, laws) -- grid times and GaussianLaw per time
    """
    spec = _as_spec(spec)
    m0, S0 = _initial(spec, m0, S0)
    A, AB, Q, c = spec.A, spec.A + spec.B2, spec.Q, spec.c

    def rhs(y):
        m, S = y
        return AB @ m + c, _lyapunov_rhs(A, Q, S)

    times, states = _rk4(rhs, (m0, S0), T, dt_ode)
    return times, [_metrics.GaussianLaw(m, S) for m, S in states]


@_interactive
def stationary_limit_covariance(spec):
    """Invariant covariance S of the limit process, A S + S A^T + Q = 0.

    Raises OracleException when A0 + B1 is not Hurwitz.
    """
    spec = _as_spec(spec)
    if _np.linalg.eigvals(spec.A).real.max() >= 0:
        raise OracleException('A0 + B1 is not Hurwitz; no stationary covariance')
    S = _linalg.solve_continuous_lyapunov(spec.A, -spec.Q)
    return 0.5*(S + S.T)


def common_initial_law(spec, N, m0=None, S0=None):
    """Exchangeable law of N i.i.d. particles with law N(m0, S0)."""
    spec = _as_spec(spec)
    m0, S0 = _initial(spec, m0, S0)
    return ExchangeableGaussian(m0, S0, _np.zeros_like(S0), N, D=S0)


@_interactive
def propagate_interacting_moments(spec, N, init, T=1.0, dt_ode=DEFAULT_DT_ODE):
    """Exact law of the N-particle system by the reduced two-block ODE.

    Keyword arguments:
    spec   -- LinearModelSpec (or linear MeanFieldModel)
    N      -- number of particles
    init   -- ExchangeableGaussian initial law
    T      -- horizon
    dt_ode -- RK4 step

    Returns:
    (times, laws) -- grid times and ExchangeableGaussian per time

    Raises OracleException when a propagated law is not PSD.
    """
    spec = _as_spec(spec)
    if init.N != N:
        raise OracleException('initial law has N={0}, expected {1}'.format(init.N, N))
    A, B, Q, c = spec.A, spec.B2, spec.Q, spec.c
    AB = A + B

    def rhs(y):
        m, D, C = y
        return (AB @ m + c,
                _lyapunov_rhs(A, Q, D),
                AB @ C + C @ AB.T + (B @ D + D @ B.T)/N)

    times, states = _rk4(rhs, (init.mean, init.D, init.C), T, dt_ode)
    laws = [ExchangeableGaussian(m, D + C, C, N, D=D) for m, D, C in states]
    return times, laws


@_interactive
def propagate_full_lyapunov(spec, N, init, T=1.0, dt_ode=DEFAULT_DT_ODE):
    """RK4 on the N d dimensional mean and Lyapunov equations,
    P' = F P + P F^T + I (x) Q with F = I (x) A + (1/N) 11^T (x) B.

    Returns:
    (times, means, covs) -- full N d mean vectors and covariance matrices
    """
    spec = _as_spec(spec)
    A, B, Q, c = spec.A, spec.B2, spec.Q, spec.c
    eye, ones = _np.eye(N), _np.ones((N, N))
    F = _np.kron(eye, A) + _np.kron(ones, B)/N
    Qf = _np.kron(eye, Q)
    cf = _np.tile(c, N)
    P0 = _np.kron(eye, init.D) + _np.kron(ones, init.C)

    def rhs(y):
        m, P = y
        return F @ m + cf, _lyapunov_rhs(F, Qf, P)

    times, states = _rk4(rhs, (_np.tile(init.mean, N), P0), T, dt_ode)
    return times, [m for m, _ in states], [P for _, P in states]


def _law_at(times, laws, t):
    idx = int(_np.argmin(_np.abs(times - t)))
    if abs(times[idx] - t) > 1e-9*max(1.0, t):
        raise OracleException('time {0} not on the ODE grid'.format(t))
    return laws[idx]


@_interactive
def exact_chaos_curve(spec, N_list, k, t, m0=None, S0=None, dt_ode=DEFAULT_DT_ODE):
    """Exact W2^2 and relative entropy between the k-marginal of the
    N-particle law and the k-fold product of the limit law at time t.

    Both systems start from the common law N(m0, S0), so the initial
    distance terms vanish.

    Returns:
    list of ChaosRecord(N, k, t, w2_sq, kl), one per N
    """
    spec = _as_spec(spec)
    times, limit_laws = propagate_limit_moments(spec, m0, S0, t, dt_ode)
    limit = _law_at(times, limit_laws, t)
    product = _metrics.GaussianLaw(_np.tile(limit.mean, k),
                                   _np.kron(_np.eye(k), limit.cov))
    records = []
    for N in N_list:
        N = int(N)
        if k > N:
            raise OracleException('k = {0} exceeds N = {1}'.format(k, N))
        init = common_initial_law(spec, N, m0, S0)
        itimes, laws = propagate_interacting_moments(spec, N, init, t, dt_ode)
        marginal = k_marginal(_law_at(itimes, laws, t), k)
        records.append(ChaosRecord(N, k, float(t),
                                   _metrics.gaussian_w2(marginal, product)**2,
                                   _metrics.gaussian_kl(marginal, product)))
    return records


@_interactive
def coupled_gap_moments(spec, N, S0=None, T=1.0, dt_ode=DEFAULT_DT_ODE,
                        coupling='matched', offset=None):
    """Exact E|X^{i,N}_t - X^i_t|^2 under synchronous coupling with the
    exact limit law.

    The common noise cancels in the gap; with e = mean(X^N) - m the pair
    z = (gap, e) solves dz = [[A, B], [0, A + B]] z dt + (0, Sigma dW_bar)
    where W_bar has covariance t I/N.

    Keyword arguments:
    coupling -- 'matched' (equal initial states), 'offset' (limit initial
                state = interacting + offset) or 'independent'

    Returns:
    (times, gaps)
    """
    spec = _as_spec(spec)
    d = spec.d
    _, S0 = _initial(spec, None, S0)
    A, B, Q = spec.A, spec.B2, spec.Q
    zero = _np.zeros((d, d))
    G = _np.block([[A, B], [zero, A + B]])
    noise = _np.block([[zero, zero], [zero, Q/N]])
    P0 = _np.block([[zero, zero], [zero, S0/N]])
    mu0 = _np.zeros(2*d)
    if coupling == 'offset':
        if offset is None:
            raise OracleException("coupling 'offset' needs an offset")
        mu0[:d] = -_utils.as_vector(offset, d, 'offset')
    elif coupling == 'independent':
        P0 = _np.block([[2*S0, S0/N], [S0/N, S0/N]])
    elif coupling != 'matched':
        raise OracleException('unknown coupling {0!r}'.format(coupling))

    def rhs(y):
        mu, P = y
        return G @ mu, _lyapunov_rhs(G, noise, P)

    times, states = _rk4(rhs, (mu0, P0), T, dt_ode)
    gaps = _np.array([_np.trace(P[:d, :d]) + (mu[:d]**2).sum() for mu, P in states])
    return times, gaps
