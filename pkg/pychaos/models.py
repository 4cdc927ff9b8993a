"""Pychaos models module

Declarative specifications of the three model families simulated by the
package and the validators for the constants each long-time or finite-time
result needs.

Kernels are vectorized callables. A pair kernel f(x, y, t) takes points of
shape (..., d) that broadcast against each other; a segment kernel
f(xi, eta, t) takes discretized paths of shape (..., L+1, D), oldest sample
first, so that index -1 is the present state and index 0 the state r0 ago.
Kernel values keep the broadcast leading axes: (..., d) for drifts and
(..., d, n) for diffusions.

Constants are declared by the model author. Validators compare them with the
thresholds of the corresponding result exactly and spot-check them against
the kernels on random samples.
"""

import enum as _enum
import hashlib as _hashlib
import json as _json
import math as _math
import numpy as _np
import numpy.polynomial.hermite_e as _hermite_e
import pychaos.config as _config
from pychaos.utils import interactive as _interactive
from pychaos.utils import FrozenObject as _FrozenObject
from pychaos import utils as _utils


_SLACK_REL = 1e-8
_SLACK_ABS = 1e-12
_CHUNK_SIZE = 2**22
_QUADRATURE_ORDER = 12
_MAX_QUADRATURE_DIM = 4
_ELLIPTICITY_CLOUD = 8
_SEGMENT_LAG = 10


class ModelException(Exception):
    pass


class Regime(str, _enum.Enum):
    FINITE_TIME = 'FiniteTime'
    DISSIPATIVE = 'Dissipative'


# --- kernels ----------------------------------------------------------------

@_interactive
class PairKernel(object):
    """Kernel acting on a pair of points.

    average(x, cloud) integrates the kernel in its second argument against
    the empirical measure of 'cloud'; expectation(x, law) does the same
    against a Gaussian law with attributes 'mean' and 'cov'.
    """

    _point_ndim = 1

    def __init__(self, func=None, name=None):
        if func is None and type(self)._evaluate is PairKernel._evaluate:
            raise ModelException('kernel function missing')
        self._func = func
        self.name = name if name is not None else \
            getattr(func, '__name__', type(self).__name__)

    def __call__(self, x, y, t=0.0):
        return self._evaluate(_np.asarray(x, dtype=float),
                              _np.asarray(y, dtype=float), t)

    def _evaluate(self, x, y, t):
        return _np.asarray(self._func(x, y, t), dtype=float)

    def __repr__(self):
        return '{0}({1!r})'.format(type(self).__name__, self.name)

    def average(self, x, cloud, t=0.0):
        """Mean of kernel(x[p], cloud[m]) over m, for every p."""
        x = _np.asarray(x, dtype=float)
        cloud = _np.asarray(cloud, dtype=float)
        sample = self(x[:1, None], cloud[None, :1], t)
        out_shape = sample.shape[2:]
        out_size = max(1, int(_np.prod(out_shape)))
        rows = max(1, _CHUNK_SIZE // (cloud.shape[0]*out_size))
        result = _np.empty((x.shape[0],) + out_shape)
        for start in range(0, x.shape[0], rows):
            stop = min(start + rows, x.shape[0])
            values = self(x[start:stop, None], cloud[None], t)
            values = _np.broadcast_to(
                values, (stop - start, cloud.shape[0]) + out_shape)
            result[start:stop] = values.mean(axis=1)
        return result

    def expectation(self, x, law, t=0.0, order=None):
        """Expectation of kernel(x[p], Y) for Y ~ law, by Gauss-Hermite
        tensor quadrature (law dimension at most 4).

        Raises ModelException
        """
        mean = _np.atleast_1d(_np.asarray(law.mean, dtype=float))
        dim = mean.size
        if dim > _MAX_QUADRATURE_DIM:
            raise ModelException(
                'quadrature expectation limited to dimension {0}, got {1}'.format(
                    _MAX_QUADRATURE_DIM, dim))
        order = _QUADRATURE_ORDER if order is None else order
        nodes, weights = _hermite_e.hermegauss(order)
        weights = weights/weights.sum()
        grid = _np.stack(_np.meshgrid(*([nodes]*dim), indexing='ij'), axis=-1)
        grid = grid.reshape(-1, dim)
        wgrid = _np.stack(_np.meshgrid(*([weights]*dim), indexing='ij'), axis=-1)
        wgrid = wgrid.reshape(-1, dim).prod(axis=1)
        root = _utils.psd_sqrt(_np.atleast_2d(law.cov))
        points = mean + grid @ root.T
        x = _np.asarray(x, dtype=float)
        values = self(x[:, None], points[None], t)
        values = _np.broadcast_to(values, (x.shape[0], points.shape[0]) + values.shape[2:])
        return _np.tensordot(wgrid, values, axes=([0], [1]))


@_interactive
class SegmentKernel(PairKernel):
    """Kernel acting on a pair of discretized path segments."""

    _point_ndim = 2

    def expectation(self, x, law, t=0.0, order=None):
        raise ModelException('segment kernels have no Gaussian expectation')


class ConstantPairKernel(PairKernel):

    def __init__(self, value, name='constant'):
        self.value = _np.array(value, dtype=float)
        self.value.setflags(write=False)
        PairKernel.__init__(self, None, name)

    def _evaluate(self, x, y, t):
        nd = self._point_ndim
        lead = _np.broadcast_shapes(x.shape[:-nd], y.shape[:-nd])
        return _np.broadcast_to(self.value, lead + self.value.shape)

    def average(self, x, cloud, t=0.0):
        x = _np.asarray(x)
        return _np.array(_np.broadcast_to(self.value, (x.shape[0],) + self.value.shape))

    def expectation(self, x, law, t=0.0, order=None):
        return self.average(x, None, t)


class ConstantSegmentKernel(ConstantPairKernel, SegmentKernel):
    _point_ndim = 2


class LinearDrift(object):
    """x -> A x + c, vectorized over leading axes."""

    def __init__(self, A, c=None):
        self.A = _np.array(_np.atleast_2d(A), dtype=float)
        self.c = _np.zeros(self.A.shape[0]) if c is None else \
            _np.array(c, dtype=float).reshape(self.A.shape[0])
        self.__name__ = 'linear'

    def __call__(self, x, t=0.0):
        return _np.asarray(x, dtype=float) @ self.A.T + self.c


class LinearPairKernel(PairKernel):
    """(x, y) -> B1 x + B2 y + c1, with closed-form averages."""

    def __init__(self, B1, B2, c1=None):
        self.B1 = _np.array(_np.atleast_2d(B1), dtype=float)
        self.B2 = _np.array(_np.atleast_2d(B2), dtype=float)
        self.c1 = _np.zeros(self.B1.shape[0]) if c1 is None else \
            _np.array(c1, dtype=float).reshape(self.B1.shape[0])
        PairKernel.__init__(self, None, 'linear')

    def _evaluate(self, x, y, t):
        return x @ self.B1.T + y @ self.B2.T + self.c1

    def average(self, x, cloud, t=0.0):
        x = _np.asarray(x, dtype=float)
        cloud_mean = _np.asarray(cloud, dtype=float).mean(axis=0)
        return x @ self.B1.T + (cloud_mean @ self.B2.T + self.c1)

    def expectation(self, x, law, t=0.0, order=None):
        x = _np.asarray(x, dtype=float)
        mean = _np.atleast_1d(_np.asarray(law.mean, dtype=float))
        return x @ self.B1.T + (mean @ self.B2.T + self.c1)


class TanhAttraction(PairKernel):
    """(x, y) -> coupling * tanh(y - x), componentwise."""

    def __init__(self, coupling):
        self.coupling = float(coupling)
        PairKernel.__init__(self, None, 'attractive_quadratic_tanh')

    def _evaluate(self, x, y, t):
        return self.coupling*_np.tanh(y - x)


class TanhSigma(PairKernel):
    """(x, y) -> base * I + scale * diag(tanh(x + y))."""

    def __init__(self, base, scale):
        self.base = float(base)
        self.scale = float(scale)
        PairKernel.__init__(self, None, 'kernel_sigma')

    def _evaluate(self, x, y, t):
        z = _np.tanh(x + y)
        eye = _np.eye(z.shape[-1])
        return self.base*eye + self.scale*z[..., :, None]*eye


class HeadKernel(SegmentKernel):
    """Segment kernel reading only the present state of both segments."""

    def __init__(self, kernel):
        self.kernel = kernel
        PairKernel.__init__(self, None, 'head(' + kernel.name + ')')

    def _evaluate(self, xi, eta, t):
        return self.kernel(xi[..., -1, :], eta[..., -1, :], t)

    def average(self, x, cloud, t=0.0):
        x = _np.asarray(x, dtype=float)
        cloud = _np.asarray(cloud, dtype=float)
        return self.kernel.average(_np.ascontiguousarray(x[:, -1, :]),
                                   _np.ascontiguousarray(cloud[:, -1, :]), t)

    def expectation(self, x, law, t=0.0, order=None):
        x = _np.asarray(x, dtype=float)
        return self.kernel.expectation(_np.ascontiguousarray(x[:, -1, :]), law, t, order)


class LinearSegmentKernel(SegmentKernel):
    """(xi, eta) -> S0 xi(0) + S1 xi(-r0) + O0 eta(0) + O1 eta(-r0) + c."""

    def __init__(self, self_now, self_lag, other_now, other_lag, c=None):
        self.self_now = _np.atleast_2d(_np.array(self_now, dtype=float))
        self.self_lag = _np.atleast_2d(_np.array(self_lag, dtype=float))
        self.other_now = _np.atleast_2d(_np.array(other_now, dtype=float))
        self.other_lag = _np.atleast_2d(_np.array(other_lag, dtype=float))
        self.c = _np.zeros(self.self_now.shape[0]) if c is None else \
            _np.array(c, dtype=float).reshape(self.self_now.shape[0])
        PairKernel.__init__(self, None, 'linear')

    def _evaluate(self, xi, eta, t):
        return (xi[..., -1, :] @ self.self_now.T + xi[..., 0, :] @ self.self_lag.T +
                eta[..., -1, :] @ self.other_now.T + eta[..., 0, :] @ self.other_lag.T +
                self.c)

    def average(self, x, cloud, t=0.0):
        x = _np.asarray(x, dtype=float)
        cloud = _np.asarray(cloud, dtype=float)
        partner = (cloud[:, -1, :].mean(axis=0) @ self.other_now.T +
                   cloud[:, 0, :].mean(axis=0) @ self.other_lag.T + self.c)
        return x[:, -1, :] @ self.self_now.T + x[:, 0, :] @ self.self_lag.T + partner


class TanhSegmentAttraction(SegmentKernel):
    """(xi, eta) -> coupling * tanh(eta(-r0) - xi(0)) on the last 'size'
    components of the path."""

    def __init__(self, coupling, size):
        self.coupling = float(coupling)
        self.size = int(size)
        PairKernel.__init__(self, None, 'attractive_quadratic_tanh')

    def _evaluate(self, xi, eta, t):
        block = slice(-self.size, None)
        return self.coupling*_np.tanh(eta[..., 0, block] - xi[..., -1, block])


class TanhSegmentSigma(SegmentKernel):
    """(xi, eta) -> base * I + scale * diag(tanh(xi(0) + eta(-r0)))."""

    def __init__(self, base, scale):
        self.base = float(base)
        self.scale = float(scale)
        PairKernel.__init__(self, None, 'kernel_sigma')

    def _evaluate(self, xi, eta, t):
        z = _np.tanh(xi[..., -1, :] + eta[..., 0, :])
        eye = _np.eye(z.shape[-1])
        return self.base*eye + self.scale*z[..., :, None]*eye


def _as_pair_kernel(kernel, cls=PairKernel):
    if isinstance(kernel, cls):
        return kernel
    if isinstance(kernel, PairKernel):
        raise ModelException('expected a {0}, got {1!r}'.format(cls.__name__, kernel))
    if not callable(kernel):
        raise ModelException('kernel {0!r} is not callable'.format(kernel))
    return cls(kernel)


# --- model specifications ---------------------------------------------------

@_interactive
class DriftSpec(_FrozenObject):
    """Mean-field drift b(x, mu) = b0(x) + int b1(x, y) mu(dy).

    Keyword arguments:
    b0   -- callable b0(x, t) -> (..., d)
    b1   -- PairKernel (or callable b1(x, y, t)) -> (..., d)
    K_b  -- Lipschitz constant of b0 and b1 (finite-time regime)
    K1   -- dissipativity: 2<b0(x)-b0(y), x-y> <= -K1 |x-y|^2
    K2   -- Lipschitz constant of b1 (dissipative regime)
    dini -- optional description of the modulus class of b0 (metadata)
    """

    _exception = ModelException

    def __init__(self, b0, b1, K_b=None, K1=0.0, K2=0.0, dini=None):
        if not callable(b0):
            raise ModelException('b0 is not callable')
        self.b0 = b0
        self.b1 = _as_pair_kernel(b1)
        self.K_b = _nonneg(K_b, 'K_b')
        self.K1 = _nonneg(K1, 'K1')
        self.K2 = _nonneg(K2, 'K2')
        self.dini = dini
        self._freeze()


@_interactive
class DiffusionKernelSpec(_FrozenObject):
    """Mean-field diffusion sigma(x, mu) = int sigma_tilde(x, y) mu(dy).

    Keyword arguments:
    sigma_tilde       -- PairKernel (or callable) -> (..., d, n)
    K_sigma           -- Hilbert-Schmidt Lipschitz constant
    delta             -- ellipticity bound, 1/delta <= sigma sigma* <= delta
                         (default inf, meaning not declared)
    distribution_free -- True when sigma depends on x only
    """

    _exception = ModelException

    def __init__(self, sigma_tilde, K_sigma=None, delta=_math.inf,
                 distribution_free=False):
        self.sigma_tilde = _as_pair_kernel(sigma_tilde)
        self.K_sigma = _nonneg(K_sigma, 'K_sigma')
        delta = float(delta)
        if delta < 1:
            raise ModelException('delta must be >= 1, got {0}'.format(delta))
        self.delta = delta
        self.distribution_free = bool(distribution_free)
        self._freeze()


@_interactive
class MeanFieldModel(_FrozenObject):

    _exception = ModelException

    def __init__(self, d, n, drift, diffusion, regime=Regime.FINITE_TIME,
                 name=None, source=None):
        self.d = _positive_int(d, 'd')
        self.n = _positive_int(n, 'n')
        if not isinstance(drift, DriftSpec):
            raise ModelException('drift must be a DriftSpec, got {0!r}'.format(drift))
        if not isinstance(diffusion, DiffusionKernelSpec):
            raise ModelException('diffusion must be a DiffusionKernelSpec, got {0!r}'.format(
                diffusion))
        self.drift = drift
        self.diffusion = diffusion
        try:
            self.regime = Regime(regime)
        except ValueError:
            raise ModelException('unknown regime {0!r}'.format(regime))
        self.name = name or 'mean_field'
        self.source = source
        _check_model(self)
        self._freeze()

    def __repr__(self):
        return 'MeanFieldModel({0!r}, d={1}, n={2}, regime={3})'.format(
            self.name, self.d, self.n, self.regime.value)

    def _check_dimensions(self):
        x = _np.zeros((1, self.d))
        _expect_shape(self.drift.b0(x, 0.0), (1, self.d), 'b0')
        _expect_shape(self.drift.b1(x, x, 0.0), (1, self.d), 'b1')
        _expect_shape(self.diffusion.sigma_tilde(x, x, 0.0),
                      (1, self.d, self.n), 'sigma_tilde')


@_interactive
class DelayModel(_FrozenObject):
    """Path-distribution dependent model on segments over [-r0, 0].

    Keyword arguments:
    d, n        -- state and noise dimensions
    r0          -- delay horizon
    b           -- callable b(x, t) on the present state, dissipative with K_b
    B_tilde     -- SegmentKernel drift interaction, Lipschitz with K_B
    sigma_tilde -- SegmentKernel diffusion, squared-Lipschitz with K_sigma
    """

    _exception = ModelException

    def __init__(self, d, n, r0, b, B_tilde, sigma_tilde, K_b, K_B, K_sigma,
                 distribution_free=False, name=None, source=None):
        self.d = _positive_int(d, 'd')
        self.n = _positive_int(n, 'n')
        self.r0 = _nonneg(r0, 'r0')
        if not callable(b):
            raise ModelException('b is not callable')
        self.b = b
        self.B_tilde = _as_pair_kernel(B_tilde, SegmentKernel)
        self.sigma_tilde = _as_pair_kernel(sigma_tilde, SegmentKernel)
        self.K_b = _nonneg(K_b, 'K_b')
        self.K_B = _nonneg(K_B, 'K_B')
        self.K_sigma = _nonneg(K_sigma, 'K_sigma')
        self.distribution_free = bool(distribution_free)
        self.name = name or 'delay'
        self.source = source
        _check_model(self)
        self._freeze()

    def __repr__(self):
        return 'DelayModel({0!r}, d={1}, n={2}, r0={3})'.format(
            self.name, self.d, self.n, self.r0)

    @property
    def state_dim(self):
        return self.d

    def grid_lag(self, dt):
        """Number of dt steps in r0. Raises ModelException when r0 is not an
        integer multiple of dt."""
        return _grid_lag(self.r0, dt)

    def _check_dimensions(self):
        seg = _np.zeros((1, 2, self.d))
        _expect_shape(self.b(seg[:, -1], 0.0), (1, self.d), 'b')
        _expect_shape(self.B_tilde(seg, seg, 0.0), (1, self.d), 'B_tilde')
        _expect_shape(self.sigma_tilde(seg, seg, 0.0), (1, self.d, self.n),
                      'sigma_tilde')

    @staticmethod
    def from_mean_field(model):
        """Delay model with r0 = 0 whose segment kernels read the present
        state, reproducing 'model' step for step."""
        drift, diffusion = model.drift, model.diffusion
        if diffusion.K_sigma is not None:
            K_sigma = 2*diffusion.K_sigma**2
        else:
            K_sigma = drift.K2
        return DelayModel(
            d=model.d, n=model.n, r0=0.0, b=drift.b0,
            B_tilde=HeadKernel(drift.b1),
            sigma_tilde=HeadKernel(diffusion.sigma_tilde),
            K_b=drift.K1, K_B=max(drift.K_b or 0.0, drift.K2), K_sigma=K_sigma,
            distribution_free=diffusion.distribution_free,
            name=model.name, source=model.source)


@_interactive
class HamiltonianModel(_FrozenObject):
    """Stochastic Hamiltonian system on R^(m+d).

    dX1 = (A X1 + M X2) dt
    dX2 = (b(X2) + int B_tilde(X_t, eta) mu(d eta)) dt + sigma dW

    B_tilde acts on segments of the full (m+d)-dimensional path.
    """

    _exception = ModelException

    def __init__(self, m, d, A, M, b, B_tilde, sigma, r0=0.0, K_A=0.0,
                 K1=0.0, K2=0.0, K_B=0.0, name=None, source=None):
        self.m = _positive_int(m, 'm')
        self.d = _positive_int(d, 'd')
        try:
            self.A = _utils.as_matrix(A, (self.m, self.m), 'A')
            self.M = _utils.as_matrix(M, (self.m, self.d), 'M')
            self.sigma = _utils.as_matrix(sigma, (self.d, self.d), 'sigma')
        except ValueError as e:
            raise ModelException(str(e))
        for arr in (self.A, self.M, self.sigma):
            arr.setflags(write=False)
        if not callable(b):
            raise ModelException('b is not callable')
        self.b = b
        self.B_tilde = _as_pair_kernel(B_tilde, SegmentKernel)
        self.r0 = _nonneg(r0, 'r0')
        self.K_A = _nonneg(K_A, 'K_A')
        self.K1 = _nonneg(K1, 'K1')
        self.K2 = _nonneg(K2, 'K2')
        self.K_B = _nonneg(K_B, 'K_B')
        self.name = name or 'hamiltonian'
        self.source = source
        _check_model(self)
        self._freeze()

    def __repr__(self):
        return 'HamiltonianModel({0!r}, m={1}, d={2}, r0={3})'.format(
            self.name, self.m, self.d, self.r0)

    @property
    def n(self):
        return self.d

    @property
    def state_dim(self):
        return self.m + self.d

    def grid_lag(self, dt):
        return _grid_lag(self.r0, dt)

    def _check_dimensions(self):
        seg = _np.zeros((1, 2, self.m + self.d))
        _expect_shape(self.b(seg[:, -1, self.m:], 0.0), (1, self.d), 'b')
        _expect_shape(self.B_tilde(seg, seg, 0.0), (1, self.d), 'B_tilde')


# --- thresholds and validators ----------------------------------------------

@_interactive
def sup_rate(K, r0):
    """Maximum of v*exp(-v*r0) over v in [0, K].

    Raises ModelException for negative arguments.
    """
    K, r0 = float(K), float(r0)
    if K < 0 or r0 < 0:
        raise ModelException('sup_rate needs K >= 0 and r0 >= 0, got ({0}, {1})'.format(
            K, r0))
    if r0 == 0 or K*r0 <= 1:
        return K*_math.exp(-K*r0)
    return 1.0/(_math.e*r0)


@_interactive
def kalman_rank(A, M, tol=None):
    """Numerical rank of the controllability matrix [M, AM, ..., A^(m-1) M].

    Keyword arguments:
    A   -- m x m matrix
    M   -- m x d matrix
    tol -- singular value threshold (numpy default when None)

    Raises ModelException on inconsistent dimensions.
    """
    A = _np.atleast_2d(_np.array(A, dtype=float))
    M = _np.array(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    m = A.shape[0]
    if A.shape != (m, m) or M.shape[0] != m:
        raise ModelException('kalman_rank needs A m x m and M m x d, got {0} and {1}'.format(
            A.shape, M.shape))
    blocks = [M]
    for _ in range(m - 1):
        blocks.append(A @ blocks[-1])
    return int(_np.linalg.matrix_rank(_np.hstack(blocks), tol=tol))


@_interactive
def spectral_norm(M, tol=1e-10, max_iter=100000):
    """Largest singular value of M by power iteration on M^T M."""
    M = _np.atleast_2d(_np.array(M, dtype=float))
    if not M.any():
        return 0.0
    v = _np.linspace(1.0, 2.0, M.shape[1])
    v /= _np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        norm_w = _np.linalg.norm(w)
        if norm_w == 0:
            # start vector in the kernel of M
            v = _np.roll(v, 1) + 1.0/M.shape[1]
            v /= _np.linalg.norm(v)
            continue
        v = w/norm_w
        previous, estimate = estimate, _math.sqrt(norm_w)
        if abs(estimate - previous) <= tol*estimate:
            break
    return float(_np.linalg.norm(M @ v))


@_interactive
def validate_dissipative(model, spot=True, nr_samples=10**4, box=1.0, seed=0):
    """Check K1 > 8 K2 for a dissipative mean-field model.

    Keyword arguments:
    model      -- MeanFieldModel with regime Dissipative
    spot       -- spot-check the declared constants (default True)
    nr_samples -- number of random sample pairs
    box        -- samples are uniform in [-box, box]^d
    seed       -- seed of the sampler

    Returns:
    report -- dict with 'passed' (threshold), 'margin' K1-8K2, 'rate'
              (K1-8K2)/2 and 'constants_consistent' (spot checks)

    Raises ModelException
    """
    if not isinstance(model, MeanFieldModel) or model.regime != Regime.DISSIPATIVE:
        raise ModelException('validate_dissipative needs a Dissipative MeanFieldModel')
    K1, K2 = model.drift.K1, model.drift.K2
    margin = K1 - 8*K2
    report = {
        'validator': 'dissipative',
        'model': model.name,
        'K1': K1,
        'K2': K2,
        'passed': bool(margin > 0),
        'margin': margin,
        'rate': margin/2,
    }
    return _attach_spot_check(report, model, spot, nr_samples, box, seed)


@_interactive
def validate_finite_time(model, spot=True, nr_samples=10**4, box=1.0, seed=0):
    """Spot-check the Lipschitz and ellipticity constants of a finite-time
    mean-field model and report whether the entropy bound applies (which
    needs a distribution-free, elliptic diffusion)."""
    if not isinstance(model, MeanFieldModel):
        raise ModelException('validate_finite_time needs a MeanFieldModel')
    diffusion = model.diffusion
    report = {
        'validator': 'finite_time',
        'model': model.name,
        'K_b': model.drift.K_b,
        'K_sigma': diffusion.K_sigma,
        'delta': diffusion.delta if _math.isfinite(diffusion.delta) else None,
        'entropy_bound_applies': bool(diffusion.distribution_free and
                                      _math.isfinite(diffusion.delta)),
        'passed': True,
    }
    return _attach_spot_check(report, model, spot, nr_samples, box, seed)


@_interactive
def validate_delay(model, spot=True, nr_samples=10**4, box=1.0, seed=0):
    """Check 72 K_sigma + 8 K_B < sup_rate(K_b, r0) for a delay model.

    Returns:
    report -- dict with 'passed', 'sup_rate', 'Lambda' (half the gap),
              'Lambda_tilde' (sup_rate - 36 K_sigma - 8 K_B), 'decay_rate'
              exp(K_b r0) Lambda and 'constants_consistent'
    """
    if not isinstance(model, DelayModel):
        raise ModelException('validate_delay needs a DelayModel')
    sup = sup_rate(model.K_b, model.r0)
    threshold = 72*model.K_sigma + 8*model.K_B
    lam = 0.5*(sup - threshold)
    report = {
        'validator': 'delay',
        'model': model.name,
        'K_b': model.K_b,
        'K_B': model.K_B,
        'K_sigma': model.K_sigma,
        'r0': model.r0,
        'sup_rate': sup,
        'threshold': threshold,
        'passed': bool(threshold < sup),
        'Lambda': lam,
        'Lambda_tilde': sup - (36*model.K_sigma + 8*model.K_B),
        'decay_rate': _math.exp(model.K_b*model.r0)*lam,
    }
    return _attach_spot_check(report, model, spot, nr_samples, box, seed)


@_interactive
def validate_hamiltonian(model, spot=True, nr_samples=10**4, box=1.0, seed=0):
    """Check 4 K_B + 2 |M| < sup_rate(min(K1, K_A), r0) and the Kalman rank
    condition of a Hamiltonian model.

    Returns:
    report -- dict with 'passed' (threshold and rank), 'threshold_passed',
              'rank', 'rank_passed', 'norm_M', 'Lambda', 'decay_rate'
              exp(min(K1, K_A) r0) Lambda and 'constants_consistent'
    """
    if not isinstance(model, HamiltonianModel):
        raise ModelException('validate_hamiltonian needs a HamiltonianModel')
    K = min(model.K1, model.K_A)
    sup = sup_rate(K, model.r0)
    norm_M = spectral_norm(model.M)
    threshold = 4*model.K_B + 2*norm_M
    rank = kalman_rank(model.A, model.M)
    lam = 0.5*(sup - threshold)
    report = {
        'validator': 'hamiltonian',
        'model': model.name,
        'K1': model.K1,
        'K_A': model.K_A,
        'K_B': model.K_B,
        'r0': model.r0,
        'norm_M': norm_M,
        'sup_rate': sup,
        'threshold': threshold,
        'threshold_passed': bool(threshold < sup),
        'rank': rank,
        'rank_passed': rank == model.m,
        'Lambda': lam,
        'decay_rate': _math.exp(K*model.r0)*lam,
    }
    report['passed'] = report['threshold_passed'] and report['rank_passed']
    return _attach_spot_check(report, model, spot, nr_samples, box, seed)


@_interactive
def validate(model, **kwargs):
    """Run the validator matching the model family."""
    if isinstance(model, MeanFieldModel):
        if model.regime == Regime.DISSIPATIVE:
            return validate_dissipative(model, **kwargs)
        return validate_finite_time(model, **kwargs)
    if isinstance(model, DelayModel):
        return validate_delay(model, **kwargs)
    if isinstance(model, HamiltonianModel):
        return validate_hamiltonian(model, **kwargs)
    raise ModelException('no validator for {0!r}'.format(model))


@_interactive
def model_hash(model):
    """sha256 of the configuration table a model was built from (of its
    repr for models built through the library API)."""
    if model.source is not None:
        text = _json.dumps(model.source, sort_keys=True, default=str)
    else:
        text = repr(model)
    return _hashlib.sha256(text.encode('utf-8')).hexdigest()


def theoretical_rate(model):
    """Exponential contraction rate guaranteed by the long-time results."""
    report = validate(model, spot=False)
    if 'decay_rate' in report:
        return report['decay_rate']
    if 'rate' in report:
        return report['rate']
    raise ModelException('no long-time rate for finite-time model {0!r}'.format(model.name))


def _attach_spot_check(report, model, spot, nr_samples, box, seed):
    if spot:
        checks = spot_check(model, nr_samples=nr_samples, box=box, seed=seed)
        report['spot_check'] = checks
        report['constants_consistent'] = checks['passed']
    else:
        report['spot_check'] = None
        report['constants_consistent'] = True
    return report


# --- spot checks ------------------------------------------------------------

@_interactive
def spot_check(model, nr_samples=10**4, box=1.0, seed=0):
    """Test every declared inequality of 'model' on random samples.

    A sample passes when lhs <= rhs + 1e-8 |rhs| + 1e-12.

    Returns:
    report -- dict with 'passed' and 'checks', a list of per-inequality
              dicts (name, passed, worst_excess)
    """
    rng = _np.random.Generator(_np.random.Philox(key=int(seed)))
    if isinstance(model, MeanFieldModel):
        checks = _mean_field_checks(model, rng, nr_samples, box)
    elif isinstance(model, DelayModel):
        checks = _delay_checks(model, rng, nr_samples, box)
    elif isinstance(model, HamiltonianModel):
        checks = _hamiltonian_checks(model, rng, nr_samples, box)
    else:
        raise ModelException('cannot spot-check {0!r}'.format(model))
    return {
        'nr_samples': int(nr_samples),
        'box': float(box),
        'passed': all(c['passed'] for c in checks),
        'checks': checks,
    }


def _inequality(name, lhs, rhs):
    lhs = _np.asarray(lhs, dtype=float)
    rhs = _np.asarray(rhs, dtype=float)
    excess = lhs - rhs - _SLACK_REL*_np.abs(rhs) - _SLACK_ABS
    worst = float(_np.max(excess)) if excess.size else -_math.inf
    return {'name': name, 'passed': bool(worst <= 0), 'worst_excess': worst}


def _norm(v):
    return _np.sqrt((v**2).sum(axis=-1))


def _hs_norm(v):
    return _np.sqrt((v**2).sum(axis=(-2, -1)))


def _dissipativity(name, f, x, xt, K):
    dx = x - xt
    lhs = 2*((f(x, 0.0) - f(xt, 0.0))*dx).sum(axis=-1)
    return _inequality(name, lhs, -K*(dx**2).sum(axis=-1))


def _mean_field_checks(model, rng, size, box):
    d = model.d
    drift, diffusion = model.drift, model.diffusion
    x, xt, y, yt = rng.uniform(-box, box, size=(4, size, d))
    dx, dy = _norm(x - xt), _norm(y - yt)
    sig, sigt = diffusion.sigma_tilde(x, y), diffusion.sigma_tilde(xt, yt)
    hs = _hs_norm(sig - sigt)
    checks = []
    if diffusion.K_sigma is not None:
        checks.append(_inequality('sigma_lipschitz', hs,
                                  diffusion.K_sigma*(dx + dy)))
    if model.regime == Regime.DISSIPATIVE:
        checks.append(_inequality('sigma_squared_lipschitz', hs**2,
                                  drift.K2*(dx**2 + dy**2)))
    if drift.K_b is not None:
        checks.append(_inequality('b0_lipschitz',
                                  _norm(drift.b0(x, 0.0) - drift.b0(xt, 0.0)),
                                  drift.K_b*dx))
    if drift.K1 > 0:
        checks.append(_dissipativity('b0_dissipative', drift.b0, x, xt, drift.K1))
    K_b1 = max(drift.K_b or 0.0, drift.K2)
    checks.append(_inequality('b1_lipschitz',
                              _norm(drift.b1(x, y) - drift.b1(xt, yt)),
                              K_b1*(dx + dy)))
    if _math.isfinite(diffusion.delta):
        nr_clouds = min(size, 1000)
        clouds = rng.uniform(-box, box, size=(nr_clouds, _ELLIPTICITY_CLOUD, d))
        sigma = diffusion.sigma_tilde(x[:nr_clouds, None], clouds).mean(axis=1)
        eig = _np.linalg.eigvalsh(sigma @ _np.swapaxes(sigma, -1, -2))
        checks.append(_inequality('ellipticity_lower',
                                  _np.full(nr_clouds, 1/diffusion.delta),
                                  eig[:, 0]))
        checks.append(_inequality('ellipticity_upper', eig[:, -1],
                                  _np.full(nr_clouds, diffusion.delta)))
    return checks


def _random_segments(rng, size, lag, dim, box):
    return rng.uniform(-box, box, size=(4, size, lag + 1, dim))


def _delay_checks(model, rng, size, box):
    lag = _SEGMENT_LAG if model.r0 > 0 else 0
    xi, xit, eta, etat = _random_segments(rng, size, lag, model.d, box)
    dxi = _utils.sup_norm(xi - xit)
    deta = _utils.sup_norm(eta - etat)
    hs = _hs_norm(model.sigma_tilde(xi, eta) - model.sigma_tilde(xit, etat))
    B = _norm(model.B_tilde(xi, eta) - model.B_tilde(xit, etat))
    return [
        _inequality('sigma_squared_lipschitz', hs**2,
                    model.K_sigma*(dxi**2 + deta**2)),
        _dissipativity('b_dissipative', model.b, xi[:, -1], xit[:, -1], model.K_b),
        _inequality('B_lipschitz', B, model.K_B*(dxi + deta)),
    ]


def _hamiltonian_checks(model, rng, size, box):
    m, d = model.m, model.d
    lag = _SEGMENT_LAG if model.r0 > 0 else 0
    xi, xit, eta, etat = _random_segments(rng, size, lag, m + d, box)
    dxi = _utils.sup_norm(xi - xit)
    deta = _utils.sup_norm(eta - etat)
    x1, x1t = xi[:, -1, :m], xit[:, -1, :m]
    y, yt = xi[:, -1, m:], xit[:, -1, m:]
    B = _norm(model.B_tilde(xi, eta) - model.B_tilde(xit, etat))
    singular = _np.linalg.svd(model.sigma, compute_uv=False)
    return [
        _dissipativity('A_dissipative', lambda v, t: v @ model.A.T, x1, x1t, model.K_A),
        _dissipativity('b_dissipative', model.b, y, yt, model.K1),
        _inequality('b_lipschitz', _norm(model.b(y, 0.0) - model.b(yt, 0.0)),
                    model.K2*_norm(y - yt)),
        _inequality('B_lipschitz', B, model.K_B*(dxi + deta)),
        {'name': 'sigma_invertible',
         'passed': bool(singular.min() > 1e-12*max(1.0, singular.max())),
         'worst_excess': float(-singular.min())},
    ]


# --- config loading ---------------------------------------------------------

_MODEL_KEYS = {
    'mean_field': ('family', 'name', 'd', 'n', 'regime', 'drift', 'diffusion'),
    'delay': ('family', 'name', 'd', 'n', 'r0', 'b', 'B_tilde', 'diffusion'),
    'hamiltonian': ('family', 'name', 'm', 'd', 'r0', 'A', 'M', 'sigma', 'K_A',
                    'b', 'B_tilde'),
}
_DRIFT_KEYS = {
    'linear': ('A0', 'c0', 'B1', 'B2', 'c1'),
    'attractive_quadratic_tanh': ('confinement', 'coupling'),
}
_DIFFUSION_KEYS = {
    'constant_sigma': ('sigma',),
    'kernel_sigma': ('base', 'scale'),
}
_SEGMENT_DRIFT_KEYS = {
    'linear': ('self_now', 'self_lag', 'other_now', 'other_lag', 'c'),
    'attractive_quadratic_tanh': ('coupling',),
}


@_interactive
def model_from_config(table):
    """Build a model from the [model] table of a configuration file.

    Keyword arguments:
    table -- dict with key 'family' in ('mean_field', 'delay', 'hamiltonian')
             and the sub-tables of that family

    Returns:
    model -- MeanFieldModel, DelayModel or HamiltonianModel

    Raises ConfigException (unknown or missing keys) and ModelException
    (inconsistent values)
    """
    family = table.get('family', 'mean_field')
    if family not in _MODEL_KEYS:
        raise _config.ConfigException("unknown model family '{0}'".format(family))
    _config.check_keys(table, _MODEL_KEYS[family], 'model')
    try:
        if family == 'mean_field':
            return _mean_field_from_config(table)
        if family == 'delay':
            return _delay_from_config(table)
        return _hamiltonian_from_config(table)
    except (TypeError, ValueError) as e:
        raise ModelException(str(e))


def _kind(table, kinds, where):
    kind = table.get('kind')
    if kind not in kinds:
        raise _config.ConfigException("[{0}] kind must be one of {1}, got {2!r}".format(
            where, sorted(kinds), kind))
    return kind


def _mean_field_from_config(table):
    _config.check_keys(table, _MODEL_KEYS['mean_field'], 'model', required=('d',))
    d = int(table['d'])
    n = int(table.get('n', d))
    regime = table.get('regime', Regime.FINITE_TIME.value)
    if regime not in [r.value for r in Regime]:
        raise _config.ConfigException("unknown regime '{0}'".format(regime))
    constants = ('K_b', 'K1', 'K2', 'dini')
    required = ('K1', 'K2') if regime == Regime.DISSIPATIVE.value else ('K_b',)

    dt = _config.section(table, 'drift', 'model')
    kind = _kind(dt, _DRIFT_KEYS, 'model.drift')
    _config.check_keys(dt, ('kind',) + _DRIFT_KEYS[kind] + constants,
                       'model.drift', required=required)
    if kind == 'linear':
        b0 = LinearDrift(_utils.as_matrix(dt.get('A0', 0.0), (d, d), 'A0'),
                         _utils.as_vector(dt.get('c0', 0.0), d, 'c0'))
        b1 = LinearPairKernel(_utils.as_matrix(dt.get('B1', 0.0), (d, d), 'B1'),
                              _utils.as_matrix(dt.get('B2', 0.0), (d, d), 'B2'),
                              _utils.as_vector(dt.get('c1', 0.0), d, 'c1'))
    else:
        b0 = LinearDrift(-float(dt.get('confinement', 0.0))*_np.eye(d))
        b1 = TanhAttraction(dt.get('coupling', 0.0))
    drift = DriftSpec(b0, b1, K_b=dt.get('K_b'), K1=dt.get('K1', 0.0),
                      K2=dt.get('K2', 0.0), dini=dt.get('dini'))

    df = _config.section(table, 'diffusion', 'model')
    kind = _kind(df, _DIFFUSION_KEYS, 'model.diffusion')
    required = ('K_sigma',) if regime == Regime.FINITE_TIME.value else ()
    _config.check_keys(df, ('kind',) + _DIFFUSION_KEYS[kind] + ('K_sigma', 'delta'),
                       'model.diffusion', required=required)
    if kind == 'constant_sigma':
        sigma = ConstantPairKernel(_utils.as_matrix(df.get('sigma', 1.0), (d, n), 'sigma'))
        distribution_free = True
    else:
        if n != d:
            raise ModelException('kernel_sigma needs n == d')
        sigma = TanhSigma(df.get('base', 1.0), df.get('scale', 0.0))
        distribution_free = False
    diffusion = DiffusionKernelSpec(sigma, K_sigma=df.get('K_sigma'),
                                    delta=df.get('delta', _math.inf),
                                    distribution_free=distribution_free)
    return MeanFieldModel(d, n, drift, diffusion, regime=regime,
                          name=table.get('name'), source=table)


def _linear_b_from_config(bt, dim, where, constants, required):
    _kind(bt, ('linear',), where)
    _config.check_keys(bt, ('kind', 'A', 'c') + constants, where, required=required)
    return LinearDrift(_utils.as_matrix(bt.get('A', 0.0), (dim, dim), where + '.A'),
                       _utils.as_vector(bt.get('c', 0.0), dim, where + '.c'))


def _segment_drift_from_config(bt, out_dim, path_dim, where):
    kind = _kind(bt, _SEGMENT_DRIFT_KEYS, where)
    _config.check_keys(bt, ('kind',) + _SEGMENT_DRIFT_KEYS[kind] + ('K_B',), where,
                       required=('K_B',))
    if kind == 'linear':
        shape = (out_dim, path_dim)
        matrices = []
        for key in ('self_now', 'self_lag', 'other_now', 'other_lag'):
            value = bt.get(key)
            if value is None:
                matrices.append(_np.zeros(shape))
            else:
                matrices.append(_utils.as_matrix(value, shape, where + '.' + key))
        return LinearSegmentKernel(*matrices,
                                   c=_utils.as_vector(bt.get('c', 0.0), out_dim, 'c'))
    return TanhSegmentAttraction(bt.get('coupling', 0.0), out_dim)


def _delay_from_config(table):
    _config.check_keys(table, _MODEL_KEYS['delay'], 'model', required=('d', 'r0'))
    d = int(table['d'])
    n = int(table.get('n', d))
    b = _linear_b_from_config(_config.section(table, 'b', 'model'), d, 'model.b',
                              ('K_b',), ('K_b',))
    bt = _config.section(table, 'B_tilde', 'model')
    B_tilde = _segment_drift_from_config(bt, d, d, 'model.B_tilde')
    df = _config.section(table, 'diffusion', 'model')
    kind = _kind(df, _DIFFUSION_KEYS, 'model.diffusion')
    _config.check_keys(df, ('kind',) + _DIFFUSION_KEYS[kind] + ('K_sigma',),
                       'model.diffusion', required=('K_sigma',))
    if kind == 'constant_sigma':
        sigma = ConstantSegmentKernel(
            _utils.as_matrix(df.get('sigma', 1.0), (d, n), 'sigma'))
    else:
        if n != d:
            raise ModelException('kernel_sigma needs n == d')
        sigma = TanhSegmentSigma(df.get('base', 1.0), df.get('scale', 0.0))
    return DelayModel(d, n, table['r0'], b, B_tilde, sigma,
                      K_b=table['b']['K_b'], K_B=bt['K_B'], K_sigma=df['K_sigma'],
                      distribution_free=(kind == 'constant_sigma'),
                      name=table.get('name'), source=table)


def _hamiltonian_from_config(table):
    _config.check_keys(table, _MODEL_KEYS['hamiltonian'], 'model',
                       required=('m', 'd', 'A', 'M', 'K_A'))
    m, d = int(table['m']), int(table['d'])
    bt = _config.section(table, 'b', 'model')
    b = _linear_b_from_config(bt, d, 'model.b', ('K1', 'K2'), ('K1', 'K2'))
    Bt = _config.section(table, 'B_tilde', 'model')
    B_tilde = _segment_drift_from_config(Bt, d, m + d, 'model.B_tilde')
    return HamiltonianModel(
        m, d, table['A'], table['M'], b, B_tilde, table.get('sigma', 1.0),
        r0=table.get('r0', 0.0), K_A=table['K_A'], K1=bt['K1'], K2=bt['K2'],
        K_B=Bt['K_B'], name=table.get('name'), source=table)


# --- helpers ----------------------------------------------------------------

def _grid_lag(r0, dt):
    if dt <= 0:
        raise ModelException('dt must be positive, got {0}'.format(dt))
    lag = int(round(r0/dt))
    if abs(lag*dt - r0) > 1e-9*max(1.0, r0):
        raise ModelException('r0 = {0} is not an integer multiple of dt = {1}'.format(
            r0, dt))
    return lag


def _nonneg(value, name):
    if value is None:
        return None
    value = float(value)
    if not value >= 0:
        raise ModelException('{0} must be nonnegative, got {1}'.format(name, value))
    return value


def _positive_int(value, name):
    if int(value) != value or value < 1:
        raise ModelException('{0} must be a positive integer, got {1!r}'.format(
            name, value))
    return int(value)


def _expect_shape(value, shape, name):
    value = _np.asarray(value)
    if value.shape != shape:
        raise ModelException('{0} returned shape {1}, expected {2}'.format(
            name, value.shape, shape))


def _check_model(model):
    try:
        model._check_dimensions()
    except (ValueError, IndexError) as e:
        raise ModelException('kernel dimensions do not match the model: {0}'.format(e))
