"""Pychaos metrics module

Distances and functionals between empirical and Gaussian measures:
Wasserstein-2 for equal-weight point clouds (exact assignment, entropic
approximation and the index-pairing bound), Gaussian closed forms for W2 and
relative entropy, Pinsker's bound and the law-of-large-numbers gap of an
empirical kernel average.

Total variation follows the convention |p - q|_var = sup_{|f| <= 1} |p(f) - q(f)|,
which equals the integral of |p - q| for densities and is twice the
probabilists' sup over events.
"""

import collections as _collections
import math as _math
import warnings as _warnings
import numpy as _np
import scipy.integrate as _integrate
import scipy.optimize as _optimize
import scipy.spatial.distance as _distance
import scipy.special as _special
import scipy.stats as _stats
from pychaos.utils import interactive as _interactive
from pychaos import utils as _utils


_SYMMETRY_TOL = 1e-12
_EIG_CLIP = 1e-10
_CHUNK_SIZE = 2**22


class MetricsException(Exception):
    pass


class SinkhornConvergenceError(MetricsException):

    def __init__(self, residual, nr_iter):
        self.residual = residual
        self.nr_iter = nr_iter
        MetricsException.__init__(
            self, 'sinkhorn did not converge in {0} iterations (marginal residual {1:.3e})'.format(
                nr_iter, residual))


Estimate = _collections.namedtuple(
    'Estimate', ['mean', 'stderr', 'ci_low', 'ci_high', 'trials'])


@_interactive
class PointCloud(object):
    """Equal-weight empirical measure of N points in R^D."""

    def __init__(self, points):
        points = _np.array(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise MetricsException('point cloud must be an N x D array with N >= 1')
        if not _np.isfinite(points).all():
            raise MetricsException('point cloud has non-finite entries')
        points.setflags(write=False)
        self.points = points

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


@_interactive
class GaussianLaw(object):
    """Gaussian law given by mean and covariance.

    The covariance must be symmetric to 1e-12; eigenvalues down to -1e-10
    are clipped to zero.
    """

    def __init__(self, mean, cov):
        mean = _np.atleast_1d(_np.array(mean, dtype=float))
        cov = _np.atleast_2d(_np.array(cov, dtype=float))
        dim = mean.size
        if cov.shape != (dim, dim):
            raise MetricsException('covariance shape {0} does not match mean size {1}'.format(
                cov.shape, dim))
        scale = max(1.0, _np.abs(cov).max()) if cov.size else 1.0
        if _np.abs(cov - cov.T).max() > _SYMMETRY_TOL*scale:
            raise MetricsException('covariance is not symmetric')
        cov = 0.5*(cov + cov.T)
        values, vectors = _np.linalg.eigh(cov)
        if values.min() < -_EIG_CLIP*scale:
            raise MetricsException(
                'covariance is not positive semidefinite (eigenvalue {0:.3e})'.format(
                    values.min()))
        if values.min() < 0:
            values = _np.clip(values, 0.0, None)
            cov = (vectors*values) @ vectors.T
        self.mean = mean
        self.cov = cov

    def __repr__(self):
        return 'GaussianLaw(mean={0}, cov={1})'.format(self.mean.tolist(), self.cov.tolist())

    @property
    def dim(self):
        return self.mean.size


def _points(cloud):
    if isinstance(cloud, PointCloud):
        return cloud.points
    return PointCloud(cloud).points


def _aligned(a, b):
    a, b = _points(a), _points(b)
    if a.shape != b.shape:
        raise MetricsException('clouds must have equal size and dimension, got {0} and {1}'.format(
            a.shape, b.shape))
    return a, b


@_interactive
def w2_exact(a, b):
    """Wasserstein-2 distance between equal-size, equal-weight clouds.

    Solves the optimal assignment on the squared Euclidean cost matrix.

    Raises MetricsException on size mismatch.
    """
    a, b = _aligned(a, b)
    cost = _distance.cdist(a, b, 'sqeuclidean')
    rows, cols = _optimize.linear_sum_assignment(cost)
    return _math.sqrt(max(0.0, cost[rows, cols].mean()))


@_interactive
def w2_sorted_1d(a, b):
    """W2 of 1-d clouds by monotone rearrangement."""
    a, b = _aligned(a, b)
    if a.shape[1] != 1:
        raise MetricsException('w2_sorted_1d needs 1-d clouds')
    return _math.sqrt(((_np.sort(a[:, 0]) - _np.sort(b[:, 0]))**2).mean())


@_interactive
def w2_pairing_bound(a, b):
    """sqrt((1/N) sum_i |a_i - b_i|^2), an upper bound for w2_exact."""
    a, b = _aligned(a, b)
    return _math.sqrt(((a - b)**2).sum(axis=1).mean())


@_interactive
def w2_sinkhorn(a, b, eps, max_iter=10000, tol=1e-6, eps_scaling=True):
    """Entropic approximation of W2 between equal-weight clouds.

    Log-domain Sinkhorn iterations on the squared Euclidean cost. With
    eps_scaling the regularization starts at the largest cost and is halved
    down to 'eps', warm-starting the potentials. Iteration stops when the
    L1 violation of the row marginal is below 'tol'.

    Keyword arguments:
    a, b        -- clouds (PointCloud or N x D arrays, sizes may differ)
    eps         -- regularization, in units of squared distance
    max_iter    -- iteration cap at the final eps
    tol         -- marginal tolerance

    Returns:
    sqrt of the transport cost <P, C> of the entropic plan P

    Raises SinkhornConvergenceError
    """
    if not eps > 0:
        raise MetricsException('eps must be positive, got {0}'.format(eps))
    a, b = _points(a), _points(b)
    if a.shape[1] != b.shape[1]:
        raise MetricsException('clouds must have equal dimension')
    cost = _distance.cdist(a, b, 'sqeuclidean')
    log_a = _np.full(a.shape[0], -_math.log(a.shape[0]))
    log_b = _np.full(b.shape[0], -_math.log(b.shape[0]))
    f = _np.zeros(a.shape[0])
    g = _np.zeros(b.shape[0])

    schedule = [eps]
    if eps_scaling:
        current = max(cost.max(), eps)
        schedule = []
        while current > eps:
            schedule.append(current)
            current *= 0.5
        schedule.append(eps)

    for stage, e in enumerate(schedule):
        final = stage == len(schedule) - 1
        limit = max_iter if final else max(1, max_iter//10)
        residual = _math.inf
        for nr_iter in range(1, limit + 1):
            f = e*(log_a - _special.logsumexp((g[None, :] - cost)/e, axis=1))
            g = e*(log_b - _special.logsumexp((f[:, None] - cost)/e, axis=0))
            log_plan = (f[:, None] + g[None, :] - cost)/e
            residual = _np.abs(_np.exp(_special.logsumexp(log_plan, axis=1)) -
                               _np.exp(log_a)).sum()
            if residual < tol:
                break
        if final and residual >= tol:
            raise SinkhornConvergenceError(residual, nr_iter)
    plan = _np.exp(log_plan)
    return _math.sqrt(max(0.0, (plan*cost).sum()))


@_interactive
def marginal_chaos_bound(full_sq, k, N):
    """(k/N) * full_sq: bound on the squared W2 distance of k-marginals of
    exchangeable laws in terms of the squared distance of the N-particle laws.

    Raises MetricsException unless 1 <= k <= N.
    """
    if not 1 <= k <= N:
        raise MetricsException('need 1 <= k <= N, got k={0}, N={1}'.format(k, N))
    return (k/N)*full_sq


def _law(law):
    if isinstance(law, GaussianLaw):
        return law
    mean, cov = law
    return GaussianLaw(mean, cov)


@_interactive
def gaussian_w2(g1, g2):
    """Closed-form W2 distance between Gaussian laws.

    sqrt(|m1 - m2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2))
    """
    g1, g2 = _law(g1), _law(g2)
    if g1.dim != g2.dim:
        raise MetricsException('laws have different dimensions')
    root2 = _utils.psd_sqrt(g2.cov)
    cross = _utils.psd_sqrt(root2 @ g1.cov @ root2)
    value = ((g1.mean - g2.mean)**2).sum() + \
        _np.trace(g1.cov) + _np.trace(g2.cov) - 2*_np.trace(cross)
    return _math.sqrt(max(0.0, value))


@_interactive
def gaussian_kl(g_from, g_to):
    """Relative entropy Ent(g_from | g_to) between Gaussian laws.

    Evaluated through the eigenvalues x of L^-1 (S_from - S_to) L^-T, with
    S_to = L L^T, as 1/2 [sum (x - log1p(x)) + mahalanobis(m_from - m_to)].
    Returns inf when S_from is singular.

    Raises MetricsException when S_to is not positive definite.
    """
    g_from, g_to = _law(g_from), _law(g_to)
    if g_from.dim != g_to.dim:
        raise MetricsException('laws have different dimensions')
    try:
        chol = _np.linalg.cholesky(g_to.cov)
    except _np.linalg.LinAlgError:
        raise MetricsException('target covariance is singular, relative entropy is infinite')
    solve = _np.linalg.solve
    diff = solve(chol, solve(chol, g_from.cov - g_to.cov).T)
    x = _np.linalg.eigvalsh(0.5*(diff + diff.T))
    if x.min() <= -1:
        return _math.inf
    shift = solve(chol, g_from.mean - g_to.mean)
    return 0.5*float((x - _np.log1p(x)).sum() + (shift**2).sum())


@_interactive
def pinsker_tv_bound(ent):
    """sqrt(2 ent), bound on the total variation (sup over |f| <= 1
    convention, twice the event-sup convention)."""
    if ent < 0:
        raise MetricsException('relative entropy must be nonnegative, got {0}'.format(ent))
    return _math.sqrt(2*ent)


def gaussian_tv_quadrature(g1, g2):
    """Integral of |p1 - p2| for 1-d Gaussian laws by adaptive quadrature."""
    g1, g2 = _law(g1), _law(g2)
    if g1.dim != 1 or g2.dim != 1:
        raise MetricsException('gaussian_tv_quadrature needs 1-d laws')
    m1, s1 = g1.mean[0], _math.sqrt(g1.cov[0, 0])
    m2, s2 = g2.mean[0], _math.sqrt(g2.cov[0, 0])
    if s1 == 0 or s2 == 0:
        raise MetricsException('degenerate laws have no density')
    lo = min(m1 - 12*s1, m2 - 12*s2)
    hi = max(m1 + 12*s1, m2 + 12*s2)

    def integrand(x):
        return abs(_stats.norm.pdf(x, m1, s1) - _stats.norm.pdf(x, m2, s2))

    value, _ = _integrate.quad(integrand, lo, hi, points=[m1, m2], limit=200)
    return value


@_interactive
def mean_ci(values, level=0.95):
    """Sample mean with a normal-approximation confidence interval.

    Returns an Estimate; with fewer than two values the standard error and
    interval are nan.
    """
    values = _np.asarray(values, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise MetricsException('no values')
    mean = float(values.mean())
    if n < 2:
        return Estimate(mean, _math.nan, _math.nan, _math.nan, n)
    stderr = float(values.std(ddof=1)/_math.sqrt(n))
    z = float(_stats.norm.ppf(0.5 + level/2))
    return Estimate(mean, stderr, mean - z*stderr, mean + z*stderr, n)


def _generator(seed):
    if isinstance(seed, _np.random.Generator):
        return seed
    return _np.random.Generator(_np.random.Philox(key=int(seed)))


@_interactive
def lln_gap(h, sampler, N, trials, conditional=None, inner_size=10**4,
            seed=0, level=0.95):
    """Monte Carlo estimate of E|(1/N) sum_m h(Z_1, Z_m) - int h(Z_1, y) L(dy)|^2.

    The m-sum includes the self term m = 1.

    Keyword arguments:
    h           -- vectorized pair function h(v, w) -> (..., k) or (...)
    sampler     -- sampler(rng, shape) returning i.i.d. draws of shape
                   shape + (D,) (or shape for scalar draws)
    N           -- sample size of the empirical average
    trials      -- number of independent replicates
    conditional -- exact int h(v, y) L(dy) as a function of v; when None an
                   inner Monte Carlo average over 'inner_size' fresh draws
                   is used
    seed        -- integer seed or numpy Generator

    Returns:
    Estimate(mean, stderr, ci_low, ci_high, trials)
    """
    if N < 1 or trials < 1:
        raise MetricsException('need N >= 1 and trials >= 1')
    rng = _generator(seed)
    chunk = max(1, min(trials, _CHUNK_SIZE//max(N, inner_size if conditional is None else 1)))
    values = []
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        z = _np.asarray(sampler(rng, (size, N)), dtype=float)
        if z.ndim == 2:
            z = z[..., None]
        z1 = z[:, 0]
        average = _np.asarray(h(z1[:, None], z), dtype=float).mean(axis=1)
        if conditional is not None:
            target = _np.asarray(conditional(z1), dtype=float)
        else:
            y = _np.asarray(sampler(rng, (size, inner_size)), dtype=float)
            if y.ndim == 2:
                y = y[..., None]
            target = _np.asarray(h(z1[:, None], y), dtype=float).mean(axis=1)
        if target.size == average.size:
            target = target.reshape(average.shape)
        else:
            try:
                target = _np.broadcast_to(target, average.shape)
            except ValueError:
                raise MetricsException('conditional returned shape {0}, h averages to {1}'.format(
                    target.shape, average.shape))
        gap = (average - target).reshape(size, -1)
        values.append((gap**2).sum(axis=1))
        done += size
    values = _np.concatenate(values)
    if not _np.isfinite(values).all():
        _warnings.warn('non-finite lln gap values; check the sampler and h')
    return mean_ci(values, level)
