
import numpy as _np
import matplotlib.pyplot as _pyplot
from pychaos.utils import interactive as _interactive


_COLOURS = ('#085199', '#990851', '#089951', '#995108')


def _axes(gca):
    if gca:
        return _pyplot.gcf(), _pyplot.gca()
    return _pyplot.subplots()


def _columns(records):
    param = _np.array([r.param for r in records], dtype=float)
    stat = _np.array([r.stat for r in records], dtype=float)
    low = _np.array([r.ci_low for r in records], dtype=float)
    high = _np.array([r.ci_high for r in records], dtype=float)
    return param, stat, low, high


def _error_bars(stat, low, high):
    lower = _np.where(_np.isfinite(low), stat - low, 0.0)
    upper = _np.where(_np.isfinite(high), high - stat, 0.0)
    return _np.clip(_np.vstack([lower, upper]), 0.0, None)


@_interactive
def plot_scan(result, fit=True, reference_slope=-1.0, gca=False, grid=True, title=None):
    """Log-log plot of a scan over N with confidence intervals.

    Keyword arguments:
    result -- ScanResult with N as parameter (scan-n, lln, oracle)
    fit -- draw the fitted power law when the result has one (default: True)
    reference_slope -- slope of a dashed guide line through the last point
                       (None to omit)
    gca -- draw into the current axes (default: False)

    Returns:
    fig, ax
    """
    N, stat, low, high = _columns(result.records)
    fig, ax = _axes(gca)
    ax.errorbar(N, stat, yerr=_error_bars(stat, low, high), fmt='o',
                color=_COLOURS[0], label=result.kind)
    if fit and result.fit is not None:
        line = _np.exp(result.fit.intercept)*N**result.fit.slope
        ax.plot(N, line, color=_COLOURS[1],
                label='slope {0:.3f}'.format(result.fit.slope))
    if reference_slope is not None and N.size:
        guide = stat[-1]*(N/N[-1])**reference_slope
        ax.plot(N, guide, '--', color='#444444',
                label='slope {0:g}'.format(reference_slope))
    ax.set_xscale('log')
    ax.set_yscale('log')
    ax.set_xlabel('N')
    ax.set_ylabel('statistic')
    ax.legend()
    if grid: ax.grid(True, which='both', alpha=0.3)
    if title: ax.set_title(title)
    return fig, ax


@_interactive
def plot_gap_series(records, plateau=None, log=True, gca=False, grid=True, title=None,
                    label='gap'):
    """Gap against time with a confidence band.

    records -- results.csv records (param = t), e.g. ScanResult.records of a
               couple or scan-t run
    """
    t, gap, low, high = _columns(records)
    fig, ax = _axes(gca)
    ax.plot(t, gap, color=_COLOURS[0], label=label)
    band = _np.isfinite(low) & _np.isfinite(high)
    if band.any():
        ax.fill_between(t[band], low[band], high[band], color=_COLOURS[0], alpha=0.25)
    if plateau is not None:
        ax.axhline(plateau, linestyle='--', color=_COLOURS[1], label='plateau')
    if log:
        ax.set_yscale('log')
    ax.set_xlabel('t')
    ax.set_ylabel('$E|X^{i,N}_t - X^i_t|^2$')
    ax.legend()
    if grid: ax.grid(True, alpha=0.3)
    if title: ax.set_title(title)
    return fig, ax


@_interactive
def plot_longtime(result, gca=False, title=None):
    """Gap series of a scan-t result with its plateau and fitted decay.

    Returns:
    fig, ax
    """
    plateau = None
    plateaus = result.tables.get('plateau', [])
    if plateaus:
        plateau = plateaus[0].stat/plateaus[0].param
    fig, ax = plot_gap_series(result.records, plateau=plateau, gca=gca, title=title)
    if result.fit is not None:
        t = _np.array([r.param for r in result.records], dtype=float)
        decay = _np.exp(result.fit.intercept + result.fit.slope*t) + (plateau or 0.0)
        ax.plot(t, decay, ':', color=_COLOURS[2],
                label='rate {0:.3f}'.format(result.fit.rate))
        ax.legend()
    return fig, ax
