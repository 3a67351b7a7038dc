# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Numeric utilities shared by the analytic, propagator and simulation code:
adaptive quadrature, empirical CDFs, Kolmogorov-Smirnov distances, chi-square
binning and weighted Gaussian kernel density estimation.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.stats

from .model import ParameterError
from .curves import DensityCurve


logger = logging.getLogger(__name__)

#: Subinterval limit per quadrature piece; 21-point Kronrod panels make this
#: roughly 10^4 integrand evaluations.
PANEL_LIMIT = 500

#: Asymptotic Kolmogorov null quantile c(alpha) for alpha = 0.001.
KS_C_001 = 1.95


class ConvergenceError(RuntimeError):
    """Raised when a numeric procedure cannot reach its tolerance.

    ``error_estimate`` holds the best achieved error estimate, if any.
    """
    def __init__(self, message, error_estimate=None):
        RuntimeError.__init__(self, message)
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    panels: int
    converged: bool = True

    def diagnostics(self):
        return {'panels_used': self.panels, 'error_estimate': self.error_estimate,
                'converged': self.converged}


def integrate_adaptive(f, lo, hi, abs_tol=1e-10, rel_tol=1e-10, points=(), limit=PANEL_LIMIT):
    """Integrate the scalar function *f* over [lo, hi] by adaptive Gauss-Kronrod.

    Infinite bounds are allowed; QUADPACK maps a semi-infinite range onto (0, 1]
    with the substitution v = lo + (1 - u)/u. The range is split at each of
    *points* lying strictly inside it so that kinks and peaks sit on panel
    edges.

    Returns a QuadratureResult. Budget exhaustion is not an error: the best
    estimate is returned with ``converged = False`` and a log warning.
    """
    if not lo < hi:
        raise ParameterError('lo', "need lo < hi (got %r, %r)" % (lo, hi))
    cuts = sorted(set(float(p) for p in points if lo < p < hi and math.isfinite(p)))
    edges = [lo] + cuts + [hi]
    total = 0.0
    error = 0.0
    panels = 0
    ok = True
    for a, b in zip(edges[:-1], edges[1:]):
        out = scipy.integrate.quad(f, a, b, epsabs=abs_tol, epsrel=rel_tol,
                                   limit=limit, full_output=1)
        value, err, info = out[:3]
        total += value
        error += err
        panels += int(info['last'])
        if len(out) > 3:
            ok = False
            logger.debug("quad on [%g, %g]: %s", a, b, out[3])
    converged = ok or error <= 10 * max(abs_tol, rel_tol * abs(total))
    if not converged:
        logger.warning("quadrature on [%g, %g] did not converge: value=%g error_estimate=%g",
                       lo, hi, total, error)
    return QuadratureResult(value=total, error_estimate=error, panels=panels, converged=converged)


class Ecdf(object):
    """Right-continuous empirical CDF of a finite sample."""
    def __init__(self, samples):
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size == 0:
            raise ParameterError('samples', "empty sample")
        self.sorted_samples = np.sort(samples)

    @property
    def n(self):
        return len(self.sorted_samples)

    def __call__(self, x):
        return np.searchsorted(self.sorted_samples, x, side='right') / self.n


def ks_distance(e, cdf):
    """Kolmogorov-Smirnov sup distance between the Ecdf *e* and *cdf*.

    *cdf* is either another Ecdf (two-sample statistic) or a vectorized
    callable returning probabilities. Both one-sided gaps at every sample point
    are considered.
    """
    if not isinstance(e, Ecdf):
        e = Ecdf(e)
    if isinstance(cdf, Ecdf):
        return float(scipy.stats.ks_2samp(e.sorted_samples, cdf.sorted_samples).statistic)
    return float(scipy.stats.kstest(e.sorted_samples, cdf).statistic)


def ks_threshold(n, c=KS_C_001):
    """Asymptotic one-sample KS gate c/sqrt(n)."""
    return c / math.sqrt(n)


def cdf_distance(cdf_a, cdf_b, grid):
    """Sup distance between two continuous CDFs, evaluated on a dense *grid*."""
    grid = np.asarray(grid, dtype=float)
    return float(np.max(np.abs(np.asarray(cdf_a(grid)) - np.asarray(cdf_b(grid)))))


def silverman_bandwidth(samples):
    """Silverman's rule 0.9 min(sd, IQR/1.34) n^(-1/5)."""
    samples = np.asarray(samples, dtype=float)
    spread = min(np.std(samples), scipy.stats.iqr(samples) / 1.34)
    if spread <= 0:
        spread = max(np.std(samples), 1e-3)
    return 0.9 * spread * len(samples) ** -0.2


def kernel_sum(samples, weights, bandwidth, points, chunk_elements=2**22):
    """sum_i weights[i] K_h(points - samples[i]) with a Gaussian kernel K_h of width h.

    Evaluated in chunks of *points* so that at most *chunk_elements* kernel
    values are held at once.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    points = np.atleast_1d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float).ravel()
    if not bandwidth > 0:
        raise ParameterError('bandwidth', "must be > 0; got %r" % bandwidth)
    if weights.shape != samples.shape:
        raise ParameterError('weights', "must match samples in length")
    out = np.empty(len(points))
    step = max(1, chunk_elements // max(1, len(samples)))
    norm = 1.0 / (math.sqrt(2 * math.pi) * bandwidth)
    for start in range(0, len(points), step):
        z = (points[start:start + step, None] - samples[None, :]) / bandwidth
        out[start:start + step] = np.exp(-0.5 * z**2) @ weights * norm
    return out


def kernel_density(samples, weights, bandwidth, grid):
    """Weighted Gaussian kernel density estimate on *grid*, normalized by sum(weights).

    Parameters
    ----------
    samples : array
        Sample positions.
    weights : array | None
        Non-negative weights (None for unit weights).
    bandwidth : float
        Kernel standard deviation (> 0).
    grid : array
        Evaluation points.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if weights is None:
        weights = np.ones_like(samples)
    weights = np.asarray(weights, dtype=float).ravel()
    if np.any(weights < 0):
        raise ParameterError('weights', "must be non-negative")
    wsum = weights.sum()
    if wsum <= 0:
        raise ParameterError('weights', "all weights are zero")
    values = kernel_sum(samples, weights, bandwidth, grid) / wsum
    meta = {'kind': 'kernel_density', 'bandwidth': float(bandwidth), 'n': int(len(samples))}
    return DensityCurve(grid, values, meta)


def smoothed_density(density, points, bandwidth, width=8.0, nodes=801):
    """*density* convolved with the Gaussian kernel of *bandwidth*, at each of *points*.

    This is the mean of a kernel estimate built from exact samples, so it is
    the fair reference for one; *density* must be vectorized.
    """
    z = np.linspace(-width, width, nodes)
    kern = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    return np.array([scipy.integrate.trapezoid(np.asarray(density(p - bandwidth * z)) * kern, z)
                     for p in points])


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2."""
    weights = np.asarray(weights, dtype=float)
    denom = np.sum(weights**2)
    if denom == 0:
        return 0.0
    return float(np.sum(weights)**2 / denom)


def chi_square_binned(observed, probabilities, n, min_expected=5.0):
    """Pearson chi-square test of binned counts against exact bin probabilities.

    *observed* and *probabilities* are arrays of the same shape covering part
    of the sample space; the remaining mass (n - observed.sum() vs
    1 - probabilities.sum()) becomes one extra bin. Bins whose expected count
    falls below *min_expected* are lumped together into a single bin.

    Returns (statistic, p_value, dof).
    """
    observed = np.asarray(observed, dtype=float).ravel()
    probs = np.asarray(probabilities, dtype=float).ravel()
    if observed.shape != probs.shape:
        raise ParameterError('observed', "shape does not match probabilities")
    rest_obs = n - observed.sum()
    rest_prob = max(0.0, 1.0 - probs.sum())
    observed = np.append(observed, rest_obs)
    expected = np.append(probs, rest_prob) * n

    small = expected < min_expected
    obs = list(observed[~small])
    exp = list(expected[~small])
    if small.any():
        obs.append(observed[small].sum())
        exp.append(expected[small].sum())
    obs = np.array(obs)
    exp = np.array(exp)
    # absorb rounding so both sides sum to n exactly
    exp *= obs.sum() / exp.sum()
    result = scipy.stats.chisquare(obs, exp)
    return float(result.statistic), float(result.pvalue), len(obs) - 1
