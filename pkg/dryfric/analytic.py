# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Closed-form mathematics: Gaussian special functions, the potential
U(v) = (v - y)^2/(2 tau) + |v|, the stationary density exp(-U/nu)/N with its
normalizer, and the small-noise limit laws of the three regimes.

All exponentials go through the log domain. The normalizer is

    N = sqrt(2 pi tau nu) [exp((tau - 2y)/(2nu)) G((tau - y)/sqrt(tau nu))
                           + exp((tau + 2y)/(2nu)) G((tau + y)/sqrt(tau nu))]

obtained by completing the square separately on each half-line.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, log_ndtr

from .model import ParameterError, ReducedParams, Regime, classify_regime
from .curves import DensityCurve
from .stats import ConvergenceError


logger = logging.getLogger(__name__)

DEFAULT_POINTS = 2001
GRID_SIGMAS = 12.0
STUCK_GRID_SCALES = 40.0


## Gaussian special functions

def gaussian_tail(u):
    """G(u) = P(Z > u) for a standard normal Z.

    Evaluated as ndtr(-u), which goes through erfc for large |u| and so keeps
    full relative accuracy in the upper tail.
    """
    return ndtr(-np.asarray(u, dtype=float))[()]


def log_gaussian_tail(u):
    return log_ndtr(-np.asarray(u, dtype=float))[()]


def gaussian_cdf(v):
    """F(v) = P(Z <= v) = 1 - G(v)."""
    return ndtr(np.asarray(v, dtype=float))[()]


def gaussian_kernel(t, u):
    """Heat kernel gamma_t(u) = exp(-u^2/(2t)) / sqrt(2 pi t)."""
    if not t > 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    u = np.asarray(u, dtype=float)
    return (np.exp(-u**2 / (2.0 * t)) / math.sqrt(2.0 * math.pi * t))[()]


## Potential

@dataclass(frozen=True)
class Potential:
    """U(v) = (v - y)^2 / (2 tau) + |v|."""
    tau: float
    y: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterError('tau', "must be > 0; got %r" % self.tau)

    @classmethod
    def from_reduced(cls, r):
        r.require_stationary()
        return cls(tau=r.tau, y=r.y)


def potential_value(p, v):
    v = np.asarray(v, dtype=float)
    return ((v - p.y)**2 / (2.0 * p.tau) + np.abs(v))[()]


def potential_minimizer(p):
    """0 when |y| <= tau, otherwise y - sgn(y) tau."""
    if abs(p.y) <= p.tau:
        return 0.0
    return p.y - math.copysign(p.tau, p.y)


## Stationary density

def _require_stationary(r):
    if not isinstance(r, ReducedParams):
        raise ParameterError('r', "expected ReducedParams, got %r" % type(r).__name__)
    r.require_stationary()


def stationary_log_unnormalized(r, v):
    """-(1/nu) U(v)."""
    _require_stationary(r)
    return (-potential_value(Potential(r.tau, r.y), v) / r.nu)


def _half_line_log_masses(r):
    """Log of the unnormalized mass on v < 0 and on v > 0."""
    s = math.sqrt(r.tau * r.nu)
    pre = 0.5 * math.log(2.0 * math.pi * r.tau * r.nu)
    log_pos = pre + (r.tau - 2.0 * r.y) / (2.0 * r.nu) + float(log_ndtr(-(r.tau - r.y) / s))
    log_neg = pre + (r.tau + 2.0 * r.y) / (2.0 * r.nu) + float(log_ndtr(-(r.tau + r.y) / s))
    return log_neg, log_pos


def log_stationary_normalizer(r):
    _require_stationary(r)
    log_neg, log_pos = _half_line_log_masses(r)
    log_n = float(np.logaddexp(log_neg, log_pos))
    if not math.isfinite(log_n):
        raise ConvergenceError("log normalizer not representable at nu=%g tau=%g y=%g"
                               % (r.nu, r.tau, r.y))
    return log_n


def stationary_normalizer(r):
    """N(nu, tau, y) = integral of exp(-U(v)/nu) over the real line."""
    log_n = log_stationary_normalizer(r)
    if log_n > 709.0:
        raise ConvergenceError("normalizer overflows double range (log N = %g)" % log_n)
    return math.exp(log_n)


def stationary_side_masses(r):
    """(P[v < 0], P[v > 0]) under the stationary law."""
    log_n = log_stationary_normalizer(r)
    log_neg, log_pos = _half_line_log_masses(r)
    return math.exp(log_neg - log_n), math.exp(log_pos - log_n)


def stationary_pdf(r, grid=None):
    """Stationary density exp(-U/nu)/N sampled on *grid* (default_grid if None)."""
    log_n = log_stationary_normalizer(r)
    if grid is None:
        grid = default_grid(r)
    grid = np.asarray(grid, dtype=float)
    values = np.exp(stationary_log_unnormalized(r, grid) - log_n)
    meta = {'kind': 'stationary_pdf', 'nu': r.nu, 'tau': r.tau, 'y': r.y,
            'log_normalizer': log_n}
    return DensityCurve(grid, values, meta)


def stationary_cdf(r, x):
    """Closed-form CDF of the stationary law.

    On v < 0 the density is a Gaussian piece centred at y + tau, on v > 0 one
    centred at y - tau, both with variance tau nu.
    """
    log_n = log_stationary_normalizer(r)
    x = np.asarray(x, dtype=float)
    s = math.sqrt(r.tau * r.nu)
    pre = 0.5 * math.log(2.0 * math.pi * r.tau * r.nu)
    xn = np.minimum(x, 0.0)
    xp = np.maximum(x, 0.0)
    log_lower = pre + (r.tau + 2.0 * r.y) / (2.0 * r.nu) + log_ndtr((xn - r.y - r.tau) / s) - log_n
    log_upper = pre + (r.tau - 2.0 * r.y) / (2.0 * r.nu) + log_ndtr(-(xp - r.y + r.tau) / s) - log_n
    out = np.where(x <= 0, np.exp(log_lower), -np.expm1(np.minimum(log_upper, 0.0)))
    return np.clip(out, 0.0, 1.0)[()]


def scaled_stationary_cdf(r, x, regime=None):
    """CDF of the rescaled stationary variable whose small-noise limit is regime-specific.

    stuck: v/nu; partly stuck: v/sqrt(nu); viscous: (v - v*)/sqrt(nu) with v*
    the potential minimizer.
    """
    _require_stationary(r)
    if regime is None:
        regime = classify_regime(_TiltView(r.w))
    x = np.asarray(x, dtype=float)
    if regime is Regime.STUCK:
        return stationary_cdf(r, r.nu * x)
    if regime is Regime.PARTLY_STUCK:
        return stationary_cdf(r, math.sqrt(r.nu) * x)
    center = potential_minimizer(Potential(r.tau, r.y))
    return stationary_cdf(r, center + math.sqrt(r.nu) * x)


@dataclass(frozen=True)
class _TiltView:
    """Adapter letting classify_regime read a = w with delta = 1."""
    a: float
    delta: float = 1.0


def default_grid(r, points=DEFAULT_POINTS):
    """Grid centred on the potential minimizer, +-12 sqrt(tau nu) wide.

    In the stuck regime the half-width is capped at 40 nu/(1 - |w|), the scale
    of the Laplace-like limit law.
    """
    _require_stationary(r)
    center = potential_minimizer(Potential(r.tau, r.y))
    half = GRID_SIGMAS * math.sqrt(r.tau * r.nu)
    if abs(r.w) < 1:
        half = min(half, STUCK_GRID_SCALES * r.nu / (1.0 - abs(r.w)))
    return np.linspace(center - half, center + half, points)


## Small-noise limit laws

def _check_stuck_tilt(w):
    if not abs(w) < 1:
        raise ParameterError('w', "stuck limit requires |w| < 1; got %r" % w)


def limit_pdf_stuck(w, grid):
    """Law of v/nu as nu -> 0 when |a| < delta: ((1 - w^2)/2) exp(-|v| + w v)."""
    _check_stuck_tilt(w)
    grid = np.asarray(grid, dtype=float)
    values = 0.5 * (1.0 - w * w) * np.exp(-np.abs(grid) + w * grid)
    return DensityCurve(grid, values, {'kind': 'limit_stuck', 'w': float(w)})


def stuck_limit_cdf(w, x):
    _check_stuck_tilt(w)
    x = np.asarray(x, dtype=float)
    neg = 0.5 * (1.0 - w) * np.exp((1.0 + w) * np.minimum(x, 0.0))
    pos = 1.0 - 0.5 * (1.0 + w) * np.exp(-(1.0 - w) * np.maximum(x, 0.0))
    return np.where(x < 0, neg, pos)[()]


def _check_side(side):
    if side not in (-1, 1):
        raise ParameterError('side', "must be +1 or -1 (sign of a*v); got %r" % (side,))


def limit_pdf_partly_stuck(side, tau, grid, a_sign=1):
    """Half-line limit laws when |a| = delta.

    side = -1 (a v < 0): 2 exp(-2|v|) for the variable v/nu.
    side = +1 (a v > 0): half-Gaussian 2 exp(-v^2/(2 tau))/sqrt(2 pi tau) for v/sqrt(nu).
    Each integrates to one over its closed half-line; *a_sign* orients the
    half-lines.
    """
    _check_side(side)
    if a_sign not in (-1, 1):
        raise ParameterError('a_sign', "must be +1 or -1; got %r" % (a_sign,))
    grid = np.asarray(grid, dtype=float)
    on_side = (side * a_sign * grid) >= 0
    if side < 0:
        values = 2.0 * np.exp(-2.0 * np.abs(grid))
    else:
        if not tau > 0:
            raise ParameterError('tau', "must be > 0; got %r" % tau)
        values = 2.0 * np.exp(-grid**2 / (2.0 * tau)) / math.sqrt(2.0 * math.pi * tau)
    values = np.where(on_side, values, 0.0)
    meta = {'kind': 'limit_partly_stuck', 'side': side, 'a_sign': a_sign}
    if side > 0:
        meta['tau'] = float(tau)
    return DensityCurve(grid, values, meta)


def partly_stuck_limit_cdf(side, tau, x, a_sign=1):
    _check_side(side)
    x = np.asarray(x, dtype=float)
    if side < 0:
        def half_cdf(u):
            return -np.expm1(-2.0 * u)
    else:
        if not tau > 0:
            raise ParameterError('tau', "must be > 0; got %r" % tau)

        def half_cdf(u):
            return 2.0 * ndtr(u / math.sqrt(tau)) - 1.0
    if side * a_sign > 0:
        return np.where(x >= 0, half_cdf(np.maximum(x, 0.0)), 0.0)[()]
    return np.where(x <= 0, 1.0 - half_cdf(np.maximum(-x, 0.0)), 1.0)[()]


def limit_pdf_viscous(tau, grid):
    """Centred Gaussian of variance tau: the law of (v - v*)/sqrt(nu) as nu -> 0."""
    if not tau > 0:
        raise ParameterError('tau', "must be > 0; got %r" % tau)
    grid = np.asarray(grid, dtype=float)
    values = np.exp(-grid**2 / (2.0 * tau)) / math.sqrt(2.0 * math.pi * tau)
    return DensityCurve(grid, values, {'kind': 'limit_viscous', 'tau': float(tau)})


def viscous_limit_cdf(tau, x):
    if not tau > 0:
        raise ParameterError('tau', "must be > 0; got %r" % tau)
    return ndtr(np.asarray(x, dtype=float) / math.sqrt(tau))[()]


def limit_cdf(r, x):
    """The small-noise limit CDF matching scaled_stationary_cdf(r, x)."""
    _require_stationary(r)
    regime = classify_regime(_TiltView(r.w))
    if regime is Regime.STUCK:
        return stuck_limit_cdf(r.w, x)
    if regime is Regime.PARTLY_STUCK:
        return partly_stuck_limit_cdf(1, r.tau, x, a_sign=1 if r.w > 0 else -1)
    return viscous_limit_cdf(r.tau, x)


## Figure data

FIGURE1_STUCK_TILTS = (0.0, 0.4, 0.9)


def figure1_curves(points=DEFAULT_POINTS):
    """The limit laws of the three regimes as plottable curves.

    Returns {name: DensityCurve}: the stuck laws for w = 0, 0.4, 0.9, the
    partly stuck composite for tau = 1 (a > 0; the exponential branch on
    v <= 0 for v/nu, the half-Gaussian on v > 0 for v/sqrt(nu)) and the
    viscous Gaussian for tau = 1, y = 3 annotated with its asymptotic mean.
    """
    out = {}
    grid = np.linspace(-10.0, 10.0, points)
    for w in FIGURE1_STUCK_TILTS:
        curve = limit_pdf_stuck(w, grid)
        curve.meta.update(regime=Regime.STUCK.value)
        out['stuck_w%g' % w] = curve

    tau = 1.0
    grid = np.linspace(-5.0, 5.0, points)
    left = limit_pdf_partly_stuck(-1, tau, grid).values
    right = limit_pdf_partly_stuck(1, tau, grid).values
    values = np.where(grid <= 0, left, right)
    out['partly_stuck_tau1'] = DensityCurve(grid, values, {
        'kind': 'limit_partly_stuck_composite', 'regime': Regime.PARTLY_STUCK.value,
        'tau': tau, 'a_sign': 1,
        'left_variable': 'v/nu', 'right_variable': 'v/sqrt(nu)',
        'left_height': float(left[grid <= 0][-1]),
        'right_height': 2.0 / math.sqrt(2.0 * math.pi * tau)})

    y = 3.0
    grid = np.linspace(-6.0, 6.0, points)
    curve = limit_pdf_viscous(tau, grid)
    curve.meta.update(regime=Regime.VISCOUS.value, y=y,
                      asymptotic_mean=potential_minimizer(Potential(tau, y)))
    out['viscous_tau1_y3'] = curve
    return out
