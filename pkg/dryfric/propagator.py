# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Transition densities p(v, t | v0) of dv = -[delta sgn(v) - a] dt + dB.

The driftless case (a = 0) has a closed form. The constant force case is
written as a Brownian expectation over (B_t, L_t, Gamma_t), the terminal value,
the local time at zero and the occupation time of [0, inf):

    p(v, t | v0) = exp[delta(|v0| - |v|) + a'(v0 - v) - (delta - a')^2 t / 2]
                   * E[exp(2 delta L_t - 2 a' delta Gamma_t); B_t in dv]

with a' = -a, the force as it appears when the drift is written
-[delta sgn(v) + a'] (this is the only place that sign flips). L is
normalized so that |B_t| = |v0| + int sgn(B) dB + 2 L_t.

Functions taking a PropagatorQuery use the c = 1 drift convention and unit
diffusion; use ``model.scale_to_unit_diffusion`` to get there.
"""
import math
import logging
import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, log_ndtr

from .model import ParameterError
from .curves import DensityCurve
from .stats import ConvergenceError, QuadratureResult, integrate_adaptive
from .analytic import gaussian_kernel


logger = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

#: Relative quadrature error above which propagator_forced raises instead of warning.
FORCED_MAX_REL_ERROR = 1e-4

#: Number of probe points used to locate the peak of the occupation-time integrand.
TAU_PROBES = 65

#: Terms of the Mills-ratio continued fraction (used for y > 3).
MILLS_CF_TERMS = 120

TRIVARIATE_GATE_TOL = 1e-6


@dataclass(frozen=True)
class PropagatorQuery:
    """A single transition density query p(v, t | v0) with threshold delta and force a."""
    v0: float
    v: float
    t: float
    delta: float
    a: float = 0.0

    def __post_init__(self):
        for name in ('v0', 'v', 't', 'delta', 'a'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(name, "must be finite; got %r" % value)
            object.__setattr__(self, name, value)
        if self.t <= 0:
            raise ParameterError('t', "must be > 0; got %r" % self.t)
        if self.delta <= 0:
            raise ParameterError('delta', "must be > 0; got %r" % self.delta)


@dataclass(frozen=True)
class JointDensityPoint:
    """A point (b, l[, occupation]) of the Brownian functionals started at v0."""
    b: float
    l: float
    v0: float = 0.0
    occupation: float = None

    def __post_init__(self):
        if self.l < 0:
            raise ParameterError('l', "local time must be >= 0; got %r" % self.l)
        if self.occupation is not None and self.occupation < 0:
            raise ParameterError('occupation', "must be >= 0; got %r" % self.occupation)


@dataclass(frozen=True)
class AtomWeight:
    """Density in b of the event {L_t = 0, Gamma_t = t} (paths that never reach 0)."""
    weight: float

    def __float__(self):
        return float(self.weight)


## Brownian kernels

def h_kernel(s, v):
    """First passage density h(s, v) = |v| exp(-v^2/(2s)) / sqrt(2 pi s^3)."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ParameterError('s', "must be > 0")
    v = np.asarray(v, dtype=float)
    return (np.abs(v) * np.exp(-v**2 / (2.0 * s)) / np.sqrt(2.0 * math.pi * s**3))[()]


def _h(s, v):
    # scalar version for quadrature integrands
    return abs(v) * math.exp(-v * v / (2.0 * s)) / math.sqrt(2.0 * math.pi * s * s * s)


def _omega(v0, b, t):
    return gaussian_kernel(t, b - v0) - gaussian_kernel(t, b + v0)


def atom_weight(v0, b, t):
    """omega(v0, b, t) = gamma_t(b - v0) - gamma_t(b + v0), for v0 >= 0 and b > 0."""
    if v0 < 0:
        raise ParameterError('v0', "must be >= 0; got %r" % v0)
    if b <= 0:
        raise ParameterError('b', "must be > 0; got %r" % b)
    if t <= 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    return AtomWeight(max(0.0, float(_omega(v0, b, t))))


def joint_density_bl(v0, b, l, t):
    """Continuous part of the density of (B_t, L_t) for B started at v0.

    Equals 2 h(t, 2l + |v0| + |b|), i.e. argument 2l + v0 - b for b < 0 and
    2l + v0 + b for b > 0 when v0 >= 0. A negative v0 is handled by mirroring
    b. The atom at l = 0 is given by atom_weight.
    """
    if t <= 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    l = np.asarray(l, dtype=float)
    if np.any(l < 0):
        raise ParameterError('l', "local time must be >= 0")
    b = np.asarray(b, dtype=float)
    return (2.0 * h_kernel(t, 2.0 * l + abs(v0) + np.abs(b)))[()]


def trivariate_density(v0, b, l, occupation, t):
    """Density of (B_t, L_t, Gamma_t) at (b, l, occupation), jointly in all three variables.

    For v0 >= 0:
        b < 0:   2 h(occupation, l + v0) h(t - occupation, l - b)
        b >= 0:  2 h(t - occupation, l) h(occupation, l + b + v0)
    v0 < 0 maps to (-v0, -b, l, t - occupation).
    """
    if not 0 < occupation < t:
        raise ParameterError('occupation', "must lie in (0, t); got %r" % occupation)
    if l < 0:
        raise ParameterError('l', "local time must be >= 0; got %r" % l)
    if v0 < 0:
        v0, b, occupation = -v0, -b, t - occupation
    if b < 0:
        return 2.0 * _h(occupation, l + v0) * _h(t - occupation, l - b)
    return 2.0 * _h(t - occupation, l) * _h(occupation, l + b + v0)


def joint_density(point, t):
    """Density at a JointDensityPoint: of (B_t, L_t) when ``point.occupation``
    is None, of (B_t, L_t, Gamma_t) otherwise."""
    if point.occupation is None:
        return float(joint_density_bl(point.v0, point.b, point.l, t))
    return trivariate_density(point.v0, point.b, point.l, point.occupation, t)


def _occupation_integral(v0, b, l, t, abs_tol):
    """Integral over occupation in (0, t) of trivariate_density(v0, b, l, ., t), v0 >= 0.

    Both branches are 2 h(occ, p) h(t - occ, q). The sharper of the two
    kernels is removed by s = x^2/r^2, under which h(s, x) ds = 2 phi(r) dr,
    so the corner l -> 0 at v0 = 0 stays smooth.
    """
    if b < 0:
        p, q = l + v0, l - b
    else:
        p, q = l + b + v0, l
    if p <= q:
        x, y, on_occ = p, q, True
    else:
        x, y, on_occ = q, p, False
    if x < 1e-30:
        return QuadratureResult(value=2.0 * _h(t, y), error_estimate=0.0, panels=0)

    def integrand(r):
        s = x * x / (r * r)
        occ = s if on_occ else t - s
        if not 0.0 < occ < t:
            # s below the resolution of t: the other kernel is h(t, y)
            return 4.0 * math.exp(-0.5 * r * r) / math.sqrt(2.0 * math.pi) * _h(t, y)
        return trivariate_density(v0, b, l, occ, t) * 2.0 * x * x / (r * r * r)

    lo = x / math.sqrt(t)
    hi = lo + 40.0
    points = []
    if y * y / 3.0 < t:
        # peak of the other kernel, at distance y^2/3 from its end
        points.append(x / math.sqrt(t - y * y / 3.0))
    points = [r for r in points if lo * (1 + 1e-12) < r < hi]
    return integrate_adaptive(integrand, lo, hi, abs_tol=abs_tol * 1e-2, rel_tol=1e-12,
                              points=points)


def marginalize_trivariate(v0, b, t, abs_tol=1e-11):
    """Integrate the trivariate density over (l, occupation) and add the atom.

    Iterated adaptive quadrature with the occupation integral innermost. The
    result should reproduce gamma_t(b - v0). Returns a QuadratureResult.
    """
    if t <= 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    if v0 < 0:
        v0m, bm = -v0, -b
    else:
        v0m, bm = v0, b

    panels = [0]
    errors = [0.0]

    def inner(l):
        res = _occupation_integral(v0m, bm, l, t, abs_tol)
        panels[0] += res.panels
        errors[0] = max(errors[0], res.error_estimate)
        return res.value

    outer = integrate_adaptive(inner, 0.0, np.inf, abs_tol=abs_tol * 10, rel_tol=1e-10)
    atom = float(_omega(v0m, bm, t)) if (bm > 0 and v0m > 0) else 0.0
    return QuadratureResult(value=outer.value + atom,
                            error_estimate=outer.error_estimate + errors[0],
                            panels=outer.panels + panels[0],
                            converged=outer.converged)


DEFAULT_GATE_POINTS = tuple((v0, b, 1.0) for v0 in (0.0, 0.5, 1.2, -0.7)
                            for b in (-1.1, -0.4, 0.3, 0.9, 1.6))


@dataclass(frozen=True)
class GateOutcome:
    passed: bool
    max_error: float
    errors: tuple
    failure: str = None


@functools.lru_cache(maxsize=8)
def trivariate_gate(points=DEFAULT_GATE_POINTS, tol=TRIVARIATE_GATE_TOL):
    """Check marginalize_trivariate against gamma_t(b - v0) at each (v0, b, t) in *points*.

    Cached per process: propagator_forced consults it before trusting the
    closed-form local-time integral built from the same density. A quadrature
    that raises counts as a failed gate; ``failure`` holds its message.
    """
    errors = []
    failure = None
    for v0, b, t in points:
        try:
            res = marginalize_trivariate(v0, b, t)
        except (ValueError, ArithmeticError, ConvergenceError) as exc:
            failure = "%s at (v0=%g, b=%g, t=%g): %s" % (type(exc).__name__, v0, b, t, exc)
            errors.append(math.inf)
            continue
        errors.append(abs(res.value - float(gaussian_kernel(t, b - v0))))
    max_error = max(errors)
    passed = max_error <= tol
    if passed:
        logger.info("trivariate gate passed at %d points (max error %.3g)", len(points), max_error)
    else:
        logger.warning("trivariate gate FAILED (max error %.3g > %.3g%s); forced propagator "
                       "will fall back to the Girsanov estimator", max_error, tol,
                       '' if failure is None else '; ' + failure)
    return GateOutcome(passed=passed, max_error=max_error, errors=tuple(errors), failure=failure)


def joint_bl_bin_mass(v0, b_edges, l_edges, t):
    """Exact probabilities that (B_t, L_t) falls in each rectangle of the bin grid.

    Includes the atom {L_t = 0} in bins whose l-range contains 0. Returns an
    array of shape (len(b_edges) - 1, len(l_edges) - 1).
    """
    b_edges = np.asarray(b_edges, dtype=float)
    l_edges = np.asarray(l_edges, dtype=float)
    if v0 < 0:
        return joint_bl_bin_mass(-v0, -b_edges[::-1], l_edges, t)[::-1]
    if np.any(np.diff(b_edges) <= 0) or np.any(np.diff(l_edges) <= 0):
        raise ParameterError('edges', "bin edges must be strictly increasing")
    sq = math.sqrt(t)
    m = float(v0)

    def int_gamma(c, b1, b2):
        # integral over [b1, b2] of gamma_t(c + |b|) db
        total = 0.0
        lo, hi = max(b1, 0.0), b2
        if lo < hi:
            total += ndtr((c + hi) / sq) - ndtr((c + lo) / sq)
        lo, hi = b1, min(b2, 0.0)
        if lo < hi:
            total += ndtr((c - lo) / sq) - ndtr((c - hi) / sq)
        return total

    out = np.zeros((len(b_edges) - 1, len(l_edges) - 1))
    for i in range(len(b_edges) - 1):
        b1, b2 = b_edges[i], b_edges[i + 1]
        for j in range(len(l_edges) - 1):
            l1, l2 = max(l_edges[j], 0.0), max(l_edges[j + 1], 0.0)
            if l2 <= l1:
                continue
            # integral of 2 h(t, 2l + c) dl over [l1, l2] is gamma_t(2 l1 + c) - gamma_t(2 l2 + c)
            out[i, j] = int_gamma(2 * l1 + m, b1, b2) - int_gamma(2 * l2 + m, b1, b2)
            if l_edges[j] <= 0 < l_edges[j + 1] and m > 0:
                lo, hi = max(b1, 0.0), b2
                if lo < hi:
                    out[i, j] += ((ndtr((hi - m) / sq) - ndtr((lo - m) / sq))
                                  - (ndtr((hi + m) / sq) - ndtr((lo + m) / sq)))
    return np.maximum(out, 0.0)


## Driftless propagator

def free_density(v, v0, t, delta):
    """Vectorized p(v, t | v0) for a = 0:

        exp(delta(|v0| - |v|) - delta^2 t/2) gamma_t(v - v0)
        + delta exp(-2 delta |v|) F((delta t - |v| - |v0|)/sqrt(t))
    """
    if t <= 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    if delta <= 0:
        raise ParameterError('delta', "must be > 0; got %r" % delta)
    v = np.asarray(v, dtype=float)
    av = np.abs(v)
    m = abs(v0)
    log_gauss = (delta * (m - av) - 0.5 * delta**2 * t
                 - (v - v0)**2 / (2.0 * t) - 0.5 * math.log(2.0 * math.pi * t))
    log_speed = math.log(delta) - 2.0 * delta * av + log_ndtr((delta * t - av - m) / math.sqrt(t))
    return np.exp(np.logaddexp(log_gauss, log_speed))[()]


def propagator_free(q):
    """Closed-form transition density for a = 0 (any real v, v0)."""
    if q.a != 0:
        raise ParameterError('a', "propagator_free requires a = 0; use propagator_forced")
    return float(free_density(q.v, q.v0, q.t, q.delta))


def _log_tail_diff(lo, hi):
    """log(G(lo) - G(hi)) for lo <= hi, without cancellation in either tail."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        upper = log_ndtr(-lo) + np.log1p(-np.exp(log_ndtr(-hi) - log_ndtr(-lo)))
        lower = log_ndtr(hi) + np.log1p(-np.exp(log_ndtr(lo) - log_ndtr(hi)))
    return np.where(lo > 0, upper, lower)


def free_cdf(v0, t, delta, x):
    """Closed-form CDF of p(., t | v0) for a = 0, vectorized in *x*.

    Each term of free_density is a Gaussian piece after completing the square
    on either half-line; the speed-measure term is integrated by parts.
    """
    if t <= 0:
        raise ParameterError('t', "must be > 0; got %r" % t)
    if delta <= 0:
        raise ParameterError('delta', "must be > 0; got %r" % delta)
    x = np.asarray(x, dtype=float)
    s = math.sqrt(t)
    m = abs(v0)
    dt_ = delta * t

    # Gaussian term: centred at v0 + delta t on v < 0 and at v0 - delta t on v > 0
    xn = np.minimum(x, 0.0)
    xp = np.maximum(x, 0.0)
    neg_gauss = np.exp(delta * (m + v0) + log_ndtr((xn - v0 - dt_) / s))
    neg_gauss_total = math.exp(delta * (m + v0) + float(log_ndtr((-v0 - dt_) / s)))
    pos_gauss = np.exp(delta * (m - v0) + _log_tail_diff((dt_ - v0) / s, (xp - v0 + dt_) / s))
    gauss = np.where(x <= 0, neg_gauss, neg_gauss_total + pos_gauss)

    # speed-measure term, even in v; c = delta t - |v0|
    c = dt_ - m

    def half(u):
        return (0.5 * ndtr(c / s) - 0.5 * np.exp(-2.0 * delta * u + log_ndtr((c - u) / s))
                - 0.5 * np.exp(2.0 * delta * m + _log_tail_diff((dt_ + m) / s, (u + dt_ + m) / s)))

    half_total = 0.5 * ndtr(c / s) - 0.5 * math.exp(2.0 * delta * m + float(log_ndtr(-(dt_ + m) / s)))
    speed = np.where(x <= 0, half_total - half(np.abs(xn)), half_total + half(xp))
    return np.clip(gauss + speed, 0.0, 1.0)[()]


def default_propagator_grid(v0, t, delta, a=0.0, points=2001):
    """Grid covering the free spread v0 +- 8 sqrt(t), the relaxed law (10/delta)
    and the displacement a t of a constant force."""
    spread = 8.0 * math.sqrt(t)
    relaxed = min(spread, 10.0 / delta)
    lo = min(v0 - spread, -relaxed) + min(0.0, a * t)
    hi = max(v0 + spread, relaxed) + max(0.0, a * t)
    return np.linspace(lo, hi, points)


def free_curve(v0, t, delta, grid=None):
    if grid is None:
        grid = default_propagator_grid(v0, t, delta)
    grid = np.asarray(grid, dtype=float)
    meta = {'kind': 'propagator_free', 'v0': v0, 't': t, 'delta': delta, 'a': 0.0,
            'method': 'closed'}
    return DensityCurve(grid, free_density(grid, v0, t, delta), meta)


def chapman_kolmogorov_residual(v0, v, s, t, delta):
    """|p(v, s+t | v0) - integral of p(v, t | u) p(u, s | v0) du| by adaptive quadrature."""
    if s <= 0 or t <= 0:
        raise ParameterError('s' if s <= 0 else 't', "times must be > 0")
    rs = math.sqrt(s)
    points = [0.0, v0, v] + [v0 + k * rs for k in (-10, -5, -2, 2, 5, 10)]

    def integrand(u):
        return float(free_density(v, u, t, delta) * free_density(u, v0, s, delta))

    res = integrate_adaptive(integrand, -np.inf, np.inf, abs_tol=1e-12, rel_tol=1e-12,
                             points=points)
    direct = float(free_density(v, v0, s + t, delta))
    return abs(direct - res.value)


## Constant force

def _log_mills(y):
    """log of the Mills ratio G(y)/phi(y), accurate for y <= 3."""
    return y * y / 2.0 + LOG_SQRT_2PI + float(log_ndtr(-y))


def _mills_cf(y):
    """Continued-fraction tails (T1, T2) with M = 1/(y + T1), for y > 3."""
    tn = 0.0
    for n in range(MILLS_CF_TERMS, 1, -1):
        tn = n / (y + tn)
    return 1.0 / (y + tn), tn


def _log_q(A, B, sigma, y):
    """log of the integral over l > 0 of (l + A)(l + B) exp(-k l - l^2/(2 sigma^2)), y = k sigma.

    Three branches keep every term positive or cancellation-free: y <= 0 in
    the log domain, 0 < y <= 3 directly, y > 3 through the Mills continued
    fraction.
    """
    if y <= 0:
        bracket1 = sigma**3 * (1 + y * y) - (A + B) * sigma**2 * y + A * B * sigma
        bracket2 = -sigma**3 * y + (A + B) * sigma**2
        log_b2 = math.log(bracket2) if bracket2 > 0 else -math.inf
        return float(np.logaddexp(_log_mills(y) + math.log(bracket1), log_b2))
    if y <= 3:
        M = math.exp(_log_mills(y))
        f0 = sigma * M
        f1 = sigma**2 * (1 - y * M)
        f2 = sigma**3 * ((1 + y * y) * M - y)
        return math.log(max(f2 + (A + B) * f1 + A * B * f0, 1e-300))
    t1, t2 = _mills_cf(y)
    M = 1.0 / (y + t1)
    return math.log(sigma * M) + math.log(sigma**2 * t1 * t2 + (A + B) * sigma * t1 + A * B)


def _log_occupation_integrand(tau, A, B, t, delta, a6):
    """log of exp(-2 a' delta tau) * integral over l of exp(2 delta l) 2 h(tau, l+A) h(t-tau, l+B)."""
    s = t - tau
    sigma = math.sqrt(tau * s / t)
    k = A / tau + B / s - 2.0 * delta
    K0 = -A * A / (2.0 * tau) - B * B / (2.0 * s)
    log_j = K0 - math.log(math.pi) - 1.5 * math.log(tau * s) + _log_q(A, B, sigma, k * sigma)
    return -2.0 * a6 * delta * tau + log_j


def _forced_point(v0, v, t, delta, a):
    """Return (density, QuadratureResult) for the constant force propagator at one point."""
    a6 = -a
    if v0 < 0:
        v0, v, a6 = -v0, -v, -a6
    log_pref = delta * (v0 - abs(v)) + a6 * (v0 - v) - 0.5 * (delta - a6)**2 * t
    if v < 0:
        A, B = v0, -v
    else:
        A, B = v + v0, 0.0

    probes = t * (np.arange(TAU_PROBES) + 0.5) / TAU_PROBES
    logs = [_log_occupation_integrand(tau, A, B, t, delta, a6) for tau in probes]
    i_peak = int(np.argmax(logs))
    peak = logs[i_peak]
    tau_peak = float(probes[i_peak])

    def integrand(tau):
        return math.exp(_log_occupation_integrand(tau, A, B, t, delta, a6) - peak)

    res = integrate_adaptive(integrand, 0.0, t, abs_tol=1e-13, rel_tol=1e-10, points=[tau_peak])
    value = res.value * math.exp(peak + log_pref)
    err = res.error_estimate * math.exp(peak + log_pref)
    if v > 0 and v0 > 0:
        value += math.exp(log_pref - 2.0 * a6 * delta * t) * max(0.0, float(_omega(v0, v, t)))
    return value, QuadratureResult(value=value, error_estimate=err, panels=res.panels,
                                   converged=res.converged)


def _check_forced_result(res, q):
    rel = res.error_estimate / max(abs(res.value), 1e-300)
    if not res.converged:
        if rel > FORCED_MAX_REL_ERROR and res.error_estimate > 1e-10:
            raise ConvergenceError("forced propagator quadrature failed at %r (error estimate %.3g)"
                                   % (q, res.error_estimate), res.error_estimate)
        logger.warning("forced propagator quadrature at %r not converged (error estimate %.3g)",
                       q, res.error_estimate)


def propagator_forced(q, check_gate=True, **fallback_opts):
    """Transition density with constant force a (alpha = 0, unit diffusion).

    The local time integral is done in closed form (a Gaussian moment
    integral expressed through the Mills ratio) and the occupation time
    integral by adaptive quadrature centred on the integrand's peak. Paths
    that never reach zero contribute the atom term exp(-2 a' delta t) omega.
    Reduces to propagator_free at a = 0.

    If *check_gate* and the trivariate marginalization gate fails, the value
    is estimated with the Girsanov path estimator instead (*fallback_opts* are
    passed to it).
    """
    if check_gate and not trivariate_gate().passed:
        from .simulate import girsanov_density
        values, _ = girsanov_density(q.v0, [q.v], q.t, q.delta, q.a, 0.0, **fallback_opts)
        return float(values[0])
    value, res = _forced_point(q.v0, q.v, q.t, q.delta, q.a)
    _check_forced_result(res, q)
    return value


def forced_curve(v0, t, delta, a, grid=None, check_gate=True, **fallback_opts):
    """propagator_forced sampled on *grid*, with quadrature diagnostics in meta."""
    if grid is None:
        grid = default_propagator_grid(v0, t, delta, a)
    grid = np.asarray(grid, dtype=float)
    meta = {'kind': 'propagator_forced', 'v0': v0, 't': t, 'delta': delta, 'a': a,
            'method': 'quadrature', 'fallback_used': False}
    if check_gate and not trivariate_gate().passed:
        from .simulate import girsanov_propagator_estimate
        curve = girsanov_propagator_estimate(v0, grid, t, delta, a, 0.0, **fallback_opts)
        meta.update(curve.meta, fallback_used=True, method='girsanov')
        return DensityCurve(grid, curve.values, meta)

    values = np.empty(len(grid))
    panels = 0
    max_err = 0.0
    converged = True
    for i, v in enumerate(grid):
        q = PropagatorQuery(v0=v0, v=v, t=t, delta=delta, a=a)
        values[i], res = _forced_point(v0, v, t, delta, a)
        _check_forced_result(res, q)
        panels += res.panels
        max_err = max(max_err, res.error_estimate)
        converged = converged and res.converged
    meta.update(panels_used=panels, error_estimate=max_err, converged=converged)
    return DensityCurve(grid, values, meta)
