# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""SDE parameterization, reduced coordinates, regimes and the diffusion scaling map.

All code in this package solves

    dv = -c [alpha v - a + delta sgn(v)] dt + sqrt(D) dB,      c in {1/2, 1}

with sgn(0) = 0. ``c = 1/2`` is the convention used for the stationary and
small-noise results, ``c = 1`` the one used for propagators. Propagator formulas
written with the opposite sign of the external force convert at their own
boundary; callers always pass the force ``a`` as it appears above.
"""

import enum
import json
import math
import logging
from dataclasses import dataclass, asdict

import numpy as np


logger = logging.getLogger(__name__)

#: Relative tolerance on |a|/delta - 1 used to detect the partly stuck regime.
PARTLY_STUCK_RTOL = 1e-12

DRIFT_SCALES = (0.5, 1.0)


class ParameterError(ValueError):
    """Raised for invalid model, query or simulation parameters.

    The ``field`` attribute names the offending parameter.
    """
    def __init__(self, field, message):
        ValueError.__init__(self, "%s: %s" % (field, message))
        self.field = field


def _check_finite(field, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(field, "must be a real number; got %r" % (value,))
    if not math.isfinite(value):
        raise ParameterError(field, "must be finite; got %r" % value)
    return value


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the dry-friction Langevin equation.

    Parameters
    ----------
    alpha : float
        Viscous coefficient (>= 0).
    a : float
        Constant external force.
    delta : float
        Dry-friction threshold (> 0).
    diffusion : float
        Diffusion coefficient D. ``D = 0`` is accepted as the deterministic
        limit for simulation; every analytic operation requires ``D > 0``.
    drift_scale : float
        The factor c in front of the drift, 1/2 or 1.
    """
    alpha: float
    a: float
    delta: float
    diffusion: float
    drift_scale: float = 0.5

    def __post_init__(self):
        for name in ('alpha', 'a', 'delta', 'diffusion', 'drift_scale'):
            object.__setattr__(self, name, _check_finite(name, getattr(self, name)))
        if self.delta <= 0:
            raise ParameterError('delta', "must be > 0; got %r" % self.delta)
        if self.diffusion < 0:
            raise ParameterError('diffusion', "must be >= 0; got %r" % self.diffusion)
        if self.alpha < 0:
            raise ParameterError('alpha', "must be >= 0; got %r" % self.alpha)
        if self.drift_scale not in DRIFT_SCALES:
            raise ParameterError('drift_scale', "must be 0.5 or 1; got %r" % self.drift_scale)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, dct):
        return cls(alpha=dct['alpha'], a=dct['a'], delta=dct['delta'],
                   diffusion=dct['diffusion'], drift_scale=dct.get('drift_scale', 0.5))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def drift(self, v):
        """Drift -c (alpha v - a + delta sgn(v)), with sgn(0) = 0. Works on arrays."""
        return -self.drift_scale * (self.alpha * v - self.a + self.delta * np.sign(v))


@dataclass(frozen=True)
class ReducedParams:
    """Reduced coordinates of the stationary problem.

    ``tau`` and ``y`` are None when alpha = 0 (no stationary density exists).
    ``w = a / delta`` is the tilt of the stuck-regime limit law; it equals
    ``y / tau`` whenever both are defined.
    """
    nu: float
    tau: float = None
    y: float = None
    w: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'nu', _check_finite('nu', self.nu))
        if self.nu <= 0:
            raise ParameterError('nu', "must be > 0; got %r" % self.nu)
        if (self.tau is None) != (self.y is None):
            raise ParameterError('tau', "tau and y must be given together")
        if self.tau is not None:
            object.__setattr__(self, 'tau', _check_finite('tau', self.tau))
            object.__setattr__(self, 'y', _check_finite('y', self.y))
            if self.tau <= 0:
                raise ParameterError('tau', "must be > 0; got %r" % self.tau)
        object.__setattr__(self, 'w', _check_finite('w', self.w))

    @classmethod
    def stationary(cls, nu, tau, y):
        """Reduced coordinates for a stationary query given (nu, tau, y)."""
        tau = _check_finite('tau', tau)
        if tau <= 0:
            raise ParameterError('tau', "must be > 0; got %r" % tau)
        return cls(nu=nu, tau=tau, y=y, w=_check_finite('y', y) / tau)

    @property
    def has_stationary(self):
        return self.tau is not None

    def require_stationary(self):
        if self.tau is None:
            raise ParameterError('tau', "undefined for alpha = 0 (no stationary density)")

    def to_model(self, drift_scale=0.5, delta=1.0):
        """Reconstruct ModelParams with the given delta and drift convention."""
        self.require_stationary()
        diffusion = 2.0 * drift_scale * delta * self.nu
        alpha = delta / self.tau
        return ModelParams(alpha=alpha, a=self.y * alpha, delta=delta,
                           diffusion=diffusion, drift_scale=drift_scale)


class Regime(enum.Enum):
    """Small-noise regime, decided by comparing |a| with delta."""
    STUCK = 'stuck'
    PARTLY_STUCK = 'partly_stuck'
    VISCOUS = 'viscous'


@dataclass(frozen=True)
class ScaledQuery:
    """Unit-diffusion parameters and the rescaled time D t."""
    params: ModelParams
    time: float

    def __post_init__(self):
        if self.params.diffusion != 1.0:
            raise ParameterError('diffusion', "scaled query must have unit diffusion")


def reduce(params):
    """Return the reduced coordinates (nu, tau, y, w) of *params*.

    The stationary density of dv = -c[...]dt + sqrt(D) dB is proportional to
    exp(-(2c/D)(alpha v^2/2 - a v + delta |v|)), so ``nu = D / (2 c delta)``:
    ``nu = D/delta`` for c = 1/2 and ``nu = D/(2 delta)`` for c = 1. ``tau``
    and ``y`` are left as None when alpha = 0.
    """
    if params.diffusion <= 0:
        raise ParameterError('diffusion', "must be > 0 to define reduced coordinates")
    nu = params.diffusion / (2.0 * params.drift_scale * params.delta)
    w = params.a / params.delta
    if params.alpha == 0:
        return ReducedParams(nu=nu, w=w)
    return ReducedParams(nu=nu, tau=params.delta / params.alpha,
                         y=params.a / params.alpha, w=w)


def classify_regime(params):
    """Classify *params* (ModelParams or anything with ``a`` and ``delta``)."""
    ratio = abs(params.a) / params.delta
    if abs(ratio - 1.0) <= PARTLY_STUCK_RTOL:
        return Regime.PARTLY_STUCK
    if ratio < 1.0:
        return Regime.STUCK
    return Regime.VISCOUS


def scale_to_unit_diffusion(params, t):
    """Map (alpha, a, delta, D) at time t to (alpha/D, a/D, delta/D, 1) at time D t.

    Only valid for the c = 1 convention; halve alpha, a and delta first to
    convert a c = 1/2 model.
    """
    if params.drift_scale != 1.0:
        raise ParameterError('drift_scale', "scaling map requires drift_scale = 1 "
                             "(absorb the 1/2 by halving alpha, a and delta)")
    t = _check_finite('t', t)
    if t < 0:
        raise ParameterError('t', "must be >= 0; got %r" % t)
    D = params.diffusion
    if D <= 0:
        raise ParameterError('diffusion', "must be > 0 for the scaling map")
    if D == 1.0:
        return ScaledQuery(params=params, time=t)
    scaled = ModelParams(alpha=params.alpha / D, a=params.a / D, delta=params.delta / D,
                         diffusion=1.0, drift_scale=1.0)
    return ScaledQuery(params=scaled, time=D * t)
