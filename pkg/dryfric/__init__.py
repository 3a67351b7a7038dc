# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Langevin dynamics with Coulombic (dry) friction.

Stationary laws and their small-noise limits, time-dependent propagators, and
a Monte-Carlo oracle that cross-checks every closed form.
"""

#: Bumped whenever an implemented formula changes (recorded in run manifests).
FORMULA_LEDGER_REVISION = '3'

__version__ = '1.0'

from .model import (ModelParams, ReducedParams, Regime, ScaledQuery, ParameterError,
                    reduce, classify_regime, scale_to_unit_diffusion)
from .analytic import DensityCurve, Potential
from .stats import ConvergenceError, QuadratureResult, Ecdf
from .propagator import PropagatorQuery, propagator_free, propagator_forced
from .simulate import SimConfig, PathEnsemble, euler_maruyama_ensemble
