# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Monte-Carlo oracle: Euler-Maruyama ensembles, discrete Brownian path
functionals and the Girsanov weighted-path propagator estimator.

Paths are generated in fixed blocks of BLOCK_PATHS. Block ``k`` draws its
normal increments from a PCG64 stream seeded with
``SeedSequence(seed, spawn_key=(k, 0))`` (and its bridge uniforms from
``spawn_key=(k, 1)``), always filling all BLOCK_PATHS columns, so the noise of
a path depends only on the master seed and the path index. Blocks may run in
worker processes; they are reassembled in block order so the ensemble is
bit-identical for any number of workers.
"""
import math
import logging
from dataclasses import dataclass, fields

import numpy as np

from .model import ModelParams, ParameterError
from .curves import DensityCurve
from .stats import kernel_sum, silverman_bandwidth, effective_sample_size


logger = logging.getLogger(__name__)

BLOCK_PATHS = 4096

#: Time steps drawn per RNG call.
SLAB_STEPS = 256

ESS_WARN_FRACTION = 0.01

SUMMARY_QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)

MAX_SEED = 2**64 - 1


class SimulationError(RuntimeError):
    """Raised when an ensemble produces non-finite values."""


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one ensemble run.

    ``params = None`` means standard Brownian motion (no drift, unit diffusion).
    The step actually used is t_final / round(t_final / dt).
    """
    params: ModelParams
    v0: float
    t_final: float
    dt: float
    n_paths: int
    seed: int = 0
    record_functionals: bool = False

    def __post_init__(self):
        for name in ('v0', 't_final', 'dt'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(name, "must be finite; got %r" % value)
            object.__setattr__(self, name, value)
        if self.t_final <= 0:
            raise ParameterError('t_final', "must be > 0; got %r" % self.t_final)
        if not 0 < self.dt <= self.t_final:
            raise ParameterError('dt', "must satisfy 0 < dt <= t_final; got %r" % self.dt)
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError('n_paths', "must be an integer >= 1; got %r" % self.n_paths)
        object.__setattr__(self, 'n_paths', int(self.n_paths))
        if int(self.seed) != self.seed or not 0 <= self.seed <= MAX_SEED:
            raise ParameterError('seed', "must be an integer in [0, 2^64); got %r" % self.seed)
        object.__setattr__(self, 'seed', int(self.seed))

    @property
    def n_steps(self):
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def dt_effective(self):
        return self.t_final / self.n_steps

    def to_dict(self):
        return {'params': None if self.params is None else self.params.to_dict(),
                'v0': self.v0, 't_final': self.t_final, 'dt': self.dt,
                'n_paths': self.n_paths, 'seed': self.seed,
                'record_functionals': self.record_functionals}

    @classmethod
    def from_dict(cls, dct):
        params = dct.get('params')
        return cls(params=None if params is None else ModelParams.from_dict(params),
                   v0=dct['v0'], t_final=dct['t_final'], dt=dct['dt'],
                   n_paths=dct['n_paths'], seed=dct.get('seed', 0),
                   record_functionals=dct.get('record_functionals', False))


@dataclass
class BrownianFunctionals:
    """Per-path functionals of a simulated path (arrays, one entry per path).

    l_t is the Tanaka residual with the convention |B_t| = |v0| + int sgn dB + 2 L_t.
    l_t_band (epsilon-band count) and l_t_bridge (exact Brownian-bridge local
    time per step) are independent estimators of the same quantity.
    """
    b_t: np.ndarray
    l_t: np.ndarray
    occupation: np.ndarray
    int_b: np.ndarray
    int_abs_b: np.ndarray
    int_b2: np.ndarray
    l_t_band: np.ndarray = None
    l_t_bridge: np.ndarray = None

    def __len__(self):
        return len(self.b_t)

    def __getitem__(self, i):
        return BrownianFunctionals(**{f.name: (None if getattr(self, f.name) is None
                                               else getattr(self, f.name)[i])
                                      for f in fields(self)})

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    @classmethod
    def concatenate(cls, parts):
        out = {}
        for f in fields(cls):
            values = [getattr(p, f.name) for p in parts]
            out[f.name] = None if any(v is None for v in values) else np.concatenate(values)
        return cls(**out)


@dataclass
class PathEnsemble:
    terminal: np.ndarray
    config: SimConfig
    functionals: BrownianFunctionals = None

    def __post_init__(self):
        if len(self.terminal) != self.config.n_paths:
            raise SimulationError("ensemble has %d paths, config asks for %d"
                                  % (len(self.terminal), self.config.n_paths))

    def summary(self, weights=None):
        return ensemble_summary(self, weights)


@dataclass(frozen=True)
class GirsanovWeight:
    log_weight: object

    def __post_init__(self):
        if not np.all(np.isfinite(self.log_weight)):
            raise SimulationError("non-finite Girsanov log weight")

    @property
    def weight(self):
        return np.exp(self.log_weight)


## Block simulation

def block_streams(seed, block):
    """(main, bridge) generators for path block *block* of master seed *seed*."""
    main = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block, 0))))
    bridge = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block, 1))))
    return main, bridge


class _FunctionalAccumulator(object):
    """Left-point sums over a discrete path, updated one step at a time."""
    def __init__(self, x0, dt, step_var):
        self.x0 = x0.copy()
        self.dt = dt
        self.h = step_var
        self.eps = 2.0 * math.sqrt(step_var)
        n = len(x0)
        self.occupation = np.zeros(n)
        self.int_b = np.zeros(n)
        self.int_abs_b = np.zeros(n)
        self.int_b2 = np.zeros(n)
        self.ito_sgn = np.zeros(n)
        self.band = np.zeros(n)
        self.bridge = np.zeros(n)

    def step(self, x, x_new, u):
        ax = np.abs(x)
        dx = x_new - x
        self.occupation += (x >= 0)
        self.int_b += x
        self.int_abs_b += ax
        self.int_b2 += x * x
        self.ito_sgn += np.sign(x) * dx
        self.band += (ax < self.eps)
        if self.h > 0:
            # local time of the Brownian bridge from x to x_new over one step:
            # P(ell > w) = exp(-[(|x| + |x_new| + w)^2 - dx^2] / (2h))
            ay = np.abs(x_new)
            log_u = np.log(u)
            threshold = ((ax + ay)**2 - dx * dx) / (2.0 * self.h)
            ell = np.sqrt(np.maximum(dx * dx - 2.0 * self.h * log_u, 0.0)) - ax - ay
            self.bridge += np.where(log_u <= -threshold, np.maximum(ell, 0.0), 0.0)

    def finish(self, x_final):
        dt = self.dt
        return BrownianFunctionals(
            b_t=x_final.copy(),
            l_t=0.5 * (np.abs(x_final) - np.abs(self.x0) - self.ito_sgn),
            occupation=self.occupation * dt,
            int_b=self.int_b * dt,
            int_abs_b=self.int_abs_b * dt,
            int_b2=self.int_b2 * dt,
            l_t_band=self.band * dt / (4.0 * self.eps),
            l_t_bridge=0.5 * self.bridge,
        )


def simulate_block(params, v0, n_steps, dt, seed, block, n_in_block, record=False):
    """Simulate one block of paths.

    *params* is a ModelParams, a dict of its fields, or None for standard
    Brownian motion. Returns a dict with 'terminal' and, if *record*, one
    array per BrownianFunctionals field.
    """
    if isinstance(params, dict):
        params = ModelParams.from_dict(params)
    if params is None:
        alpha = a = delta = 0.0
        c, D = 1.0, 1.0
    else:
        alpha, a, delta = params.alpha, params.a, params.delta
        c, D = params.drift_scale, params.diffusion
    if not 0 < n_in_block <= BLOCK_PATHS:
        raise ParameterError('n_in_block', "must be in [1, %d]" % BLOCK_PATHS)

    rng, bridge_rng = block_streams(seed, block)
    x = np.full(n_in_block, float(v0))
    acc = _FunctionalAccumulator(x, dt, D * dt) if record else None
    noise_scale = math.sqrt(D * dt)
    done = 0
    while done < n_steps:
        k = min(SLAB_STEPS, n_steps - done)
        xi = rng.standard_normal((k, BLOCK_PATHS))[:, :n_in_block]
        if record:
            u = 1.0 - bridge_rng.random((k, BLOCK_PATHS))[:, :n_in_block]
        for j in range(k):
            x_new = x - c * (alpha * x - a + delta * np.sign(x)) * dt + noise_scale * xi[j]
            if record:
                acc.step(x, x_new, u[j])
            x = x_new
        done += k

    if not np.all(np.isfinite(x)):
        raise SimulationError("block %d produced %d non-finite values"
                              % (block, np.count_nonzero(~np.isfinite(x))))
    out = {'terminal': x}
    if record:
        out.update(acc.finish(x).to_dict())
    return out


def euler_blocks(params, v0, n_steps, dt, seed, blocks, sizes, record=False):
    """Worker task: simulate several blocks; returns [[block, result], ...]."""
    return [[b, simulate_block(params, v0, n_steps, dt, seed, b, n, record)]
            for b, n in zip(blocks, sizes)]


def brownian_blocks(v0, n_steps, dt, seed, blocks, sizes):
    """Worker task: standard Brownian blocks with all functionals recorded."""
    return euler_blocks(None, v0, n_steps, dt, seed, blocks, sizes, record=True)


def _block_layout(n_paths):
    n_blocks = -(-n_paths // BLOCK_PATHS)
    sizes = [min(BLOCK_PATHS, n_paths - b * BLOCK_PATHS) for b in range(n_blocks)]
    return list(range(n_blocks)), sizes


def _run(cfg, workers):
    blocks, sizes = _block_layout(cfg.n_paths)
    params = None if cfg.params is None else cfg.params.to_dict()
    n_steps, dt = cfg.n_steps, cfg.dt_effective
    record = cfg.record_functionals or params is None
    logger.info("simulating %d paths x %d steps (dt=%g) in %d blocks, workers=%d",
                cfg.n_paths, n_steps, dt, len(blocks), workers)
    if workers and workers > 0 and len(blocks) > 1:
        from .workers import WorkerPool
        opts = dict(v0=cfg.v0, n_steps=n_steps, dt=dt, seed=cfg.seed)
        with WorkerPool(min(workers, len(blocks))) as pool:
            if params is None:
                results = pool.run_blocks('brownian_blocks', blocks, sizes, **opts)
            else:
                results = pool.run_blocks('euler_blocks', blocks, sizes, params=params,
                                          record=record, **opts)
    elif params is None:
        results = dict(brownian_blocks(cfg.v0, n_steps, dt, cfg.seed, blocks, sizes))
    else:
        results = dict(euler_blocks(params, cfg.v0, n_steps, dt, cfg.seed, blocks, sizes, record))

    ordered = [results[b] for b in blocks]
    terminal = np.concatenate([r['terminal'] for r in ordered])
    functionals = None
    if record:
        names = [f.name for f in fields(BrownianFunctionals)]
        functionals = BrownianFunctionals.concatenate(
            [BrownianFunctionals(**{k: r[k] for k in names}) for r in ordered])
    return PathEnsemble(terminal=terminal, config=cfg, functionals=functionals)


def euler_maruyama_ensemble(cfg, workers=0):
    """Explicit Euler-Maruyama ensemble of dv = -c[alpha v - a + delta sgn(v)] dt + sqrt(D) dB.

    sgn is evaluated at the pre-step value with sgn(0) = 0. With
    ``cfg.record_functionals`` the functionals of the simulated path itself
    (local time and occupation of the velocity at 0, path integrals) are kept.
    """
    if cfg.params is None:
        raise ParameterError('params', "euler_maruyama_ensemble needs ModelParams; "
                             "use brownian_ensemble_with_functionals for Brownian paths")
    return _run(cfg, workers)


def brownian_ensemble_with_functionals(v0, t, dt, n_paths, seed, workers=0):
    """Standard Brownian paths from v0 with all BrownianFunctionals recorded."""
    cfg = SimConfig(params=None, v0=v0, t_final=t, dt=dt, n_paths=n_paths, seed=seed,
                    record_functionals=True)
    return _run(cfg, workers)


## Girsanov estimator

def girsanov_log_weight(f, v0, t, delta, a, alpha):
    """Log density of the dry-friction law against Brownian motion, path by path.

    For dv = -[alpha v + delta sgn(v) - a] dt + dB and a driftless path B from
    v0, Tanaka's formula and int B dB = (B_t^2 - v0^2 - t)/2 remove every
    stochastic integral:

        log w = delta(|v0| - |b|) + a(b - v0) + 2 delta l - (delta^2 + a^2) t/2
                - a delta t + 2 a delta occupation + alpha t/2 - (alpha^2/2) int_b2
                - alpha delta int_abs_b + a alpha int_b - (alpha/2)(b^2 - v0^2)
    """
    b = np.asarray(f.b_t, dtype=float)
    log_w = (delta * (abs(v0) - np.abs(b)) + a * (b - v0) + 2.0 * delta * np.asarray(f.l_t)
             - 0.5 * (delta**2 + a**2) * t - a * delta * t
             + 2.0 * a * delta * np.asarray(f.occupation))
    if alpha != 0:
        log_w = log_w + (0.5 * alpha * t - 0.5 * alpha**2 * np.asarray(f.int_b2)
                         - alpha * delta * np.asarray(f.int_abs_b)
                         + a * alpha * np.asarray(f.int_b)
                         - 0.5 * alpha * (b**2 - v0**2))
    return GirsanovWeight(log_weight=log_w[()] if np.ndim(log_w) == 0 else log_w)


def girsanov_density(v0, v_grid, t, delta, a, alpha, n_paths=100000, dt=1e-3, seed=0,
                     bandwidth=None, workers=0):
    """Weighted kernel estimate of p(v, t | v0) at each point of *v_grid*.

    Returns (values, diagnostics) where diagnostics holds ess, bandwidth,
    n_paths, dt and seed.
    """
    if not delta > 0:
        raise ParameterError('delta', "must be > 0; got %r" % delta)
    ens = brownian_ensemble_with_functionals(v0, t, dt, n_paths, seed, workers=workers)
    f = ens.functionals
    log_w = girsanov_log_weight(f, v0, t, delta, a, alpha).log_weight
    shift = float(np.max(log_w))
    w = np.exp(log_w - shift)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(f.b_t)
    if not bandwidth > 0:
        raise ParameterError('bandwidth', "must be > 0; got %r" % bandwidth)
    ess = effective_sample_size(w)
    if ess < ESS_WARN_FRACTION * n_paths:
        logger.warning("Girsanov weights degenerate: ESS = %.1f of %d paths; "
                       "use a shorter t or more paths", ess, n_paths)
    values = kernel_sum(f.b_t, w, bandwidth, v_grid) * (math.exp(shift) / n_paths)
    diagnostics = {'ess': ess, 'bandwidth': float(bandwidth), 'n_paths': n_paths,
                   'dt': ens.config.dt_effective, 'seed': seed}
    return values, diagnostics


def girsanov_propagator_estimate(v0, v_grid, t, delta, a, alpha, n_paths=100000, dt=1e-3,
                                 seed=0, bandwidth=None, workers=0):
    """girsanov_density as a DensityCurve, with the ESS diagnostic in meta."""
    values, diag = girsanov_density(v0, v_grid, t, delta, a, alpha, n_paths=n_paths, dt=dt,
                                    seed=seed, bandwidth=bandwidth, workers=workers)
    meta = {'kind': 'propagator_girsanov', 'method': 'girsanov', 'v0': v0, 't': t,
            'delta': delta, 'a': a, 'alpha': alpha}
    meta.update(diag)
    return DensityCurve(v_grid, values, meta)


def ensemble_summary(ens, weights=None):
    """{n, mean, variance, quantiles, seed, dt[, ess]} of the terminal sample."""
    x = ens.terminal
    out = {'n': int(len(x)), 'seed': ens.config.seed, 'dt': ens.config.dt_effective}
    if weights is None:
        out['mean'] = float(np.mean(x))
        out['variance'] = float(np.var(x))
    else:
        w = np.asarray(weights, dtype=float)
        m = float(np.sum(w * x) / np.sum(w))
        out['mean'] = m
        out['variance'] = float(np.sum(w * (x - m)**2) / np.sum(w))
        out['ess'] = effective_sample_size(w)
    qs = np.quantile(x, SUMMARY_QUANTILES)
    out['quantiles'] = {'%g' % (100 * q): float(v) for q, v in zip(SUMMARY_QUANTILES, qs)}
    return out
