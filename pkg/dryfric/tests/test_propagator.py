import math

import numpy as np
import pytest
import scipy.integrate
from scipy.stats import norm

from dryfric import propagator, simulate, stats
from dryfric.analytic import gaussian_kernel
from dryfric.model import ModelParams, ParameterError
from dryfric.propagator import PropagatorQuery


def test_free_value_at_origin():
    value = propagator.propagator_free(PropagatorQuery(v0=0.0, v=0.0, t=1.0, delta=1.0))
    # gamma_1(0) e^{-1/2} + F(1)
    assert value == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi) + 0.8413447460685429,
                                  rel=1e-12)
    assert value == pytest.approx(1.0833, abs=1e-4)


def test_query_validation():
    with pytest.raises(ParameterError) as exc:
        PropagatorQuery(v0=0.0, v=0.0, t=0.0, delta=1.0)
    assert exc.value.field == 't'
    with pytest.raises(ParameterError) as exc:
        PropagatorQuery(v0=0.0, v=0.0, t=1.0, delta=-1.0)
    assert exc.value.field == 'delta'
    with pytest.raises(ParameterError):
        propagator.propagator_free(PropagatorQuery(0.0, 0.0, 1.0, 1.0, a=0.5))


@pytest.mark.parametrize('v0, t, delta', [(0.0, 0.1, 1.0), (0.7, 1.0, 0.5), (-1.0, 10.0, 2.0)])
def test_free_normalized(v0, t, delta):
    f = lambda v: float(propagator.free_density(v, v0, t, delta))
    st = math.sqrt(t)
    edges = [-np.inf] + sorted({0.0, v0, v0 - 4 * st, v0 + 4 * st}) + [np.inf]
    total = sum(scipy.integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                for lo, hi in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-8)


def test_free_detailed_balance():
    rng = np.random.default_rng(3)
    for i in range(30):
        v0, v = rng.uniform(-3, 3, size=2)
        t = rng.uniform(0.1, 5.0)
        d = rng.uniform(0.5, 2.0)
        lhs = propagator.free_density(v, v0, t, d) * math.exp(-2 * d * abs(v0))
        rhs = propagator.free_density(v0, v, t, d) * math.exp(-2 * d * abs(v))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_free_chapman_kolmogorov():
    assert propagator.chapman_kolmogorov_residual(0.0, 0.2, 0.5, 0.5, 1.0) < 1e-4
    assert propagator.chapman_kolmogorov_residual(1.0, -1.0, 0.25, 0.75, 2.0) < 1e-4


def test_free_long_time_limit():
    v = np.linspace(-3, 3, 61)
    assert np.max(np.abs(propagator.free_density(v, 0.3, 200.0, 1.0) - np.exp(-2 * np.abs(v)))) < 1e-4


def test_free_cdf_matches_density():
    v0, t, delta = 0.4, 0.8, 1.3
    grid = np.linspace(-10, 10, 40001)
    cum = scipy.integrate.cumulative_trapezoid(propagator.free_density(grid, v0, t, delta), grid,
                                               initial=0.0)
    cdf = propagator.free_cdf(v0, t, delta, grid)
    assert np.max(np.abs(cdf - cum)) < 1e-6
    assert propagator.free_cdf(v0, t, delta, 40.0) == pytest.approx(1.0, abs=1e-14)
    assert propagator.free_cdf(v0, t, delta, -40.0) == pytest.approx(0.0, abs=1e-14)


def test_free_curve():
    curve = propagator.free_curve(0.0, 1.0, 1.0)
    assert curve.meta['method'] == 'closed'
    assert curve.integral() == pytest.approx(1.0, abs=1e-5)


def test_joint_density_marginal():
    # integral over l of the continuous part plus the atom gives gamma_t(b - v0)
    t = 1.0
    for v0, b in [(0.5, 0.3), (0.5, -0.4), (-0.7, -1.1), (0.0, 0.9)]:
        cont = scipy.integrate.quad(lambda l: propagator.joint_density_bl(v0, b, l, t), 0, np.inf)[0]
        atom = float(propagator.atom_weight(abs(v0), abs(b), t)) if v0 * b > 0 else 0.0
        assert cont + atom == pytest.approx(gaussian_kernel(t, b - v0), rel=1e-8)
    with pytest.raises(ParameterError):
        propagator.joint_density_bl(0.0, 0.0, -0.1, 1.0)


def test_joint_bin_mass_sums_to_one():
    b_edges = np.linspace(-8, 8.5, 166)
    l_edges = np.linspace(0, 6, 61)
    for v0 in (0.5, -0.5, 0.0):
        mass = propagator.joint_bl_bin_mass(v0, b_edges, l_edges, 1.0)
        assert mass.shape == (165, 60)
        assert np.all(mass >= 0)
        assert mass.sum() == pytest.approx(1.0, abs=1e-8)
    # the b-marginal is the Gaussian
    mass = propagator.joint_bl_bin_mass(0.5, b_edges, l_edges, 1.0).sum(axis=1)
    expected = np.diff(norm.cdf(b_edges - 0.5))
    assert np.allclose(mass, expected, atol=1e-10)


def test_trivariate_marginalization():
    points = ((0.5, 0.3, 1.0), (0.0, -0.4, 1.0), (-0.7, 0.9, 1.0))
    for v0, b, t in points:
        res = propagator.marginalize_trivariate(v0, b, t)
        assert res.value == pytest.approx(gaussian_kernel(t, b - v0), abs=1e-6)
    outcome = propagator.trivariate_gate(points=points)
    assert outcome.passed
    assert len(outcome.errors) == 3


@pytest.mark.parametrize('v0, v', [(0.0, 0.0), (0.5, 1.0), (0.5, -0.7), (-1.2, 0.4)])
def test_forced_reduces_to_free(v0, v):
    q = PropagatorQuery(v0=v0, v=v, t=1.0, delta=1.0, a=0.0)
    forced = propagator.propagator_forced(q, check_gate=False)
    assert forced == pytest.approx(propagator.propagator_free(q), abs=1e-6)


def test_forced_normalized():
    v0, t, delta, a = 0.0, 1.0, 1.0, 0.5
    f = lambda v: propagator.propagator_forced(PropagatorQuery(v0, v, t, delta, a), check_gate=False)
    res = stats.integrate_adaptive(f, -np.inf, np.inf, abs_tol=1e-10, rel_tol=1e-9,
                                   points=[0.0, 0.5, -3.0, 3.0])
    assert res.value == pytest.approx(1.0, abs=1e-5)


def test_forced_mirror_symmetry():
    # p(v | v0; a) = p(-v | -v0; -a)
    q1 = PropagatorQuery(0.3, 0.8, 0.7, 1.0, a=0.4)
    q2 = PropagatorQuery(-0.3, -0.8, 0.7, 1.0, a=-0.4)
    assert propagator.propagator_forced(q1, check_gate=False) == pytest.approx(
        propagator.propagator_forced(q2, check_gate=False), rel=1e-10)


def test_forced_curve_against_simulation():
    a = 0.5
    curve = propagator.forced_curve(0.0, 1.0, 1.0, a, grid=np.linspace(-6, 7, 261), check_gate=False)
    assert curve.meta['converged']
    assert curve.meta['fallback_used'] is False
    cdf = curve.cdf()
    params = ModelParams(alpha=0.0, a=a, delta=1.0, diffusion=1.0, drift_scale=1.0)
    ens = simulate.euler_maruyama_ensemble(simulate.SimConfig(params, 0.0, 1.0, 1e-3, 20000, seed=5))
    ks = stats.ks_distance(ens.terminal, lambda x: np.interp(x, cdf.grid, cdf.values, left=0, right=1))
    assert ks < 0.02  # 1.95/sqrt(n) = 0.014 plus time-step bias


def test_h_kernel_first_passage_cdf():
    # P[hitting time of level 1.5 <= 2] = 2 P[N > 1.5 / sqrt(2)]
    total, _ = scipy.integrate.quad(lambda s: propagator.h_kernel(s, 1.5), 0.0, 2.0,
                                    epsabs=1e-13, epsrel=1e-12)
    assert total == pytest.approx(2.0 * norm.sf(1.5 / math.sqrt(2.0)), abs=1e-10)
    assert propagator.h_kernel(1.0, -0.7) == propagator.h_kernel(1.0, 0.7)
    with pytest.raises(ParameterError):
        propagator.h_kernel(0.0, 1.0)


def test_trivariate_negative_branch_integrates_to_joint():
    v0, b, l, t = 0.4, -0.3, 0.2, 1.0
    total, _ = scipy.integrate.quad(lambda occ: propagator.trivariate_density(v0, b, l, occ, t),
                                    0.0, t, epsabs=1e-13, epsrel=1e-11)
    assert total == pytest.approx(propagator.joint_density_bl(v0, b, l, t), rel=1e-7)


def test_trivariate_mirror_and_domain():
    left = propagator.trivariate_density(-0.4, 0.3, 0.2, 0.35, 1.0)
    right = propagator.trivariate_density(0.4, -0.3, 0.2, 0.65, 1.0)
    assert left > 0
    assert left == pytest.approx(right, rel=1e-14)
    with pytest.raises(ParameterError):
        propagator.trivariate_density(0.4, 0.3, 0.2, 1.0, 1.0)
    with pytest.raises(ParameterError):
        propagator.trivariate_density(0.4, 0.3, -0.1, 0.5, 1.0)


def test_trivariate_gate_default_points():
    outcome = propagator.trivariate_gate()
    assert outcome.failure is None
    assert len(outcome.errors) == len(propagator.DEFAULT_GATE_POINTS) == 20
    assert outcome.max_error <= propagator.TRIVARIATE_GATE_TOL
    assert outcome.passed


@pytest.mark.parametrize('v0, b', [(0.0, -1.1), (0.0, 0.3), (0.5, 1.6), (-0.7, -1.1)])
def test_marginalization_near_occupation_ends(v0, b):
    res = propagator.marginalize_trivariate(v0, b, 1.0)
    assert res.converged
    assert res.value == pytest.approx(gaussian_kernel(1.0, b - v0), abs=1e-8)


def test_trivariate_gate_failure_is_recorded():
    outcome = propagator.trivariate_gate(points=((0.0, 0.3, -1.0),))
    assert not outcome.passed
    assert outcome.errors == (math.inf,)
    assert outcome.failure.startswith('ParameterError')


def test_forced_falls_back_when_gate_fails(monkeypatch):
    failed = propagator.GateOutcome(passed=False, max_error=math.inf, errors=(math.inf,),
                                    failure='forced')
    monkeypatch.setattr(propagator, 'trivariate_gate', lambda: failed)
    grid = np.linspace(-1.0, 1.0, 5)
    curve = propagator.forced_curve(0.0, 1.0, 1.0, 0.5, grid=grid, n_paths=4096, dt=1e-2, seed=2)
    assert curve.meta['fallback_used'] is True
    assert curve.meta['method'] == 'girsanov'
    assert np.all(curve.values > 0)


def test_joint_density_point():
    point = propagator.JointDensityPoint(b=-0.5, l=0.5)
    assert propagator.joint_density(point, 1.0) == pytest.approx(
        3.0 / math.sqrt(2 * math.pi) * math.exp(-1.125), rel=1e-12)
    point = propagator.JointDensityPoint(b=-1.0, l=0.5, occupation=0.3)
    assert propagator.joint_density(point, 1.0) == pytest.approx(
        2.0 * propagator.h_kernel(0.3, 0.5) * propagator.h_kernel(0.7, 1.5), rel=1e-12)
    with pytest.raises(ParameterError):
        propagator.JointDensityPoint(b=0.0, l=-0.1)


def test_forced_mean_increases_with_force():
    grid = np.linspace(-8.0, 8.0, 321)
    means = {a: propagator.forced_curve(0.0, 1.0, 1.0, a, grid=grid, check_gate=False).mean()
             for a in (-0.5, 0.0, 0.5)}
    assert means[-0.5] < means[0.0] < means[0.5]
    assert means[0.0] == pytest.approx(0.0, abs=1e-7)
    assert means[-0.5] == pytest.approx(-means[0.5], abs=1e-7)


def test_free_short_time_concentration():
    t = 1e-3
    curve = propagator.free_curve(0.7, t, 1.0)
    assert curve.integral() == pytest.approx(1.0, abs=1e-6)
    # drift -delta for a path that stays positive
    assert curve.mean() == pytest.approx(0.7 - t, abs=1e-5)
    assert curve.variance() == pytest.approx(t, rel=1e-3)
    at_zero = propagator.free_curve(0.0, t, 1.0)
    assert at_zero.mean() == pytest.approx(0.0, abs=1e-10)
    assert at_zero.variance() < t
