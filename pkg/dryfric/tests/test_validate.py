import json
import math

import pytest

from dryfric import validate, analytic
from dryfric.io import dumps_json
from dryfric.model import ReducedParams


def test_quadrature_normalizer_oracle():
    r = ReducedParams.stationary(0.1, 2.0, 0.5)
    assert validate.quadrature_log_normalizer(r) == pytest.approx(
        analytic.log_stationary_normalizer(r), abs=1e-9)


def test_fast_subset():
    report = validate.run_validation('fast', seed=0,
                                     only=['figure1', 'partly_stuck_mass', 'viscous_convergence'])
    names = [g['name'] for g in report['gates']]
    assert names == ['partly_stuck_mass', 'viscous_convergence', 'viscous_mean', 'figure1_values']
    assert report['passed'] is True
    assert report['level'] == 'fast'
    for g in report['gates']:
        assert set(g) == {'name', 'level', 'measured', 'threshold', 'passed', 'detail'}
        assert g['level'] == 'fast'
        assert 'elapsed_s' in g['detail']
    # the report is plain JSON
    assert json.loads(dumps_json(report))['passed'] is True


def test_full_gates_skipped_at_fast_level():
    report = validate.run_validation('fast', only=['em_vs_closed_form', 'girsanov'])
    assert report['gates'] == []
    assert report['passed'] is True


def test_partly_stuck_mass_grows():
    gate, = validate.gate_partly_stuck_mass(validate.ValidationContext())
    masses = gate.detail['p_av_positive']
    assert masses == sorted(masses)
    assert gate.passed


@pytest.mark.parametrize('kwargs', [
    {'level': 'medium'},
    {'level': 'fast', 'only': ['no_such_gate']},
])
def test_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        validate.run_validation(**kwargs)


def test_raising_gate_is_recorded(monkeypatch):
    def broken(ctx):
        raise ZeroDivisionError("boom")
    monkeypatch.setattr(validate, 'GATES', (('broken', 'fast', broken),))
    report = validate.run_validation('fast')
    assert report['passed'] is False
    gate, = report['gates']
    assert gate['name'] == 'broken'
    assert gate['passed'] is False
    assert gate['detail']['error'] == 'ZeroDivisionError: boom'


def test_trivariate_gate_reports_no_fallback():
    gate, = validate.gate_trivariate(validate.ValidationContext())
    assert gate.passed
    assert gate.measured <= 1e-6
    assert gate.detail['fallback_active'] is False
    assert gate.detail['failure'] is None


def test_normalizer_oracle_at_tiny_noise():
    r = ReducedParams.stationary(1e-9, 1.0, 5.0)
    assert validate.quadrature_log_normalizer(r) == pytest.approx(
        analytic.log_stationary_normalizer(r), abs=1e-8)


def test_normalizer_oracle_refuses_unconverged(monkeypatch):
    from dryfric import stats

    def unconverged(*args, **kwargs):
        return stats.QuadratureResult(value=1.0, error_estimate=1.0, panels=500, converged=False)
    monkeypatch.setattr(validate.stats, 'integrate_adaptive', unconverged)
    with pytest.raises(stats.ConvergenceError):
        validate.quadrature_log_normalizer(ReducedParams.stationary(1.0, 1.0, 0.0))


def test_reproducibility_gate_writes_in_work_dir(tmp_path):
    ctx = validate.ValidationContext(level='full', seed=1, work_dir=str(tmp_path))
    gate, = validate.gate_reproducibility(ctx)
    assert gate.passed
    names = sorted(p.name for p in (tmp_path / 'reproducibility').iterdir())
    assert names == ['first.csv', 'manifest.json', 'second.csv']
