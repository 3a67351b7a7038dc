import os
import json

import numpy as np
import pytest

from dryfric import cli, propagator
from dryfric.curves import DensityCurve
from dryfric.io import RunManifest, read_ensemble_csv


def read_curve(path):
    with open(path) as fh:
        return DensityCurve.from_csv(fh.read())


def read_bytes(path):
    with open(path, 'rb') as fh:
        return fh.read()


def test_stationary(tmp_path, capsys):
    out = tmp_path / 'st.csv'
    rc = cli.main(['stationary', '--nu', '1', '--tau', '1', '--y', '0',
                   '--grid-lo', '-2', '--grid-hi', '2', '--points', '5', '--out', str(out)])
    assert rc == cli.EXIT_OK
    curve = read_curve(out)
    assert list(curve.grid) == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert curve.values[2] == pytest.approx(0.7626, abs=1e-4)
    assert curve.values[1] == curve.values[3]

    manifest = RunManifest.read(tmp_path / 'st.manifest.json')
    assert manifest.command == 'stationary'
    assert manifest.outputs == ['st.csv']
    assert manifest.parameters['nu'] == 1.0
    assert 'out' not in manifest.parameters
    text = capsys.readouterr().out
    assert 'normalizer N =' in text
    assert 'quadrature residual' in text


@pytest.mark.parametrize('argv', [
    ['stationary', '--nu', '1', '--tau', '-1', '--y', '0'],
    ['stationary', '--nu', '0', '--tau', '1', '--y', '0'],
    ['stationary', '--tau', '1', '--y', '0'],
    ['stationary', '--nu', '1', '--tau', '1', '--y', '0', '--grid-lo', '1'],
    ['propagator', '--method', 'closed', '--alpha', '1'],
    ['propagator', '--method', 'closed', '--a', '0.5'],
    ['propagator', '--method', 'quadrature', '--alpha', '1'],
    ['simulate', '--delta', '-1'],
    ['simulate', '--workers', '-1'],
    ['validate', '--only', 'no_such_gate'],
    ['no_such_command'],
])
def test_bad_arguments(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == cli.EXIT_BAD_ARGS


def test_version(capsys):
    assert cli.main(['--version']) == cli.EXIT_OK


def test_io_error(tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text('x')
    rc = cli.main(['stationary', '--nu', '1', '--tau', '1', '--y', '0', '--points', '11',
                   '--out', str(blocker / 'st.csv')])
    assert rc == cli.EXIT_IO


def test_missing_params_file(tmp_path):
    rc = cli.main(['--params', str(tmp_path / 'missing.json'), 'figure1'])
    assert rc == cli.EXIT_IO


def test_figure1(tmp_path):
    out = tmp_path / 'fig'
    assert cli.main(['figure1', '--out-dir', str(out)]) == cli.EXIT_OK
    names = ['partly_stuck_tau1', 'stuck_w0', 'stuck_w0.4', 'stuck_w0.9', 'viscous_tau1_y3']
    with open(out / 'index.json') as fh:
        index = json.load(fh)
    assert sorted(index) == names
    for name in names:
        curve = read_curve(out / index[name]['file'])
        assert len(curve) > 100
    assert index['viscous_tau1_y3']['meta']['asymptotic_mean'] == 2.0
    manifest = RunManifest.read(out / 'manifest.json')
    assert sorted(manifest.outputs) == sorted([n + '.csv' for n in names] + ['index.json'])


def test_propagator_closed_and_quadrature_agree(tmp_path):
    grid = ['--grid-lo', '-2', '--grid-hi', '2', '--points', '9']
    closed = tmp_path / 'closed.csv'
    quad = tmp_path / 'quad.csv'
    assert cli.main(['propagator', '--method', 'closed', '--t', '0.5'] + grid
                    + ['--out', str(closed)]) == cli.EXIT_OK
    assert cli.main(['propagator', '--method', 'quadrature', '--t', '0.5'] + grid
                    + ['--out', str(quad)]) == cli.EXIT_OK
    c1 = read_curve(closed)
    c2 = read_curve(quad)
    assert np.allclose(c1.values, propagator.free_density(c1.grid, 0.0, 0.5, 1.0), rtol=1e-12)
    assert np.max(np.abs(c1.values - c2.values)) < 1e-6
    with open(tmp_path / 'quad.meta.json') as fh:
        meta = json.load(fh)
    assert meta['method'] == 'quadrature'
    assert meta['fallback_used'] is False
    manifest = RunManifest.read(tmp_path / 'quad.manifest.json')
    assert manifest.outputs == ['quad.csv', 'quad.meta.json']


def test_simulate_reproducible(tmp_path, capsys):
    argv = ['simulate', '--alpha', '0', '--a', '0', '--delta', '1', '--diffusion', '1',
            '--drift-scale', '1', '--t', '0.2', '--dt', '0.01', '--n-paths', '500',
            '--seed', '4']
    first = tmp_path / 'a.csv'
    second = tmp_path / 'b.csv'
    assert cli.main(argv + ['--out', str(first)]) == cli.EXIT_OK
    assert cli.main(argv + ['--out', str(second)]) == cli.EXIT_OK
    assert read_bytes(first) == read_bytes(second)
    assert 'KS distance to closed form' in capsys.readouterr().out

    with open(tmp_path / 'a.summary.json') as fh:
        summary = json.load(fh)
    assert summary['n'] == 500
    assert 0 <= summary['ks_closed_form'] < 0.1

    # the manifest alone repeats the run
    third = tmp_path / 'c.csv'
    rc = cli.main(['--params', str(tmp_path / 'a.manifest.json'), 'simulate', '--out', str(third)])
    assert rc == cli.EXIT_OK
    assert read_bytes(third) == read_bytes(first)
    assert RunManifest.read(tmp_path / 'c.manifest.json').seed == 4


def test_simulate_record_functionals(tmp_path):
    out = tmp_path / 'f.csv'
    assert cli.main(['simulate', '--t', '0.1', '--dt', '0.01', '--n-paths', '20',
                     '--record-functionals', '--out', str(out)]) == cli.EXIT_OK
    table = read_ensemble_csv(out)
    assert set(table) == {'path_index', 'terminal', 'l_t', 'occupation', 'int_b',
                          'int_abs_b', 'int_b2'}
    assert np.all(np.isfinite(table['l_t']))
    assert np.all((table['occupation'] >= 0) & (table['occupation'] <= 0.1 + 1e-12))


def test_seed_from_environment(tmp_path, monkeypatch):
    argv = ['simulate', '--t', '0.1', '--dt', '0.01', '--n-paths', '50']
    monkeypatch.setenv(cli.SEED_ENV, '7')
    assert cli.main(argv + ['--out', str(tmp_path / 'env.csv')]) == cli.EXIT_OK
    monkeypatch.delenv(cli.SEED_ENV)
    assert cli.main(argv + ['--seed', '7', '--out', str(tmp_path / 'flag.csv')]) == cli.EXIT_OK
    assert read_bytes(tmp_path / 'env.csv') == read_bytes(tmp_path / 'flag.csv')
    assert RunManifest.read(tmp_path / 'env.manifest.json').seed == 7


def test_flat_params_file(tmp_path):
    params = tmp_path / 'p.json'
    params.write_text(json.dumps({'nu': 0.5, 'tau': 2, 'y': 1, 'grid-lo': -1, 'grid-hi': 3,
                                  'points': 21}))
    out = tmp_path / 's.csv'
    assert cli.main(['--params', str(params), 'stationary', '--out', str(out)]) == cli.EXIT_OK
    curve = read_curve(out)
    assert curve.grid[0] == -1.0 and curve.grid[-1] == 3.0 and len(curve) == 21
    # flags given on the command line win
    assert cli.main(['--params', str(params), 'stationary', '--points', '11',
                     '--out', str(out)]) == cli.EXIT_OK
    assert len(read_curve(out)) == 11

    params.write_text(json.dumps({'nu': 0.5, 'tau': 2, 'y': 1, 'colour': 'red'}))
    assert cli.main(['--params', str(params), 'stationary']) == cli.EXIT_BAD_ARGS


def test_validate_command(tmp_path, capsys):
    report = tmp_path / 'report.json'
    rc = cli.main(['validate', '--only', 'figure1', 'partly_stuck_mass', '--report', str(report)])
    assert rc == cli.EXIT_OK
    with open(report) as fh:
        data = json.load(fh)
    assert data['passed'] is True
    assert [g['name'] for g in data['gates']] == ['partly_stuck_mass', 'figure1_values']
    assert (tmp_path / 'report.manifest.json').exists()
    assert 'figure1_values' in capsys.readouterr().out


def test_failed_gate_exit_code(tmp_path, monkeypatch):
    from dryfric import validate

    def failing(ctx):
        return [validate.Gate('always_fails', 'fast', 1.0, 0.0, False)]
    monkeypatch.setattr(validate, 'GATES', (('always_fails', 'fast', failing),))
    rc = cli.main(['validate', '--report', str(tmp_path / 'r.json')])
    assert rc == cli.EXIT_GATE_FAILED


def test_forced_quadrature_command(tmp_path):
    out = tmp_path / 'forced.csv'
    rc = cli.main(['propagator', '--method', 'quadrature', '--a', '0.5', '--t', '1',
                   '--grid-lo', '-1', '--grid-hi', '1', '--points', '5', '--out', str(out)])
    assert rc == cli.EXIT_OK
    curve = read_curve(out)
    expected = [propagator.propagator_forced(propagator.PropagatorQuery(0.0, v, 1.0, 1.0, 0.5),
                                             check_gate=False) for v in curve.grid]
    assert np.allclose(curve.values, expected, rtol=1e-10)


def test_stationary_oracle_failure_exit_code(tmp_path, monkeypatch):
    from dryfric import validate, stats

    def unconverged(*args, **kwargs):
        return stats.QuadratureResult(value=1.0, error_estimate=1.0, panels=500, converged=False)
    monkeypatch.setattr(validate.stats, 'integrate_adaptive', unconverged)
    rc = cli.main(['stationary', '--nu', '1', '--tau', '1', '--y', '0',
                   '--out', str(tmp_path / 'st.csv')])
    assert rc == cli.EXIT_NUMERIC


def test_stationary_residual_at_tiny_noise(tmp_path, capsys):
    rc = cli.main(['stationary', '--nu', '1e-9', '--tau', '1', '--y', '5',
                   '--out', str(tmp_path / 'st.csv')])
    assert rc == cli.EXIT_OK
    line = [l for l in capsys.readouterr().out.splitlines() if 'quadrature residual' in l][0]
    assert float(line.split('=')[-1]) < 1e-8


def test_validate_writes_inside_report_directory(tmp_path, monkeypatch):
    from dryfric import validate

    seen = []

    def writer(ctx):
        seen.append(ctx.work_dir)
        return [validate.Gate('writer', 'fast', 0.0, 0.0, True)]
    monkeypatch.setattr(validate, 'GATES', (('writer', 'fast', writer),))
    report_dir = tmp_path / 'reports'
    rc = cli.main(['validate', '--report', str(report_dir / 'r.json')])
    assert rc == cli.EXIT_OK
    assert seen == [os.path.join(os.path.realpath(report_dir), 'r.work')]
