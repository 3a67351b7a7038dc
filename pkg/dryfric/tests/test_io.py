import json

import numpy as np
import pytest

from dryfric import FORMULA_LEDGER_REVISION, __version__
from dryfric.io import (OutputDir, OutputPathError, RunManifest, dumps_json, write_json,
                        write_ensemble_csv, read_ensemble_csv, ENSEMBLE_FIELDS)
from dryfric.model import ModelParams
from dryfric.simulate import SimConfig, euler_maruyama_ensemble


def test_output_dir_guard(tmp_path):
    out = OutputDir(tmp_path / 'out').ensure()
    assert (tmp_path / 'out').is_dir()
    path = out.path('stationary.csv')
    assert path == str((tmp_path / 'out' / 'stationary.csv').resolve())
    assert out.path('sub/x.csv').startswith(out.root)
    for bad in ['../escape.csv', '/etc/passwd', 'sub/../../x.csv']:
        with pytest.raises(OutputPathError):
            out.path(bad)
    assert issubclass(OutputPathError, OSError)


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest('simulate', {'alpha': 1.0, 'n_paths': 10}, seed=3)
    assert manifest.add_output(str(tmp_path / 'ens.csv')) == str(tmp_path / 'ens.csv')
    assert manifest.outputs == ['ens.csv']
    assert manifest.versions['dryfric'] == __version__
    assert manifest.versions['formula_ledger'] == FORMULA_LEDGER_REVISION
    path = manifest.write(tmp_path / 'ens.manifest.json')
    again = RunManifest.read(path)
    assert again == manifest
    with open(path) as fh:
        raw = json.load(fh)
    assert raw['command'] == 'simulate'
    assert raw['seed'] == 3


def test_dumps_json_numpy():
    text = dumps_json({'b': np.float64(0.1), 'a': np.arange(3), 'n': np.int32(4),
                       'ok': np.bool_(True), 'p': ModelParams(0.0, 0.0, 1.0, 1.0)})
    data = json.loads(text)
    assert data['b'] == 0.1
    assert data['a'] == [0, 1, 2]
    assert data['n'] == 4
    assert data['ok'] is True
    assert data['p']['delta'] == 1.0
    # sorted keys
    assert text.index('"a"') < text.index('"b"')
    with pytest.raises(TypeError):
        dumps_json({'x': object()})


def test_write_json(tmp_path):
    path = write_json(tmp_path / 'x.json', {'x': 1.0 / 3.0})
    with open(path) as fh:
        assert json.load(fh)['x'] == 1.0 / 3.0


@pytest.mark.parametrize('record', [False, True])
def test_ensemble_csv_round_trip(tmp_path, record):
    cfg = SimConfig(params=ModelParams(1.0, 0.2, 1.0, 1.0), v0=0.1, t_final=0.3, dt=0.01,
                    n_paths=64, seed=2, record_functionals=record)
    ens = euler_maruyama_ensemble(cfg)
    path = write_ensemble_csv(ens, tmp_path / 'ens.csv')
    with open(path) as fh:
        header = fh.readline().strip().split(',')
    expected = ['path_index', 'terminal'] + (list(ENSEMBLE_FIELDS) if record else [])
    assert header == expected
    table = read_ensemble_csv(path)
    assert np.array_equal(table['path_index'], np.arange(64))
    # 17 significant digits reproduce the doubles exactly
    assert np.array_equal(table['terminal'], ens.terminal)
    if record:
        for name in ENSEMBLE_FIELDS:
            assert np.array_equal(table[name], getattr(ens.functionals, name))


def test_ensemble_csv_single_path(tmp_path):
    cfg = SimConfig(params=ModelParams(0.0, 0.0, 1.0, 1.0), v0=0.0, t_final=0.1, dt=0.1,
                    n_paths=1, seed=0)
    ens = euler_maruyama_ensemble(cfg)
    table = read_ensemble_csv(write_ensemble_csv(ens, tmp_path / 'one.csv'))
    assert table['terminal'].shape == (1,)
    assert table['terminal'][0] == ens.terminal[0]
