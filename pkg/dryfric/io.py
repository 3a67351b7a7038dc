# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Output files: run manifests, JSON documents, ensemble CSV tables, and the
guard that keeps every command inside its output directory.
"""
import os
import sys
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import FORMULA_LEDGER_REVISION, __version__


logger = logging.getLogger(__name__)

ENSEMBLE_FIELDS = ('l_t', 'occupation', 'int_b', 'int_abs_b', 'int_b2')


class OutputPathError(OSError):
    """Raised when a command would write outside its output directory."""


def _to_jsonable(obj):
    # numpy scalars and arrays, tuples from dataclasses
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    raise TypeError("Object of type %s is not JSON serializable" % type(obj).__name__)


def dumps_json(obj):
    """JSON text with sorted keys; floats use the shortest repr that
    round-trips exactly (at most 17 significant digits).
    """
    return json.dumps(obj, default=_to_jsonable, sort_keys=True, indent=1,
                      allow_nan=True) + '\n'


def write_json(path, obj):
    with open(path, 'w', newline='\n') as fh:
        fh.write(dumps_json(obj))
    logger.debug("wrote %s", path)
    return str(path)


class OutputDir(object):
    """An output directory that refuses paths escaping it.

    ``OutputDir(root).path(name)`` returns the absolute path of *name* inside
    *root*, creating *root* if needed.
    """
    def __init__(self, root):
        self.root = os.path.realpath(os.fspath(root))

    def ensure(self):
        os.makedirs(self.root, exist_ok=True)
        return self

    def path(self, name):
        full = os.path.realpath(os.path.join(self.root, os.fspath(name)))
        if os.path.commonpath([full, self.root]) != self.root:
            raise OutputPathError("refusing to write %s outside output directory %s"
                                  % (full, self.root))
        return full


@dataclass
class RunManifest:
    """Record of one CLI run: enough to re-run it and to find what it wrote."""
    command: str
    parameters: dict
    seed: int = None
    versions: dict = field(default_factory=lambda: {
        'dryfric': __version__,
        'formula_ledger': FORMULA_LEDGER_REVISION,
        'numpy': np.__version__,
        'python': sys.version.split()[0],
    })
    outputs: list = field(default_factory=list)

    def add_output(self, path):
        self.outputs.append(os.path.basename(str(path)))
        return path

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, dct):
        return cls(command=dct['command'], parameters=dct['parameters'], seed=dct.get('seed'),
                   versions=dct.get('versions', {}), outputs=list(dct.get('outputs', [])))

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write(self, path):
        return write_json(path, self.to_dict())


def write_ensemble_csv(ens, path):
    """Terminal values (and recorded functionals) one row per path.

    Header ``path_index,terminal[,l_t,occupation,int_b,int_abs_b,int_b2]``;
    reals are written with 17 significant digits.
    """
    columns = [np.arange(len(ens.terminal)), ens.terminal]
    names = ['path_index', 'terminal']
    fmt = ['%d', '%.17g']
    if ens.functionals is not None:
        for name in ENSEMBLE_FIELDS:
            columns.append(getattr(ens.functionals, name))
            names.append(name)
            fmt.append('%.17g')
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, 'w', newline='\n') as fh:
        np.savetxt(fh, table, fmt=fmt, delimiter=',', header=','.join(names), comments='')
    logger.debug("wrote %d paths to %s", len(table), path)
    return str(path)


def read_ensemble_csv(path):
    """{column name: array} of a file written by write_ensemble_csv."""
    data = np.genfromtxt(path, delimiter=',', names=True, dtype=float)
    data = np.atleast_1d(data)
    return {name: np.asarray(data[name]) for name in data.dtype.names}
