# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
import io
import json
import logging

import numpy as np
from scipy.integrate import trapezoid, cumulative_trapezoid

from .model import ParameterError


logger = logging.getLogger(__name__)

CSV_HEADER = 'v,density'


class DensityCurve(object):
    """A real function sampled on a strictly increasing velocity grid.

    This is the output format for every PDF, CDF and propagator slice in the
    package.

    Parameters
    ----------
    grid : array-like
        Strictly increasing sample points.
    values : array-like
        Non-negative function values, same length as *grid*.
    meta : dict | None
        JSON-compatible provenance record (parameters, quadrature diagnostics,
        ESS, ...).
    """
    def __init__(self, grid, values, meta=None):
        grid = np.array(grid, dtype=float)
        values = np.array(values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ParameterError('grid', "grid and values must be 1-D arrays of equal length "
                                 "(got %s and %s)" % (grid.shape, values.shape))
        if len(grid) < 2:
            raise ParameterError('grid', "need at least two grid points")
        if not np.all(np.diff(grid) > 0):
            raise ParameterError('grid', "must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ParameterError('values', "contains non-finite entries")
        if np.any(values < 0):
            raise ParameterError('values', "contains negative entries (min %g)" % values.min())
        grid.flags.writeable = False
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.meta = {} if meta is None else dict(meta)

    def __len__(self):
        return len(self.grid)

    def __repr__(self):
        return "<DensityCurve %d points on [%g, %g] kind=%s>" % (
            len(self.grid), self.grid[0], self.grid[-1], self.meta.get('kind', '?'))

    def __call__(self, v):
        """Linear interpolation of the curve at *v* (0 outside the grid)."""
        return np.interp(v, self.grid, self.values, left=0.0, right=0.0)

    def integral(self):
        """Trapezoid integral over the grid."""
        return float(trapezoid(self.values, self.grid))

    def normalized(self):
        total = self.integral()
        if total <= 0:
            raise ParameterError('values', "cannot normalize a curve with zero integral")
        meta = dict(self.meta, normalized_from=total)
        return DensityCurve(self.grid, self.values / total, meta)

    def cdf(self):
        """Cumulative trapezoid integral, starting at 0 on the first grid point."""
        cum = cumulative_trapezoid(self.values, self.grid, initial=0.0)
        meta = dict(self.meta, kind='cdf_of_%s' % self.meta.get('kind', 'curve'))
        return DensityCurve(self.grid, np.maximum.accumulate(cum), meta)

    def mean(self):
        return float(trapezoid(self.grid * self.values, self.grid) / self.integral())

    def variance(self):
        m = self.mean()
        return float(trapezoid((self.grid - m)**2 * self.values, self.grid) / self.integral())

    def argmax(self):
        return float(self.grid[np.argmax(self.values)])

    ## Serialization

    def to_csv(self):
        buf = io.StringIO()
        buf.write(CSV_HEADER + '\n')
        for v, d in zip(self.grid, self.values):
            buf.write('%.17g,%.17g\n' % (v, d))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, meta=None):
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != CSV_HEADER:
            raise ValueError("missing '%s' header" % CSV_HEADER)
        rows = [line.split(',') for line in lines[1:] if line.strip()]
        data = np.array(rows, dtype=float)
        return cls(data[:, 0], data[:, 1], meta)

    def to_dict(self):
        return {'grid': self.grid.tolist(), 'values': self.values.tolist(), 'meta': self.meta}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        dct = json.loads(text)
        return cls(dct['grid'], dct['values'], dct.get('meta'))

    def write(self, path):
        """Write the curve as CSV, or as JSON when *path* ends in '.json'."""
        path = str(path)
        text = self.to_json() if path.endswith('.json') else self.to_csv()
        with open(path, 'w', newline='\n') as fh:
            fh.write(text)
        logger.debug("wrote %r to %s", self, path)
        return path
