# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Command-line interface.

::

    dryfric stationary --nu 1 --tau 1 --y 0 --out stationary.csv
    dryfric figure1 --out-dir figure1/
    dryfric propagator --method closed --v0 0 --t 1 --delta 1 --out p.csv
    dryfric simulate --alpha 0 --a 0 --delta 1 --diffusion 1 --drift-scale 1 --n-paths 200000
    dryfric validate --level fast --report report.json

Every command writes a ``<output>.manifest.json`` next to its output. A
manifest can be passed back with ``--params`` to repeat the run.

Exit codes: 0 success, 1 validation failure, 2 bad arguments, 3 numeric
non-convergence, 4 I/O error.
"""
import os
import sys
import json
import math
import logging
import argparse

import numpy as np

from . import __version__, log
from . import analytic, propagator, simulate, stats, validate
from .model import ModelParams, ReducedParams, ParameterError
from .stats import ConvergenceError
from .simulate import SimulationError
from .io import OutputDir, RunManifest, write_json, write_ensemble_csv


logger = logging.getLogger(__name__)

SEED_ENV = 'DRYFRIC_SEED'

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_BAD_ARGS = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# flags that only say where output goes; not part of a run's parameters
_OUTPUT_FLAGS = ('out', 'out_dir', 'report')
_GLOBAL_FLAGS = ('verbose', 'quiet', 'params', 'command', 'func')

_handler = None


class UsageError(Exception):
    """argparse reported an error; carries its exit status."""
    def __init__(self, status, message=None):
        Exception.__init__(self, message)
        self.status = status


class _Parser(argparse.ArgumentParser):
    def exit(self, status=0, message=None):
        if message:
            self._print_message(message, sys.stderr)
        raise UsageError(status, message)


def _add_grid_flags(p):
    p.add_argument('--grid-lo', type=float, help="lower end of the output grid")
    p.add_argument('--grid-hi', type=float, help="upper end of the output grid")
    p.add_argument('--points', type=int, default=analytic.DEFAULT_POINTS,
                   help="number of grid points (default %(default)s)")


def build_parser():
    parser = _Parser(prog='dryfric', description="Langevin dynamics with dry friction: "
                     "stationary laws, propagators, simulation and validation.")
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help="more log output (repeat for debug)")
    parser.add_argument('-q', '--quiet', action='store_true', help="only log errors")
    parser.add_argument('--params', metavar='FILE',
                        help="flat JSON object (or run manifest) supplying flag defaults")
    parser.add_argument('--workers', type=int, default=0,
                        help="worker processes for simulation (0 = in-process)")
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('stationary', help="stationary density on a grid")
    p.add_argument('--nu', type=float, required=True)
    p.add_argument('--tau', type=float, required=True)
    p.add_argument('--y', type=float, required=True)
    _add_grid_flags(p)
    p.add_argument('--out', default='stationary.csv')
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser('figure1', help="limit-law curves of the three regimes")
    p.add_argument('--out-dir', default='figure1')
    p.set_defaults(func=cmd_figure1)

    p = sub.add_parser('propagator', help="transition density p(v, t | v0)")
    p.add_argument('--v0', type=float, default=0.0)
    p.add_argument('--t', type=float, default=1.0)
    p.add_argument('--delta', type=float, default=1.0)
    p.add_argument('--a', type=float, default=0.0)
    p.add_argument('--alpha', type=float, default=0.0)
    p.add_argument('--method', choices=('closed', 'quadrature', 'girsanov'), default='closed')
    _add_grid_flags(p)
    p.add_argument('--n-paths', type=int, default=100000)
    p.add_argument('--dt', type=float, default=1e-3)
    p.add_argument('--bandwidth', type=float, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', default='propagator.csv')
    p.set_defaults(func=cmd_propagator)

    p = sub.add_parser('simulate', help="Euler-Maruyama ensemble of terminal velocities")
    p.add_argument('--alpha', type=float, default=0.0)
    p.add_argument('--a', type=float, default=0.0)
    p.add_argument('--delta', type=float, default=1.0)
    p.add_argument('--diffusion', type=float, default=1.0)
    p.add_argument('--drift-scale', type=float, default=0.5)
    p.add_argument('--v0', type=float, default=0.0)
    p.add_argument('--t', type=float, default=1.0)
    p.add_argument('--dt', type=float, default=1e-3)
    p.add_argument('--n-paths', type=int, default=10000)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--record-functionals', action='store_true')
    p.add_argument('--out', default='simulate.csv')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('validate', help="run the acceptance gates")
    p.add_argument('--level', choices=validate.LEVELS, default='fast')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--only', nargs='+', metavar='GATE', default=None)
    p.add_argument('--report', default='validation_report.json')
    p.set_defaults(func=cmd_validate)

    return parser, sub.choices


def load_params_file(path):
    """Flag defaults from a flat JSON object or from a run manifest."""
    with open(path) as fh:
        dct = json.load(fh)
    if not isinstance(dct, dict):
        raise ParameterError('params', "%s must hold a JSON object" % path)
    if 'command' in dct and isinstance(dct.get('parameters'), dict):
        dct = dct['parameters']
    return {k.replace('-', '_'): v for k, v in dct.items()}


def parse_args(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--params')
    early, _ = pre.parse_known_args(argv)
    command = next((tok for tok in argv if tok in subparsers), None)
    if early.params is not None and command is not None:
        defaults = load_params_file(early.params)
        sub = subparsers[command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known - {'workers'})
        if unknown:
            raise ParameterError('params', "unknown keys for %s: %s" % (command, unknown))
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**{k: v for k, v in defaults.items() if k in known})
        if 'workers' in defaults:
            parser.set_defaults(workers=defaults['workers'])
    args = parser.parse_args(argv)
    if getattr(args, 'seed', 'absent') is None:
        args.seed = int(os.environ.get(SEED_ENV, 0))
    return args


def run_parameters(args):
    """Resolved flags of the subcommand, without output locations."""
    skip = set(_OUTPUT_FLAGS) | set(_GLOBAL_FLAGS)
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def install_log_handler(verbose=0, quiet=False):
    global _handler
    root = logging.getLogger()
    if _handler is not None:
        _handler.flush_records()
        root.removeHandler(_handler)
    _handler = log.SortedLogHandler()
    _handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    root.addHandler(_handler)
    if quiet:
        level = logging.ERROR
    else:
        level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    root.setLevel(level)
    log.log_exceptions()
    return _handler


def _output(path):
    """(OutputDir, absolute file path) for an --out flag."""
    path = os.path.abspath(path)
    out = OutputDir(os.path.dirname(path)).ensure()
    return out, out.path(os.path.basename(path))


def _manifest_path(out, path):
    return out.path(os.path.splitext(os.path.basename(path))[0] + '.manifest.json')


def _grid(args, default):
    if args.grid_lo is None and args.grid_hi is None:
        return default(args.points)
    if args.grid_lo is None or args.grid_hi is None:
        raise ParameterError('grid-lo' if args.grid_lo is None else 'grid-hi',
                             "give both --grid-lo and --grid-hi")
    if not args.grid_hi > args.grid_lo:
        raise ParameterError('grid-hi', "must exceed --grid-lo")
    if args.points < 2:
        raise ParameterError('points', "must be >= 2")
    return np.linspace(args.grid_lo, args.grid_hi, args.points)


## Commands

def cmd_stationary(args):
    r = ReducedParams.stationary(args.nu, args.tau, args.y)
    grid = _grid(args, lambda n: analytic.default_grid(r, n))
    curve = analytic.stationary_pdf(r, grid)
    out, path = _output(args.out)
    manifest = RunManifest(command='stationary', parameters=run_parameters(args))
    curve.write(manifest.add_output(path))
    manifest.write(_manifest_path(out, path))

    log_n = analytic.log_stationary_normalizer(r)
    residual = abs(math.expm1(log_n - validate.quadrature_log_normalizer(r)))
    print("normalizer N = %.17g (log N = %.17g)" % (math.exp(log_n), log_n))
    print("quadrature residual |N/N_quad - 1| = %.3g" % residual)
    return EXIT_OK


def cmd_figure1(args):
    out = OutputDir(os.path.abspath(args.out_dir)).ensure()
    manifest = RunManifest(command='figure1', parameters=run_parameters(args))
    index = {}
    for name, curve in sorted(analytic.figure1_curves().items()):
        fname = name + '.csv'
        curve.write(manifest.add_output(out.path(fname)))
        index[name] = {'file': fname, 'meta': curve.meta}
    write_json(manifest.add_output(out.path('index.json')), index)
    manifest.write(out.path('manifest.json'))
    print("wrote %d curves to %s" % (len(index), out.root))
    return EXIT_OK


def _check_method(args):
    if args.method == 'closed' and (args.alpha != 0 or args.a != 0):
        bad = 'alpha' if args.alpha != 0 else 'a'
        raise ParameterError(bad, "--method closed needs alpha = a = 0; use "
                             "--method quadrature (alpha = 0) or --method girsanov")
    if args.method == 'quadrature' and args.alpha != 0:
        raise ParameterError('alpha', "--method quadrature needs alpha = 0; use --method girsanov")


def cmd_propagator(args):
    _check_method(args)
    grid = _grid(args, lambda n: propagator.default_propagator_grid(args.v0, args.t, args.delta,
                                                                    args.a, n))
    if args.method == 'closed':
        curve = propagator.free_curve(args.v0, args.t, args.delta, grid)
    elif args.method == 'quadrature':
        curve = propagator.forced_curve(args.v0, args.t, args.delta, args.a, grid,
                                        n_paths=args.n_paths, dt=args.dt, seed=args.seed,
                                        workers=args.workers)
    else:
        curve = simulate.girsanov_propagator_estimate(
            args.v0, grid, args.t, args.delta, args.a, args.alpha, n_paths=args.n_paths,
            dt=args.dt, seed=args.seed, bandwidth=args.bandwidth, workers=args.workers)

    out, path = _output(args.out)
    seed = args.seed if args.method == 'girsanov' else None
    manifest = RunManifest(command='propagator', parameters=run_parameters(args), seed=seed)
    curve.write(manifest.add_output(path))
    meta_path = out.path(os.path.splitext(os.path.basename(path))[0] + '.meta.json')
    write_json(manifest.add_output(meta_path), curve.meta)
    manifest.write(_manifest_path(out, path))

    for key in ('error_estimate', 'converged', 'fallback_used', 'ess', 'bandwidth'):
        if key in curve.meta:
            print("%s = %s" % (key, curve.meta[key]))
    return EXIT_OK


def free_law_cdf(params, v0, t):
    """CDF of the terminal law when alpha = a = 0, or None.

    v / sqrt(D) then has unit noise and constant friction c delta / sqrt(D).
    """
    if params.alpha != 0 or params.a != 0 or params.delta <= 0 or params.diffusion <= 0:
        return None
    s = math.sqrt(params.diffusion)
    delta = params.drift_scale * params.delta / s
    return lambda x: propagator.free_cdf(v0 / s, t, delta, np.asarray(x) / s)


def cmd_simulate(args):
    params = ModelParams(alpha=args.alpha, a=args.a, delta=args.delta,
                         diffusion=args.diffusion, drift_scale=args.drift_scale)
    cfg = simulate.SimConfig(params=params, v0=args.v0, t_final=args.t, dt=args.dt,
                             n_paths=args.n_paths, seed=args.seed,
                             record_functionals=args.record_functionals)
    ens = simulate.euler_maruyama_ensemble(cfg, workers=args.workers)

    out, path = _output(args.out)
    manifest = RunManifest(command='simulate', parameters=run_parameters(args), seed=args.seed)
    write_ensemble_csv(ens, manifest.add_output(path))
    summary = simulate.ensemble_summary(ens)
    cdf = free_law_cdf(params, args.v0, args.t)
    if cdf is not None:
        summary['ks_closed_form'] = stats.ks_distance(ens.terminal, cdf)
    summary_path = out.path(os.path.splitext(os.path.basename(path))[0] + '.summary.json')
    write_json(manifest.add_output(summary_path), summary)
    manifest.write(_manifest_path(out, path))

    print("n = %d  mean = %.6g  variance = %.6g" % (summary['n'], summary['mean'],
                                                     summary['variance']))
    if 'ks_closed_form' in summary:
        print("KS distance to closed form = %.4g" % summary['ks_closed_form'])
    return EXIT_OK


def cmd_validate(args):
    out, path = _output(args.report)
    work_dir = out.path(os.path.splitext(os.path.basename(path))[0] + '.work')
    try:
        report = validate.run_validation(level=args.level, seed=args.seed, only=args.only,
                                         workers=args.workers, work_dir=work_dir)
    except ValueError as exc:
        raise ParameterError('only', str(exc))
    manifest = RunManifest(command='validate', parameters=run_parameters(args), seed=args.seed)
    write_json(manifest.add_output(path), report)
    manifest.write(_manifest_path(out, path))

    for g in report['gates']:
        print("%-4s %-30s measured=%s threshold=%s" % ('ok' if g['passed'] else 'FAIL',
                                                        g['name'], g['measured'], g['threshold']))
    return EXIT_OK if report['passed'] else EXIT_GATE_FAILED


def _start_log_forwarding(workers):
    if workers > 0 and log.get_logger_address() is None:
        log.start_log_server(logging.getLogger('dryfric.workers.remote'))


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as exc:
        return EXIT_OK if exc.status == 0 else EXIT_BAD_ARGS
    except ParameterError as exc:
        sys.stderr.write("dryfric: error: %s\n" % exc)
        return EXIT_BAD_ARGS
    except OSError as exc:
        sys.stderr.write("dryfric: error: cannot read parameters: %s\n" % exc)
        return EXIT_IO
    except ValueError as exc:
        sys.stderr.write("dryfric: error: bad parameter file: %s\n" % exc)
        return EXIT_BAD_ARGS

    handler = install_log_handler(args.verbose, args.quiet)
    try:
        if args.workers < 0:
            raise ParameterError('workers', "must be >= 0; got %r" % args.workers)
        _start_log_forwarding(args.workers)
        return args.func(args)
    except ParameterError as exc:
        logger.error("invalid parameter --%s: %s", exc.field.replace('_', '-'), exc)
        return EXIT_BAD_ARGS
    except (ConvergenceError, SimulationError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    finally:
        handler.flush_records()
