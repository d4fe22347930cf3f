"""
Command line interface.

::

    gcce generate-bath --config run.yaml --out bath.txt
    gcce simulate      --config run.yaml --out results/
    gcce sweep         --config run.yaml --out results/ --workers 8
    gcce fit           results/ --mode envelope
    gcce spectrum      results/coherence_000.csv --frame-frequency 1334
    gcce oracle        --config small.yaml --out exact/

Exit status is 0 on success, 1 for invalid input (including usage errors) and
2 for a numerical failure.
"""
import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import config as cfg
from . import io
from .analysis import find_peaks, fit_or_bound, ramsey_spectrum
from .cce import default_workers, exhaustive_bath_states, sample_bath_states
from .errors import GCCEError, ValidationError
from .exact import exact_coherence
from .hamiltonian import build_electron_hamiltonian, select_qubit_levels
from .spin_model import write_bath_file

log = logging.getLogger('gcce')


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f'{self.prog}: {message}')


def _common(p, out_help='output directory'):
    p.add_argument('--config', required=True, help='YAML or JSON run configuration')
    p.add_argument('--seed', type=int, help='override the master seed')
    p.add_argument('--out', help=out_help)
    p.add_argument('--field', type=float, help='run at this field (mT) only')


def _method_overrides(p):
    p.add_argument('--workers', type=int, help='worker processes (overrides GCCE_WORKERS and the config)')
    p.add_argument('--method', choices=('gcce', 'cce'))
    p.add_argument('--order', type=int)
    p.add_argument('--n-states', type=int)


def build_parser():
    parser = _Parser(prog='gcce', description='Central spin decoherence with cluster-correlation expansions.')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('generate-bath', help='populate a lattice and write a bath file')
    _common(p, 'bath file to write')

    p = sub.add_parser('simulate', help='coherence at a single field')
    _common(p)
    _method_overrides(p)

    p = sub.add_parser('sweep', help='coherence over the configured field list')
    _common(p)
    _method_overrides(p)
    p.add_argument('--no-resume', action='store_true', help='ignore an existing checkpoint')

    p = sub.add_parser('fit', help='fit decay times to coherence CSV files')
    p.add_argument('paths', nargs='+', help='run directories or coherence CSV files')
    p.add_argument('--mode', choices=('raw', 'envelope'), help='defaults to the run configuration, else raw')
    p.add_argument('--out', help='write the table here instead of standard output')

    p = sub.add_parser('spectrum', help='Fourier spectrum of Ramsey fringes')
    p.add_argument('path', help='coherence CSV file')
    p.add_argument('--frame-frequency', type=float, default=0.0, help='rotating frame in MHz')
    p.add_argument('--window', default='hann')
    p.add_argument('--pad', type=int, default=4)
    p.add_argument('--out', help='spectrum CSV to write')

    p = sub.add_parser('oracle', help='dense exact evolution (at most 12 bath spins)')
    _common(p)
    p.add_argument('--states', choices=('all', 'sampled'), default='all',
                   help='average over every bath product state, or the configured sampled ones')
    return parser


def load_spec(args):
    spec = cfg.parse_config(args.config)
    changes = {}
    if args.seed is not None:
        changes['seed'] = cfg._int(args.seed, '--seed', 0)
    if getattr(args, 'field', None) is not None:
        changes['fields'] = (float(args.field),)
    if args.out is not None and args.command not in ('generate-bath',):
        changes['output'] = cfg.OutputSpec(args.out)
    m = {}
    if getattr(args, 'method', None):
        m['name'] = args.method
    if getattr(args, 'order', None) is not None:
        m['order'] = cfg._int(args.order, '--order', 1)
    if getattr(args, 'n_states', None) is not None:
        m['n_states'] = cfg._int(args.n_states, '--n-states', 1)
    if m:
        changes['method'] = dataclasses.replace(spec.method, **m)
    if changes:
        spec = spec.replace(**changes)
        spec = cfg.loads(cfg.serialize(spec))  # revalidate
    return spec


def resolve_workers(args, spec):
    """Worker count: command line, then GCCE_WORKERS, then the configuration."""
    if getattr(args, 'workers', None) is not None:
        w = args.workers
    elif os.environ.get('GCCE_WORKERS'):
        try:
            w = default_workers()
        except ValueError:
            raise ValidationError('GCCE_WORKERS must be an integer') from None
    else:
        w = spec.workers
    if w < 1:
        raise ValidationError(f'worker count must be at least 1, got {w}')
    return w


def _base_dir(args):
    return os.path.dirname(os.path.abspath(args.config))


def cmd_generate_bath(args):
    spec = load_spec(args)
    system = cfg.build_system(spec, _base_dir(args))
    out = args.out or 'bath.txt'
    write_bath_file(out, system)
    print(f'{len(system.bath)} bath spins written to {out}')


def _run(args, command):
    spec = load_spec(args)
    if command == 'simulate' and len(spec.fields) > 1:
        spec = cfg.loads(cfg.serialize(spec.replace(fields=spec.fields[:1])))
    print(cfg.serialize(spec), end='', file=sys.stderr if args.verbose == 0 else sys.stdout)
    workers = resolve_workers(args, spec)
    manifest = io.run(spec, workers=workers, base_dir=_base_dir(args),
                      resume=not getattr(args, 'no_resume', False), command=command)
    out = spec.output.dir
    for c in manifest.counters:
        print(f"B = {c['field_mT']:g} mT: divergences {c['divergences']}, masked {c['overflows']}, "
              f"undefined {c['undefined']}")
    print(f'{len(manifest.outputs)} files written to {out}')


def cmd_simulate(args):
    _run(args, 'simulate')


def cmd_sweep(args):
    _run(args, 'sweep')


def _fit_targets(paths):
    """(field, csv path, default mode, run directory) for every curve to fit."""
    out = []
    for p in paths:
        if os.path.isdir(p):
            spec = cfg.parse_config(os.path.join(p, 'config.yaml'))
            for k, b in enumerate(spec.fields):
                out.append((b, os.path.join(p, io.curve_name(k)), spec.analysis.fit))
        else:
            out.append((np.nan, p, None))
    return out


def cmd_fit(args):
    rows = []
    for b, path, mode in _fit_targets(args.paths):
        fit = fit_or_bound(io.read_curve(path), args.mode or mode or 'raw')
        rows.append(io.fit_row(b, fit))
    if args.out:
        io.write_table(args.out, io.FIT_COLUMNS, rows)
    else:
        print(','.join(io.FIT_COLUMNS))
        for r in rows:
            print(','.join(io._num(v) if isinstance(v, float) else str(v) for v in r))


def cmd_spectrum(args):
    curve = io.read_curve(args.path)
    f, m = ramsey_spectrum(curve, args.window, args.frame_frequency, args.pad)
    if args.out:
        io.write_spectrum(args.out, f, m)
    pos, hts = find_peaks(f, m)
    print('f_MHz,height')
    for p, h in zip(pos, hts):
        print(f'{io._num(p)},{io._num(h)}')


def cmd_oracle(args):
    spec = load_spec(args)
    system = cfg.build_system(spec, _base_dir(args))
    exp = cfg.build_experiment(spec, 1)
    out = spec.output.dir
    os.makedirs(out, exist_ok=True)
    manifest = io.RunManifest(spec.digest(), io.code_version(), 'oracle', started=io._now())
    try:
        states = exhaustive_bath_states(system) if args.states == 'all' else \
            sample_bath_states(system, spec.method.n_states, spec.seed)
        prev = None
        for k, b in enumerate(spec.fields):
            sysb = system.with_field(b)
            levels = select_qubit_levels(build_electron_hamiltonian(sysb.central, b), exp.levels, prev)
            prev = levels
            curve = exact_coherence(sysb, levels, exp.sequence, exp.times, states, spec.method.populations)
            io.write_curve(os.path.join(out, io.curve_name(k)), curve)
            manifest.outputs[io.curve_name(k)] = io.sha256_file(os.path.join(out, io.curve_name(k)))
        manifest.status = 'ok'
    except BaseException as e:
        manifest.status = 'failed'
        manifest.failure = {'stage': 'oracle', 'type': type(e).__name__, 'message': str(e)}
        raise
    finally:
        manifest.finished = io._now()
        manifest.write(out)
    print(f'{len(manifest.outputs)} exact curves written to {out}')


COMMANDS = {'generate-bath': cmd_generate_bath, 'simulate': cmd_simulate, 'sweep': cmd_sweep,
            'fit': cmd_fit, 'spectrum': cmd_spectrum, 'oracle': cmd_oracle}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f'error: {e}', file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except GCCEError as e:
        print(f'error: {e}', file=sys.stderr)
        return io.exit_code(e)
    except OSError as e:
        print(f'error: {e}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
