"""
Run orchestration and output files.

Every numeric payload is written with 12 significant digits, so two runs with the
same configuration produce byte-identical CSV files. Wall-clock information
lives only in ``manifest.json``.

Layout of an output directory::

    config.yaml              effective configuration
    coherence_000.csv        t_us, re_L, im_L, abs_L, pop_a, pop_b (one file per field)
    spectrum_000.csv         f_MHz, magnitude (when spectra are requested)
    fits.csv                 one row per field
    peaks.csv, hyperbolae.csv
    checkpoint.json          progress of a sweep (for resuming)
    manifest.json            hashes, timings, counters, status
"""
import hashlib
import json
import logging
import os
import platform
import tempfile
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from . import config as cfg
from .analysis import (FieldSweepResult, find_peaks, fit_hyperbolae, fit_or_bound, ramsey_spectrum)
from .cce import ClusterSet, CoherenceCurve, enumerate_clusters, simulate
from .errors import GCCEError, NumericalError, ParseError, ValidationError
from .hamiltonian import QubitLevels

log = logging.getLogger(__name__)

CURVE_COLUMNS = ('t_us', 're_L', 'im_L', 'abs_L', 'pop_a', 'pop_b')
FMT = '.11e'


def code_version():
    try:
        return metadata.version('artifact')
    except metadata.PackageNotFoundError:
        return 'unknown'


def _num(x):
    x = float(x)
    if np.isnan(x):
        return 'nan'
    return format(x, FMT)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            h.update(block)
    return h.hexdigest()


def atomic_write(path, text):
    """Write ``text`` to a temporary file in the same directory, then rename it over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', newline='\n') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, header, rows):
    """CSV with a header line; floats formatted with 12 significant digits."""
    lines = [','.join(header)]
    for row in rows:
        lines.append(','.join(_num(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    atomic_write(path, '\n'.join(lines) + '\n')


def read_table(path):
    """Read a CSV written by :func:`write_table` into ``(header, rows)`` of strings."""
    try:
        with open(path) as f:
            lines = [ln.rstrip('\n') for ln in f if ln.strip()]
    except OSError as e:
        raise ParseError(e.strerror, path) from None
    if not lines:
        raise ParseError('empty file', path)
    return lines[0].split(','), [ln.split(',') for ln in lines[1:]]


def write_curve(path, curve):
    """Write a CoherenceCurve; population columns are ``nan`` when not computed."""
    L = curve.L
    pa = curve.population_ratio('a')
    pb = curve.population_ratio('b')
    nan = np.full(len(curve.times), np.nan)
    pa = nan if pa is None else pa
    pb = nan if pb is None else pb
    rows = zip(curve.times, L.real, L.imag, np.abs(L), pa, pb)
    write_table(path, CURVE_COLUMNS, ([float(x) for x in r] for r in rows))


def read_curve(path):
    """Read a coherence CSV back into a CoherenceCurve (``rho_ab0 = 1/2``).

    Raises:
        ParseError: Wrong columns or non-numeric entries.
    """
    header, rows = read_table(path)
    if tuple(header) != CURVE_COLUMNS:
        raise ParseError(f'expected columns {",".join(CURVE_COLUMNS)}, got {",".join(header)}', path, 1)
    try:
        data = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    except ValueError as e:
        raise ParseError(str(e), path) from None
    if data.ndim != 2 or data.shape[1] != len(CURVE_COLUMNS) or len(data) == 0:
        raise ParseError('malformed coherence table', path)
    t, re, im, _, pa, pb = data.T
    pops = not np.all(np.isnan(pa))
    return CoherenceCurve(t, 0.5 * (re + 1j * im), 0.5 * pa if pops else None,
                          0.5 * pb if pops else None, 0.5, dict(source=str(path)))


FIT_COLUMNS = ('field_mT', 'T_us', 'n', 'amplitude', 'T_err', 'n_err', 'residual', 'lower_bound', 'mode')


def fit_row(b, fit):
    return [float(b), fit.T, fit.n, fit.amplitude, fit.T_err, fit.n_err, fit.residual,
            int(fit.lower_bound), fit.mode]


def write_spectrum(path, freqs, mag):
    write_table(path, ('f_MHz', 'magnitude'), ([float(f), float(m)] for f, m in zip(freqs, mag)))


def _levels_to_json(levels):
    return {'a': [[float(z.real), float(z.imag)] for z in levels.a],
            'b': [[float(z.real), float(z.imag)] for z in levels.b],
            'energies': [float(e) for e in levels.energies],
            'labels': list(levels.labels)}


def _levels_from_json(d):
    vec = lambda v: np.array([complex(r, i) for r, i in v])  # noqa: E731
    return QubitLevels(vec(d['a']), vec(d['b']), tuple(d['energies']), tuple(d['labels']))


@dataclass
class RunManifest:
    """Record of one run: what was computed, by which code, how long it took."""
    spec_hash: str
    code_version: str
    command: str
    status: str = 'running'
    workers: int = 1
    started: str = ''
    finished: str = ''
    timings: dict = field(default_factory=dict)
    counters: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    failure: dict = None
    environment: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, out_dir):
        atomic_write(os.path.join(out_dir, 'manifest.json'), self.to_json() + '\n')

    def verify(self, out_dir):
        """Names of outputs whose checksum no longer matches."""
        return [name for name, digest in self.outputs.items()
                if sha256_file(os.path.join(out_dir, name)) != digest]

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls(**json.load(f))


def _now():
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


class _Stages:
    def __init__(self, manifest):
        self.manifest = manifest

    def __call__(self, name):
        return _Stage(self.manifest, name)


class _Stage:
    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.manifest.failure = None
        return self

    def __exit__(self, typ, exc, tb):
        dt = time.perf_counter() - self.t0
        self.manifest.timings[self.name] = self.manifest.timings.get(self.name, 0.0) + dt
        if exc is not None:
            self.manifest.failure = {'stage': self.name, 'type': typ.__name__, 'message': str(exc)}
        return False


def curve_name(k):
    return f'coherence_{k:03d}.csv'


def spectrum_name(k):
    return f'spectrum_{k:03d}.csv'


def _load_checkpoint(path, digest):
    if not os.path.exists(path):
        return {}
    with open(path) as f:
        ck = json.load(f)
    if ck.get('spec_hash') != digest:
        log.warning('checkpoint %s belongs to a different configuration; starting over', path)
        return {}
    return {int(k): v for k, v in ck['fields'].items()}


def _save_checkpoint(path, digest, done):
    atomic_write(path, json.dumps({'spec_hash': digest,
                                   'fields': {str(k): v for k, v in sorted(done.items())}},
                                  indent=1, sort_keys=True) + '\n')


def run(spec, out_dir=None, workers=None, base_dir='.', resume=True, command='sweep'):
    """Execute a configuration and write every output.

    The bath, clusters and bath-state seeds are shared by all fields; qubit levels
    are tracked adiabatically from field to field. After each field the curve is
    written and the checkpoint updated, so an interrupted sweep resumes at the
    first missing field. Fits and spectra are computed from the values stored in
    the CSV files, so re-analysing the files reproduces them exactly.

    Args:
        spec (ExperimentSpec): Validated configuration.
        out_dir (str): Output directory (default: ``spec.output.dir``).
        workers (int): Worker processes (default: ``spec.workers``).
        base_dir (str): Directory relative to which bath files are resolved.
        resume (bool): Reuse fields recorded in an existing checkpoint.
        command (str): Name recorded in the manifest.

    Returns:
        RunManifest. On failure the manifest (with a failure record) is written
        before the exception propagates.
    """
    out_dir = out_dir or spec.output.dir
    workers = spec.workers if workers is None else int(workers)
    os.makedirs(out_dir, exist_ok=True)
    digest = spec.digest()
    manifest = RunManifest(digest, code_version(), command, workers=workers, started=_now(),
                           environment={'python': platform.python_version(), 'numpy': np.__version__})
    stage = _Stages(manifest)
    ck_path = os.path.join(out_dir, 'checkpoint.json')

    def record(name):
        manifest.outputs[name] = sha256_file(os.path.join(out_dir, name))

    try:
        with stage('config'):
            atomic_write(os.path.join(out_dir, 'config.yaml'), cfg.serialize(spec))
            record('config.yaml')
        with stage('system'):
            system = cfg.build_system(spec, base_dir)
            experiment = cfg.build_experiment(spec, workers)
            clusters = enumerate_clusters(system, experiment.order, experiment.r_dip) if len(system.bath) \
                else ClusterSet({}, experiment.order, experiment.r_dip)
        done = _load_checkpoint(ck_path, digest) if resume else {}
        prev = None
        curves = []
        for k, b in enumerate(spec.fields):
            name = curve_name(k)
            path = os.path.join(out_dir, name)
            entry = done.get(k)
            if entry and os.path.exists(path) and sha256_file(path) == entry['sha256']:
                prev = _levels_from_json(entry['levels'])
                manifest.counters.append(entry['counters'])
                record(name)
                curves.append(read_curve(path))
                continue
            with stage('simulate'):
                curve = simulate(system.with_field(b), experiment, prev, clusters)
            prev = curve.meta['levels']
            counters = {'field_mT': float(b), 'divergences': curve.meta['divergences'],
                        'overflows': curve.meta['overflows'], 'undefined': curve.meta['undefined'],
                        'clusters': {str(s): n for s, n in curve.meta['clusters'].items()}}
            with stage('write'):
                write_curve(path, curve)
                record(name)
                manifest.counters.append(counters)
                done[k] = {'sha256': manifest.outputs[name], 'levels': _levels_to_json(prev),
                           'counters': counters}
                _save_checkpoint(ck_path, digest, done)
            curves.append(read_curve(path))
        _analyse(spec, curves, out_dir, stage, record)
        manifest.status = 'ok'
    except BaseException as e:
        manifest.status = 'failed'
        if manifest.failure is None:
            manifest.failure = {'stage': 'run', 'type': type(e).__name__, 'message': str(e)}
        raise
    finally:
        manifest.finished = _now()
        manifest.write(out_dir)
    return manifest


def _analyse(spec, curves, out_dir, stage, record):
    a = spec.analysis
    fields = np.array(spec.fields)
    if a.fit:
        with stage('fit'):
            rows = [fit_row(b, fit_or_bound(c, a.fit)) for b, c in zip(fields, curves)]
            write_table(os.path.join(out_dir, 'fits.csv'), FIT_COLUMNS, rows)
            record('fits.csv')
    if a.spectrum or a.branches:
        with stage('spectrum'):
            spectra, peak_rows = [], []
            for k, (b, c) in enumerate(zip(fields, curves)):
                f, m = ramsey_spectrum(c, a.window, a.frame_frequency, a.pad)
                spectra.append((f, m))
                write_spectrum(os.path.join(out_dir, spectrum_name(k)), f, m)
                record(spectrum_name(k))
                pos, hts = find_peaks(f, m)
                peak_rows += [[float(b), r, float(p), float(h)] for r, (p, h) in enumerate(zip(pos, hts))]
            write_table(os.path.join(out_dir, 'peaks.csv'), ('field_mT', 'rank', 'f_MHz', 'height'), peak_rows)
            record('peaks.csv')
        if a.branches:
            with stage('hyperbolae'):
                sweep = FieldSweepResult(fields, curves, spectra=spectra)
                gyro = spec.central.gyro if a.fixed_gyro else None
                models = fit_hyperbolae(sweep, a.branches, gyro=gyro)
                rows = [[j, m.omega0, m.E, m.gyro, m.b_min, m.residual, m.n_points] for j, m in enumerate(models)]
                write_table(os.path.join(out_dir, 'hyperbolae.csv'),
                            ('branch', 'omega0_MHz', 'E_MHz', 'gyro_MHz_per_mT', 'b_min_mT', 'rms_MHz', 'n_points'),
                            rows)
                record('hyperbolae.csv')


def exit_code(exc):
    """Process exit status for an exception: 1 for invalid input, 2 for numerical failure."""
    if isinstance(exc, NumericalError):
        return 2
    if isinstance(exc, (ValidationError, OSError, KeyError)):
        return 1
    if isinstance(exc, GCCEError):
        return 2
    return 2
