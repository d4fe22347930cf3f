"""
Experiment configuration files.

A run is described by one YAML (or JSON) document with nested sections. Numbers
may carry units as strings (``"46.6 mT"``, ``"2 ms"``); bare numbers are taken in
the default unit of the quantity (mT, MHz, nm, us, MHz/mT). Every key is
validated, unknown keys are reported together with the closest valid name, and
defaults are filled so that ``to_dict`` gives the complete effective
configuration.
"""
import difflib
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields as dc_fields
from typing import Optional

import numpy as np
import yaml

from .constants import ELECTRON_GYRO, ISOTOPES
from .errors import ConfigError
from .spin_model import NAMED_LATTICES

SCHEMA_VERSION = 1

UNITS = {
    'field': ('mT', {'mT': 1.0, 'T': 1e3, 'uT': 1e-3, 'G': 0.1}),
    'frequency': ('MHz', {'MHz': 1.0, 'kHz': 1e-3, 'GHz': 1e3, 'Hz': 1e-6}),
    'length': ('nm', {'nm': 1.0, 'A': 0.1, 'pm': 1e-3, 'um': 1e3}),
    'time': ('us', {'us': 1.0, 'ns': 1e-3, 'ms': 1e3, 's': 1e6}),
    'gyro': ('MHz/mT', {'MHz/mT': 1.0, 'MHz/T': 1e-3, 'kHz/mT': 1e-3, 'kHz/G': 1e-2}),
    'angle': ('rad', {'rad': 1.0, 'deg': np.pi / 180, 'pi': np.pi}),
}

_QUANTITY = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)?\s*$')


def quantity(value, kind, where):
    """Convert ``value`` (number or ``"number unit"`` string) to the default unit of ``kind``."""
    default, table = UNITS[kind]
    if isinstance(value, bool):
        raise ConfigError(f'{where}: expected a {kind} in {default}, got {value!r}')
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _QUANTITY.match(value)
        if m:
            num, unit = float(m.group(1)), m.group(2)
            if unit is None:
                return num
            if unit == 'μs':
                unit = 'us'
            if unit in table:
                return num * table[unit]
            raise ConfigError(f'{where}: unit {unit!r} is not a {kind} unit; expected {default} '
                              f'(or one of {", ".join(table)})')
    raise ConfigError(f'{where}: expected a {kind} in {default}, got {value!r}')


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f'{where}: expected a mapping, got {type(d).__name__}')
    for key in d:
        if key not in allowed:
            near = difflib.get_close_matches(str(key), list(allowed), n=1, cutoff=0.5)
            hint = f'; did you mean {near[0]!r}?' if near else f'; valid keys: {", ".join(allowed)}'
            raise ConfigError(f'{where}: unknown key {key!r}{hint}')


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(f'{where}: expected an integer, got {value!r}')
    if minimum is not None and value < minimum:
        raise ConfigError(f'{where}: must be at least {minimum}, got {value}')
    return int(value)


def _bool(value, where):
    if not isinstance(value, bool):
        raise ConfigError(f'{where}: expected true or false, got {value!r}')
    return value


@dataclass(frozen=True)
class CentralSpec:
    spin: float = 1.0
    D: float = 1334.0
    E: float = 18.4
    gyro: float = ELECTRON_GYRO


@dataclass(frozen=True)
class BathSpec:
    """Bath definition: a bath file, or a lattice to populate at random."""
    file: Optional[str] = None
    lattice: Optional[str] = '4H-SiC:kh'
    radius: float = 5.0
    abundances: dict = field(default_factory=lambda: {'29Si': ISOTOPES['29Si'].abundance,
                                                      '13C': ISOTOPES['13C'].abundance})
    seed: Optional[int] = None
    hyperfine_table: Optional[str] = None
    weak_cutoff: Optional[float] = 1.0


@dataclass(frozen=True)
class SequenceSpec:
    preset: str = 'ramsey'
    n: int = 1
    axis: str = 'x'
    steps: tuple = ()
    final_delay: float = 1.0
    n_repeat: int = 1


@dataclass(frozen=True)
class LevelSpec:
    kind: str = 'index'
    a: object = 2
    b: object = 0


@dataclass(frozen=True)
class MethodSpec:
    name: str = 'gcce'
    order: int = 2
    r_dip: float = 0.8
    n_states: int = 100
    exhaustive: bool = False
    mixed: bool = False
    mean_field: bool = True
    populations: bool = False
    eps_div: float = 1e-10
    mask: bool = True


@dataclass(frozen=True)
class TimeSpec:
    start: float = 0.0
    stop: float = 50.0
    num: int = 501

    def grid(self):
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class AnalysisSpec:
    fit: Optional[str] = None
    spectrum: bool = False
    window: str = 'hann'
    frame_frequency: float = 0.0
    pad: int = 4
    branches: Optional[int] = None
    fixed_gyro: bool = False


@dataclass(frozen=True)
class OutputSpec:
    dir: str = 'out'


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete, validated description of a run."""
    seed: int
    fields: tuple = (0.0,)
    central: CentralSpec = field(default_factory=CentralSpec)
    bath: BathSpec = field(default_factory=BathSpec)
    sequence: SequenceSpec = field(default_factory=SequenceSpec)
    levels: LevelSpec = field(default_factory=LevelSpec)
    method: MethodSpec = field(default_factory=MethodSpec)
    time: TimeSpec = field(default_factory=TimeSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        """Effective configuration as plain data, in default units."""
        d = {'schema_version': self.schema_version, 'seed': self.seed, 'workers': self.workers}
        if len(self.fields) == 1:
            d['field'] = self.fields[0]
        else:
            d['fields'] = list(self.fields)
        d['system'] = {'central': asdict(self.central), 'bath': _bath_dict(self.bath)}
        seq = asdict(self.sequence)
        seq['steps'] = [list(s) for s in self.sequence.steps]
        d['sequence'] = seq
        d['levels'] = asdict(self.levels)
        d['method'] = asdict(self.method)
        d['time'] = asdict(self.time)
        d['analysis'] = asdict(self.analysis)
        d['output'] = asdict(self.output)
        return d

    def digest(self):
        """SHA-256 of the canonical JSON form (output directory excluded)."""
        d = self.to_dict()
        d.pop('output')
        d.pop('workers')
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def replace(self, **changes):
        import dataclasses
        return dataclasses.replace(self, **changes)


def _bath_dict(b):
    d = asdict(b)
    d['abundances'] = dict(sorted(b.abundances.items()))
    return d


TOP_KEYS = ('schema_version', 'seed', 'workers', 'field', 'fields', 'system', 'sequence', 'levels',
            'method', 'time', 'analysis', 'output')


def _section(raw, cls, where, convert):
    raw = {} if raw is None else raw
    names = [f.name for f in dc_fields(cls)]
    _check_keys(raw, names, where)
    kw = {}
    for k, v in raw.items():
        kw[k] = convert(k, v, f'{where}.{k}')
    return cls(**kw)


def _central(raw):
    def conv(k, v, w):
        if k == 'spin':
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f'{w}: expected a number, got {v!r}')
            s = float(v)
            if s <= 0 or abs(2 * s - round(2 * s)) > 1e-12:
                raise ConfigError(f'{w}: spin must be a positive multiple of 1/2, got {v!r}')
            return s
        if k == 'gyro':
            g = quantity(v, 'gyro', w)
            if g == 0:
                raise ConfigError(f'{w}: gyromagnetic ratio must be nonzero')
            return g
        return quantity(v, 'frequency', w)
    return _section(raw, CentralSpec, 'system.central', conv)


def _bath(raw, where='system.bath'):
    def conv(k, v, w):
        if k in ('file', 'hyperfine_table', 'lattice'):
            if v is not None and not isinstance(v, str):
                raise ConfigError(f'{w}: expected a string')
            if k == 'lattice' and v is not None and v not in NAMED_LATTICES:
                near = difflib.get_close_matches(v, list(NAMED_LATTICES), n=1)
                hint = f'; did you mean {near[0]!r}?' if near else ''
                raise ConfigError(f'{w}: unknown lattice {v!r}{hint} (known: {", ".join(NAMED_LATTICES)})')
            return v
        if k == 'radius':
            r = quantity(v, 'length', w)
            if r <= 0:
                raise ConfigError(f'{w}: radius must be positive, got {v!r}')
            return r
        if k == 'weak_cutoff':
            return None if v is None else quantity(v, 'frequency', w)
        if k == 'seed':
            return None if v is None else _int(v, w, 0)
        if k == 'abundances':
            _check_keys(v, list(ISOTOPES), w)
            out = {}
            for iso, p in v.items():
                if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 <= p <= 1:
                    raise ConfigError(f'{w}.{iso}: abundance must be a probability in [0, 1], got {p!r}')
                out[iso] = float(p)
            return out
    spec = _section(raw, BathSpec, where, conv)
    if spec.file is None and spec.lattice is None:
        raise ConfigError(f'{where}: give either a bath file or a lattice')
    return spec


def _sequence(raw):
    def conv(k, v, w):
        if k == 'preset':
            if v not in ('ramsey', 'hahn', 'cpmg', 'xy4', 'custom'):
                raise ConfigError(f'{w}: unknown sequence {v!r}; use ramsey, hahn, cpmg, xy4 or custom')
            return v
        if k in ('n', 'n_repeat'):
            return _int(v, w, 1)
        if k == 'axis':
            if v not in ('x', 'y', 'z'):
                raise ConfigError(f'{w}: axis must be x, y or z')
            return v
        if k == 'final_delay':
            return quantity(v, 'time', w)
        if k == 'steps':
            out = []
            for j, step in enumerate(v or ()):
                if not isinstance(step, (list, tuple)) or len(step) != 3:
                    raise ConfigError(f'{w}[{j}]: a step is [delay, axis, angle]')
                d = quantity(step[0], 'time', f'{w}[{j}]')
                if step[1] not in ('x', 'y', 'z'):
                    raise ConfigError(f'{w}[{j}]: axis must be x, y or z')
                out.append((d, step[1], quantity(step[2], 'angle', f'{w}[{j}]')))
            return tuple(out)
    spec = _section(raw, SequenceSpec, 'sequence', conv)
    if spec.preset == 'custom' and not spec.steps and spec.final_delay <= 0:
        raise ConfigError('sequence: custom sequence has zero duration')
    return spec


def _levels(raw):
    def conv(k, v, w):
        if k == 'kind':
            if v not in ('index', 'sz'):
                raise ConfigError(f'{w}: level kind must be index or sz')
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f'{w}: expected a number, got {v!r}')
        return v
    spec = _section(raw, LevelSpec, 'levels', conv)
    if spec.kind == 'index':
        _int(spec.a, 'levels.a')
        _int(spec.b, 'levels.b')
    if spec.a == spec.b:
        raise ConfigError('levels: a and b must differ')
    return spec


def _method(raw):
    def conv(k, v, w):
        if k == 'name':
            if v not in ('gcce', 'cce'):
                raise ConfigError(f'{w}: method must be gcce or cce, got {v!r}')
            return v
        if k == 'order':
            return _int(v, w, 1)
        if k == 'n_states':
            return _int(v, w, 1)
        if k == 'r_dip':
            r = quantity(v, 'length', w)
            if r <= 0:
                raise ConfigError(f'{w}: must be positive')
            return r
        if k == 'eps_div':
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f'{w}: expected a non-negative number')
            return float(v)
        return _bool(v, w)
    spec = _section(raw, MethodSpec, 'method', conv)
    if spec.mixed and spec.name != 'cce':
        raise ConfigError('method: mixed-bath evaluation is only available for cce')
    return spec


def _time(raw):
    def conv(k, v, w):
        if k == 'num':
            return _int(v, w, 2)
        return quantity(v, 'time', w)
    spec = _section(raw, TimeSpec, 'time', conv)
    if not spec.stop > spec.start or spec.start < 0:
        raise ConfigError('time: need 0 <= start < stop')
    return spec


def _analysis(raw):
    def conv(k, v, w):
        if k == 'fit':
            if v not in (None, 'raw', 'envelope'):
                raise ConfigError(f'{w}: fit must be raw, envelope or null')
            return v
        if k in ('spectrum', 'fixed_gyro'):
            return _bool(v, w)
        if k == 'window':
            if not isinstance(v, str):
                raise ConfigError(f'{w}: expected a window name')
            return v
        if k == 'frame_frequency':
            return quantity(v, 'frequency', w)
        if k == 'pad':
            return _int(v, w, 1)
        if k == 'branches':
            return None if v is None else _int(v, w, 1)
    return _section(raw, AnalysisSpec, 'analysis', conv)


def _fields(raw):
    if 'field' in raw and 'fields' in raw:
        raise ConfigError("give either 'field' or 'fields', not both")
    if 'fields' in raw:
        v = raw['fields']
        if isinstance(v, dict):
            _check_keys(v, ('start', 'stop', 'num'), 'fields')
            missing = {'start', 'stop', 'num'} - set(v)
            if missing:
                raise ConfigError(f'fields: missing {sorted(missing)}')
            vals = np.linspace(quantity(v['start'], 'field', 'fields.start'),
                               quantity(v['stop'], 'field', 'fields.stop'), _int(v['num'], 'fields.num', 1))
        elif isinstance(v, (list, tuple)) and v:
            vals = [quantity(x, 'field', f'fields[{j}]') for j, x in enumerate(v)]
        else:
            raise ConfigError('fields: expected a non-empty list or {start, stop, num}')
        vals = tuple(float(x) for x in vals)
        d = np.diff(vals)
        if len(vals) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError('fields: must be strictly monotonic')
        return vals
    if 'field' in raw:
        return (quantity(raw['field'], 'field', 'field'),)
    return (0.0,)


def parse_dict(raw):
    """Validate a configuration mapping and fill defaults.

    Raises:
        ConfigError: Unknown key, wrong type, or unit mismatch.
    """
    if not isinstance(raw, dict):
        raise ConfigError('configuration must be a mapping')
    _check_keys(raw, TOP_KEYS, 'config')
    version = raw.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f'unsupported schema_version {version!r}; this version reads {SCHEMA_VERSION}')
    if 'seed' not in raw:
        raise ConfigError('config: seed is mandatory')
    seed = _int(raw['seed'], 'seed', 0)
    system = raw.get('system') or {}
    _check_keys(system, ('central', 'bath'), 'system')
    return ExperimentSpec(
        seed=seed,
        fields=_fields(raw),
        central=_central(system.get('central')),
        bath=_bath(system.get('bath')),
        sequence=_sequence(raw.get('sequence')),
        levels=_levels(raw.get('levels')),
        method=_method(raw.get('method')),
        time=_time(raw.get('time')),
        analysis=_analysis(raw.get('analysis')),
        output=_section(raw.get('output'), OutputSpec, 'output', lambda k, v, w: str(v)),
        workers=_int(raw.get('workers', 1), 'workers', 1),
        schema_version=version,
    )


def parse_config(path):
    """Read and validate a YAML or JSON configuration file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f'cannot read {path}: {e.strerror}') from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f'{path}: invalid YAML: {e}') from None
    return parse_dict(raw or {})


def serialize(spec):
    """YAML text of the effective configuration; ``parse`` of it gives back ``spec``."""
    return yaml.safe_dump(spec.to_dict(), sort_keys=False, default_flow_style=False)


def loads(text):
    return parse_dict(yaml.safe_load(text) or {})


def build_central(spec):
    from .spin_model import CentralSpin
    c = spec.central
    return CentralSpin(c.spin, c.D, c.E, c.gyro)


def build_bath(spec, base_dir='.'):
    """Bath spins described by ``spec`` (file, or random lattice population)."""
    import os
    from .spin_model import generate_bath, load_bath
    b = spec.bath
    if b.file is not None:
        return load_bath(os.path.join(base_dir, b.file))
    seed = spec.seed if b.seed is None else b.seed
    return generate_bath(b.lattice, b.abundances, b.radius, seed, gyro_e=spec.central.gyro)


def build_system(spec, base_dir='.', field=None):
    """SpinSystem at ``field`` (default: first configured field)."""
    import os
    from .spin_model import import_hyperfine_table, make_system, weak_bath
    system = make_system(build_central(spec), build_bath(spec, base_dir),
                         spec.fields[0] if field is None else field)
    if spec.bath.hyperfine_table is not None:
        system = import_hyperfine_table(os.path.join(base_dir, spec.bath.hyperfine_table), system)
    if spec.bath.weak_cutoff is not None and spec.bath.file is None:
        system = weak_bath(system, spec.bath.weak_cutoff)
    return system


def build_sequence(spec):
    from .propagation import PRESETS, PulseSequence
    s = spec.sequence
    if s.preset == 'custom':
        return PulseSequence(s.steps, s.final_delay, s.n_repeat, 'custom')
    if s.preset == 'ramsey':
        return PRESETS['ramsey']()
    if s.preset == 'hahn':
        return PRESETS['hahn'](axis=s.axis)
    if s.preset == 'cpmg':
        return PRESETS['cpmg'](s.n, axis=s.axis)
    return PRESETS['xy4'](s.n)


def build_levels(spec):
    from .hamiltonian import LevelSelection
    lv = spec.levels
    return LevelSelection.sz(lv.a, lv.b) if lv.kind == 'sz' else LevelSelection.index(lv.a, lv.b)


def build_experiment(spec, workers=None):
    from .cce import Experiment
    m = spec.method
    return Experiment(spec.time.grid(), build_sequence(spec), build_levels(spec), m.name, m.order,
                      m.r_dip, m.n_states, m.exhaustive, m.mixed, spec.seed, m.mean_field,
                      m.populations, spec.workers if workers is None else workers, m.eps_div, m.mask)
