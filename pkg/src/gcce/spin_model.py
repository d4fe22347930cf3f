"""
Central spin, nuclear spin bath, and their interaction tensors.

All positions are Cartesian coordinates in nm, couplings in MHz, gyromagnetic
ratios in MHz/mT. The central spin sits at ``CentralSpin.position`` (origin by
default) and the bath spins are given in the same frame.
"""
import dataclasses
import logging
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .constants import DIPOLAR_PREFACTOR, ELECTRON_GYRO, ISOTOPES, isotope
from .errors import ConfigError, ParseError, SingularityError, ValidationError

log = logging.getLogger(__name__)

POSITION_MATCH_TOL = 1e-4  # nm
COUPLING_MODES = ('full', 'secular', 'none')


def _frozen_array(x, shape=None, dtype=np.float64):
    a = np.array(x, dtype=dtype)
    if shape is not None and a.shape != shape:
        raise ValidationError(f'expected shape {shape}, got {a.shape}')
    a.flags.writeable = False
    return a


def _check_spin(s, what):
    s = float(s)
    if not s > 0 or abs(2 * s - round(2 * s)) > 1e-12:
        raise ValidationError(f'{what} spin must be a positive multiple of 1/2, got {s}')
    return s


@dataclass(frozen=True)
class CentralSpin:
    """Electron spin of the defect.

    Args:
        spin (float): Spin quantum number S.
        D (float): Longitudinal zero-field splitting in MHz.
        E (float): Transverse zero-field splitting in MHz.
        gyro (float): Gyromagnetic ratio in MHz/mT. Negative for an electron.
        position (array-like): Position in nm.
    """
    spin: float = 1.0
    D: float = 0.0
    E: float = 0.0
    gyro: float = ELECTRON_GYRO
    position: np.ndarray = dc_field(default=(0., 0., 0.))

    def __post_init__(self):
        object.__setattr__(self, 'spin', _check_spin(self.spin, 'central'))
        if not np.isfinite(self.gyro) or self.gyro == 0:
            raise ValidationError('central spin gyromagnetic ratio must be finite and nonzero')
        if not (np.isfinite(self.D) and np.isfinite(self.E)):
            raise ValidationError('zero-field splitting must be finite')
        object.__setattr__(self, 'position', _frozen_array(self.position, (3,)))

    @property
    def dim(self):
        return int(round(2 * self.spin + 1))

    def __eq__(self, other):
        if not isinstance(other, CentralSpin):
            return NotImplemented
        return (self.spin, self.D, self.E, self.gyro) == (other.spin, other.D, other.E, other.gyro) \
            and np.array_equal(self.position, other.position)

    __hash__ = None


@dataclass(frozen=True)
class BathSpin:
    """One nuclear spin of the bath.

    ``hyperfine`` is the full 3x3 tensor A (MHz) entering ``S . A . I``. When
    ``spin``/``gyro`` are omitted they are taken from the isotope table.
    """
    isotope: str
    position: np.ndarray
    hyperfine: np.ndarray = None
    spin: Optional[float] = None
    gyro: Optional[float] = None

    def __post_init__(self):
        if self.spin is None or self.gyro is None:
            iso = isotope(self.isotope)
            if self.spin is None:
                object.__setattr__(self, 'spin', iso.spin)
            if self.gyro is None:
                object.__setattr__(self, 'gyro', iso.gyro)
        object.__setattr__(self, 'spin', _check_spin(self.spin, self.isotope))
        object.__setattr__(self, 'gyro', float(self.gyro))
        if not np.isfinite(self.gyro):
            raise ValidationError('gyromagnetic ratio must be finite')
        object.__setattr__(self, 'position', _frozen_array(self.position, (3,)))
        if not np.all(np.isfinite(self.position)):
            raise ValidationError('position must be finite')
        a = np.zeros((3, 3)) if self.hyperfine is None else self.hyperfine
        a = np.asarray(a)
        if np.iscomplexobj(a):
            raise ValidationError('hyperfine tensor must be real')
        a = _frozen_array(a, (3, 3))
        if not np.all(np.isfinite(a)):
            raise ValidationError('hyperfine tensor must be finite')
        object.__setattr__(self, 'hyperfine', a)

    @property
    def dim(self):
        return int(round(2 * self.spin + 1))

    def with_hyperfine(self, tensor):
        return dataclasses.replace(self, hyperfine=tensor)

    def __eq__(self, other):
        if not isinstance(other, BathSpin):
            return NotImplemented
        return (self.isotope, self.spin, self.gyro) == (other.isotope, other.spin, other.gyro) \
            and np.array_equal(self.position, other.position) \
            and np.array_equal(self.hyperfine, other.hyperfine)

    __hash__ = None


@dataclass(frozen=True)
class DipolarTensor:
    source: Optional[int]
    target: Optional[int]
    tensor: np.ndarray


def _dipole_form(r):
    r = np.asarray(r, dtype=np.float64)
    d = np.linalg.norm(r)
    if d == 0:
        raise SingularityError('dipolar coupling undefined at zero separation')
    return (3 * np.outer(r, r) - d ** 2 * np.eye(3)) / d ** 5


def point_dipole_hyperfine(r, gyro_e=ELECTRON_GYRO, gyro_n=None):
    """Point-dipole hyperfine tensor (MHz) of a nucleus at ``r`` (nm) from the central spin.

    ``A = -K * gyro_e * gyro_n * (3 r r^T - |r|^2 I) / |r|^5`` with ``K = DIPOLAR_PREFACTOR``.
    No contact term.
    """
    if gyro_n is None:
        raise ValidationError('nuclear gyromagnetic ratio required')
    return -DIPOLAR_PREFACTOR * gyro_e * gyro_n * _dipole_form(r)


def dipolar_tensor(spin_i, spin_j, i=None, j=None):
    """Nuclear dipole-dipole tensor P_ij (MHz) entering ``I_i . P . I_j``."""
    r = spin_j.position - spin_i.position
    try:
        form = _dipole_form(r)
    except SingularityError:
        raise SingularityError(f'bath spins {i} and {j} share a position') from None
    return DipolarTensor(i, j, -DIPOLAR_PREFACTOR * spin_i.gyro * spin_j.gyro * form)


def dipolar_zz_matrix(positions, gyros):
    """P_zz for every pair of spins as an (N, N) array with zero diagonal."""
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    out = np.zeros((n, n))
    if n < 2:
        return out
    dr = positions[None, :, :] - positions[:, None, :]
    d2 = np.einsum('ijk,ijk->ij', dr, dr)
    np.fill_diagonal(d2, 1.)
    if np.any(d2 == 0):
        raise SingularityError('two bath spins share a position')
    form = (3 * dr[..., 2] ** 2 - d2) / d2 ** 2.5
    out = -DIPOLAR_PREFACTOR * np.outer(gyros, gyros) * form
    np.fill_diagonal(out, 0.)
    return out


@dataclass(frozen=True)
class Lattice:
    """Periodic lattice of candidate nuclear sites.

    Args:
        cell (ndarray with shape (3, 3)): Cell vectors as rows, in nm.
        sites (tuple): ``(fractional_xyz, isotope)`` pairs, one per basis site.
            ``isotope`` is the magnetic isotope that may occupy the site.
        center (array-like): Fractional coordinates of the central spin.
        vacancies (tuple): Fractional coordinates of sites removed by the defect.
        axis (array-like or None): Cartesian direction (before rotation) mapped onto z.
            Lets a defect axis that is not along a cell vector act as the quantization axis.
        name (str): Label stored in system metadata.
    """
    cell: np.ndarray
    sites: tuple
    center: np.ndarray = (0., 0., 0.)
    vacancies: tuple = ()
    axis: Optional[np.ndarray] = None
    name: str = 'custom'

    def __post_init__(self):
        if not self.sites:
            raise ConfigError('lattice has no basis sites')
        object.__setattr__(self, 'cell', _frozen_array(self.cell, (3, 3)))
        if abs(np.linalg.det(self.cell)) < 1e-12:
            raise ConfigError('lattice cell vectors are degenerate')
        object.__setattr__(self, 'center', _frozen_array(self.center, (3,)))
        sites = tuple((tuple(float(x) for x in frac), str(iso)) for frac, iso in self.sites)
        object.__setattr__(self, 'sites', sites)
        object.__setattr__(self, 'vacancies', tuple(tuple(float(x) for x in v) for v in self.vacancies))
        if self.axis is not None:
            object.__setattr__(self, 'axis', _frozen_array(self.axis, (3,)))

    def rotation(self):
        """Rotation matrix taking ``axis`` onto +z (identity if no axis)."""
        if self.axis is None:
            return np.eye(3)
        u = self.axis / np.linalg.norm(self.axis)
        z = np.array([0., 0., 1.])
        v = np.cross(u, z)
        c = float(u @ z)
        if np.linalg.norm(v) < 1e-14:
            return np.eye(3) if c > 0 else np.diag([1., -1., -1.])
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        return np.eye(3) + vx + vx @ vx / (1 + c)


SIC_4H_A = 0.3073  # nm
SIC_4H_C = 1.0053  # nm

_SIC_4H_SITES = (
    ((0., 0., 0.), '29Si'),
    ((0., 0., 0.5), '29Si'),
    ((1 / 3, 2 / 3, 0.25), '29Si'),
    ((2 / 3, 1 / 3, 0.75), '29Si'),
    ((0., 0., 3 / 16), '13C'),
    ((0., 0., 11 / 16), '13C'),
    ((1 / 3, 2 / 3, 7 / 16), '13C'),
    ((2 / 3, 1 / 3, 15 / 16), '13C'),
)


def sic_4h(defect='kk'):
    """4H-SiC lattice with a divacancy at the origin.

    ``defect='kk'`` removes an Si-C pair bonded along c (axial divacancy).
    ``defect='kh'`` removes a basal Si-C pair and rotates the lattice so the
    vacancy-vacancy axis is z. ``defect=None`` gives the perfect lattice
    centered on an Si site.
    """
    a, c = SIC_4H_A, SIC_4H_C
    cell = np.array([[a, 0, 0], [-a / 2, a * np.sqrt(3) / 2, 0], [0, 0, c]])
    if defect is None:
        return Lattice(cell, _SIC_4H_SITES, name='4H-SiC')
    if defect == 'kk':
        si, cc = np.array([0., 0., 0.]), np.array([0., 0., 3 / 16])
    elif defect == 'kh':
        si, cc = np.array([1 / 3, 2 / 3, 0.25]), np.array([0., 0., 3 / 16])
    else:
        raise ConfigError(f"unknown 4H-SiC defect {defect!r}; use 'kk', 'kh' or None")
    axis = (si - cc) @ cell if defect == 'kh' else None
    return Lattice(cell, _SIC_4H_SITES, center=(si + cc) / 2, vacancies=(tuple(si), tuple(cc)),
                   axis=axis, name=f'4H-SiC:{defect}')


NAMED_LATTICES = {
    '4H-SiC': lambda: sic_4h(None),
    '4H-SiC:kk': lambda: sic_4h('kk'),
    '4H-SiC:kh': lambda: sic_4h('kh'),
}


def lattice_sites(lattice, radius):
    """Candidate sites within ``radius`` of the lattice center.

    Returns:
        tuple: ``(positions, isotopes)`` with positions (nm, rotated frame, center at
        origin) in a deterministic order (basis site, then cell index).
    """
    if radius is None or not radius > 0:
        raise ValidationError(f'bath radius must be positive, got {radius}')
    cell = lattice.cell
    inv = np.linalg.inv(cell)
    # number of cells needed along each direction to cover the sphere
    span = np.ceil(radius * np.linalg.norm(inv, axis=0)).astype(int) + 1
    rng = [np.arange(-s, s + 1) for s in span]
    grid = np.stack(np.meshgrid(*rng, indexing='ij'), -1).reshape(-1, 3).astype(np.float64)
    rot = lattice.rotation()
    vac = np.array(lattice.vacancies).reshape(-1, 3)

    positions, isotopes = [], []
    for frac, iso in lattice.sites:
        fr = grid + np.asarray(frac)
        if len(vac):
            diff = fr[:, None, :] - vac[None, :, :]
            keep = ~np.any(np.all(np.abs(diff) < 1e-9, axis=-1), axis=1)
            fr = fr[keep]
        xyz = (fr - lattice.center) @ cell @ rot.T
        dist = np.linalg.norm(xyz, axis=1)
        mask = (dist <= radius) & (dist > 1e-9)
        positions.append(xyz[mask])
        isotopes.extend([iso] * int(mask.sum()))
    return np.concatenate(positions), isotopes


def generate_bath(lattice, abundances, radius, seed, gyro_e=ELECTRON_GYRO, center=(0., 0., 0.)):
    """Randomly populate lattice sites with magnetic isotopes.

    Every candidate site within ``radius`` is occupied independently with the
    probability ``abundances[isotope]``, using one RNG stream seeded by ``seed``.
    Hyperfine tensors are filled with the point-dipole approximation.

    Args:
        lattice (Lattice or str): Lattice, or the name of a built-in one.
        abundances (dict): isotope -> occupation probability.
        radius (float): Bath radius in nm.
        seed (int): Seed of the random stream.
        gyro_e (float): Central spin gyromagnetic ratio for the point-dipole tensors.
        center (array-like): Position of the central spin in nm; bath positions are shifted by it.

    Returns:
        list of BathSpin.
    """
    if isinstance(lattice, str):
        try:
            lattice = NAMED_LATTICES[lattice]()
        except KeyError:
            raise ConfigError(f'unknown lattice {lattice!r}; known: {sorted(NAMED_LATTICES)}') from None
    if lattice is None:
        raise ConfigError('empty lattice description')
    for iso, p in abundances.items():
        if not 0 <= p <= 1:
            raise ValidationError(f'abundance of {iso} must lie in [0, 1], got {p}')
    positions, isos = lattice_sites(lattice, radius)
    rng = np.random.default_rng(seed)
    draws = rng.random(len(positions))
    probs = np.array([abundances.get(iso, 0.) for iso in isos])
    occupied = np.flatnonzero(draws < probs)
    center = np.asarray(center, dtype=np.float64)
    bath = []
    for k in occupied:
        iso = isotope(isos[k])
        r = positions[k]
        bath.append(BathSpin(iso.name, r + center, point_dipole_hyperfine(r, gyro_e, iso.gyro)))
    return bath


@dataclass(frozen=True)
class SpinSystem:
    """Central spin plus its nuclear bath in a field ``Bz`` (mT) along z.

    ``couplings`` selects the nuclear dipole-dipole terms: ``'full'`` tensors,
    ``'secular'`` (only ``P_zz Iz Iz``, no flip-flops) or ``'none'``.
    """
    central: CentralSpin
    bath: tuple = ()
    field: float = 0.0
    meta: dict = dc_field(default_factory=dict, compare=False)
    couplings: str = 'full'

    def __post_init__(self):
        if self.couplings not in COUPLING_MODES:
            raise ValidationError(f'couplings must be one of {COUPLING_MODES}, got {self.couplings!r}')
        object.__setattr__(self, 'bath', tuple(self.bath))
        object.__setattr__(self, 'field', float(self.field))
        if not np.isfinite(self.field):
            raise ValidationError('magnetic field must be finite')
        if len(self.bath) > 1:
            tree = cKDTree(self.positions)
            if tree.query_pairs(1e-6):
                raise ValidationError('two bath spins share a position')

    def __len__(self):
        return len(self.bath)

    def with_field(self, field):
        return dataclasses.replace(self, field=field)

    def with_bath(self, bath):
        return dataclasses.replace(self, bath=tuple(bath))

    @cached_property
    def positions(self):
        return _frozen_array(np.array([b.position for b in self.bath]).reshape(-1, 3))

    @cached_property
    def gyros(self):
        return _frozen_array([b.gyro for b in self.bath])

    @cached_property
    def spins(self):
        return _frozen_array([b.spin for b in self.bath])

    @cached_property
    def dims(self):
        d = np.array([b.dim for b in self.bath], dtype=int)
        d.flags.writeable = False
        return d

    @cached_property
    def hyperfines(self):
        return _frozen_array(np.array([b.hyperfine for b in self.bath]).reshape(-1, 3, 3))

    @cached_property
    def pzz(self):
        """Dipolar P_zz between all bath spins, used by the mean field."""
        if self.couplings == 'none':
            return _frozen_array(np.zeros((len(self.bath),) * 2))
        return _frozen_array(dipolar_zz_matrix(self.positions, self.gyros))

    def dipolar(self, i, j):
        d = dipolar_tensor(self.bath[i], self.bath[j], i, j)
        if self.couplings == 'full':
            return d
        keep = np.zeros((3, 3))
        if self.couplings == 'secular':
            keep[2, 2] = d.tensor[2, 2]
        return DipolarTensor(i, j, _frozen_array(keep))


def make_system(central, bath=(), field=0.0, couplings='full', **meta):
    return SpinSystem(central, tuple(bath), field, dict(meta), couplings)


def weak_bath(system, cutoff=1.0):
    """Drop every bath spin with ``|A_zz| >= cutoff`` (MHz)."""
    keep = [b for b in system.bath if abs(b.hyperfine[2, 2]) < cutoff]
    return system.with_bath(keep)


def _fmt(x):
    return repr(float(x))


def write_bath_file(path, bath):
    """Write bath spins in the whitespace-delimited text format.

    Each line: ``isotope x y z Axx Axy Axz Ayx Ayy Ayz Azx Azy Azz`` (nm, MHz).
    Floats are written with ``repr`` so the round trip is exact.
    """
    if isinstance(bath, SpinSystem):
        bath = bath.bath
    with open(path, 'w') as f:
        f.write('# isotope x_nm y_nm z_nm Axx Axy Axz Ayx Ayy Ayz Azx Azy Azz (MHz)\n')
        for b in bath:
            cols = [b.isotope] + [_fmt(x) for x in b.position] + [_fmt(x) for x in b.hyperfine.ravel()]
            f.write(' '.join(cols) + '\n')


def read_bath_file(path):
    """Parse a bath file into ``(isotopes, positions, tensors, line_numbers)``."""
    isos, pos, tens, lines = [], [], [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            text = line.split('#', 1)[0].strip()
            if not text:
                continue
            cols = text.split()
            if len(cols) != 13:
                raise ParseError(f'expected 13 columns, got {len(cols)}', path, lineno)
            try:
                vals = [float(x) for x in cols[1:]]
            except ValueError as e:
                raise ParseError(str(e), path, lineno) from None
            if not np.all(np.isfinite(vals)):
                raise ParseError('non-finite value', path, lineno)
            isos.append(cols[0])
            pos.append(vals[:3])
            tens.append(np.reshape(vals[3:], (3, 3)))
            lines.append(lineno)
    return isos, np.array(pos).reshape(-1, 3), np.array(tens).reshape(-1, 3, 3), lines


def load_bath(path):
    """Read a bath file into a list of BathSpin."""
    isos, pos, tens, lines = read_bath_file(path)
    out = []
    for iso, p, a, ln in zip(isos, pos, tens, lines):
        if iso not in ISOTOPES:
            raise ParseError(f'unknown isotope {iso!r}', path, ln)
        out.append(BathSpin(iso, p, a))
    return out


def import_hyperfine_table(path, system):
    """Override hyperfine tensors of bath spins found in a tabulated file.

    Bath spins are matched by position within 1e-4 nm. Unmatched bath spins keep
    their tensors; unmatched table rows are logged and listed in
    ``meta['unmatched_hyperfine_rows']`` of the returned system.
    """
    isos, pos, tens, lines = read_bath_file(path)
    if len(pos) == 0:
        return system
    table = cKDTree(pos)
    dup = table.query_pairs(POSITION_MATCH_TOL)
    if dup:
        i, j = sorted(dup)[0]
        raise ValidationError(f'{path}: lines {lines[i]} and {lines[j]} share a position')
    bath = list(system.bath)
    matched = set()
    if bath:
        dist, idx = table.query(system.positions, distance_upper_bound=POSITION_MATCH_TOL)
        for k, (d, row) in enumerate(zip(dist, idx)):
            if np.isfinite(d):
                bath[k] = bath[k].with_hyperfine(tens[row])
                matched.add(int(row))
    unmatched = [lines[r] for r in range(len(pos)) if r not in matched]
    if unmatched:
        log.warning('%s: %d table rows matched no bath spin (lines %s)', path, len(unmatched), unmatched)
    meta = dict(system.meta, unmatched_hyperfine_rows=unmatched)
    return dataclasses.replace(system, bath=tuple(bath), meta=meta)
