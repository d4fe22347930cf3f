"""
Hamiltonians of the central spin and of central-spin + cluster systems.

Basis convention: central spin (x) bath nuclei in ascending bath index, every
spin space ordered by descending ``m``. All matrices are in MHz.
"""
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

from .errors import DegeneracyError, ValidationError

HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-9  # MHz


@lru_cache(maxsize=None)
def _spin_operators(s):
    d = int(round(2 * s + 1))
    m = s - np.arange(d)
    sz = np.diag(m).astype(np.complex128)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    sp = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), 1).astype(np.complex128)
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    for op in (sx, sy, sz):
        op.flags.writeable = False
    return sx, sy, sz


def spin_operators(s):
    """Angular momentum matrices ``(Sx, Sy, Sz)`` for spin ``s`` in the Sz basis, descending m.

    Examples::

        >>> sx, sy, sz = spin_operators(0.5)
        >>> np.diag(sz).real
        array([ 0.5, -0.5])
    """
    s = float(s)
    if not s > 0 or abs(2 * s - round(2 * s)) > 1e-12:
        raise ValidationError(f'spin must be a positive multiple of 1/2, got {s}')
    return _spin_operators(round(2 * s) / 2)


def sz_state(s, m):
    """Column vector of the Sz eigenstate ``|m>`` of spin ``s``."""
    d = int(round(2 * s + 1))
    k = int(round(s - m))
    if not 0 <= k < d or abs(s - m - k) > 1e-12:
        raise ValidationError(f'm = {m} is not a projection of spin {s}')
    v = np.zeros(d, dtype=np.complex128)
    v[k] = 1
    return v


def check_hermitian(h, tol=HERMITIAN_TOL):
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    err = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if err > tol * scale:
        raise ValidationError(f'matrix is not Hermitian (max |H - H^+| = {err:.3e})')


def build_electron_hamiltonian(central, field):
    """Central spin Hamiltonian (MHz) at field ``field`` (mT) along z.

    ``H = -gyro * B * Sz + D (Sz^2 - S(S+1)/3) + E (Sx^2 - Sy^2)``
    """
    sx, sy, sz = spin_operators(central.spin)
    s = central.spin
    eye = np.eye(sz.shape[0])
    return (-central.gyro * field * sz
            + central.D * (sz @ sz - s * (s + 1) / 3 * eye)
            + central.E * (sx @ sx - sy @ sy))


def _embed_diag(vec, k, dims):
    left = int(np.prod(dims[:k], dtype=int))
    right = int(np.prod(dims[k + 1:], dtype=int))
    return np.kron(np.kron(np.ones(left), vec), np.ones(right))


def _projections(bath_state, n):
    if bath_state is None:
        return None
    m = getattr(bath_state, 'projections', bath_state)
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (n,):
        raise ValidationError(f'bath state has {m.shape} projections, system has {n} bath spins')
    return m


def _check_cluster(system, cluster):
    cluster = tuple(int(i) for i in cluster)
    n = len(system.bath)
    for i in cluster:
        if not 0 <= i < n:
            raise ValidationError(f'bath index {i} out of range for {n} spins')
    if len(set(cluster)) != len(cluster):
        raise ValidationError(f'cluster {cluster} has repeated indices')
    return tuple(sorted(cluster))


def mean_field(system, cluster, bath_state):
    """Mean-field shifts acting on a cluster from every bath spin outside it.

    Returns:
        tuple: ``(sz_shift, iz_shifts)`` -- coefficient of ``Sz`` and, per cluster
        spin, coefficient of ``Iz`` (MHz).
    """
    cluster = _check_cluster(system, cluster)
    n = len(system.bath)
    m = _projections(bath_state, n)
    if m is None or n == 0:
        return 0.0, np.zeros(len(cluster))
    idx = np.array(cluster, dtype=int)
    out = np.ones(n, dtype=bool)
    out[idx] = False
    azz = system.hyperfines[:, 2, 2]
    sz_shift = float(azz[out] @ m[out])
    if len(idx):
        iz = system.pzz[idx][:, out] @ m[out]
    else:
        iz = np.zeros(0)
    return sz_shift, iz


def _local_product(factors, dims):
    """Kronecker product with ``factors[k]`` on space ``k`` and identity elsewhere."""
    out = np.ones((1, 1), dtype=np.complex128)
    for k, d in enumerate(dims):
        op = factors.get(k)
        out = np.kron(out, np.eye(d) if op is None else op)
    return out


def _coupling(tensor, ops1, ops2, k1, k2, dims):
    """``sum_pq T_pq O1_p O2_q`` with the two operator sets acting on spaces ``k1 != k2``."""
    dim = int(np.prod(dims, dtype=int))
    h = np.zeros((dim, dim), dtype=np.complex128)
    for p in range(3):
        # contract the second index first so only three Kronecker products are formed
        right = sum(tensor[p, q] * ops2[q] for q in range(3) if tensor[p, q] != 0)
        if isinstance(right, np.ndarray):
            h += _local_product({k1: ops1[p], k2: right}, dims)
    return h


def _nuclear_terms(system, cluster, dims, offset):
    """Nuclear Zeeman and intra-cluster dipolar terms on the space ``dims``."""
    dim = int(np.prod(dims, dtype=int))
    h = np.zeros((dim, dim), dtype=np.complex128)
    for k, i in enumerate(cluster):
        spin = system.bath[i]
        h += _local_product({k + offset: -spin.gyro * system.field * spin_operators(spin.spin)[2]}, dims)
    for k1 in range(len(cluster)):
        for k2 in range(k1 + 1, len(cluster)):
            i, j = cluster[k1], cluster[k2]
            p_ij = system.dipolar(i, j).tensor
            h += _coupling(p_ij, spin_operators(system.bath[i].spin), spin_operators(system.bath[j].spin),
                           k1 + offset, k2 + offset, dims)
    return h


def cluster_hamiltonian_static(system, cluster):
    """Part of the cluster Hamiltonian that does not depend on the bath state."""
    cluster = _check_cluster(system, cluster)
    dims = [system.central.dim] + [system.bath[i].dim for i in cluster]
    s_ops = spin_operators(system.central.spin)
    h = _local_product({0: build_electron_hamiltonian(system.central, system.field)}, dims)
    for k, i in enumerate(cluster):
        spin = system.bath[i]
        h += _coupling(spin.hyperfine, s_ops, spin_operators(spin.spin), 0, k + 1, dims)
    h += _nuclear_terms(system, cluster, dims, 1)
    return h


def mean_field_basis(system, cluster, central=True):
    """Diagonals of ``Sz`` and of each cluster ``Iz`` on the cluster space, as columns.

    With ``central=False`` the space is the bath cluster alone and the ``Sz``
    column is all ones (the projected central spin enters as a number).
    """
    cluster = _check_cluster(system, cluster)
    dims = ([system.central.dim] if central else []) + [system.bath[i].dim for i in cluster]
    cols = []
    if central:
        s = system.central.spin
        cols.append(_embed_diag(s - np.arange(dims[0]), 0, dims))
    else:
        cols.append(np.ones(int(np.prod(dims, dtype=int))))
    off = 1 if central else 0
    for k, i in enumerate(cluster):
        si = system.bath[i].spin
        cols.append(_embed_diag(si - np.arange(dims[k + off]), k + off, dims))
    return np.stack(cols, axis=1)


def mean_field_diagonal(system, cluster, bath_state, basis=None):
    """Diagonal of the mean-field Hamiltonian in the product Sz (x) Iz basis."""
    sz_shift, iz = mean_field(system, cluster, bath_state)
    if basis is None:
        basis = mean_field_basis(system, cluster)
    return basis @ np.concatenate([[sz_shift], iz])


def build_cluster_hamiltonian(system, cluster, bath_state=None):
    """Hamiltonian of the central spin and ``cluster`` (MHz).

    Contains the central spin term, nuclear Zeeman, full hyperfine, intra-cluster
    dipolar couplings (each pair once) and, when ``bath_state`` is given, the
    mean-field shifts from all spins outside the cluster.
    """
    h = cluster_hamiltonian_static(system, cluster)
    if bath_state is not None:
        h = h + np.diag(mean_field_diagonal(system, cluster, bath_state))
    return h


def projected_bath_hamiltonian(system, cluster, level, bath_state=None):
    """Bath-only Hamiltonian conditioned on central-spin state ``level``.

    Every central-spin operator is replaced by its expectation value in ``level``.
    """
    cluster = _check_cluster(system, cluster)
    level = np.asarray(level, dtype=np.complex128)
    norm = np.linalg.norm(level)
    if abs(norm - 1) > 1e-10:
        raise ValidationError('level must be normalized')
    sx, sy, sz = spin_operators(system.central.spin)
    he = build_electron_hamiltonian(system.central, system.field)
    svec = np.array([np.vdot(level, op @ level).real for op in (sx, sy, sz)])
    e0 = np.vdot(level, he @ level).real
    dims = [system.bath[i].dim for i in cluster]
    dim = int(np.prod(dims, dtype=int))
    h = e0 * np.eye(dim, dtype=np.complex128)
    for k, i in enumerate(cluster):
        ops = spin_operators(system.bath[i].spin)
        field_vec = svec @ system.bath[i].hyperfine
        h += _local_product({k: sum(field_vec[q] * ops[q] for q in range(3))}, dims)
    h += _nuclear_terms(system, cluster, dims, 0)
    if bath_state is not None:
        h = h + np.diag(projected_mean_field_diagonal(system, cluster, bath_state, svec[2]))
    return h


def projected_mean_field_diagonal(system, cluster, bath_state, sz_expectation, basis=None):
    """Mean-field diagonal on the bath-only space for a central spin with ``<Sz> = sz_expectation``."""
    sz_shift, iz = mean_field(system, cluster, bath_state)
    if basis is None:
        basis = mean_field_basis(system, cluster, central=False)
    return basis @ np.concatenate([[sz_shift * sz_expectation], iz])


def expectation_sz(system, level):
    sz = spin_operators(system.central.spin)[2]
    return float(np.vdot(level, sz @ level).real)


@dataclass(frozen=True)
class LevelSelection:
    """How the two qubit levels are chosen among central-spin eigenstates.

    ``kind`` is one of

    - ``'sz'``: ``a``, ``b`` are ``m_s`` labels; picks the eigenstates closest to ``|m_s>``;
    - ``'index'``: ``a``, ``b`` are indices of eigenstates sorted by energy;
    - ``'vector'``: ``a``, ``b`` are state vectors in the Sz basis.
    """
    kind: str
    a: object
    b: object

    @classmethod
    def sz(cls, a, b):
        return cls('sz', float(a), float(b))

    @classmethod
    def index(cls, a, b):
        return cls('index', int(a), int(b))

    @classmethod
    def vectors(cls, a, b):
        return cls('vector', tuple(np.asarray(a, dtype=complex)), tuple(np.asarray(b, dtype=complex)))

    def __post_init__(self):
        if self.kind not in ('sz', 'index', 'vector'):
            raise ValidationError(f'unknown level selection {self.kind!r}')


@dataclass(frozen=True)
class QubitLevels:
    """Two orthonormal central-spin states ``|a>`` and ``|b>`` with their energies (MHz)."""
    a: np.ndarray
    b: np.ndarray
    energies: tuple = (np.nan, np.nan)
    labels: tuple = ('a', 'b')

    def __post_init__(self):
        a = np.array(self.a, dtype=np.complex128)
        b = np.array(self.b, dtype=np.complex128)
        if a.shape != b.shape or a.ndim != 1:
            raise ValidationError('qubit levels must be vectors of equal size')
        if abs(np.linalg.norm(a) - 1) > 1e-12 or abs(np.linalg.norm(b) - 1) > 1e-12:
            raise ValidationError('qubit levels must be normalized')
        if abs(np.vdot(a, b)) > 1e-10:
            raise ValidationError('qubit levels must be orthogonal')
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)

    @property
    def dim(self):
        return self.a.shape[0]

    @property
    def splitting(self):
        """Energy of ``|a>`` minus energy of ``|b>`` (MHz)."""
        return self.energies[0] - self.energies[1]


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def _groups(w, tol):
    groups, start = [], 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > tol:
            groups.append(list(range(start, k)))
            start = k
    return groups


def _closest_eigenstate(w, v, groups, target):
    target = np.asarray(target, dtype=np.complex128)
    target = target / np.linalg.norm(target)
    weights = []
    projections = []
    for g in groups:
        coef = v[:, g].conj().T @ target
        proj = v[:, g] @ coef
        projections.append(proj)
        weights.append(np.linalg.norm(coef))
    order = np.argsort(weights)[::-1]
    if len(order) > 1 and weights[order[0]] - weights[order[1]] < 1e-10:
        raise DegeneracyError('qubit level is ambiguous: equal overlap with two eigenstates')
    g = order[0]
    vec = projections[g] / weights[g]
    return _fix_phase(vec), float(np.mean(w[groups[g]]))


def select_qubit_levels(he, selection, previous=None, tol=DEGENERACY_TOL):
    """Pick two eigenstates of the central spin Hamiltonian ``he`` as qubit levels.

    Args:
        he (ndarray): Central spin Hamiltonian.
        selection (LevelSelection): Selection rule.
        previous (QubitLevels): If given, each level is instead the eigenstate with
            maximal overlap with its predecessor (adiabatic tracking in field sweeps).
        tol (float): Energy window (MHz) within which eigenvalues count as degenerate.

    Returns:
        QubitLevels.
    """
    check_hermitian(he)
    w, v = np.linalg.eigh(he)
    groups = _groups(w, tol)
    s = (he.shape[0] - 1) / 2
    labels = (str(selection.a), str(selection.b))
    if previous is not None:
        targets = (previous.a, previous.b)
        labels = previous.labels
    elif selection.kind == 'index':
        out = []
        for k in (selection.a, selection.b):
            if not -len(w) <= k < len(w):
                raise ValidationError(f'level index {k} out of range')
            k = k % len(w)
            g = next(g for g in groups if k in g)
            if len(g) > 1:
                raise DegeneracyError(f'eigenstate {k} is degenerate (E = {w[k]:.6g} MHz)')
            out.append((_fix_phase(v[:, k]), float(w[k])))
        return QubitLevels(out[0][0], out[1][0], (out[0][1], out[1][1]), labels)
    elif selection.kind == 'sz':
        targets = (sz_state(s, selection.a), sz_state(s, selection.b))
    else:
        targets = (np.array(selection.a), np.array(selection.b))
    (a, ea), (b, eb) = (_closest_eigenstate(w, v, groups, t) for t in targets)
    if abs(np.vdot(a, b)) > 1e-10:
        raise DegeneracyError('both qubit levels map onto the same eigenstate')
    return QubitLevels(a, b, (ea, eb), labels)


def qubit_pauli(levels, axis):
    """Pauli operator on the central-spin space, spanned by the qubit levels.

    ``sigma_x = |a><b| + |b><a|``, ``sigma_y = i(|b><a| - |a><b|)``,
    ``sigma_z = |a><a| - |b><b|``; zero outside the qubit subspace.
    """
    a, b = levels.a[:, None], levels.b[:, None]
    ab = a @ b.conj().T
    if axis == 'x':
        return ab + ab.conj().T
    if axis == 'y':
        return 1j * (ab.conj().T - ab)
    if axis == 'z':
        return a @ a.conj().T - b @ b.conj().T
    raise ValidationError(f"pulse axis must be 'x', 'y' or 'z', got {axis!r}")


def qubit_rotation(levels, axis, angle):
    """``exp(-i sigma angle / 2)`` on the central-spin space (identity outside the qubit subspace)."""
    sigma = qubit_pauli(levels, axis)
    proj = np.outer(levels.a, levels.a.conj()) + np.outer(levels.b, levels.b.conj())
    eye = np.eye(levels.dim)
    return eye - proj + np.cos(angle / 2) * proj - 1j * np.sin(angle / 2) * sigma


def kron_all(ops):
    return reduce(np.kron, ops)
