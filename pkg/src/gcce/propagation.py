"""
Time evolution of cluster states under free precession and ideal pulses.

Hamiltonians are in MHz and times in us; the propagator is
``exp(-2j * pi * H * t)``. Pulses are instantaneous rotations about axes of the
qubit frame spanned by the two qubit levels.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .hamiltonian import check_hermitian, qubit_rotation, sz_state

TWO_PI = 2 * np.pi
HERMITIAN_INPUT_TOL = 1e-10


@dataclass(frozen=True)
class PulseSequence:
    """Sequence of free evolutions interleaved with instantaneous pulses.

    One repetition is ``U(d_1) R_1 U(d_2) R_2 ... U(d_k) R_k U(final_delay)``
    for ``steps = ((d_1, axis_1, angle_1), ...)``; the whole block is applied
    ``n_repeat`` times. Delays are in us.

    A sequence doubles as a template: ``scaled(t)`` stretches all delays so the
    total time equals ``t``, which is how a time grid maps onto the delays
    (e.g. Hahn echo is reported at total time ``2 tau``).
    """
    steps: tuple = ()
    final_delay: float = 1.0
    n_repeat: int = 1
    name: str = 'custom'

    def __post_init__(self):
        steps = []
        for step in self.steps:
            delay, axis, angle = step
            delay, angle = float(delay), float(angle)
            if not delay >= 0:
                raise ValidationError('pulse delays must be non-negative')
            if axis not in ('x', 'y', 'z'):
                raise ValidationError(f'pulse axis must be x, y or z, got {axis!r}')
            if not np.isfinite(angle):
                raise ValidationError('pulse angle must be finite')
            steps.append((delay, axis, angle))
        object.__setattr__(self, 'steps', tuple(steps))
        if not float(self.final_delay) >= 0:
            raise ValidationError('pulse delays must be non-negative')
        object.__setattr__(self, 'final_delay', float(self.final_delay))
        if int(self.n_repeat) < 1:
            raise ValidationError('n_repeat must be at least 1')
        object.__setattr__(self, 'n_repeat', int(self.n_repeat))

    @property
    def total_time(self):
        return self.n_repeat * (sum(d for d, _, _ in self.steps) + self.final_delay)

    @property
    def n_pulses(self):
        return self.n_repeat * len(self.steps)

    @property
    def is_free(self):
        return all(angle == 0 for _, _, angle in self.steps)

    def delays(self):
        """Free-evolution delays of one repetition, final delay last."""
        return [d for d, _, _ in self.steps] + [self.final_delay]

    def scaled(self, total_time):
        """Copy with delays stretched so that ``total_time`` is the total duration."""
        total = self.total_time
        if total <= 0:
            raise ValidationError('cannot rescale a sequence of zero duration')
        f = float(total_time) / total
        return PulseSequence(tuple((d * f, ax, ang) for d, ax, ang in self.steps),
                             self.final_delay * f, self.n_repeat, self.name)


def ramsey(total_time=1.0):
    return PulseSequence((), total_time, 1, 'ramsey')


def hahn_echo(total_time=1.0, axis='x'):
    tau = total_time / 2
    return PulseSequence(((tau, axis, np.pi),), tau, 1, 'hahn')


def cpmg(n_pulses, total_time=1.0, axis='x'):
    """``[tau - pi - tau]^N`` with ``2 tau N`` equal to ``total_time``."""
    tau = total_time / (2 * n_pulses)
    return PulseSequence(((tau, axis, np.pi),), tau, n_pulses, f'cpmg{n_pulses}')


def xy4(n_cycles=1, total_time=1.0):
    """``[tau X 2tau Y 2tau X 2tau Y tau]^N``."""
    tau = total_time / (8 * n_cycles)
    steps = ((tau, 'x', np.pi), (2 * tau, 'y', np.pi), (2 * tau, 'x', np.pi), (2 * tau, 'y', np.pi))
    return PulseSequence(steps, tau, n_cycles, f'xy4x{n_cycles}')


PRESETS = {'ramsey': ramsey, 'hahn': hahn_echo, 'cpmg': cpmg, 'xy4': xy4}


PHASE_BLOCK = 64


def _is_uniform(t):
    dt = np.diff(t)
    return bool(np.all(np.abs(dt - dt[0]) <= 1e-12 * max(abs(t[-1]), abs(t[0]), 1e-300)))


def _uniform_phases(t0, dt, n, energies):
    # complex exponentials are the bottleneck on long grids: evaluate them exactly at
    # block starts and fill each block with products of a short table of powers
    nb = -(-n // PHASE_BLOCK)
    anchors = np.exp(-1j * TWO_PI * np.multiply.outer(t0 + dt * PHASE_BLOCK * np.arange(nb), energies))
    steps = np.exp(-1j * TWO_PI * np.multiply.outer(dt * np.arange(PHASE_BLOCK), energies))
    out = anchors[:, None, :] * steps[None, :, :]
    return out.reshape(nb * PHASE_BLOCK, -1)[:n]


class SpectralPropagator:
    """Eigendecomposition of a Hermitian ``H`` giving ``exp(-2j pi H t)`` for any ``t``."""

    def __init__(self, h, check=True):
        h = np.asarray(h)
        if check:
            check_hermitian(h, HERMITIAN_INPUT_TOL)
        self.energies, self.vectors = np.linalg.eigh(h)

    def phases(self, t):
        """``exp(-2j pi E_k t)`` with shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 1 and len(t) > 2 * PHASE_BLOCK and _is_uniform(t):
            return _uniform_phases(t[0], t[1] - t[0], len(t), self.energies)
        return np.exp(-1j * TWO_PI * np.multiply.outer(t, self.energies))

    def unitary(self, t):
        """Propagator(s) for scalar ``t`` or an array of times (leading axis)."""
        ph = self.phases(np.asarray(t, dtype=np.float64))
        v = self.vectors
        return (v * ph[..., None, :]) @ v.conj().T

    def apply(self, psi, t):
        """``U(t_k) psi_k`` for states ``psi`` with shape (nt, d) and times (nt,)."""
        v = self.vectors
        c = psi @ v.conj()
        c = c * self.phases(t)
        return c @ v.T


def matrix_exponential_unitary(h, t):
    """``exp(-2j pi H t)`` for Hermitian ``H`` in MHz and ``t`` in us (scalar or array)."""
    return SpectralPropagator(h).unitary(t)


def _rotation_full(levels, axis, angle, dim):
    r = qubit_rotation(levels, axis, angle)
    rest = dim // levels.dim
    if rest * levels.dim != dim:
        raise ValidationError('Hamiltonian dimension is not a multiple of the central spin dimension')
    return np.kron(r, np.eye(rest)) if rest > 1 else r


def sequence_propagator(hc, levels, seq, total_time=None):
    """Propagator of the full pulse sequence for the cluster Hamiltonian ``hc``.

    Args:
        hc (ndarray): Hamiltonian on central (x) cluster space.
        levels (QubitLevels): Qubit levels defining the pulse axes.
        seq (PulseSequence): Sequence; rescaled to ``total_time`` if given.
        total_time (float or ndarray): Total duration(s). An array yields one
            propagator per time (leading axis).
    """
    prop = SpectralPropagator(hc)
    dim = hc.shape[0]
    if total_time is None:
        total_time = seq.total_time
    t = np.asarray(total_time, dtype=np.float64)
    frac = np.array(seq.delays()) / seq.total_time if seq.total_time > 0 else np.zeros(len(seq.steps) + 1)
    rots = [_rotation_full(levels, ax, ang, dim) for _, ax, ang in seq.steps]
    block = prop.unitary(frac[0] * t) if not seq.steps else None
    for k, r in enumerate(rots):
        step = r @ prop.unitary(frac[k] * t)
        block = step if block is None else step @ block
    if seq.steps:
        block = prop.unitary(frac[-1] * t) @ block
    out = block
    for _ in range(seq.n_repeat - 1):
        out = block @ out
    return out


def evolve_state(prop, psi0, seq, times, rotations):
    """Evolve a pure state through the sequence at every total time in ``times``.

    Args:
        prop (SpectralPropagator): Propagator of the (time independent) Hamiltonian.
        psi0 (ndarray): Initial state vector.
        seq (PulseSequence): Sequence template.
        times (ndarray): Total durations.
        rotations (list): Full-space pulse matrices, one per step of ``seq``.

    Returns:
        ndarray with shape (len(times), d).
    """
    times = np.asarray(times, dtype=np.float64)
    psi = np.broadcast_to(psi0, (len(times), len(psi0))).astype(np.complex128)
    total = seq.total_time
    delays = seq.delays()
    if not seq.steps:
        return prop.apply(psi, times * (delays[0] / total) * seq.n_repeat)
    frac = [d / total for d in delays]
    for _ in range(seq.n_repeat):
        for k, r in enumerate(rotations):
            if frac[k] > 0:
                psi = prop.apply(psi, times * frac[k])
            psi = psi @ r.T
        if frac[-1] > 0:
            psi = prop.apply(psi, times * frac[-1])
    return psi


def evolve_density_matrix(rho0, u):
    """``U rho U^+``; ``u`` may carry a leading time axis."""
    rho0 = np.asarray(rho0)
    u = np.asarray(u)
    if rho0.shape[-1] != u.shape[-1] or rho0.shape[-2] != u.shape[-2]:
        raise ValidationError(f'dimension mismatch: rho {rho0.shape}, U {u.shape}')
    return u @ rho0 @ np.conj(np.swapaxes(u, -1, -2))


def bath_product_state(system, cluster, bath_state):
    """Product of nuclear Iz eigenstates of the cluster spins."""
    m = getattr(bath_state, 'projections', bath_state)
    if m is None:
        raise ValidationError('bath state required')
    m = np.asarray(m, dtype=np.float64)
    if len(m) != len(system.bath):
        raise ValidationError(f'bath state has {len(m)} entries, system has {len(system.bath)} spins')
    vec = np.ones(1, dtype=np.complex128)
    for i in cluster:
        vec = np.kron(vec, sz_state(system.bath[i].spin, m[i]))
    return vec


def initial_cluster_vector(levels, system, cluster, bath_state):
    qubit = (levels.a + levels.b) / np.sqrt(2)
    return np.kron(qubit, bath_product_state(system, cluster, bath_state))


def initial_cluster_state(levels, system, cluster, bath_state):
    """Density matrix: qubit in ``(|a> + |b>)/sqrt(2)``, each cluster nucleus in its Iz eigenstate."""
    psi = initial_cluster_vector(levels, system, cluster, bath_state)
    return np.outer(psi, psi.conj())


ELEMENTS = {'ab': (0, 1), 'ba': (1, 0), 'aa': (0, 0), 'bb': (1, 1)}


def _pair(which):
    if isinstance(which, str):
        try:
            return ELEMENTS[which]
        except KeyError:
            raise ValidationError(f'unknown element {which!r}') from None
    return tuple('ab'.index(w) if isinstance(w, str) else int(w) for w in which)


def extract_qubit_element(rho, levels, which='ab'):
    """``<i| Tr_bath rho |j>`` for ``which = (i, j)`` with i, j in {'a', 'b'}.

    ``rho`` may carry a leading time axis. Diagonal requests return real values.
    """
    rho = np.asarray(rho)
    dc = levels.dim
    d = rho.shape[-1]
    db = d // dc
    red = np.trace(rho.reshape(rho.shape[:-2] + (dc, db, dc, db)), axis1=-3, axis2=-1)
    vecs = (levels.a, levels.b)
    i, j = _pair(which)
    val = np.einsum('i,...ij,j->...', vecs[i].conj(), red, vecs[j])
    if i == j:
        return val.real
    return val


def state_elements(psi, levels, pairs=('ab',)):
    """Qubit density-matrix elements of pure states ``psi`` (shape (..., d)).

    Returns an array with one row per requested element.
    """
    dc = levels.dim
    psi = psi.reshape(psi.shape[:-1] + (dc, -1))
    amp = (np.einsum('c,...cn->...n', levels.a.conj(), psi),
           np.einsum('c,...cn->...n', levels.b.conj(), psi))
    out = []
    for which in pairs:
        i, j = _pair(which)
        out.append(np.einsum('...n,...n->...', amp[i], amp[j].conj()))
    return np.array(out)
