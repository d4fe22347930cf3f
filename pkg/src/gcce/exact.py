"""
Dense evolution of the complete central spin + bath system.

Cost grows as ``(dim)^2`` per time point for free evolution and as ``(dim)^3``
once for the diagonalization, so this is limited to small baths. It is the
reference against which the cluster expansions are checked.
"""
import numpy as np

from .cce import CoherenceCurve, MAX_EXHAUSTIVE_SPINS, exhaustive_bath_states
from .errors import ValidationError
from .hamiltonian import build_cluster_hamiltonian, qubit_rotation
from .propagation import TWO_PI, bath_product_state

MAX_DENSE_DIM = 3 * 2 ** MAX_EXHAUSTIVE_SPINS


def full_hamiltonian(system):
    """Hamiltonian of the central spin and every bath spin (no mean field)."""
    return build_cluster_hamiltonian(system, tuple(range(len(system.bath))))


def _amplitudes(vecs, levels):
    dc = levels.dim
    vecs = vecs.reshape(vecs.shape[:-1] + (dc, -1))
    return (np.einsum('c,...cn->...n', levels.a.conj(), vecs),
            np.einsum('c,...cn->...n', levels.b.conj(), vecs))


def _ramsey_mixed(w, v, levels, times, elements, weights, states):
    # rho_ij(t) = sum_kl W_kl exp(2 pi i (E_l - E_k) t) with W = rho0' * X'^T in the eigenbasis
    dc = levels.dim
    db = v.shape[0] // dc
    vv = v.reshape(dc, db, -1)
    g = (np.einsum('c,cnk->nk', levels.a.conj(), vv), np.einsum('c,cnk->nk', levels.b.conj(), vv))
    qubit = (levels.a + levels.b) / np.sqrt(2)
    c = np.stack([v.conj().T @ np.kron(qubit, s) for s in states], axis=1)  # (d, n_states)
    rho0 = (c * weights) @ c.conj().T
    phase = np.exp(-1j * TWO_PI * np.multiply.outer(times, w))
    out = []
    for i, j in elements:
        x = g[j].conj().T @ g[i]
        wmat = rho0 * x.T
        out.append(np.sum((phase @ wmat) * phase.conj(), axis=1))
    return np.array(out)


def _sequence_states(w, v, levels, seq, times, elements, weights, states, chunk=64):
    d = v.shape[0]
    dc = levels.dim
    rots = [v.conj().T @ np.kron(qubit_rotation(levels, ax, ang), np.eye(d // dc)) @ v
            for _, ax, ang in seq.steps]
    frac = np.array(seq.delays()) / seq.total_time
    qubit = (levels.a + levels.b) / np.sqrt(2)
    ph = [np.exp(-1j * TWO_PI * np.multiply.outer(times * f, w)) for f in frac]
    total = np.zeros((len(elements), len(times)), dtype=np.complex128)
    for start in range(0, len(states), chunk):
        block = states[start:start + chunk]
        c0 = np.stack([v.conj().T @ np.kron(qubit, s) for s in block])  # (s, d)
        c = np.broadcast_to(c0[:, None, :], (len(block), len(times), d)).copy()
        for _ in range(seq.n_repeat):
            for k, r in enumerate(rots):
                c = c * ph[k]
                c = c @ r.T
            c = c * ph[-1]
        psi = c @ v.T
        amp = _amplitudes(psi, levels)
        wts = weights[start:start + chunk]
        for e, (i, j) in enumerate(elements):
            total[e] += np.einsum('s,stn,stn->t', wts, amp[i], amp[j].conj())
    return total


def exact_coherence(system, levels, seq, times, bath_states=None, populations=False):
    """Qubit coherence from dense evolution of the whole system.

    Args:
        system (SpinSystem): System with at most 12 bath spins.
        levels (QubitLevels): Qubit levels.
        seq (PulseSequence): Pulse sequence template (rescaled to each time).
        times (ndarray): Total evolution times in us.
        bath_states (list): Pure bath states (with weights) to average over.
            Defaults to every product state, i.e. the infinite-temperature bath.
        populations (bool): Also return the diagonal elements.

    Returns:
        CoherenceCurve.
    """
    n = len(system.bath)
    if n > MAX_EXHAUSTIVE_SPINS:
        raise ValidationError(f'dense evolution limited to {MAX_EXHAUSTIVE_SPINS} bath spins, got {n}')
    times = np.asarray(times, dtype=np.float64)
    if bath_states is None:
        bath_states = exhaustive_bath_states(system)
    weights = np.array([s.weight for s in bath_states], dtype=np.float64)
    if abs(weights.sum() - 1) > 1e-9:
        raise ValidationError('bath state weights must sum to 1')
    vecs = [bath_product_state(system, range(n), s) for s in bath_states]
    w, v = np.linalg.eigh(full_hamiltonian(system))
    elements = [(0, 1)] + ([(0, 0), (1, 1)] if populations else [])
    if not seq.steps:
        res = _ramsey_mixed(w, v, levels, times, elements, weights, vecs)
    else:
        res = _sequence_states(w, v, levels, seq, times, elements, weights, vecs)
    pop_a = res[1].real if populations else None
    pop_b = res[2].real if populations else None
    return CoherenceCurve(times, res[0], pop_a, pop_b, 0.5,
                          dict(method='exact', n_states=len(bath_states), field=system.field, levels=levels))
