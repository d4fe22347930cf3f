"""
Cluster-correlation expansion of the qubit density matrix.

Two flavours share one engine:

- ``gcce``: every cluster contains the central spin explicitly. Elements of the
  qubit density matrix are products of cluster contributions, each contribution
  being the cluster element divided by the contributions of its sub-clusters.
- ``cce``: the conventional expansion. The bath of each cluster evolves under the
  Hamiltonian projected onto each qubit level, so only pure dephasing is captured.

In both cases every pure bath state (each nucleus in an Iz eigenstate) is treated
separately, with spins outside a cluster acting through a mean field; the final
element is the weighted average over bath states.
"""
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import UnsupportedOrderError, ValidationError
from .hamiltonian import (LevelSelection, QubitLevels, build_electron_hamiltonian,
                          cluster_hamiltonian_static, expectation_sz, mean_field_basis, mean_field_diagonal,
                          projected_bath_hamiltonian, projected_mean_field_diagonal,
                          qubit_rotation, select_qubit_levels)
from .propagation import (PulseSequence, SpectralPropagator, bath_product_state, evolve_state,
                          initial_cluster_vector, ramsey, state_elements)

log = logging.getLogger(__name__)

MAX_ORDER = 4
EPS_DIV = 1e-10
EPS_NUM = 1e-6
MAX_EXHAUSTIVE_SPINS = 12


@dataclass(frozen=True)
class PureBathState:
    """One product state of the bath: ``projections[i]`` is ``<Iz>`` of spin ``i``."""
    projections: np.ndarray
    index: int = 0
    weight: float = 1.0

    def __post_init__(self):
        m = np.array(self.projections, dtype=np.float64)
        m.flags.writeable = False
        object.__setattr__(self, 'projections', m)


def _state_for(system, draws, index, weight):
    spins = system.spins
    return PureBathState(spins - draws, index, weight)


def sample_bath_states(system, count, seed):
    """Random pure bath states of an infinite-temperature bath.

    State ``j`` uses its own generator seeded with ``(seed, j)``, so any subset of
    states can be regenerated independently of evaluation order.
    """
    if count < 1:
        raise ValidationError('need at least one bath state')
    dims = system.dims
    out = []
    for j in range(count):
        rng = np.random.default_rng([int(seed), j])
        draws = rng.integers(0, dims) if len(dims) else np.zeros(0)
        out.append(_state_for(system, draws, j, 1.0 / count))
    return out


def exhaustive_bath_states(system, max_spins=MAX_EXHAUSTIVE_SPINS):
    """Every product state of the bath with equal weight."""
    if len(system.bath) > max_spins:
        raise ValidationError(f'exhaustive enumeration limited to {max_spins} bath spins, got {len(system.bath)}')
    dims = system.dims
    total = int(np.prod(dims, dtype=int))
    combos = itertools.product(*[range(d) for d in dims])
    return [_state_for(system, np.array(c, dtype=float), j, 1.0 / total) for j, c in enumerate(combos)]


@dataclass(frozen=True)
class ClusterSet:
    """Clusters of bath spin indices grouped by size."""
    by_size: dict
    order: int
    r_dip: float

    def __iter__(self):
        for size in sorted(self.by_size):
            yield from self.by_size[size]

    def __len__(self):
        return sum(len(v) for v in self.by_size.values())

    @property
    def counts(self):
        return {k: len(v) for k, v in sorted(self.by_size.items())}


def pair_graph(system, r_dip):
    """Neighbour sets of the graph joining bath spins closer than ``r_dip``."""
    n = len(system.bath)
    nbrs = [set() for _ in range(n)]
    if n > 1:
        pos = system.positions
        for i, j in cKDTree(pos).query_pairs(r_dip):
            if np.linalg.norm(pos[i] - pos[j]) < r_dip:
                nbrs[i].add(j)
                nbrs[j].add(i)
    return nbrs


def enumerate_clusters(system, order, r_dip, max_order=MAX_ORDER):
    """All connected clusters of up to ``order`` bath spins.

    Size-1 clusters are the individual spins; a size-k cluster is a connected
    subgraph of the pair graph.

    Args:
        system (SpinSystem): System whose bath is clustered.
        order (int): Largest cluster size.
        r_dip (float): Two spins are connected if closer than this (nm).
        max_order (int): Cap on ``order``. Raising it is meant for exactness
            checks on small baths, where the number of clusters stays manageable.
    """
    if order < 1:
        raise ValidationError('order must be at least 1')
    if order > max_order:
        raise UnsupportedOrderError(f'cluster order {order} > {max_order} is not supported')
    if not r_dip > 0:
        raise ValidationError('r_dip must be positive')
    n = len(system.bath)
    by_size = {1: tuple((i,) for i in range(n))} if n else {}
    nbrs = pair_graph(system, r_dip) if order > 1 else None
    prev = by_size.get(1, ())
    for size in range(2, order + 1):
        grown = set()
        for c in prev:
            members = set(c)
            for i in c:
                for j in nbrs[i]:
                    if j not in members:
                        grown.add(tuple(sorted(c + (j,))))
        prev = tuple(sorted(grown))
        if not prev:
            break
        by_size[size] = prev
    return ClusterSet(by_size, order, float(r_dip))


@dataclass(frozen=True)
class CoherenceCurve:
    """Qubit density-matrix elements on a time grid (us).

    ``rho_ab`` is the raw element; ``L = rho_ab / rho_ab0`` the normalized one.
    ``pop_a``/``pop_b`` are the diagonal elements when computed.
    """
    times: np.ndarray
    rho_ab: np.ndarray
    pop_a: Optional[np.ndarray] = None
    pop_b: Optional[np.ndarray] = None
    rho_ab0: complex = 0.5
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or (len(t) > 1 and np.any(np.diff(t) <= 0)):
            raise ValidationError('time grid must be strictly increasing')
        object.__setattr__(self, 'times', t)

    @property
    def L(self):
        return self.rho_ab / self.rho_ab0

    def population_ratio(self, which='a'):
        pop = self.pop_a if which == 'a' else self.pop_b
        if pop is None:
            return None
        return pop / 0.5


@dataclass(frozen=True)
class Experiment:
    """Everything except the spin system that defines one simulation.

    Args:
        times (array-like): Time grid in us (total sequence time for pulse sequences).
        sequence (PulseSequence): Pulse sequence template.
        levels (LevelSelection): Qubit level selection.
        method (str): ``'gcce'`` or ``'cce'``.
        order (int): Maximum cluster size.
        r_dip (float): Pair connectivity cutoff in nm.
        n_states (int): Number of sampled bath states.
        exhaustive (bool): Enumerate all bath states instead of sampling.
        mixed (bool): Conventional CCE only -- average each cluster over the
            infinite-temperature bath instead of sampling pure states (no mean field).
        seed (int): Master seed of the bath-state sampler.
        mean_field (bool): Add the mean field of spins outside each cluster.
        populations (bool): Also compute the diagonal elements.
        workers (int): Number of worker processes.
        eps_div (float): Small-denominator threshold.
        mask (bool): Drop per-state values with ``|L| > 1 + 1e-6`` from the average.
    """
    times: np.ndarray
    sequence: PulseSequence = field(default_factory=ramsey)
    levels: LevelSelection = field(default_factory=lambda: LevelSelection.index(0, 1))
    method: str = 'gcce'
    order: int = 2
    r_dip: float = 0.8
    n_states: int = 100
    exhaustive: bool = False
    mixed: bool = False
    seed: int = 0
    mean_field: bool = True
    populations: bool = False
    workers: int = 1
    eps_div: float = EPS_DIV
    mask: bool = True

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64)
        t.flags.writeable = False
        object.__setattr__(self, 'times', t)
        if self.method not in ('gcce', 'cce'):
            raise ValidationError(f"method must be 'gcce' or 'cce', got {self.method!r}")
        if self.mixed and self.method != 'cce':
            raise ValidationError('mixed-bath evaluation is only available for conventional CCE')


class ClusterEngine:
    """Raw density-matrix elements of single clusters for a fixed system and sequence.

    Static (bath-state independent) cluster Hamiltonians are cached; only the
    mean-field diagonal changes between bath states.
    """

    def __init__(self, system, levels, sequence, times, method='gcce', mean_field=True,
                 elements=('ab',)):
        self.system = system
        self.levels = levels
        self.sequence = sequence
        self.times = np.asarray(times, dtype=np.float64)
        self.method = method
        self.mean_field = mean_field
        self.elements = tuple(elements)
        self._static = {}
        self._rot = {}
        if method == 'cce':
            self._qubit = QubitLevels(np.array([1, 0], complex), np.array([0, 1], complex))
            self._sz = (expectation_sz(system, levels.a), expectation_sz(system, levels.b))

    def _rotations(self, dim):
        if dim not in self._rot:
            lv = self._qubit if self.method == 'cce' else self.levels
            rest = dim // lv.dim
            self._rot[dim] = [np.kron(qubit_rotation(lv, ax, ang), np.eye(rest))
                              for _, ax, ang in self.sequence.steps]
        return self._rot[dim]

    def _static_h(self, cluster):
        """``(hamiltonian, mean-field basis)`` of a cluster, cached."""
        entry = self._static.get(cluster)
        if entry is None:
            if self.method == 'gcce':
                h = cluster_hamiltonian_static(self.system, cluster)
                basis = mean_field_basis(self.system, cluster)
            else:
                ha = projected_bath_hamiltonian(self.system, cluster, self.levels.a)
                hb = projected_bath_hamiltonian(self.system, cluster, self.levels.b)
                h = (ha, hb)
                basis = mean_field_basis(self.system, cluster, central=False)
            entry = self._static[cluster] = (h, basis)
        return entry

    def hamiltonian(self, cluster, state):
        h, basis = self._static_h(cluster)
        use_mf = self.mean_field and state is not None
        if self.method == 'gcce':
            if use_mf:
                h = h + np.diag(mean_field_diagonal(self.system, cluster, state, basis))
            return h
        ha, hb = h
        if use_mf:
            ha = ha + np.diag(projected_mean_field_diagonal(self.system, cluster, state, self._sz[0], basis))
            hb = hb + np.diag(projected_mean_field_diagonal(self.system, cluster, state, self._sz[1], basis))
        d = ha.shape[0]
        full = np.zeros((2 * d, 2 * d), dtype=np.complex128)
        full[:d, :d] = ha
        full[d:, d:] = hb
        return full

    def raw(self, cluster, state):
        """Elements ``<i|rho_C(t)|j>`` for each requested pair, shape (n_elements, n_times).

        For conventional CCE with ``state=None`` the cluster is averaged over its
        infinite-temperature bath.
        """
        h = self.hamiltonian(cluster, state)
        prop = SpectralPropagator(h, check=False)
        rots = self._rotations(h.shape[0])
        lv = self._qubit if self.method == 'cce' else self.levels
        if state is None:
            if self.method == 'gcce':
                raise ValidationError('gCCE needs a pure bath state')
            db = h.shape[0] // 2
            qubit = np.array([1, 1], complex) / np.sqrt(2)
            acc = 0
            for n in range(db):
                e = np.zeros(db, complex)
                e[n] = 1
                psi = evolve_state(prop, np.kron(qubit, e), self.sequence, self.times, rots)
                acc = acc + state_elements(psi, lv, self.elements)
            return acc / db
        if self.method == 'gcce':
            psi0 = initial_cluster_vector(self.levels, self.system, cluster, state)
        else:
            qubit = np.array([1, 1], complex) / np.sqrt(2)
            psi0 = np.kron(qubit, bath_product_state(self.system, cluster, state))
        psi = evolve_state(prop, psi0, self.sequence, self.times, rots)
        return state_elements(psi, lv, self.elements)


def _proper_subsets(cluster):
    yield ()
    for k in range(1, len(cluster)):
        yield from itertools.combinations(cluster, k)


def cluster_contribution(engine, cluster, state, memo, eps_div=EPS_DIV):
    """Contribution of one cluster: its raw element divided by the contributions of its sub-clusters.

    ``memo`` must hold the contributions of all enumerated proper sub-clusters
    (and of the empty cluster under key ``()``); sub-clusters absent from ``memo``
    were not enumerated and count as 1. Time points where the denominator is
    smaller than ``eps_div`` in magnitude get contribution 1.

    Returns:
        tuple: ``(contribution, n_small_denominators)``.
    """
    raw = engine.raw(cluster, state)
    if cluster == ():
        return raw, 0
    denom = np.ones_like(raw)
    for sub in _proper_subsets(cluster):
        c = memo.get(sub)
        if c is not None:
            denom = denom * c
    small = np.abs(denom) < eps_div
    out = raw / np.where(small, 1, denom)
    out[small] = 1
    return out, int(small.sum())


def assemble(engine, clusters, state, eps_div=EPS_DIV):
    """Product of all cluster contributions up to the order of ``clusters`` for one bath state.

    Returns:
        tuple: ``(elements, n_small_denominators)``, elements with shape (n_elements, n_times).
    """
    memo = {}
    total, div = cluster_contribution(engine, (), state, memo, eps_div)
    memo[()] = total
    total = total.copy()
    for c in clusters:
        contrib, n = cluster_contribution(engine, c, state, memo, eps_div)
        memo[c] = contrib
        total *= contrib
        div += n
    return total, div


def gcce_cluster_contribution(system, cluster, bath_state, seq, levels, times, memo=None,
                              mean_field=True, eps_div=EPS_DIV):
    """Contribution of ``cluster`` for a single bath state (standalone form).

    Sub-cluster contributions are computed on demand into ``memo``.
    """
    engine = ClusterEngine(system, levels, seq, times, 'gcce', mean_field)
    memo = {} if memo is None else memo
    cluster = tuple(sorted(cluster))
    for sub in sorted(_proper_subsets(cluster), key=len):
        if sub not in memo:
            memo[sub] = cluster_contribution(engine, sub, bath_state, memo, eps_div)[0]
    out = cluster_contribution(engine, cluster, bath_state, memo, eps_div)[0]
    memo[cluster] = out
    return out[0]


def gcce_assemble(system, clusters, bath_state, seq, levels, times, order=None, mean_field=True,
                  eps_div=EPS_DIV):
    """gCCE estimate of ``rho_ab(t)`` for one pure bath state."""
    if order is not None:
        clusters = [c for c in clusters if len(c) <= order]
    engine = ClusterEngine(system, levels, seq, times, 'gcce', mean_field)
    return assemble(engine, clusters, bath_state, eps_div)[0][0]


def mixed_bath_average(curves, weights, times=None, mask=None, meta=None, populations=None):
    """Weighted pointwise average of per-state elements.

    Args:
        curves (list): Complex series of ``rho_ab`` (or (n_elements, n_times) arrays
            whose first row is ``rho_ab`` followed by ``rho_aa``, ``rho_bb``).
        weights (list): Weights summing to one.
        times (ndarray): Time grid; defaults to ``arange``.
        mask (ndarray of bool): Optional (n_states, n_times) mask of values to drop;
            weights are renormalized at each time point. Time points where every
            value is masked are undefined (NaN).

    Returns:
        CoherenceCurve.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(curves) != len(weights):
        raise ValidationError('one weight per curve required')
    if abs(weights.sum() - 1) > 1e-9:
        raise ValidationError(f'weights must sum to 1, got {weights.sum()}')
    arrs = [np.atleast_2d(np.asarray(c)) for c in curves]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValidationError('curves are on different time grids')
    stack = np.stack(arrs)  # (n_states, n_el, n_t)
    if times is None:
        times = np.arange(shape[-1], dtype=float)
    if len(times) != shape[-1]:
        raise ValidationError('time grid does not match curves')
    w = np.broadcast_to(weights[:, None], (len(weights), shape[-1])).copy()
    if mask is not None:
        w[np.asarray(mask)] = 0
    norm = w.sum(0)
    undefined = norm == 0
    norm[undefined] = 1
    avg = np.einsum('st,set->et', w, stack) / norm
    avg[:, undefined] = np.nan
    pop_a = pop_b = None
    if populations is None:
        populations = shape[0] == 3
    if populations:
        pop_a, pop_b = avg[1].real, avg[2].real
    return CoherenceCurve(times, avg[0], pop_a, pop_b, 0.5, dict(meta or {}))


def _state_results(engine, clusters, states, eps_div):
    out = []
    for st in states:
        el, div = assemble(engine, clusters, st, eps_div)
        out.append((st.index, el, div))
    return out


def _worker(args):
    engine, clusters, states, eps_div = args
    return _state_results(engine, clusters, states, eps_div)


def default_workers():
    env = os.environ.get('GCCE_WORKERS')
    return int(env) if env else 1


def _chunks(seq, n):
    k, r = divmod(len(seq), n)
    out, start = [], 0
    for i in range(n):
        stop = start + k + (i < r)
        if stop > start:
            out.append(seq[start:stop])
        start = stop
    return out


def evaluate_states(engine, clusters, states, eps_div=EPS_DIV, workers=1):
    """Assemble every bath state, optionally over a process pool.

    Results are returned in state order, so the merged average does not depend
    on scheduling.
    """
    if workers <= 1 or len(states) < 2:
        res = _state_results(engine, clusters, states, eps_div)
    else:
        clusters = list(clusters)
        tasks = [(engine, clusters, chunk, eps_div) for chunk in _chunks(list(states), workers)]
        res = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_worker, tasks):
                res.extend(part)
    res.sort(key=lambda r: r[0])
    return res


def resolve_levels(system, experiment, previous=None):
    he = build_electron_hamiltonian(system.central, system.field)
    return select_qubit_levels(he, experiment.levels, previous)


def bath_states_for(system, experiment):
    if experiment.exhaustive:
        return exhaustive_bath_states(system)
    return sample_bath_states(system, experiment.n_states, experiment.seed)


def simulate(system, experiment, previous_levels=None, clusters=None, levels=None):
    """Run a full CCE or gCCE simulation.

    Samples (or enumerates) pure bath states, assembles the expansion for each,
    and averages them.

    Args:
        system (SpinSystem): Central spin and bath.
        experiment (Experiment): Run parameters.
        previous_levels (QubitLevels): Qubit levels at the previous field of a sweep;
            enables adiabatic level tracking.
        clusters (ClusterSet): Pre-computed clusters (enumerated if omitted).
        levels (QubitLevels): Explicit qubit levels, overriding the selection.

    Returns:
        CoherenceCurve with ``meta`` holding the levels, cluster counts, number of
        small-denominator events (``divergences``), masked (state, time) points
        (``overflows``) and time points where every state was masked (``undefined``).
    """
    if levels is None:
        levels = resolve_levels(system, experiment, previous_levels)
    if clusters is None:
        clusters = enumerate_clusters(system, experiment.order, experiment.r_dip) if len(system.bath) else \
            ClusterSet({}, experiment.order, experiment.r_dip)
    elements = ('ab', 'aa', 'bb') if experiment.populations else ('ab',)
    engine = ClusterEngine(system, levels, experiment.sequence, experiment.times, experiment.method,
                           experiment.mean_field, elements)
    if experiment.mixed:
        el, div = assemble(engine, clusters, None, experiment.eps_div)
        results = [(0, el, div)]
        weights = [1.0]
    else:
        states = bath_states_for(system, experiment)
        results = evaluate_states(engine, clusters, states, experiment.eps_div, experiment.workers)
        weights = [s.weight for s in states]
    curves = [r[1] for r in results]
    divergences = int(sum(r[2] for r in results))
    mask = None
    overflows = 0
    if experiment.mask:
        mask = np.array([np.abs(c[0] / 0.5) > 1 + EPS_NUM for c in curves])
        overflows = int(mask.sum())
    meta = dict(method=experiment.method, order=experiment.order, n_states=len(results),
                seed=experiment.seed, sequence=experiment.sequence.name, levels=levels,
                clusters=clusters.counts, divergences=divergences, overflows=overflows,
                field=system.field)
    if overflows:
        log.warning('%d (state, time) points with |L| > 1 + %g were masked', overflows, EPS_NUM)
    curve = mixed_bath_average(curves, weights, experiment.times, mask, meta,
                               populations=experiment.populations)
    curve.meta['undefined'] = int(np.isnan(curve.rho_ab).sum())
    return curve


def run_gcce(system, experiment, previous_levels=None):
    """gCCE with Monte-Carlo (or exhaustive) bath states."""
    if experiment.method != 'gcce':
        experiment = replace(experiment, method='gcce')
    return simulate(system, experiment, previous_levels)


def conventional_cce(system, clusters, seq, levels, times, order=None, bath_state=None,
                     mean_field=True, eps_div=EPS_DIV):
    """Conventional CCE coherence for one bath state, or the infinite-temperature bath.

    Each cluster's bath evolves under the Hamiltonians projected on ``|a>`` and
    ``|b>``; pulses swap the two conditional evolutions.
    """
    if order is not None:
        clusters = [c for c in clusters if len(c) <= order]
    engine = ClusterEngine(system, levels, seq, times, 'cce', mean_field)
    el, div = assemble(engine, clusters, bath_state, eps_div)
    meta = dict(method='cce', divergences=div, levels=levels, field=system.field)
    return CoherenceCurve(times, el[0], None, None, 0.5, meta)
