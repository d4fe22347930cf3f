"""Invariants checked on randomly generated inputs."""
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from gcce import (BathSpin, CentralSpin, Experiment, LevelSelection, PulseSequence, ValidationError,
                  build_electron_hamiltonian, load_bath, make_system, select_qubit_levels, simulate, write_bath_file)
from gcce import config as cfg
from gcce.analysis import find_peaks, fit_decay, ramsey_spectrum
from gcce.constants import ELECTRON_GYRO, ISOTOPES
from gcce.hamiltonian import build_cluster_hamiltonian
from gcce.propagation import sequence_propagator
from gcce.spin_model import point_dipole_hyperfine

from conftest import random_bath

SETTINGS = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

seeds = st.integers(0, 2 ** 31 - 1)
axes = st.sampled_from(['x', 'y', 'z'])
steps = st.lists(st.tuples(st.floats(0.0, 2.0), axes, st.floats(0.0, 2 * np.pi)), max_size=4)


def cluster_case(seed, n, field):
    central = CentralSpin(1.0, 1334.0, 18.4)
    s = make_system(central, random_bath(n, seed, spread=0.5), field)
    rng = np.random.default_rng(seed)
    state = rng.choice([-0.5, 0.5], size=n)
    h = build_cluster_hamiltonian(s, tuple(range(n)), state)
    lv = select_qubit_levels(build_electron_hamiltonian(central, field), LevelSelection.index(2, 0))
    return s, h, lv


@SETTINGS
@given(seeds, st.integers(1, 3), st.floats(-50, 50), steps, st.floats(0.0, 3.0))
def test_sequence_propagator_unitary(seed, n, field, st_, final):
    _, h, lv = cluster_case(seed, n, field)
    seq = PulseSequence(tuple(st_), final)
    u = sequence_propagator(h, lv, seq)
    assert np.max(np.abs(u.conj().T @ u - np.eye(len(u)))) < 1e-12


@SETTINGS
@given(seeds, st.integers(1, 3), st.floats(0.01, 5.0), st.floats(0.05, 0.95))
def test_delay_split(seed, n, t, frac):
    _, h, lv = cluster_case(seed, n, 0.0)
    whole = sequence_propagator(h, lv, PulseSequence((), t))
    split = sequence_propagator(h, lv, PulseSequence(((frac * t, 'x', 0.0),), (1 - frac) * t))
    assert np.max(np.abs(whole - split)) < 1e-10


@SETTINGS
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3).filter(lambda r: np.linalg.norm(r) > 0.05),
       st.sampled_from(sorted(ISOTOPES)))
def test_point_dipole_traceless_symmetric(r, iso):
    a = point_dipole_hyperfine(r, ELECTRON_GYRO, ISOTOPES[iso].gyro)
    scale = np.max(np.abs(a))
    assert np.max(np.abs(a - a.T)) <= 1e-10 * scale
    assert abs(np.trace(a)) <= 1e-10 * scale


@SETTINGS
@given(st.floats(0.5, 50.0), st.floats(1.0, 3.0), st.floats(0.1, 10.0))
def test_fit_scales_with_time(T, n, k):
    t = np.linspace(0, 4 * T, 201)
    y = np.exp(-(t / T) ** n)
    a = fit_decay((t, y))
    b = fit_decay((k * t, y))
    assert abs(b.T / a.T - k) < 1e-6 * k
    assert abs(a.T - T) < 1e-4 * T


@SETTINGS
@given(st.floats(0.5, 4.5), st.floats(0, 2 * np.pi), st.floats(2.0, 20.0))
def test_spectrum_peak_phase_invariant(f0, phase, tau):
    t = np.linspace(0, 40, 801)
    L = np.exp(-2j * np.pi * f0 * t - t / tau)
    p0 = find_peaks(*ramsey_spectrum((t, L)))[0][0]
    p1 = find_peaks(*ramsey_spectrum((t, L * np.exp(1j * phase))))[0][0]
    assert abs(p0 - f0) < 0.02
    assert abs(p1 - f0) < 0.05


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(2, 5), st.floats(0, 5), st.sampled_from(['ramsey', 'hahn']))
def test_coherence_bounded(seed, n, field, kind):
    central = CentralSpin(1.0, 1334.0, 18.4)
    s = make_system(central, random_bath(n, seed, spread=0.3), field)
    seq = PulseSequence((), 1.0) if kind == 'ramsey' else PulseSequence(((0.5, 'x', np.pi),), 0.5)
    exp = Experiment(np.linspace(0, 10, 41), seq, LevelSelection.index(2, 0), n_states=4, seed=seed)
    c = simulate(s, exp)
    m = np.abs(c.L)
    assert np.all(m[np.isfinite(m)] <= 1 + 1e-6)
    assert abs(m[0] - 1) < 1e-10


@SETTINGS
@given(seeds, st.integers(0, 6))
def test_bath_file_round_trip(tmp_path_factory, seed, n):
    bath = random_bath(n, seed, radius=2.0)
    path = tmp_path_factory.mktemp('bath') / 'b.txt'
    write_bath_file(path, bath)
    back = load_bath(path)
    assert len(back) == n
    for x, y in zip(back, bath):
        assert x.isotope == y.isotope
        assert np.array_equal(x.position, y.position) and np.array_equal(x.hyperfine, y.hyperfine)


@SETTINGS
@given(seeds, st.lists(st.floats(-100, 100), min_size=1, max_size=5, unique=True),
       st.integers(2, 500), st.sampled_from(['gcce', 'cce']), st.integers(1, 3))
def test_config_round_trip(seed, fields, num, method, order):
    spec = cfg.loads(f'seed: {seed}\nfields: {sorted(fields)!r}\ntime: {{stop: 10 us, num: {num}}}\n'
                     f'method: {{name: {method}, order: {order}}}\n')
    assert cfg.loads(cfg.serialize(spec)) == spec
    assert cfg.loads(cfg.serialize(spec)).digest() == spec.digest()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2), st.sampled_from([np.nan, np.inf, -np.inf]))
def test_non_finite_position_rejected(k, bad):
    r = [0.1, 0.2, 0.3]
    r[k] = bad
    with pytest.raises(ValidationError):
        BathSpin('13C', r)
