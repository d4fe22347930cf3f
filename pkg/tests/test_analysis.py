import numpy as np
import pytest

from gcce import (BathSpin, CentralSpin, Experiment, FitRangeError, LevelSelection, ValidationError, hahn_echo,
                  make_system, ramsey, simulate)
from gcce.analysis import (DecayFit, FieldSweepResult, HyperbolaModel, bath_coupling_descriptor, branch_minima,
                           couplings_from_minima, envelope, field_sweep, find_peaks, fit_decay, fit_hyperbola, fit_hyperbolae,
                           fit_or_bound, group_positions, hyperbola, local_minima, loglog_fit,
                           population_deviation, ramsey_spectrum)
from gcce.cce import CoherenceCurve
from gcce.constants import ELECTRON_GYRO

from conftest import random_bath


def test_fit_exponential():
    t = np.linspace(0, 50, 501)
    fit = fit_decay((t, np.exp(-t / 7.3)))
    assert fit.T == pytest.approx(7.3, rel=1e-3)
    assert fit.n == pytest.approx(1.0, rel=1e-3)
    assert fit.amplitude == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize('n', [1.0, 2.0, 3.0])
def test_fit_stretched_noisy(n):
    rng = np.random.default_rng(int(n))
    t = np.linspace(0, 40, 401)
    y = 0.97 * np.exp(-(t / 11.0) ** n) + rng.normal(0, 2e-3, t.size)
    fit = fit_decay((t, np.clip(y, 0, 1)))
    assert fit.T == pytest.approx(11.0, rel=0.01)
    assert fit.n == pytest.approx(n, rel=0.03)


def test_fit_fixed_exponent():
    t = np.linspace(0, 30, 301)
    fit = fit_decay((t, np.exp(-(t / 5) ** 2)), n=2.0)
    assert fit.T == pytest.approx(5.0, rel=1e-4)
    assert fit.n == 2.0


def test_envelope_fit_of_fringes():
    t = np.linspace(0, 30, 3001)
    y = np.abs(np.cos(2 * np.pi * 1.3 * t)) * np.exp(-(t / 8.0) ** 2)
    fit = fit_decay((t, y), mode='envelope')
    assert fit.T == pytest.approx(8.0, rel=0.05)
    assert np.all(envelope(t, y) >= y - 1e-3)


def test_no_decay_is_lower_bound():
    t = np.linspace(0, 10, 101)
    with pytest.raises(FitRangeError):
        fit_decay((t, np.ones_like(t)))
    fit = fit_or_bound((t, np.ones_like(t)))
    assert fit.lower_bound and fit.T == 10.0


def test_fit_rejects_bad_input():
    t = np.linspace(0, 10, 101)
    with pytest.raises(ValidationError):
        fit_decay((t, 1.1 * np.exp(-t)))
    with pytest.raises(ValidationError):
        fit_decay((t[:5], np.exp(-t[:5])))
    with pytest.raises(ValidationError):
        fit_decay((t, np.exp(-t)), mode='smooth')


def test_fit_skips_undefined_points():
    t = np.linspace(0, 20, 201)
    y = np.exp(-t / 4)
    y[50:60] = np.nan
    assert fit_decay((t, y)).T == pytest.approx(4.0, rel=1e-3)


def test_decay_fit_validation():
    with pytest.raises(ValidationError):
        DecayFit(-1.0, 1.0)


def test_spectrum_single_line():
    t = np.linspace(0, 20, 2001)
    L = 0.5 * np.exp(-2j * np.pi * 1352.4 * t) * np.exp(-t / 5)
    f, mag = ramsey_spectrum((t, L), frame_frequency=1334.0)
    pos, hts = find_peaks(f, mag)
    assert pos[0] == pytest.approx(18.4, abs=0.01)
    assert len(pos) == 1


def test_spectrum_two_lines_ordered_by_height():
    t = np.linspace(0, 40, 4001)
    L = 0.5 * (0.7 * np.exp(-2j * np.pi * 3.0 * t) + 0.3 * np.exp(-2j * np.pi * 7.5 * t))
    pos, hts = find_peaks(*ramsey_spectrum((t, L)))
    np.testing.assert_allclose(pos, [3.0, 7.5], atol=0.01)
    assert hts[0] > hts[1]


def test_spectrum_needs_uniform_grid():
    t = np.array([0, 1, 2, 4.0])
    with pytest.raises(ValidationError):
        ramsey_spectrum((t, np.ones(4)))


def test_hyperbola_fit_recovers_parameters():
    b = np.linspace(-2, 2, 41)
    f = hyperbola(b, 1334.0, 18.4, abs(ELECTRON_GYRO), 0.013)
    m = fit_hyperbola(b, f)
    assert m.E == pytest.approx(18.4, rel=1e-6)
    assert m.b_min == pytest.approx(0.013, abs=1e-8)
    assert m.gyro == pytest.approx(abs(ELECTRON_GYRO), rel=1e-6)
    m2 = fit_hyperbola(b, f, gyro=ELECTRON_GYRO)
    assert m2.E == pytest.approx(18.4, rel=1e-8)
    np.testing.assert_allclose(m2(b), f, atol=1e-8)


def test_hyperbola_model_offset():
    m = HyperbolaModel(0.0, 1.0, 28.0, 0.01)
    assert m.offset == pytest.approx(0.28)
    with pytest.raises(ValidationError):
        HyperbolaModel(0.0, -1.0, 28.0, 0.0)


def test_branch_minima_single_nucleus():
    # one nucleus: minima at +-A / (2 gyro)
    np.testing.assert_allclose(branch_minima([0.6], ELECTRON_GYRO) * 1e3, [-10.7, 10.7], atol=0.02)
    np.testing.assert_allclose(branch_minima([0.75], ELECTRON_GYRO) * 1e3, [-13.38, 13.38], atol=0.01)


def test_branch_minima_three_nuclei():
    mins = branch_minima([1.92, 0.65, 0.49], ELECTRON_GYRO)
    assert len(mins) == 8
    np.testing.assert_allclose(mins, -mins[::-1], atol=1e-15)
    # with resolution 1 uT the eight combinations stay distinct
    assert len(group_positions(mins, 1e-3)) == 8
    # the two middle combinations (+-(0.65 - 0.49 - 1.92)) etc. merge at coarse resolution
    assert len(group_positions(mins, 6e-3)) < 8


def test_two_branches_with_missing_peaks():
    g = abs(ELECTRON_GYRO)
    fields = np.linspace(-0.04, 0.04, 41)
    truth = [HyperbolaModel(-18.0, 18.4, g, b) for b in branch_minima([0.75], ELECTRON_GYRO)]
    peaks = []
    for k, b in enumerate(fields):
        f = np.array([m(b) for m in truth])
        # the upper branch is lost at every third field
        peaks.append(np.sort(f)[:1] if k % 3 == 0 else f[::-1])
    sweep = FieldSweepResult(fields, [None] * len(fields))
    models = fit_hyperbolae(sweep, 2, gyro=ELECTRON_GYRO, peaks=peaks)
    np.testing.assert_allclose([m.b_min for m in models], [m.b_min for m in truth], atol=1e-6)
    np.testing.assert_allclose([m.E for m in models], 18.4, rtol=1e-4)


def test_couplings_from_minima():
    g = abs(ELECTRON_GYRO)
    models = [HyperbolaModel(0, 1, g, b) for b in branch_minima([0.75], ELECTRON_GYRO)]
    np.testing.assert_allclose(couplings_from_minima(models), [0.75], rtol=1e-12)
    assert len(couplings_from_minima(models[:1])) == 0


def test_group_positions():
    assert group_positions([0.0, 0.05, 1.0, 1.02, 3.0], 0.1) == [[0.0, 0.05], [1.0, 1.02], [3.0]]


def test_local_minima():
    x = np.arange(7)
    assert local_minima(x, [3, 2, 1, 2, 3, 0, 1]) == [2, 5]


def test_descriptor():
    c = CentralSpin(1.0, 1334.0, 18.4)
    a1 = np.zeros((3, 3))
    a1[:, 2] = [0.3, 0.0, 0.4]
    a2 = np.diag([0, 0, 1.2])
    s = make_system(c, [BathSpin('13C', [0, 0, 0.5], a1), BathSpin('13C', [0, 0, 1.0], a2)])
    d, per_spin = bath_coupling_descriptor(s)
    np.testing.assert_allclose(per_spin, [1.2, 0.5])
    assert d == pytest.approx(1.3)
    assert bath_coupling_descriptor(make_system(c, []))[0] == 0.0


def test_loglog_fit_exact_power():
    x = np.logspace(-1, 1, 20)
    r = loglog_fit(x, 3 * x ** -1)
    assert r.slope == pytest.approx(-1)
    assert r.r2 == pytest.approx(1)
    with pytest.raises(ValidationError):
        loglog_fit([1, -1], [1, 1])


def test_population_deviation():
    t = np.linspace(0, 1, 11)
    pop = 0.5 * (1 + 0.03 * np.sin(t))
    c = CoherenceCurve(t, np.full(11, 0.5 + 0j), pop_a=pop, pop_b=1 - pop)
    assert population_deviation(c) == pytest.approx(0.03 * np.sin(1.0))
    with pytest.raises(ValidationError):
        population_deviation(CoherenceCurve(t, np.full(11, 0.5 + 0j)))


def test_sweep_monotonic():
    with pytest.raises(ValidationError):
        FieldSweepResult([0, 1, 0.5], [None] * 3)


def test_single_field_sweep_equals_simulate(kh_central):
    s = make_system(kh_central, random_bath(5, 1, spread=0.1), 0.3)
    exp = Experiment(np.linspace(0, 5, 51), ramsey(), LevelSelection.index(2, 0), n_states=8, seed=2)
    sweep = field_sweep(s, exp, [0.3])
    direct = simulate(s, exp)
    np.testing.assert_array_equal(sweep.curves[0].L, direct.L)


def test_sweep_tracks_levels(kk_central):
    s = make_system(kk_central, random_bath(3, 2, spread=0.05), 0.0)
    exp = Experiment(np.linspace(0, 2, 21), hahn_echo(), LevelSelection.sz(0, -1), n_states=4, seed=1)
    sweep = field_sweep(s, exp, [40.0, 45.0, 50.0], fit='raw', spectrum={})
    assert sweep.ok() == [0, 1, 2]
    assert len(sweep.fits) == 3 and len(sweep.spectra) == 3
    # the |-1> level follows its own branch past the anticrossing
    for lv in sweep.levels:
        assert abs(lv.b[2]) == pytest.approx(1.0, abs=1e-6)
