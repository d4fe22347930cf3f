import numpy as np
import pytest
from scipy import constants as sc

from gcce import (BathSpin, CentralSpin, ConfigError, ParseError, SingularityError, ValidationError,
                  generate_bath, load_bath, make_system, sic_4h, weak_bath, write_bath_file)
from gcce.constants import DIPOLAR_PREFACTOR, ELECTRON_GYRO, ISOTOPES
from gcce.spin_model import (dipolar_tensor, dipolar_zz_matrix, import_hyperfine_table, lattice_sites,
                             point_dipole_hyperfine)

from conftest import NATURAL


def dipole_oracle_zz(r_nm, g1_mhz_per_mt, g2_mhz_per_mt):
    # SI one-liner: -mu0/(4 pi) h g1 g2 (3 cos^2 - 1) / r^3, gyros in Hz/T, result in MHz
    g1, g2 = g1_mhz_per_mt * 1e9, g2_mhz_per_mt * 1e9
    r = np.asarray(r_nm) * 1e-9
    d = np.linalg.norm(r)
    return -sc.mu_0 / (4 * sc.pi) * sc.h * g1 * g2 * (3 * r[2] ** 2 / d ** 2 - 1) / d ** 3 / 1e6


def test_prefactor_value():
    assert DIPOLAR_PREFACTOR == pytest.approx(0.0662607, rel=1e-5)


def test_central_spin_validation():
    with pytest.raises(ValidationError):
        CentralSpin(0.7)
    with pytest.raises(ValidationError):
        CentralSpin(1.0, gyro=0.0)
    assert CentralSpin(1.5).dim == 4


def test_point_dipole_axial():
    a = point_dipole_hyperfine([0, 0, 0.4], ELECTRON_GYRO, ISOTOPES['13C'].gyro)
    assert a[0, 0] == pytest.approx(a[1, 1])
    assert a[0, 0] == pytest.approx(-a[2, 2] / 2)


def test_point_dipole_cubic_decay():
    r = np.array([0.3, -0.2, 0.5])
    a1 = point_dipole_hyperfine(r, ELECTRON_GYRO, ISOTOPES['29Si'].gyro)
    a2 = point_dipole_hyperfine(2 * r, ELECTRON_GYRO, ISOTOPES['29Si'].gyro)
    np.testing.assert_allclose(a2, a1 / 8, rtol=1e-13)


def test_point_dipole_si29_oracle():
    a = point_dipole_hyperfine([0, 0, 0.5], ELECTRON_GYRO, ISOTOPES['29Si'].gyro)
    expected = dipole_oracle_zz([0, 0, 0.5], ELECTRON_GYRO, ISOTOPES['29Si'].gyro)
    assert a[2, 2] == pytest.approx(expected, rel=1e-10)
    assert a[2, 2] == pytest.approx(-0.2515, abs=5e-4)


def test_point_dipole_singular():
    with pytest.raises(SingularityError):
        point_dipole_hyperfine([0, 0, 0], ELECTRON_GYRO, 0.01)


@pytest.mark.parametrize('r', [[0.1, 0.2, 0.3], [0, 0, 1.0], [-0.5, 0.4, 0.01]])
def test_tensors_symmetric_traceless(r):
    a = point_dipole_hyperfine(r, ELECTRON_GYRO, ISOTOPES['13C'].gyro)
    scale = np.max(np.abs(a))
    assert np.max(np.abs(a - a.T)) <= 1e-10 * scale
    assert abs(np.trace(a)) <= 1e-10 * scale


def test_dipolar_tensor_exchange_and_axis():
    i = BathSpin('13C', [0, 0, 0])
    j = BathSpin('13C', [0.3, 0, 0])
    p_ij = dipolar_tensor(i, j).tensor
    p_ji = dipolar_tensor(j, i).tensor
    np.testing.assert_array_equal(p_ij, p_ji)
    assert p_ij[1, 1] == pytest.approx(p_ij[2, 2])
    assert p_ij[1, 1] == pytest.approx(-p_ij[0, 0] / 2)


def test_dipolar_two_carbons_oracle():
    g = ISOTOPES['13C'].gyro
    p = dipolar_tensor(BathSpin('13C', [0, 0, 0]), BathSpin('13C', [0, 0, 0.3])).tensor
    assert p[2, 2] == pytest.approx(dipole_oracle_zz([0, 0, 0.3], g, g), rel=1e-10)


def test_dipolar_coincident():
    with pytest.raises(SingularityError):
        dipolar_tensor(BathSpin('13C', [0, 0, 0.1]), BathSpin('13C', [0, 0, 0.1]))


def test_dipolar_zz_matrix_matches_tensors():
    bath = [BathSpin('13C', [0, 0, 0]), BathSpin('29Si', [0.2, 0.1, 0.3]), BathSpin('13C', [-0.3, 0.2, 0])]
    s = make_system(CentralSpin(1.0), bath)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert s.pzz[i, j] == pytest.approx(s.dipolar(i, j).tensor[2, 2], rel=1e-12)


def test_generate_bath_full_occupation():
    lat = sic_4h('kh')
    pos, isos = lattice_sites(lat, 0.6)
    bath = generate_bath(lat, {'29Si': 1.0, '13C': 1.0}, 0.6, seed=5)
    assert len(bath) == len(pos)
    assert all(np.linalg.norm(b.position) <= 0.6 for b in bath)


def test_generate_bath_deterministic():
    a = generate_bath('4H-SiC:kk', NATURAL, 1.5, seed=42)
    b = generate_bath('4H-SiC:kk', NATURAL, 1.5, seed=42)
    assert a == b
    assert generate_bath('4H-SiC:kk', NATURAL, 1.5, seed=43) != a


def test_generate_bath_binomial_statistics():
    lat = sic_4h('kk')
    pos, isos = lattice_sites(lat, 0.8)
    n = sum(1 for i in isos if i == '29Si')
    p = 0.3
    counts = np.array([len(generate_bath(lat, {'29Si': p}, 0.8, seed=s)) for s in range(1000)])
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 4 * sigma + 1e-9) or \
        abs(counts.mean() - n * p) < 4 * sigma / np.sqrt(len(counts))
    assert abs(counts.mean() - n * p) < 4 * sigma / np.sqrt(len(counts))


def test_generate_bath_errors():
    with pytest.raises(ValidationError):
        generate_bath('4H-SiC', NATURAL, -1.0, 0)
    with pytest.raises(ConfigError):
        generate_bath(None, NATURAL, 1.0, 0)
    with pytest.raises(ConfigError):
        generate_bath('diamond', NATURAL, 1.0, 0)
    with pytest.raises(ValidationError):
        generate_bath('4H-SiC', {'29Si': 1.5}, 1.0, 0)


def test_vacancies_removed():
    lat = sic_4h('kk')
    pos, _ = lattice_sites(lat, 1.0)
    # the nearest sites to the divacancy center are further than the vacancy half-distance
    assert np.min(np.linalg.norm(pos, axis=1)) > 0.05


def test_duplicate_positions_rejected(kh_central):
    with pytest.raises(ValidationError):
        make_system(kh_central, [BathSpin('13C', [0, 0, 0.2]), BathSpin('29Si', [0, 0, 0.2])])


def test_weak_bath_filter(kh_central):
    bath = [BathSpin('13C', [0, 0, 0.1 * (k + 1)], np.diag([0, 0, a]))
            for k, a in enumerate([0.5, -0.999, 1.0, -1.0, 2.0, 0.0])]
    kept = weak_bath(make_system(kh_central, bath)).bath
    assert [b.hyperfine[2, 2] for b in kept] == [0.5, -0.999, 0.0]


def test_bath_file_round_trip(tmp_path):
    bath = generate_bath('4H-SiC:kh', NATURAL, 1.2, seed=3)
    path = tmp_path / 'bath.txt'
    write_bath_file(path, bath)
    back = load_bath(path)
    assert back == bath
    for x, y in zip(back, bath):
        assert x.hyperfine.tobytes() == y.hyperfine.tobytes()


def test_bath_file_parse_error(tmp_path):
    path = tmp_path / 'bad.txt'
    path.write_text('# header\n13C 0 0 0.3 1 0 0 0 1 0 0 0 1\n13C 0 0 0.4 1 0 0\n')
    with pytest.raises(ParseError) as e:
        load_bath(path)
    assert e.value.lineno == 3


def test_import_table(tmp_path, kh_central):
    bath = generate_bath('4H-SiC:kh', NATURAL, 1.2, seed=3)
    system = make_system(kh_central, bath)
    empty = tmp_path / 'empty.txt'
    empty.write_text('# nothing\n')
    assert import_hyperfine_table(empty, system).bath == system.bath

    new = np.arange(9.0).reshape(3, 3)
    table = tmp_path / 'table.txt'
    write_bath_file(table, [bath[1].with_hyperfine(new), BathSpin('13C', [9, 9, 9], new)])
    out = import_hyperfine_table(table, system)
    np.testing.assert_array_equal(out.bath[1].hyperfine, new)
    for k in range(len(bath)):
        if k != 1:
            np.testing.assert_array_equal(out.bath[k].hyperfine, bath[k].hyperfine)
    assert len(out.meta['unmatched_hyperfine_rows']) == 1


def test_import_table_duplicate(tmp_path, kh_central):
    system = make_system(kh_central, [BathSpin('13C', [0, 0, 0.3])])
    table = tmp_path / 't.txt'
    table.write_text('13C 0 0 0.3 1 0 0 0 1 0 0 0 1\n13C 0 0 0.3 2 0 0 0 2 0 0 0 2\n')
    with pytest.raises(ValidationError):
        import_hyperfine_table(table, system)


def test_dipolar_zz_matrix_symmetric():
    rng = np.random.default_rng(1)
    pos = rng.normal(size=(6, 3))
    g = rng.normal(size=6)
    m = dipolar_zz_matrix(pos, g)
    np.testing.assert_allclose(m, m.T, rtol=1e-14)
    assert np.all(np.diag(m) == 0)
