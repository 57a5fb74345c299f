import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qanneal import spinspace as SP


def two_site():
    # E = -s0 - 0.5 s1 - 0.25 s0 s1
    return SP.IsingProblem(2, ((0, 1.0), (1, 0.5)), ((0, 1, 0.25),))


def test_encoding_bit_zero_is_spin_up():
    assert SP.encode([1, -1, 1]) == 2
    np.testing.assert_array_equal(SP.decode(2, 3), [1, -1, 1])
    with pytest.raises(ValueError):
        SP.encode([1, 0])
    with pytest.raises(ValueError):
        SP.decode(8, 3)


@given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1))))
def test_encode_decode_roundtrip(nx):
    n, x = nx
    assert SP.encode(SP.decode(x, n).tolist()) == x


def test_energy_table_hand_values():
    np.testing.assert_allclose(two_site().energies(), [-1.75, 0.75, -0.25, 1.25])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_energy_table_matches_termwise(n, seed):
    p = SP.random_problem(n, np.random.default_rng(seed))
    table = p.energies()
    for x in range(p.dim):
        assert table[x] == pytest.approx(SP.energy(p, x), abs=1e-12)


def test_higher_order_terms():
    p = SP.IsingProblem(3, higher_terms=(((0, 1, 2), 2.0),))
    assert p.energies()[0] == -2.0
    assert p.energies()[SP.encode([-1, 1, 1])] == 2.0
    with pytest.raises(ValueError):
        SP.IsingProblem(3, higher_terms=(((0, 1), 1.0),))


def test_validation_rejects_bad_terms():
    with pytest.raises(ValueError):
        SP.IsingProblem(2, pair_terms=((0, 0, 1.0),))
    with pytest.raises(ValueError):
        SP.IsingProblem(2, field_terms=((3, 1.0),))
    with pytest.raises(ValueError):
        SP.IsingProblem(0)


def test_extremes_keep_degeneracy():
    ext = SP.enumerate_extremes(SP.ferromagnet(2, 2))
    assert ext.e_min == -4.0
    assert ext.argmin == (0, 15)
    assert ext.e_max == 4.0


def test_spin_glass_minimum_is_exhaustive():
    p = SP.generate_spin_glass(SP.SpinGlassSpec(3, 3, 0.1, 91))
    assert p.n_sites == 9 and len(p.pair_terms) == 12
    ext = SP.enumerate_extremes(p)
    brute = min(SP.energy(p, x) for x in range(512))
    assert ext.e_min == pytest.approx(brute, abs=1e-12)
    assert all(SP.energy(p, x) == pytest.approx(brute, abs=1e-12) for x in ext.argmin)


def test_spin_glass_is_seeded():
    a = SP.generate_spin_glass(SP.SpinGlassSpec(3, 3, 0.1, 5))
    b = SP.generate_spin_glass(SP.SpinGlassSpec(3, 3, 0.1, 5))
    c = SP.generate_spin_glass(SP.SpinGlassSpec(3, 3, 0.1, 6))
    assert a == b and a != c


def test_local_energies_contain_every_touching_term():
    p = two_site()
    # H_0 = -s0 - 0.25 s0 s1 ; H_1 = -0.5 s1 - 0.25 s0 s1
    np.testing.assert_allclose(p.local_energies(0), [-1.25, 1.25, -0.75, 0.75])
    np.testing.assert_allclose(p.local_energies(1), [-0.75, -0.25, 0.75, 0.25])


def test_lattice_bonds_open_boundaries():
    assert SP.lattice_bonds(2, 2) == [(0, 1), (0, 2), (1, 3), (2, 3)]


def test_capacity_cap():
    p = SP.IsingProblem(21)
    with pytest.raises(SP.CapacityError):
        p.energies()


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_serialization_roundtrip(n, seed):
    p = SP.random_problem(n, np.random.default_rng(seed), density=0.7)
    q = SP.loads(SP.dumps(p))
    assert q == p
    np.testing.assert_array_equal(q.energies(), p.energies())
