import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qanneal import bounds as B
from qanneal import operators as O
from qanneal import spinspace as SP


def test_positive_matrix_validation():
    with pytest.raises(ValueError):
        B.PositiveMatrix([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        B.PositiveMatrix(np.ones((2, 3)))
    assert B.PositiveMatrix([[1.0, 2.0], [4.0, 1.0]]).kappa == 4.0


@pytest.mark.parametrize("k", [1.5, 3.0, 10.0])
def test_hopf_tight_case(k):
    m = B.PositiveMatrix([[k, 1.0], [1.0, k]])
    res = B.hopf_bound(m)
    assert res.lambda0 == pytest.approx(k + 1)
    assert res.bound == pytest.approx(k - 1, abs=1e-12)
    assert B.subdominant_moduli(m)[0] == pytest.approx(res.bound, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(0.01, 1.0))))
def test_hopf_bound_holds(a):
    m = B.PositiveMatrix(a)
    res = B.hopf_bound(m)
    assert B.subdominant_moduli(m).max() <= res.bound + 1e-10
    lam, v = B.power_iteration(a)
    assert np.all(v > 0)
    np.testing.assert_allclose(a @ v, lam * v, rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oscillation_contraction(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = B.PositiveMatrix(rng.uniform(0.05, 1.0, (n, n)))
    lhs, rhs = B.oscillation_contraction(m, rng.normal(size=n), rng.uniform(0.1, 1.0, n))
    assert lhs <= rhs + 1e-12


def test_tfim_bound_single_spin():
    # H = -h s - Gamma sigma^x has gap 2 sqrt(h**2 + Gamma**2).
    p = SP.IsingProblem(1, ((0, 0.3),))
    for g in (0.1, 0.5, 1.0):
        gap = 2 * math.sqrt(0.09 + g * g)
        assert B.tfim_ground_energy(p, g) == pytest.approx(-gap / 2)
        assert 0 < B.tfim_gap_lower_bound(p, g, 1.0) <= gap


def test_tfim_bound_scaling_and_validation():
    p = SP.ferromagnet(2, 1)
    b1 = B.tfim_gap_lower_bound(p, 0.1, 1.0, eps0=-1.0)
    b2 = B.tfim_gap_lower_bound(p, 0.2, 1.0, eps0=-1.0)
    assert b2 / b1 == pytest.approx(2.0**p.n_sites)
    with pytest.raises(ValueError):
        B.tfim_gap_lower_bound(p, 2.0, 1.0)
    with pytest.raises(ValueError):
        B.tfim_gap_lower_bound(p, 0.5, 1.0, e_plus=0.0)


def test_stirling_coefficient_close_to_exact():
    p = SP.ferromagnet(3, 2)
    e_plus = B.default_e_plus(p, 1.0)
    n = p.n_sites
    exact = 2 * (e_plus + 1) * math.factorial(n) / (n * (e_plus - SP.enumerate_extremes(p).e_min + n) ** n)
    assert B.tfim_coefficient_stirling(p, 1.0, e_plus, -1.0) == pytest.approx(exact, rel=0.02)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_gap_bounds_hold(n, seed, gamma):
    p = SP.random_problem(n, np.random.default_rng(seed))
    pot = np.diag(p.energies())
    for kind, bound in (("transverse_field", B.tfim_gap_lower_bound(p, gamma, 1.0)),
                        ("many_body", B.mti_gap_lower_bound(p, gamma))):
        w = np.linalg.eigvalsh(pot + gamma * O.DriverOperator(kind, n).operator().dense())
        assert w[1] - w[0] >= bound


def test_mti_ground_energy_below_classical():
    p = SP.ferromagnet(2, 1)
    assert B.mti_ground_energy(p, 0.3) < SP.enumerate_extremes(p).e_min


def test_sa_map_ground_state_and_observables():
    p = SP.generate_spin_glass(SP.SpinGlassSpec(2, 2, 0.1, 4))
    for t in (0.5, 1.0, 2.0):
        sa = B.build_sa_map(p, t)
        assert sa.verify_ground_state() <= 1e-12
        w = np.linalg.eigvalsh(sa.dense())
        assert w[0] == pytest.approx(0.0, abs=1e-10)
        e = p.energies()
        assert sa.quantum_expectation(e) == pytest.approx(B.thermal_average(p, t, e), abs=1e-12)


def test_sa_map_validation():
    with pytest.raises(ValueError):
        B.build_sa_map(SP.ferromagnet(2, 1), 0.0)
    with pytest.raises(SP.CapacityError):
        B.build_sa_map(SP.IsingProblem(11), 1.0)


def test_matrix_element_identity():
    p = SP.random_problem(4, np.random.default_rng(2))
    lhs, rhs = B.matrix_element_check(p, 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-5)


def test_sa_gap_report_schedule():
    p = SP.ferromagnet(2, 2)
    rep = B.sa_gap_and_schedule(p, 1.0, alpha=2.0)
    assert rep.gap > 0
    assert rep.exponent == pytest.approx(rep.p * p.n_sites)
    assert rep.law(1.0) == pytest.approx(rep.p * p.n_sites / math.log(3.0))


def test_reports(tmp_path):
    rep = B.hopf_report(B.PositiveMatrix([[2.0, 1.0], [1.0, 2.0]]))
    assert rep["max_subdominant"] == pytest.approx(1.0)
    path = B.write_report({"a": np.float64(1.5), "b": np.arange(2)}, tmp_path / "r.json")
    assert '"a": 1.5' in path.read_text()
