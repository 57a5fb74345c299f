import math

import numpy as np
import pytest

from qanneal import dynamics as D
from qanneal import operators as O
from qanneal import schedules as S
from qanneal import spinspace as SP


@pytest.fixture(scope="module")
def small_glass():
    return O.transverse_field_anneal(SP.generate_spin_glass(SP.SpinGlassSpec(2, 2, 0.1, 3)), S.poly_family(1))


def test_step_size_respects_control():
    h = O.landau_zener(2.0, 0.2, S.poly_family(1))
    steps, dt = D.step_size(h, 10.0, 0.05)
    assert steps * dt == pytest.approx(10.0)
    assert dt <= 0.05 / h.norm_bound() + 1e-15


def test_real_time_conserves_norm(small_glass):
    r = D.evolve_rt(small_glass, 20.0)
    assert r.norm_drift < 1e-9
    assert r.populations.sum() == pytest.approx(1.0, abs=1e-9)
    assert r.residual_energy == pytest.approx(r.residual_energy_direct, abs=1e-9)


def test_imaginary_time_beats_real_time(small_glass):
    rt = D.evolve_rt(small_glass, 10.0)
    it = D.evolve_it(small_glass, 10.0)
    assert it.populations.sum() == pytest.approx(1.0, abs=1e-9)
    assert it.residual_energy < rt.residual_energy


def test_adiabatic_limit(small_glass):
    fast = D.evolve_rt(small_glass, 1.0).residual_energy
    slow = D.evolve_rt(small_glass, 200.0).residual_energy
    assert slow < 1e-2 * fast


def test_sudden_limit_keeps_initial_state():
    h = O.landau_zener(2.0, 0.2, S.poly_family(1))
    r = D.evolve_rt(h, 1e-6)
    psi0 = D.initial_state(h)
    assert abs(np.vdot(psi0, r.final_state)) == pytest.approx(1.0, abs=1e-9)


def test_landau_zener_small_tau():
    f = S.poly_family(1)
    h = O.landau_zener(2.0, 0.2, f)
    for tau in (5.0, 20.0):
        p = D.evolve_rt(h, tau).excitation(1)
        p_lz, _ = D.lz_closed_forms(2.0, 0.2, f, tau, 1)
        assert p == pytest.approx(p_lz, rel=0.1)


def test_landau_zener_large_tau_bound():
    f = S.poly_family(2)
    h = O.landau_zener(2.0, 0.2, f)
    taus = np.linspace(1000, 1012, 13)
    p_max = max(D.evolve_rt(h, t).excitation(1) for t in taus)
    bound = D.lz_closed_forms(2.0, 0.2, f, 1000.0, 2)[1]
    assert p_max == pytest.approx(bound, rel=0.1)


def test_lz_bound_equals_generic_excitation_bound():
    for m in (1, 2, 3):
        f = S.poly_family(m)
        coeff = O.excitation_bound(O.landau_zener(2.0, 0.2, f), 1, m)
        assert D.lz_closed_forms(2.0, 0.2, f, 1.0, m)[1] == pytest.approx(coeff, rel=1e-9)


def test_crossing_points():
    assert D.crossing_point(S.poly_family(3)) == pytest.approx(0.5)
    assert D.crossing_point(S.sq_family("sq1")) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        D.crossing_point(O.constant_gamma(0.3))


def test_budget_and_validation(small_glass):
    with pytest.raises(D.ResourceError):
        D.evolve_rt(small_glass, 1e4, max_steps=10)
    with pytest.raises(ValueError):
        D.evolve_rt(small_glass, 0.0)
    with pytest.raises(ValueError):
        D.residual_energy_sweep(small_glass, [2.0, 1.0])
    with pytest.raises(ValueError):
        D.residual_energy_sweep(small_glass, [1.0], mode="XT")


def test_sweep_is_ordered_and_csv(small_glass, tmp_path):
    reps = D.residual_energy_sweep(small_glass, [1.0, 2.0, 4.0], workers=2)
    assert [r.tau for r in reps] == [1.0, 2.0, 4.0]
    assert D.evolve_rt(small_glass, 2.0).residual_energy == reps[1].residual_energy
    path = D.write_sweep_csv(reps, tmp_path / "s.csv", n_levels=2)
    header = path.read_text().splitlines()[0]
    assert header == "tau,schedule,mode,E_res,P_ex_1,P_ex_2,steps,norm_drift"
