import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qanneal import markov as MK
from qanneal import schedules as S
from qanneal import spinspace as SP


def reference_problem():
    return SP.IsingProblem(2, ((0, 1.0), (1, 0.5)), ((0, 1, 0.25),))


def test_kernel_validation():
    with pytest.raises(ValueError):
        MK.TransitionKernel([[0.5, 0.5], [0.4, 0.5]])
    with pytest.raises(ValueError):
        MK.TransitionKernel(np.ones((2, 3)) / 2)


def test_ergodicity_coefficient_extremes():
    assert MK.ergodicity_coefficient(np.eye(3)) == pytest.approx(1.0)
    assert MK.ergodicity_coefficient(np.full((3, 3), 1 / 3)) == pytest.approx(0.0)
    g = np.array([[0.9, 0.2], [0.1, 0.8]])
    assert MK.ergodicity_coefficient(g) == pytest.approx(0.7)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.5]))
def test_ergodicity_lemmas(seed, sparsity):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    g, h = MK.random_kernel(n, rng, sparsity), MK.random_kernel(n, rng, sparsity)
    ag, ah, agh = (MK.ergodicity_coefficient(k) for k in (g, h, g @ h))
    assert -1e-12 <= agh <= 1 + 1e-12
    assert agh <= ag * ah + 1e-12
    z = rng.normal(size=(n, n))
    z -= z.mean(axis=0)
    assert MK.matrix_norm(g.matrix @ z) <= ag * MK.matrix_norm(z) + 1e-12


def test_acceptance_functions():
    assert MK.heat_bath(1.0) == 0.5
    assert MK.heat_bath(np.inf) == 1.0
    assert MK.metropolis(3.0) == 1.0 and MK.metropolis(0.25) == 0.25
    u = MK.boltzmann_u(1.0, 2.0, 0.5, 4.0)
    assert u == pytest.approx(math.exp(-2.5))


def test_tsallis_limits():
    assert MK.tsallis_u(0.3, 1.0, 1.0, 2.0, 1.0 + 1e-7) == pytest.approx(float(MK.boltzmann_u(0.3, 1.0, 1.0, 2.0)),
                                                                      rel=1e-6)
    assert MK.tsallis_u(0.0, -10.0, 1.0, 1.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        MK.tsallis_u(0.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MK.ChainSpec(tsallis_q=0.5)


def test_generation_rule_checks():
    rule = MK.single_flip_rule(3)
    np.testing.assert_array_equal(MK.distances_from(rule, 0), [bin(x).count("1") for x in range(8)])
    with pytest.raises(ValueError):
        MK.GenerationRule([[1], [1]], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        MK.GenerationRule([[1], [0], [3], [2]], [[1.0]] * 4)


def test_pimc_composite_functions():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, lambda t: 1.0)
    e = reference_problem().energies()
    assert s.size == 16
    # x = slice0 | slice1 << 2
    assert s.f0[1 | (2 << 2)] == pytest.approx((e[1] + e[2]) / 2)
    assert s.f1[0] == -4 and s.f1[3] == 4
    np.testing.assert_array_equal(np.flatnonzero(s.aligned_mask()), [0, 5, 10, 15])


def test_target_distribution_hand_values():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, lambda t: 1.0)
    t = s.target_distribution()
    np.testing.assert_allclose(t[[0, 5, 10, 15]], [0.944284, 0.006363, 0.047013, 0.002341], atol=1e-6)
    assert t.sum() == pytest.approx(1.0)


def test_ergodicity_constants_reference():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, lambda t: 1.0)
    c = MK.ergodicity_constants(s, MK.single_flip_rule(4))
    assert (c.r, c.l0, c.l1, c.w) == (4, 1.25, 4.0, 0.25)
    assert MK.pimc_schedule(c)(0) == pytest.approx(16 / math.log(2))


@pytest.mark.parametrize("acc", ["heat_bath", "metropolis"])
def test_frozen_kernel_fixed_point_and_balance(acc):
    s = MK.PimcSystem(reference_problem(), 2, 2.0, lambda t: 1.7)
    chain = MK.ChainSpec(acc)
    g = MK.kernel_at(s, MK.single_flip_rule(4), 0.0, chain).matrix
    q = s.weights(0.0)
    assert np.abs(g @ q - q).sum() <= 1e-12
    flow = g * q[None, :]
    np.testing.assert_allclose(flow, flow.T, atol=1e-15)


def test_frozen_schedule_error():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, lambda t: 0.0)
    with pytest.raises(MK.FrozenScheduleError):
        s.weights(1.0)
    with pytest.raises(MK.FrozenScheduleError):
        MK.run_inhomogeneous_chain(s, MK.single_flip_rule(4), np.full(16, 1 / 16), 5)


def test_trotter_partition_function_converges():
    # One spin: H = -h s - Gamma sigma^x, Z = 2 cosh(beta sqrt(h**2 + Gamma**2)).
    p = SP.IsingProblem(1, ((0, 0.4),))
    beta, gamma = 1.5, 0.7
    exact = 2 * math.cosh(beta * math.hypot(0.4, gamma))
    z8 = MK.trotter_partition_function(p, 8, beta, gamma)
    z16 = MK.trotter_partition_function(p, 16, beta, gamma)
    assert abs(z16 - exact) < abs(z8 - exact)
    assert z16 == pytest.approx(exact, rel=1e-2)


def test_build_trotter_system_uses_coupling():
    law = S.GFMCPower(1.0, 0.5)
    s = MK.build_trotter_system(reference_problem(), 2, 2.0, law)
    assert s.t1(3.0) == pytest.approx(1 / float(S.gamma_to_coupling(law(3.0), 2.0, 2)))


def test_chain_preserves_probability_and_matches_kernels():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, S.PIMCLog(4, 4))
    rule = MK.single_flip_rule(4)
    p0 = np.zeros(16)
    p0[3] = 1.0
    traj = MK.run_inhomogeneous_chain(s, rule, p0, 3, record_at=[1, 2])
    p = p0.copy()
    for t in range(3):
        g = MK.kernel_at(s, rule, float(t)).matrix
        for _ in range(s.n_bits):
            p = g @ p
        np.testing.assert_allclose(traj.distributions[t, :, 0], p, atol=1e-14)
    assert traj.final().sum() == pytest.approx(1.0)


def test_lower_bound_lemma_holds_late():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, S.PIMCLog(4, 4))
    rep = MK.check_lower_bound_lemma(s, MK.single_flip_rule(4), 1e6)
    assert rep.lb1_holds and rep.tightness >= 1.0


def test_sample_chain_is_reproducible():
    s = MK.PimcSystem(reference_problem(), 2, 2.0, S.PIMCLog(4, 4))
    rule = MK.single_flip_rule(4)
    a = MK.sample_chain(s, rule, 0, 2000, 1000, seed=5)
    b = MK.sample_chain(s, rule, 0, 2000, 1000, seed=5)
    np.testing.assert_array_equal(a, b)
    assert a.sum() == pytest.approx(1.0)


def test_csv_writers(tmp_path):
    s = MK.PimcSystem(reference_problem(), 2, 2.0, S.PIMCLog(4, 4))
    rule = MK.single_flip_rule(4)
    p0 = np.zeros((16, 2))
    p0[0, 0] = p0[15, 1] = 1.0
    traj = MK.run_inhomogeneous_chain(s, rule, p0, 10, record_at=[5])
    lines = MK.write_trajectory_csv(traj, s.target_distribution(), tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,dist_target,dist_pair" and len(lines) == 3
    k = MK.write_kernel_csv(MK.kernel_at(s, rule, 1.0), tmp_path / "k.csv")
    assert k.read_text().startswith("y,x,G")
