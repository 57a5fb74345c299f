import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qanneal import schedules as S

ALL = ["f1", "f2", "f3", "f4", "sq1", "sq2", "cos_sq", "grover_opt:64", "grover_opt_m:64:2", "grover_opt_m:16:3"]


@pytest.mark.parametrize("name", ALL)
def test_endpoints(name):
    f = S.from_name(name)
    assert f(0.0) == pytest.approx(0.0, abs=1e-14)
    assert f(1.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_poly_family_flat_endpoints(m):
    f = S.poly_family(m)
    for k in range(1, m):
        assert f.derivative(0.0, k) == pytest.approx(0.0, abs=1e-12)
        assert f.derivative(1.0, k) == pytest.approx(0.0, abs=1e-12)
    assert abs(f.derivative(0.0, m)) > 0.5
    assert f(0.5) == pytest.approx(0.5)


def test_sq_family_endpoint_slopes():
    assert S.sq_family("sq1").derivative(0.0) == 0.0
    assert S.sq_family("sq1").derivative(1.0) == 2.0
    assert S.sq_family("sq2").derivative(0.0) == 2.0
    assert S.sq_family("sq2").derivative(1.0) == 0.0


def test_cos_sq_second_derivative_at_one():
    f = S.cos_sq()
    assert f.derivative(1.0, 1) == pytest.approx(0.0, abs=1e-12)
    assert f.derivative(1.0, 2) == pytest.approx(-2 * math.pi**2)


def test_grover_optimal_slope_at_midpoint():
    # f'(1/2) = 1/sqrt(N): the schedule slows down where the gap is smallest.
    f = S.grover_optimal(64)
    assert f(0.5) == pytest.approx(0.5)
    assert f.derivative(0.5) == pytest.approx(1 / 8)
    assert f.derivative(0.0) == pytest.approx(64 / 1)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL), st.floats(0.05, 0.95), st.integers(1, 4))
def test_derivatives_match_finite_differences(name, s, k):
    f = S.from_name(name)
    h = 1e-5
    fd = (f.derivative(s + h, k - 1) - f.derivative(s - h, k - 1)) / (2 * h)
    assert f.derivative(s, k) == pytest.approx(fd, rel=1e-5, abs=1e-5 * (1 + abs(fd)))


def test_registry_errors():
    for bad in ["f5", "grover_opt", "nope", "grover_opt_m:64", "grover_opt:1"]:
        with pytest.raises(ValueError):
            S.from_name(bad)
    with pytest.raises(ValueError):
        S.poly_family(1).derivative(0.5, 5)


def test_decay_laws():
    g = S.GFMCPower(0.5, 0.25)
    assert g(0) == 0.5 and g(15) == pytest.approx(0.25)
    with pytest.raises(S.DomainError):
        g(-1)
    assert S.PIMCLog(4, 4)(0) == pytest.approx(16 / math.log(2))
    assert S.PowerGamma.transverse_field(3, 1.0, 1.0, 1.0).exponent == pytest.approx(0.2)
    assert S.MTILaw(4, 2.0, 1.0)(1) == pytest.approx(1.0)
    assert np.isinf(S.LogTemperature(1.0, 3, 1.0)(0))


def test_exp_split_domain():
    law = S.GFMCExpSplit(1.0, 2, 0.1)
    assert law.min_valid_t() == 3.0
    with pytest.raises(S.DomainError):
        law(2.0)
    assert law(1e8) == pytest.approx(law.asymptotic(1e8), rel=1e-3)


def test_pimc_gamma_matches_coupling():
    law = S.PIMCGamma(trotter=2, beta=2.0, r=4, l1=4)
    t = 100.0
    coupling = S.gamma_to_coupling(law(t), 2.0, 2)
    assert 1 / coupling == pytest.approx(S.PIMCLog(4, 4)(t))


def test_gamma_to_coupling_value():
    assert S.gamma_to_coupling(1.0, 2.0, 2) == pytest.approx(0.13617073445591585)
