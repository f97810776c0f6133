import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftlab import capacity_bounds as cb
from ftlab.experiments import named_cq_channel, named_quantum_channel
from ftlab.pauli_core import DensityOperator

mp.mp.dps = 40


def mp_h2(x):
    x = mp.mpf(x)
    if x in (0, 1):
        return mp.mpf(0)
    return -x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2)


def test_alpha0_value():
    oracle = mp.findroot(lambda a: mp_h2(2 * a) - mp.mpf(1) / 2, 0.055)
    assert cb.alpha0() == pytest.approx(float(oracle), abs=1e-12)
    assert cb.alpha0() == pytest.approx(0.05501393221917977, abs=1e-12)


def test_hashing_root_value():
    oracle = mp.findroot(lambda q: 1 - mp_h2(q) - q * mp.log(3, 2), 0.19)
    assert cb.hashing_root() == pytest.approx(float(oracle), abs=1e-12)
    assert cb.hashing_root() == pytest.approx(0.18928962491523176, abs=1e-12)


@pytest.mark.parametrize("q,frozen", [(0.05, 0.634354917847986), (0.1, 0.37250815633860316), (0.15, 0.15241532017542615)])
def test_coherent_information_of_depolarizing(q, frozen):
    t = named_quantum_channel("depolarizing", q)
    half = DensityOperator(2, np.eye(2) / 2)
    assert cb.coherent_information(t, half) == pytest.approx(frozen, abs=1e-10)
    assert cb.coherent_information_complementary(t, half) == pytest.approx(frozen, abs=1e-10)
    oracle = 1 - mp_h2(q) - q * mp.log(3, 2)
    assert cb.hashing_bound(q) == pytest.approx(float(oracle), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.3), st.floats(0.01, 0.99))
def test_two_routes_to_coherent_information(q, a):
    t = named_quantum_channel("amplitude_damping", q)
    rho = DensityOperator(2, np.diag([a, 1 - a]))
    assert cb.coherent_information(t, rho) == pytest.approx(cb.coherent_information_complementary(t, rho), abs=1e-9)


def test_cq_holevo_capacity_zero_plus():
    res = cb.holevo_capacity_cq(named_cq_channel("zero_plus"), tol=1e-10)
    oracle = mp_h2((1 + 1 / mp.sqrt(2)) / 2)
    assert res.converged
    assert res.value == pytest.approx(float(oracle), abs=1e-8)
    assert res.value == pytest.approx(0.6008760366928561, abs=1e-8)
    assert res.upper >= res.value


def test_cq_holevo_capacity_limits():
    assert cb.holevo_capacity_cq(named_cq_channel("orthogonal")).value == pytest.approx(1.0, abs=1e-6)
    assert cb.holevo_capacity_cq(named_cq_channel("trivial")).value == pytest.approx(0.0, abs=1e-9)


def test_max_coherent_information_amplitude_damping():
    res = cb.max_coherent_information(named_quantum_channel("amplitude_damping", 0.2), restarts=4, seed=1)
    g = mp.mpf("0.2")
    oracle = max(mp_h2((1 - g) * a) - mp_h2(g * a) for a in mp.linspace(0, 1, 20001))
    assert res.value == pytest.approx(float(oracle), abs=1e-5)
    assert res.value == pytest.approx(0.506215, abs=1e-5)


def test_relative_entropy_basics():
    rho = np.diag([0.7, 0.3])
    assert cb.relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-12)
    assert math.isinf(cb.relative_entropy(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    sigma = np.eye(2) / 2
    assert cb.relative_entropy(rho, sigma) == pytest.approx(float(1 - mp_h2(0.7)), abs=1e-12)


def test_continuity_penalty_value():
    oracle = 2 * mp.mpf("0.1") * mp.log(2, 2) + mp.mpf("1.1") * mp_h2(mp.mpf("0.1") / mp.mpf("1.1"))
    assert cb.continuity_penalty(0.1, 2) == pytest.approx(float(oracle), abs=1e-12)
    assert cb.continuity_penalty(0.1, 2) == pytest.approx(0.6834466856136646, abs=1e-12)


def test_bounds_reduce_to_capacity_at_zero_noise():
    assert cb.ft_cq_lower_bound(0.6, 2, 10.0, 0.0).value == pytest.approx(0.6)
    assert cb.sep_avp_quantum_bound(0.4, 0.0, 2, C=1.0, p0=0.1).value == pytest.approx(0.4)
    assert cb.avp_classical_lower_bound(0.9, 1, 0.0, 2).value == pytest.approx(0.9)
    assert cb.avp_quantum_lower_bound(0.8, 2, 0.0, 2, 2).value == pytest.approx(0.4)
    assert cb.good_code_bound(0.0, 0.0, 10.0).value == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1e-3), st.floats(1e-4, 1e-3))
def test_ft_cq_bound_monotone_in_p(p, dp):
    assert cb.ft_cq_lower_bound(1.0, 2, 50.0, p + dp).value <= cb.ft_cq_lower_bound(1.0, 2, 50.0, p).value + 1e-12


def test_ft_cq_bound_matches_independent_formula():
    C, d, c, p = 0.9, 4, 30.0, 1e-3
    j = 2
    x = mp.mpf(2) * c * p * j
    oracle = C - 2 * c * p * j * j - 2 * (1 + x) * mp_h2(x / (1 + x))
    assert cb.ft_cq_lower_bound(C, d, c, p).value == pytest.approx(float(oracle), abs=1e-12)


def test_avp_quantum_matches_independent_formula():
    icoh, k, p, dA, dB = 0.6, 1, 0.01, 2, 2
    pk = mp.mpf(p) ** k
    r = mp.sqrt(pk * (1 - pk))
    eta = (2 * pk + 4 * r) * mp.log(dA, 2) + mp_h2(2 * pk) + mp_h2(2 * r)
    inner = min(mp.mpf(p) / dA, mp.mpf(p) ** 2 / dB)
    oracle = icoh / k - eta - 3 * mp.sqrt(k * p * mp.log(dB, 2)) * abs(mp.log(inner, 2)) - 4 * p * mp.log(dB, 2) - (1 + p) * mp_h2(p / (1 + mp.mpf(p)))
    rep = cb.avp_quantum_lower_bound(icoh, k, p, dA, dB)
    assert rep.value == pytest.approx(float(oracle), abs=1e-10)
    assert rep.valid


def test_quantum_avp_validity_limit():
    limit = (2 - math.sqrt(3)) / 4
    assert 2 * math.sqrt(limit * (1 - limit)) == pytest.approx(0.5)
    assert cb.avp_quantum_lower_bound(0.5, 1, limit * 0.99, 2, 2).valid
    rep = cb.avp_quantum_lower_bound(0.5, 1, limit * 1.01, 2, 2)
    assert not rep.valid and rep.violations


def test_eta_vanishes_at_zero():
    assert cb.eta(0.0, 2) == 0.0
    with pytest.raises(ValueError):
        cb.eta(-0.1, 2)


def test_good_code_validity_uses_alpha0():
    a0 = cb.alpha0()
    assert cb.good_code_bound(0.0, a0 * 0.99, 10.0).valid
    assert not cb.good_code_bound(0.0, a0 * 1.01, 10.0).valid
    assert cb.good_code_bound(0.0, a0, 10.0).value == pytest.approx(0.0, abs=1e-9)


def test_postselection_factors():
    f = cb.postselection_factor(1000, 0.01, 0.02, 2)
    assert f.log2_growth == pytest.approx(30.0)
    assert f.tail == pytest.approx(math.exp(-1000 * 0.0004 / 0.03), rel=1e-12)
    hit, se = cb.chernoff_tail_mc(1000, 0.01, 0.02, 20000, seed=3)
    assert hit <= f.tail + 4 * se
    huge = cb.postselection_factor(10**6, 0.1, 0.1, 2)
    assert math.isinf(huge.growth) and huge.tail == 0.0


def test_good_code_scheme_error_tail():
    rep = cb.good_code_scheme_error(1000, 0.01, 1e-4, 0.01, 10.0, 0.05)
    x = 4 * 10.0 * 1e-4 + 0.01
    assert rep.value == pytest.approx(3 * math.exp(-1000 * 1e-4 / (3 * x)))
    assert rep.valid


def test_ft_capacity_bound_effective_strength():
    rep = cb.ft_capacity_lower_bound("classical", 1.0, 1, 1e-4, 10.0, 2, 2)
    assert rep.params["p_eff"] == pytest.approx(2 * 2 * 10.0 * 1e-4)
    assert rep.value == pytest.approx(cb.avp_classical_lower_bound(1.0, 1, 4e-3, 2).value)
    with pytest.raises(ValueError):
        cb.ft_capacity_lower_bound("other", 1.0, 1, 1e-4, 10.0, 2, 2)


def test_threshold_from_grid_returns_largest_good_point():
    grid = [1e-4, 1e-3, 1e-2, 1e-1]
    assert cb.threshold_from_grid(lambda p: 1 - p, 1.0, 5e-3, grid) == 1e-3
    assert cb.threshold_from_grid(lambda p: -1.0, 1.0, 0.1, grid) is None


def test_decoupling_error_decreases_with_blocklength():
    vals = [cb.decoupling_error(m, 0.1, 0.05, 0.05, 0.6) for m in (100, 1000, 10000, 100000)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    rep = cb.decoupling_fidelity_bound(10, 0.1, 0.05, 0.05, 0.6)
    assert 0.0 <= rep.value <= 1.0
    with pytest.raises(ValueError):
        cb.decoupling_error(10, 0.1, 0.05, 1.0, 0.6)


def test_decoupling_mu_min_for_depolarizing():
    t = named_quantum_channel("depolarizing", 0.1)
    mu = cb.decoupling_mu_min(t, DensityOperator(2, np.eye(2) / 2))
    assert 0 < mu <= 0.5


def test_ensemble_entropy_bound():
    e = cb.Ensemble((0.5, 0.5), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    assert cb.holevo_chi(e) == pytest.approx(1.0)
    assert cb.holevo_chi(e) <= cb.ensemble_entropy_bound(e) + 1e-12
    with pytest.raises(ValueError):
        cb.Ensemble((0.5, 0.6), (np.eye(2) / 2, np.eye(2) / 2))
