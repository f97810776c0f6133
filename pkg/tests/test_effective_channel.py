from fractions import Fraction

import numpy as np
import pytest

from ftlab.effective_channel import distance_to_ideal, effective_polynomial, envelope_constant, extract, extract_exact
from ftlab.pauli_core import PauliChannel, depolarizing

IDENTITY = PauliChannel.from_vector(1, [1, 0, 0, 0])


@pytest.fixture(scope="module")
def linear():
    return effective_polynomial(1, 1)


def test_zero_noise_reproduces_physical_channel():
    for t in (IDENTITY, depolarizing(0.2), PauliChannel.from_vector(1, [0.7, 0.1, 0.15, 0.05])):
        est = extract(t, 1, 0.0, 3000, seed=1)
        assert est.q_fail == 0
        assert np.array_equal(est.composed.vector(), t.vector())
        exact = extract_exact(t, 0.0, max_weight=1)
        assert np.allclose(exact.composed.vector(), t.vector())


def test_identity_round_trip_is_exact_at_zero_noise():
    est = extract(IDENTITY, 1, 0.0, 2000)
    assert est.composed.vector()[0] == 1.0


def test_net_linear_coefficient_is_sum_of_interfaces(linear):
    net_fail = -linear["net"][0][1]
    assert net_fail == 52
    assert net_fail <= Fraction(95, 3) + Fraction(61, 3)
    assert all(linear[k][0][0] == 1 for k in ("dec", "enc", "net"))
    for k in ("dec", "enc", "net"):
        assert sum(row[1] for row in linear[k]) == 0


def test_depolarizing_identity_weight_bound():
    p, q = 1e-3, 0.1
    est = extract_exact(depolarizing(q), p, max_weight=1)
    assert est.composed.vector()[0] >= (1 - q) * (1 - 52 * p) - 1e-12


def test_mixture_consistency():
    trials = 6000
    est = extract(depolarizing(0.1), 1, 2e-3, trials, seed=7)
    assert est.consistency_gap() < 1e-12
    exact = extract_exact(depolarizing(0.1), 2e-3, max_weight=1)
    assert exact.consistency_gap() < 1e-12


def test_monte_carlo_agrees_with_exact_expansion():
    p = 2e-4
    est = extract(IDENTITY, 1, p, 40000, seed=11)
    exact = extract_exact(IDENTITY, p, max_weight=1)
    assert abs(est.q_fail - exact.q_fail) < 4 * est.q_fail_se + 1e-3 * exact.q_fail + 100 * p * p


def test_distance_within_linear_budget():
    est = extract(IDENTITY, 1, 1e-3, 20000, seed=2)
    report = distance_to_ideal(est)
    assert report.within_budget
    assert report.diamond_equiv == pytest.approx(2 * report.tv)
    assert envelope_constant() == pytest.approx(95 / 3)


def test_rejects_multi_qubit_channel():
    with pytest.raises(ValueError):
        extract(PauliChannel.from_vector(2, np.full(16, 1 / 16)), 1, 0.0, 10)


def test_exact_split_agrees_with_raw_frequencies():
    trials = 20000
    t = depolarizing(0.1)
    est = extract(t, 1, 1e-3, trials, seed=5)
    raw = (1 - est.q_fail) * t.vector() + est.q_fail * est.subtraction_residual
    raw_se = np.sqrt(raw * (1 - raw) / trials)
    assert np.all(np.abs(raw - est.composed.vector()) < 4 * raw_se + 1e-12)
