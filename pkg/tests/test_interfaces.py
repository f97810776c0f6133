from fractions import Fraction

import numpy as np
import pytest

from ftlab.circuit_model import FaultPattern, concatenate, schedule
from ftlab.interfaces import (
    build_dec_1_0,
    build_enc_0_1,
    build_interface,
    dec_is_correct,
    enc_is_correct,
    estimate_failure,
    failure_polynomial,
    wilson_interval,
)
from ftlab.stabilizer_sim import StabilizerTableau, run_tableau
from ftlab.steane_concat import ideal_encoder_circuit


def bell(n: int) -> StabilizerTableau:
    t = StabilizerTableau.from_labels(["+Z"] * n)
    t.h(0)
    t.cnot(0, n - 1)
    return t


@pytest.fixture(scope="module")
def pair():
    return build_interface(1)


def test_encoder_matches_ideal_encoder():
    ref = run_tableau(schedule(ideal_encoder_circuit(1)), bell(8)).state
    enc = build_enc_0_1()
    for seed in range(10):
        assert run_tableau(enc, bell(2), seed=seed).state == ref


def test_decoder_inverts_ideal_encoder():
    c = concatenate(schedule(ideal_encoder_circuit(1)), build_dec_1_0())
    ref = bell(2).stabilizer_group([0, 1])
    for seed in range(10):
        assert run_tableau(c, bell(8), seed=seed).state == ref


def test_round_trip_is_identity():
    c = concatenate(build_enc_0_1(), build_dec_1_0())
    ref = bell(2).stabilizer_group([0, 1])
    for seed in range(10):
        assert run_tableau(c, bell(2), seed=seed).state == ref


def test_no_faults_means_correct(pair):
    assert enc_is_correct(FaultPattern(pair.enc.n_locations))
    assert dec_is_correct(FaultPattern(pair.dec_ec.n_locations))


@pytest.mark.parametrize("which,failing", [("enc", 95), ("dec", 61)])
def test_single_fault_census_matches_linear_coefficient(pair, which, failing):
    chain = pair.enc if which == "enc" else pair.dec_ec
    check = enc_is_correct if which == "enc" else dec_is_correct
    c = chain.circuit()
    bad = sum(
        not check(FaultPattern.from_slot_faults(c, [s], [code]))
        for s in range(chain.n_slots)
        for code in (1, 2, 3)
    )
    assert bad == failing
    assert Fraction(bad, 3) == failure_polynomial(pair, which, 1)[1]


def test_zero_noise_failure_is_zero():
    est = estimate_failure(1, 0.0, 100, exact=False)
    assert est.p_fail_enc == 0 and est.p_fail_dec == 0


def test_exact_linear_coefficients(pair):
    assert failure_polynomial(pair, "enc", 1) == (Fraction(0), Fraction(95, 3))
    assert failure_polynomial(pair, "dec", 1) == (Fraction(0), Fraction(61, 3))


@pytest.mark.slow
def test_exact_quadratic_coefficients(pair):
    assert failure_polynomial(pair, "enc", 2)[2] == Fraction(29068, 3)
    assert failure_polynomial(pair, "dec", 2)[2] == Fraction(37817, 3)


def test_monte_carlo_tracks_linear_term():
    p = 2e-4
    est = estimate_failure(1, p, 40000, seed=3, exact=False)
    for rate, se, c1, c2 in ((est.p_fail_enc, est.se_enc, 95 / 3, 29068 / 3), (est.p_fail_dec, est.se_dec, 61 / 3, 37817 / 3)):
        assert abs(rate - (c1 * p + c2 * p * p)) < 4 * se


def test_estimate_is_deterministic():
    a = estimate_failure(1, 1e-3, 2000, seed=5, exact=False)
    b = estimate_failure(1, 1e-3, 2000, seed=5, exact=False)
    assert (a.p_fail_enc, a.p_fail_dec) == (b.p_fail_enc, b.p_fail_dec)


def test_wilson_interval_contains_rate():
    lo, hi = wilson_interval(10, 1000)
    assert lo < 0.01 < hi
    assert wilson_interval(0, 100)[0] == 0.0
