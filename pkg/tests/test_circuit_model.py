from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ftlab.circuit_model import (
    BudgetError,
    CircuitBuilder,
    FaultPattern,
    NoiseModel,
    compose_parallel,
    compose_serial,
    enumerate_patterns_up_to_weight,
    enumerate_slot_faults,
    fault_pattern_probability,
    from_text,
    pattern_count,
    sample_fault_pattern,
    sample_slot_faults,
    schedule,
    slot_count,
    to_text,
    weight_polynomial,
)


def one_gate(kind: str):
    b = CircuitBuilder()
    if kind == "cnot":
        q0, q1 = b.wires(2)
        b.cnot(q0, q1)
        return b.build([q0, q1], [q0, q1])
    q = b.wire()
    getattr(b, kind)(q)
    return b.build([q], [q])


def waits_and_cnots():
    b = CircuitBuilder()
    q0, q1, q2 = b.wires(3)
    b.wait(q0)
    b.wait(q1)
    b.wait(q2)
    b.cnot(q0, q1)
    b.cnot(q1, q2)
    return b.build([q0, q1, q2], [q0, q1, q2])


def test_slot_counts():
    assert slot_count(one_gate("h")) == 1
    assert slot_count(one_gate("cnot")) == 2
    assert slot_count(waits_and_cnots()) == 7


def test_pattern_probabilities():
    c = waits_and_cnots()
    nm = NoiseModel(0.01)
    n = slot_count(c)
    assert fault_pattern_probability(c, FaultPattern(len(c.locations)), nm) == pytest.approx(0.99**n)
    assert fault_pattern_probability(c, FaultPattern(len(c.locations), {0: "X"}), nm) == pytest.approx(0.99 ** (n - 1) * 0.01 / 3)
    assert fault_pattern_probability(c, FaultPattern(len(c.locations), {3: "XZ"}), nm) == pytest.approx(0.99 ** (n - 2) * (0.01 / 3) ** 2)


def test_noise_model_range():
    with pytest.raises(ValueError):
        NoiseModel(1.5)


def test_sampling_extremes():
    c = waits_and_cnots()
    assert sample_fault_pattern(c, NoiseModel(0.0), 3).weight() == 0
    f = sample_fault_pattern(c, NoiseModel(1.0), 3)
    assert all("I" not in lab for lab in f.assignments.values())
    assert len(f.assignments) == len(c.locations)


def test_slot_fault_frequency():
    rng = np.random.default_rng(11)
    trials, n, p = 100000, 5, 0.1
    trial, slot, code = sample_slot_faults(n, p, trials, rng)
    freq = np.bincount(slot, minlength=n) / trials
    sigma = np.sqrt(p * (1 - p) / trials)
    assert np.all(np.abs(freq - p) < 4 * sigma)
    assert set(np.unique(code)) <= {1, 2, 3}


def test_parallel_marginals_independent():
    # sampled faults on a two-factor circuit split into independent factor marginals
    a, b = one_gate("h"), one_gate("wait")
    c = compose_parallel(a, b)
    rng = np.random.default_rng(5)
    trials, p = 40000, 0.3
    trial, slot, code = sample_slot_faults(slot_count(c), p, trials, rng)
    state = np.zeros((trials, 2), dtype=np.int64)
    state[trial, slot] = code
    joint = np.bincount(state[:, 0] * 4 + state[:, 1], minlength=16)
    pa = np.bincount(state[:, 0], minlength=4) / trials
    pb = np.bincount(state[:, 1], minlength=4) / trials
    expected = np.outer(pa, pb).reshape(-1) * trials
    _, pval = chisquare(joint, expected, ddof=6)
    assert pval > 1e-4


def test_enumeration_counts():
    c = waits_and_cnots()
    n = slot_count(c)
    counts = {}
    for f, _ in enumerate_patterns_up_to_weight(c, 2):
        w = sum(len(lab.replace("I", "")) for lab in f.assignments.values())
        counts[w] = counts.get(w, 0) + 1
    assert counts[0] == 1
    assert counts[1] == 3 * n
    assert counts[2] == 9 * n * (n - 1) // 2
    assert pattern_count(n, 2) == 1 + 3 * n + 9 * n * (n - 1) // 2


def test_enumeration_budget():
    with pytest.raises(BudgetError):
        enumerate_slot_faults(10**5, 2)


def test_weight_polynomial_sums_to_one():
    # sum over all weights of count * P(pattern) must be 1 identically
    n = 4
    total = [0] * (n + 1)
    for k in range(n + 1):
        poly = weight_polynomial(k, n, n)
        for d, c in enumerate(poly):
            total[d] += comb(n, k) * 3**k * c
    assert total[0] == 1 and all(t == 0 for t in total[1:])


def test_serial_composition_adds_slots():
    g = waits_and_cnots()
    b = CircuitBuilder()
    ws = b.wires(3)
    for w in ws:
        b.wait(w)
    idw = b.build(ws, ws)
    assert slot_count(compose_serial(idw, g)) == slot_count(g) + 3
    par = compose_parallel(one_gate("h"), one_gate("h"))
    assert par.n_in == 2 and slot_count(par) == 2


def test_text_round_trip():
    c = schedule(waits_and_cnots())
    assert from_text(to_text(c)) == c


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["h", "wait", "cnot"]), st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=12))
def test_schedule_idempotent_and_slot_invariant(ops):
    b = CircuitBuilder()
    ws = b.wires(3)
    for kind, a, t in ops:
        if kind == "cnot":
            if a == t:
                continue
            b.cnot(ws[a], ws[t])
        else:
            getattr(b, kind)(ws[a])
    c = b.build(ws, ws)
    s = schedule(c)
    assert schedule(s) == s
    gates = lambda d: sorted(loc.kind for loc in d.locations if loc.kind != "wait")
    assert gates(s) == gates(c)
    assert slot_count(s) >= slot_count(c)
    assert from_text(to_text(s)) == s


def test_fault_pattern_json():
    f = FaultPattern(5, {1: "X", 3: "YZ"})
    assert FaultPattern.from_json(f.to_json()) == f
