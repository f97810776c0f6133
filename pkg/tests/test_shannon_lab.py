import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftlab import shannon_lab as sl
from ftlab.circuit_model import BudgetError
from ftlab.experiments import named_cq_channel
from ftlab.pauli_core import DensityOperator

DIST = (0.9, 0.05, 0.05)


def brute_typical(dist, n, delta):
    h = -sum(p * math.log2(p) for p in dist if p > 0)
    out = []
    for seq in itertools.product(range(len(dist)), repeat=n):
        prob = math.prod(dist[s] for s in seq)
        if prob > 0 and abs(-math.log2(prob) / n - h) <= delta:
            out.append((seq, prob))
    return out


@pytest.mark.parametrize("n,delta", [(3, 0.1), (5, 0.3), (6, 0.5)])
def test_typical_set_matches_brute_force(n, delta):
    spec = sl.TypicalSetSpec(DIST, n, delta)
    want = brute_typical(DIST, n, delta)
    got = sl.typical_set(spec)
    assert [tuple(r) for r in got.tolist()] == [s for s, _ in want]
    assert sl.exact_typical_probability(spec) == pytest.approx(sum(p for _, p in want))
    assert got.shape[0] <= 2 ** (n * (spec.entropy + delta))
    assert sl.check_equipartition(spec)


def test_monte_carlo_typicality_matches_exact():
    spec = sl.TypicalSetSpec(DIST, 6, 0.4)
    chk = sl.typicality_probability(spec, 50000, seed=2)
    assert abs(chk.empirical - sl.exact_typical_probability(spec)) < 4 * chk.se


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(0.05, 1.0), min_size=2, max_size=3),
    st.integers(2, 7),
    st.floats(0.05, 1.0),
)
def test_two_sided_floor_always_holds(weights, n, delta):
    dist = np.array(weights) / sum(weights)
    spec = sl.TypicalSetSpec(tuple(dist), n, delta)
    exact = sl.exact_typical_probability(spec)
    assert exact >= sl.hoeffding_floor(n, delta, spec.p_min, two_sided=True) - 1e-12


def test_one_sided_floor_can_fail_at_small_delta():
    spec = sl.TypicalSetSpec(DIST, 4, 0.05)
    chk = sl.typicality_probability(spec, 20000, seed=0)
    assert chk.empirical >= chk.floor_two_sided - 4 * chk.se
    assert chk.floor > sl.exact_typical_probability(spec)


def test_hoeffding_floor_degenerate():
    assert sl.hoeffding_floor(10, 0.1, 1.0) == 1.0
    assert sl.hoeffding_floor(10, 0.1, 0.5, two_sided=True) < sl.hoeffding_floor(10, 0.1, 0.5)


def test_conditional_entropy_and_sets():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    assert sl.conditional_entropy(joint) == pytest.approx(-(0.8 * math.log2(0.8) + 0.2 * math.log2(0.2)))
    xn = [0, 1, 0, 0]
    t = sl.conditional_typical_set(joint, xn, 0.3)
    assert t.shape[0] <= sl.conditional_size_bound(joint, 4, 0.3)
    for y in t:
        prob = math.prod(0.8 if a == b else 0.2 for a, b in zip(xn, y))
        assert abs(-math.log2(prob) / 4 - sl.conditional_entropy(joint)) <= 0.3 + 1e-12
    assert sl.r_min(joint) == pytest.approx(0.2)


def test_conditional_monte_carlo_matches_exact():
    joint = np.array([[0.4, 0.1], [0.1, 0.4]])
    exact = sl.exact_conditional_probability(joint, 6, 0.3)
    chk = sl.conditional_probability(joint, 6, 0.3, 40000, seed=1)
    assert abs(chk.empirical - exact) < 4 * chk.se
    assert exact >= chk.floor_two_sided


def test_zero_probability_input_has_empty_conditional_set():
    joint = np.array([[0.5, 0.5], [0.0, 0.0]])
    assert sl.conditional_typical_set(joint, [1, 0], 0.5).shape[0] == 0


def test_quantum_typical_projector_properties():
    rho = DensityOperator(2, np.array([[0.75, 0.25], [0.25, 0.25]]))
    n, delta = 5, 0.3
    proj = sl.quantum_typical_projector(rho, n, delta)
    pi = proj.matrix()
    big = sl.tensor_power(rho.matrix, n)
    assert np.allclose(pi @ pi, pi)
    assert np.allclose(pi @ big, big @ pi)
    lam = np.linalg.eigvalsh(rho.matrix)
    s = -sum(l * math.log2(l) for l in lam)
    assert proj.rank <= 2 ** (n * (s + delta))
    assert sl.typical_operator_gap(rho, n, delta) > -1e-12
    chk = sl.quantum_typical_probability(rho, n, delta)
    classical = sl.exact_typical_probability(sl.TypicalSetSpec(tuple(np.clip(lam, 0, 1) / lam.sum()), n, delta))
    assert chk.empirical == pytest.approx(classical, abs=1e-10)


def test_conditional_quantum_probability_matches_classical_joint():
    cq = named_cq_channel("zero_plus")
    mixed = [DensityOperator(2, 0.9 * s.matrix + 0.05 * np.eye(2)) for s in cq.outputs]
    chk = sl.conditional_quantum_probability((0.5, 0.5), mixed, 4, 0.4)
    direct = 0.0
    for xn in itertools.product(range(2), repeat=4):
        proj = sl.conditional_typical_projector((0.5, 0.5), mixed, list(xn), 0.4).matrix()
        direct += 0.5**4 * float(np.real(np.trace(proj @ sl.product_state(mixed, xn))))
    assert chk.empirical == pytest.approx(direct, abs=1e-10)


def test_pgm_on_two_pure_states():
    a = np.array([1.0, 0.0])
    b = np.array([1.0, 1.0]) / math.sqrt(2)
    ops = [np.outer(v, v) for v in (a, b)]
    povm, comp, _ = sl.pgm_povm(ops)
    succ = sl.pgm_success(povm, ops)
    err = sl.two_state_pgm_error(abs(a @ b))
    assert succ == pytest.approx([1 - err, 1 - err])
    assert np.allclose(sum(povm) + comp, np.eye(2))
    assert 1 - err == pytest.approx(sl.helstrom_success(ops[0], ops[1]))


def test_pgm_rejects_non_positive():
    with pytest.raises(ValueError):
        sl.pgm_povm([np.diag([1.0, -1.0])])


def test_codebook_is_complete():
    book = sl.codebook(named_cq_channel("zero_plus"), (0.5, 0.5), 3, 2, 0.5, seed=4)
    assert book.completeness_error() < 1e-9


def test_orthogonal_packing_is_perfect_with_distinct_words():
    res = sl.packing_experiment(named_cq_channel("orthogonal"), (0.5, 0.5), 3, 4, 0.5, 10, seed=0, distinct=True)
    assert res.mean_success == pytest.approx(1.0)
    assert res.chi == pytest.approx(1.0)


def test_packing_success_exceeds_floor():
    res = sl.packing_experiment(named_cq_channel("zero_plus"), (0.5, 0.5), 4, 2, 0.3, 20, seed=1)
    assert res.mean_success >= res.thm41_bound - 4 * res.se
    assert 0 < res.mean_success <= 1


def test_packing_budget():
    with pytest.raises(BudgetError):
        sl.packing_experiment(named_cq_channel("zero_plus"), (0.5, 0.5), 11, 2, 0.3, 1)
