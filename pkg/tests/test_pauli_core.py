import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftlab.pauli_core import (
    DenseChannel,
    DensityOperator,
    PauliChannel,
    PauliString,
    apply_pauli_channel,
    binary_entropy,
    commutes,
    depolarizing,
    depolarizing_dense,
    partial_trace,
    pauli_mul,
    pauli_twirl,
    symplectic_form,
    total_variation,
    von_neumann_entropy,
)

labels = st.integers(1, 4).flatmap(lambda n: st.tuples(st.text("IXYZ", min_size=n, max_size=n), st.integers(0, 3)))


def ps(pair) -> PauliString:
    label, phase = pair
    p = PauliString.from_label(label)
    return PauliString(p.n, p.x_bits, p.z_bits, phase)


def test_xx_is_identity():
    r = pauli_mul(PauliString.from_label("X"), PauliString.from_label("X"))
    assert r.label == "I" and r.phase_exponent == 0


def test_xz_is_minus_i_y():
    r = pauli_mul(PauliString.from_label("X"), PauliString.from_label("Z"))
    assert r.label == "Y" and r.phase_exponent == 3
    assert np.allclose(r.to_matrix(), np.array([[0, 1], [1, 0]]) @ np.diag([1, -1]))


def test_disjoint_support_product():
    r = pauli_mul(PauliString.from_label("XI"), PauliString.from_label("IZ"))
    assert r.label == "XZ" and r.phase_exponent == 0


def test_commutation_examples():
    assert commutes(PauliString.from_label("X"), PauliString.from_label("X"))
    assert not commutes(PauliString.from_label("X"), PauliString.from_label("Z"))
    assert commutes(PauliString.from_label("XZ"), PauliString.from_label("ZX"))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(*(st.tuples(st.text("IXYZ", min_size=n, max_size=n), st.integers(0, 3)) for _ in range(2)))))
def test_product_matches_matrices(pair):
    a, b = ps(pair[0]), ps(pair[1])
    assert np.allclose(pauli_mul(a, b).to_matrix(), a.to_matrix() @ b.to_matrix())


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(*(st.text("IXYZ", min_size=n, max_size=n) for _ in range(2)))))
def test_symplectic_form_matches_commutator(pair):
    a, b = (PauliString.from_label(x) for x in pair)
    ma, mb = a.to_matrix(), b.to_matrix()
    anti = not np.allclose(ma @ mb, mb @ ma)
    assert symplectic_form(a, b) == int(anti)


@settings(max_examples=100, deadline=None)
@given(labels)
def test_square_is_identity_up_to_phase(pair):
    a = ps(pair)
    r = pauli_mul(a, a)
    assert r.weight == 0


def test_json_round_trip():
    a = PauliString.from_label("-iXYZ")
    assert PauliString.from_json(a.to_json()) == a
    ch = depolarizing(0.3)
    assert PauliChannel.from_json(ch.to_json()) == ch


def test_channel_validation():
    with pytest.raises(ValueError):
        PauliChannel(1, {"I": 0.5})
    with pytest.raises(ValueError):
        PauliChannel(1, {"I": 1.2, "X": -0.2})
    with pytest.raises(ValueError):
        PauliChannel(1, {"XX": 1.0})


def test_depolarizing_on_zero():
    p = 0.3
    out = apply_pauli_channel(depolarizing(p), DensityOperator.from_vector([1, 0]))
    assert np.allclose(out.matrix, np.diag([1 - 2 * p / 3, 2 * p / 3]))


def test_uniform_pauli_channel_fully_mixes():
    ch = PauliChannel(1, {k: 0.25 for k in "IXYZ"})
    rho = DensityOperator.from_vector(np.array([1, 1j]) / math.sqrt(2))
    assert np.allclose(apply_pauli_channel(ch, rho).matrix, np.eye(2) / 2)


def test_identity_channel_keeps_state():
    rho = DensityOperator(2, np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]]))
    assert np.allclose(apply_pauli_channel(PauliChannel.identity(1), rho).matrix, rho.matrix)


def test_entropies():
    assert von_neumann_entropy(DensityOperator.from_vector([1, 0])) == 0
    assert von_neumann_entropy(DensityOperator.maximally_mixed(2)) == pytest.approx(1.0)
    assert von_neumann_entropy(np.diag([0.75, 0.25])) == pytest.approx(0.8112781244591328, abs=1e-12)
    assert binary_entropy(0) == 0 and binary_entropy(0.5) == 1
    assert binary_entropy(0.11) == pytest.approx(0.49991595816452800, abs=1e-12)


@given(st.floats(0, 1))
def test_binary_entropy_symmetric(p):
    assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)


def test_twirl_examples():
    assert pauli_twirl(DenseChannel.identity(2)).vector() == pytest.approx([1, 0, 0, 0])
    assert pauli_twirl(depolarizing(0.2).to_dense()).vector() == pytest.approx([0.8, 0.2 / 3, 0.2 / 3, 0.2 / 3])
    theta = 0.4
    u = np.cos(theta) * np.eye(2) + 1j * np.sin(theta) * np.array([[0, 1], [1, 0]])
    assert pauli_twirl(DenseChannel.unitary(u)).vector() == pytest.approx([np.cos(theta) ** 2, np.sin(theta) ** 2, 0, 0])


def test_completely_depolarizing_dense_matches_pauli_weights():
    q = 0.2
    assert pauli_twirl(depolarizing_dense(q)).vector() == pytest.approx([1 - 3 * q / 4, q / 4, q / 4, q / 4])


def test_dense_channel_trace_preservation_checked():
    with pytest.raises(ValueError):
        DenseChannel(2, 2, (0.5 * np.eye(2),))


def test_complementary_entropy_exchange():
    ch = depolarizing(0.1).to_dense()
    rho = DensityOperator(2, np.diag([0.6, 0.4]))
    v = ch.isometry()
    psi = v @ rho.matrix @ v.conj().T
    dims = [2, len(ch.kraus_ops)]
    b = partial_trace(psi, dims, [0])
    e = partial_trace(psi, dims, [1])
    assert np.allclose(b, ch.apply_matrix(rho.matrix))
    assert np.allclose(e, ch.complementary().apply_matrix(rho.matrix))


def test_total_variation():
    assert total_variation(depolarizing(0.1), depolarizing(0.1)) == 0
    assert total_variation(depolarizing(0.0), depolarizing(0.3)) == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=4, max_size=4), st.lists(st.floats(0.01, 1), min_size=4, max_size=4))
def test_compose_matches_dense(a, b):
    ca = PauliChannel.from_vector(1, np.array(a) / sum(a))
    cb = PauliChannel.from_vector(1, np.array(b) / sum(b))
    rho = DensityOperator.from_vector(np.array([0.6, 0.8j]))
    direct = apply_pauli_channel(cb, apply_pauli_channel(ca, rho))
    assert np.allclose(apply_pauli_channel(ca.compose(cb), rho).matrix, direct.matrix)
