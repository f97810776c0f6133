import itertools

import numpy as np
import pytest

from ftlab.circuit_model import CircuitBuilder, CircuitDiagram, FaultPattern, compose_parallel, compose_serial, sample_slot_faults, schedule
from ftlab.pauli_core import PauliString, commutes, pauli_mul
from ftlab.stabilizer_sim import StabilizerTableau, frame_program, run_tableau
from ftlab.steane_concat import (
    HAMMING,
    decode_block_frames,
    decode_pauli,
    ec_circuit,
    exrec_good,
    exrec_partition,
    fit_exponent,
    fit_p0,
    gadget_set,
    goodness_model,
    ideal_decoder_circuit,
    ideal_encoder_circuit,
    implement,
    steane_spec,
    verify_transformation,
)

EIGEN = ["+Z", "-Z", "+X", "-X", "+Y", "-Y"]


def in_stabilizer(e: PauliString, gens) -> bool:
    rows = np.array([list(g.x_bits) + list(g.z_bits) for g in gens], dtype=np.uint8)
    v = np.array(list(e.x_bits) + list(e.z_bits), dtype=np.uint8)
    def rank(m):
        m = m.copy()
        r = 0
        for c in range(m.shape[1]):
            piv = [i for i in range(r, m.shape[0]) if m[i, c]]
            if not piv:
                continue
            m[[r, piv[0]]] = m[[piv[0], r]]
            for i in range(m.shape[0]):
                if i != r and m[i, c]:
                    m[i] ^= m[r]
            r += 1
        return r
    return rank(np.vstack([rows, v])) == rank(rows)


def test_generators_match_hamming_rows():
    gens = steane_spec().generators
    want = ["".join(letter if b else "I" for b in row) for letter in "XZ" for row in HAMMING]
    assert [g.label for g in gens] == want
    assert all(commutes(a, b) for a, b in itertools.combinations(gens, 2))


def test_distance_is_three():
    spec = steane_spec()
    gens = spec.generators
    min_logical = None
    for w in (1, 2, 3):
        for qubits in itertools.combinations(range(7), w):
            for letters in itertools.product("XYZ", repeat=w):
                label = ["I"] * 7
                for q, l in zip(qubits, letters):
                    label[q] = l
                e = PauliString.from_label("".join(label))
                if all(commutes(e, g) for g in gens) and not in_stabilizer(e, gens):
                    min_logical = w
                    break
            if min_logical:
                break
        if min_logical:
            break
    assert min_logical == 3


def test_weight_one_syndromes_unique_and_corrected():
    spec = steane_spec()
    seen = set()
    for q in range(7):
        for letter in "XYZ":
            e = PauliString.single(7, q, letter)
            s = spec.syndrome(e)
            assert s not in seen
            seen.add(s)
            residual = pauli_mul(spec.correction(s), e)
            assert residual.weight == 0
    assert len(seen) == 21
    assert spec.correction((0,) * 6).weight == 0


def test_encoder_decoder_inverse_pair():
    enc, dec = ideal_encoder_circuit(1), ideal_decoder_circuit(1)
    for label in EIGEN:
        for s in [(0,) * 6, (1, 0, 1, 0, 0, 1)]:
            labels = [label] + ["-Z" if b else "+Z" for b in s]
            rec = run_tableau(compose_serial(enc, dec), labels)
            assert rec.state == StabilizerTableau.from_labels(labels).stabilizer_group(range(7))


def test_decoder_reads_error_syndrome():
    spec = steane_spec()
    b = CircuitBuilder()
    d = b.wire()
    syn = b.wires(6)
    enc = ideal_encoder_circuit(1)
    e = PauliString.single(7, 0, "X")
    bb = CircuitBuilder()
    ws = bb.wires(7)
    bb.pauli("X", ws[0])
    err = bb.build(ws, ws)
    c = compose_serial(compose_serial(enc, err), ideal_decoder_circuit(1))
    rec = run_tableau(c, ["+Z"] * 7)
    s = spec.syndrome(e)
    want = ["+Z"] + ["-Z" if v else "+Z" for v in s]
    assert rec.state == StabilizerTableau.from_labels(want).stabilizer_group(range(7))


def _permutation(order):
    b = CircuitBuilder()
    ws = b.wires(len(order))
    return b.build(ws, [ws[i] for i in order])


def _identity(n):
    b = CircuitBuilder()
    ws = b.wires(n)
    return b.build(ws, ws)


def test_level_two_encoder_factorization_inverts_decoder():
    # Enc_2 built as (Enc_1 on the data) followed by Enc_1 on each of the 7 outer wires
    outer = compose_parallel(ideal_encoder_circuit(1), _identity(42))
    order = []
    for j in range(7):
        order.append(j)
        order.extend(7 + 6 * j + k for k in range(6))
    inner = ideal_encoder_circuit(1)
    for _ in range(6):
        inner = compose_parallel(inner, ideal_encoder_circuit(1))
    enc2 = compose_serial(compose_serial(outer, _permutation(order)), inner)
    rng = np.random.default_rng(4)
    for trial in range(4):
        syn = rng.integers(0, 2, 48)
        t = StabilizerTableau.from_labels(["+Z"] + ["-Z" if v else "+Z" for v in syn] + ["+Z"])
        t.h(0)
        t.cnot(0, 49)
        rec = run_tableau(compose_serial(enc2, ideal_decoder_circuit(2)), t)
        # decoder output order: data, outer syndrome, then inner syndromes block by block
        want = StabilizerTableau.from_labels(["+Z"] + ["-Z" if v else "+Z" for v in syn] + ["+Z"])
        want.h(0)
        want.cnot(0, 49)
        assert rec.state == want.stabilizer_group(range(50))


def test_level_two_round_trip():
    enc, dec = ideal_encoder_circuit(2), ideal_decoder_circuit(2)
    for label in ("+X", "-Y"):
        rec = run_tableau(compose_serial(enc, dec), [label] + ["+Z"] * 48)
        assert rec.state == StabilizerTableau.from_labels([label] + ["+Z"] * 48).stabilizer_group(range(49))


def _ec_sandwich(err_qubit: int, letter: str):
    bb = CircuitBuilder()
    ws = bb.wires(7)
    bb.pauli(letter, ws[err_qubit])
    err = bb.build(ws, ws)
    return compose_serial(compose_serial(compose_serial(ideal_encoder_circuit(1), err), ec_circuit(1)), ideal_decoder_circuit(1))


def test_ec_corrects_every_weight_one_error():
    for q in range(7):
        for letter in "XYZ":
            c = _ec_sandwich(q, letter)
            for label in ("+Z", "-Z", "+X"):
                rec = run_tableau(c, [label] + ["+Z"] * 6, seed=q)
                assert rec.state == StabilizerTableau.from_labels([label] + ["+Z"] * 6).stabilizer_group(range(7))


def test_ec_keeps_code_states():
    c = compose_serial(compose_serial(ideal_encoder_circuit(1), ec_circuit(1)), ideal_decoder_circuit(1))
    for label in ("+Z", "-X", "+Y"):
        rec = run_tableau(c, [label] + ["+Z"] * 6)
        assert rec.state == StabilizerTableau.from_labels([label] + ["+Z"] * 6).stabilizer_group(range(7))


def test_some_weight_two_error_is_logical():
    prog = frame_program(ec_circuit(1))
    pairs = list(itertools.combinations(range(7), 2))
    ix = np.zeros((len(pairs), 7), dtype=bool)
    for k, (a, b) in enumerate(pairs):
        ix[k, [a, b]] = True
    res = prog.run(len(pairs), None, ix, np.zeros_like(ix))
    lx, lz = decode_block_frames(res.out_x, res.out_z, 1)
    assert lx.any()
    assert decode_pauli(PauliString.from_label("XXXIIII")).label in ("X", "I")


def one_location(kind: str) -> CircuitDiagram:
    b = CircuitBuilder()
    if kind == "cnot":
        q0, q1 = b.wires(2)
        b.cnot(q0, q1)
        return b.build([q0, q1], [q0, q1])
    if kind == "prepare_z":
        q = b.prep()
        return b.build([], [q])
    q = b.wire()
    if kind == "measure_z":
        m = b.measure(q)
        return b.build([q], [], [], [m])
    {"hadamard": b.h, "wait": b.wait}.get(kind, lambda w: b.pauli(kind[-1], w))(q)
    return b.build([q], [q])


def logical_sandwich(c: CircuitDiagram, level: int = 1):
    cimpl = implement(c, level)
    enc = ideal_encoder_circuit(level)
    dec = ideal_decoder_circuit(level)
    encs = decs = None
    for _ in range(c.n_in):
        encs = enc if encs is None else compose_parallel(encs, enc)
    for _ in range(c.n_out):
        decs = dec if decs is None else compose_parallel(decs, dec)
    full = cimpl
    if encs is not None:
        full = compose_serial(encs, full)
    if decs is not None:
        full = compose_serial(full, decs)
    return full


@pytest.mark.parametrize("kind", ["hadamard", "wait", "pauli_x", "pauli_y", "pauli_z", "cnot", "prepare_z", "measure_z"])
def test_gadget_logical_action(kind):
    c = one_location(kind)
    full = logical_sandwich(c)
    labels = EIGEN if c.n_in == 1 else [a + b for a in ("+Z", "-Z") for b in ("+Z", "-Z")] + ["+X+Z", "+Z+X"] if c.n_in == 2 else [None]
    for lab in labels:
        if lab is None:
            inputs, ideal_inputs = [], []
        elif c.n_in == 1:
            inputs, ideal_inputs = [lab] + ["+Z"] * 6, [lab]
        else:
            a, b = lab[:2], lab[2:]
            inputs, ideal_inputs = [a] + ["+Z"] * 6 + [b] + ["+Z"] * 6, [a, b]
        for seed in range(3):
            rec = run_tableau(full, inputs, seed=seed)
            ideal = run_tableau(c, ideal_inputs, seed=seed)
            if c.classical_out:
                assert rec.classical_out == ideal.classical_out or lab[1] != "Z"
                continue
            gens = ideal.state.generators()
            x = np.zeros((7 * c.n_out, 7 * c.n_out), dtype=bool)
            z = np.zeros_like(x)
            r = np.zeros(7 * c.n_out, dtype=bool)
            for i, g in enumerate(gens):
                for j in range(c.n_out):
                    x[i, 7 * j] = g.x_bits[j]
                    z[i, 7 * j] = g.z_bits[j]
                r[i] = g.phase_exponent == 2
            row = len(gens)
            for pos in range(7 * c.n_out):
                if pos % 7:
                    z[row, pos] = True
                    row += 1
            from ftlab.stabilizer_sim import StabilizerGroup

            assert rec.state == StabilizerGroup(7 * c.n_out, x[:row], z[:row], r[:row])


def test_measurement_rectangle_has_no_trailing_ec():
    ci = implement(one_location("measure_z"), 1)
    assert ci.count_kinds() == {"measure_z": 7}
    ex = exrec_partition(ci)
    assert ex[0].trailing == ()


def test_wait_rectangle_is_identity_without_noise():
    full = logical_sandwich(one_location("wait"))
    for lab in EIGEN:
        rec = run_tableau(full, [lab] + ["+Z"] * 6)
        assert rec.state == StabilizerTableau.from_labels([lab] + ["+Z"] * 6).stabilizer_group(range(7))


def serial_circuit():
    b = CircuitBuilder()
    q = b.prep()
    b.h(q)
    b.wait(q)
    m = b.measure(q)
    return b.build([], [], [], [m])


def test_exrec_structure():
    ex = exrec_partition(implement(serial_circuit(), 1))
    kinds = [e.kind for e in ex]
    assert kinds == ["prepare_z", "hadamard", "wait", "measure_z"]
    assert ex[0].leading == () and ex[0].trailing
    assert ex[-1].trailing == () and ex[-1].leading
    shared = sum(1 for a, b in zip(ex, ex[1:]) if set(a.trailing) & set(b.leading))
    assert shared == len(ex) - 1


def test_goodness_rules():
    ci = implement(serial_circuit(), 1)
    ex = exrec_partition(ci)
    assert all(exrec_good(FaultPattern(len(ci.locations)), e) for e in ex)
    lid = int(ex[1].locations[5])
    assert exrec_good({lid}, ex[1])
    assert not exrec_good({int(ex[1].locations[0]), int(ex[1].locations[-1])}, ex[1])


def test_level_one_goodness_polynomial_matches_sampling():
    ci = implement(serial_circuit(), 1)
    ex = exrec_partition(ci)[1]
    model = goodness_model(ci, ex, max_weight=6, samples=10)
    p = 2e-3
    loc_ids, _ = ci.slot_table()
    rng = np.random.default_rng(9)
    trials = 20000
    trial, slot, _ = sample_slot_faults(len(loc_ids), p, trials, rng)
    members = set(ex.locations.tolist())
    hits = np.zeros(trials, dtype=np.int64)
    seen: dict = {}
    for t, s in zip(trial.tolist(), slot.tolist()):
        lid = int(loc_ids[s])
        if lid in members:
            seen.setdefault(t, set()).add(lid)
    bad = sum(1 for v in seen.values() if len(v) >= 2) / trials
    se = np.sqrt(bad * (1 - bad) / trials)
    assert abs(bad - model.probability(p)) < 4 * se + 1e-4


def test_verify_transformation_zero_faults():
    b = CircuitBuilder()
    c0 = b.bit()
    q = b.prep()
    b.pauli("X", q, c0)
    b.h(q)
    b.h(q)
    m = b.measure(q)
    c = b.build([], [], [c0], [m])
    ci = implement(c, 1)
    assert verify_transformation(c, FaultPattern(len(ci.locations)), 1, ci)


def test_fit_helpers():
    ps = np.array([1e-4, 2e-4, 4e-4])
    slope, _ = fit_exponent(ps, 3 * ps**2)
    assert slope == pytest.approx(2.0)
    assert fit_p0(1e-3, 1e-3**2 / 1e-2, 1) == pytest.approx(1e-2)
    assert fit_p0(1e-3, 1e-2 * (1e-3 / 1e-2) ** 4, 2) == pytest.approx(1e-2)


def test_gadget_library_export(tmp_path):
    from ftlab.circuit_model import from_text
    from ftlab.steane_concat import export_library

    files = export_library(tmp_path)
    assert len(files) == len(gadget_set().gadgets) + 3
    for f in files:
        assert from_text(f.read_text()).n_wires > 0
