"""Stabilizer-tableau and Pauli-frame simulation of located circuits.

The tableau engine follows the Aaronson-Gottesman layout (destabilizers in
rows ``0..n-1``, stabilizers in ``n..2n-1``, one sign bit per row) and is
exact for any stabilizer input.  The frame engine tracks, for many trials at
once, the Pauli by which a faulty run differs from a Pauli-free reference run
of the same circuit; trials are packed 64 to a machine word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .circuit_model import (
    ENUMERATION_BUDGET,
    BudgetError,
    ChannelInsertion,
    CircuitDiagram,
    Classical,
    CondSwap,
    Discard,
    FaultPattern,
    FrameUpdate,
    Location,
    NoiseModel,
    Peek,
    enumerate_slot_faults,
    pattern_count,
    reads_of,
    sample_slot_faults,
    slot_count,
    slots_of,
    weight_polynomial,
    writes_of,
)
from .pauli_core import PauliChannel, PauliString

ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
MAX_TABLEAU_QUBITS = 4000
HAMMING_ROWS = ((3, 4, 5, 6), (1, 2, 5, 6), (0, 2, 4, 6))


class NonCliffordError(ValueError):
    """Raised when a stabilizer engine meets a gate it cannot simulate."""


class NonDeterministicPeek(RuntimeError):
    """Raised when an analysis-only peek would disturb the state."""


# ---------------------------------------------------------------------------
# Tableau


def _g(x1: np.ndarray, z1: np.ndarray, x2: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Exponent of i picked up when multiplying single-qubit Paulis (x1,z1)(x2,z2)."""
    x1 = x1.astype(np.int8)
    z1 = z1.astype(np.int8)
    x2 = x2.astype(np.int8)
    z2 = z2.astype(np.int8)
    return np.where(
        (x1 == 1) & (z1 == 1),
        z2 - x2,
        np.where((x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1), np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0)),
    )


class StabilizerTableau:
    def __init__(self, n: int) -> None:
        if n > MAX_TABLEAU_QUBITS:
            raise BudgetError(f"{n} qubits exceed the tableau cap")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.r = np.zeros(2 * n, dtype=bool)
        idx = np.arange(n)
        self.x[idx, idx] = True
        self.z[n + idx, idx] = True

    def copy(self) -> "StabilizerTableau":
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "StabilizerTableau":
        """Product state of single-qubit Pauli eigenstates such as '+Z', '-X', '+Y'."""
        t = cls(len(labels))
        n = t.n
        for q, lab in enumerate(labels):
            sign, axis = (lab[0], lab[1:]) if lab[0] in "+-" else ("+", lab)
            axis = axis.upper()
            if axis not in ("X", "Y", "Z"):
                raise ValueError(f"bad eigenstate label {lab!r}")
            t.x[q, q], t.z[q, q] = (False, True) if axis != "Z" else (True, False)
            t.x[n + q, q] = axis in ("X", "Y")
            t.z[n + q, q] = axis in ("Z", "Y")
            t.r[n + q] = sign == "-"
        return t

    # gates
    def h(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        tmp = self.x[:, q].copy()
        self.x[:, q] = self.z[:, q]
        self.z[:, q] = tmp

    def s(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.z[:, q] ^= self.x[:, q]

    def cnot(self, a: int, b: int) -> None:
        self.r ^= self.x[:, a] & self.z[:, b] & ~(self.x[:, b] ^ self.z[:, a])
        self.x[:, b] ^= self.x[:, a]
        self.z[:, a] ^= self.z[:, b]

    def pauli(self, letter: str, q: int) -> None:
        if letter == "X":
            self.r ^= self.z[:, q]
        elif letter == "Z":
            self.r ^= self.x[:, q]
        elif letter == "Y":
            self.r ^= self.x[:, q] ^ self.z[:, q]
        elif letter != "I":
            raise ValueError(letter)

    def swap(self, a: int, b: int) -> None:
        for arr in (self.x, self.z):
            tmp = arr[:, a].copy()
            arr[:, a] = arr[:, b]
            arr[:, b] = tmp

    # row algebra
    def _rowsum(self, targets: np.ndarray, src: int) -> None:
        if targets.size == 0:
            return
        ph = _g(self.x[src][None, :], self.z[src][None, :], self.x[targets], self.z[targets]).sum(axis=1)
        ph = (ph + 2 * self.r[targets] + 2 * self.r[src]) % 4
        self.r[targets] = ph == 2
        self.x[targets] ^= self.x[src]
        self.z[targets] ^= self.z[src]

    def _product_sign(self, rows: np.ndarray) -> bool:
        xs, zs = self.x[rows], self.z[rows]
        px = np.zeros_like(xs)
        pz = np.zeros_like(zs)
        if rows.size > 1:
            px[1:] = np.bitwise_xor.accumulate(xs, axis=0)[:-1]
            pz[1:] = np.bitwise_xor.accumulate(zs, axis=0)[:-1]
        total = int(_g(xs, zs, px, pz).sum()) + 2 * int(self.r[rows].sum())
        return (total % 4) == 2

    def deterministic_value(self, q: int) -> int | None:
        n = self.n
        if self.x[n:, q].any():
            return None
        rows = np.nonzero(self.x[:n, q])[0] + n
        return int(self._product_sign(rows))

    def measure(self, q: int, rng: np.random.Generator | None = None, forced: int | None = None) -> int:
        n = self.n
        hits = np.nonzero(self.x[n:, q])[0]
        if hits.size == 0:
            return self.deterministic_value(q)  # type: ignore[return-value]
        p = int(hits[0]) + n
        others = np.nonzero(self.x[:, q])[0]
        others = others[others != p]
        self._rowsum(others, p)
        self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p].copy(), self.z[p].copy(), self.r[p]
        self.x[p] = False
        self.z[p] = False
        self.z[p, q] = True
        if forced is not None:
            out = int(forced)
        else:
            out = int((rng or np.random.default_rng()).integers(0, 2))
        self.r[p] = bool(out)
        return out

    def reset(self, q: int, rng: np.random.Generator | None = None) -> None:
        if self.measure(q, rng, forced=0 if rng is None else None):
            self.pauli("X", q)

    # states
    def stabilizer_group(self, keep: Sequence[int]) -> "StabilizerGroup":
        """Generators of the reduced state on ``keep`` (other qubits traced out)."""
        n = self.n
        keep = list(keep)
        drop = [q for q in range(n) if q not in set(keep)]
        x = self.x[n:].copy()
        z = self.z[n:].copy()
        r = self.r[n:].copy()
        work = StabilizerTableau.__new__(StabilizerTableau)
        work.n, work.x, work.z, work.r = n, x, z, r
        used = np.zeros(n, dtype=bool)
        for q in drop:
            for arr in (work.x, work.z):
                cand = np.nonzero(arr[:, q] & ~used)[0]
                if cand.size == 0:
                    continue
                piv = int(cand[0])
                used[piv] = True
                others = cand[1:]
                work._rowsum(others, piv)
        rows = np.nonzero(~used)[0]
        return StabilizerGroup(len(keep), work.x[np.ix_(rows, keep)], work.z[np.ix_(rows, keep)], work.r[rows]).canonical()


@dataclass(frozen=True, eq=False)
class StabilizerGroup:
    """Signed Pauli generators of a (possibly mixed) stabilizer state."""

    n: int
    x: np.ndarray
    z: np.ndarray
    r: np.ndarray

    def canonical(self) -> "StabilizerGroup":
        x, z, r = self.x.copy(), self.z.copy(), self.r.copy()
        m = x.shape[0]
        work = StabilizerTableau.__new__(StabilizerTableau)
        work.n, work.x, work.z, work.r = self.n, x, z, r
        cols = [("x", q) for q in range(self.n)] + [("z", q) for q in range(self.n)]
        row = 0
        for kind, q in cols:
            arr = work.x if kind == "x" else work.z
            cand = np.nonzero(arr[row:, q])[0] + row
            if cand.size == 0:
                continue
            piv = int(cand[0])
            if piv != row:
                for a in (work.x, work.z):
                    a[[row, piv]] = a[[piv, row]]
                work.r[[row, piv]] = work.r[[piv, row]]
            others = np.nonzero(arr[:, q])[0]
            others = others[others != row]
            work._rowsum(others, row)
            row += 1
            if row == m:
                break
        keep = np.nonzero(work.x.any(axis=1) | work.z.any(axis=1))[0]
        return StabilizerGroup(self.n, work.x[keep], work.z[keep], work.r[keep])

    @property
    def rank(self) -> int:
        return int(self.x.shape[0])

    def generators(self) -> list[PauliString]:
        out = []
        for i in range(self.rank):
            out.append(
                PauliString(
                    self.n, tuple(int(v) for v in self.x[i]), tuple(int(v) for v in self.z[i]), 2 * int(self.r[i])
                )
            )
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StabilizerGroup):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return (
            a.n == b.n
            and a.x.shape == b.x.shape
            and bool(np.array_equal(a.x, b.x) and np.array_equal(a.z, b.z) and np.array_equal(a.r, b.r))
        )

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# Classical helpers shared by both engines


def hamming_syndrome(v: Sequence) -> tuple:
    return tuple(v[a] ^ v[b] ^ v[c] ^ v[d] for a, b, c, d in HAMMING_ROWS)


def _classical_eval(kind: str, ins: Sequence[int]) -> list[int]:
    if kind == "xor":
        out = 0
        for v in ins:
            out ^= v
        return [out]
    if kind == "and":
        return [int(all(ins))]
    if kind == "or":
        return [int(any(ins))]
    s = hamming_syndrome(ins)
    pos = 4 * s[0] + 2 * s[1] + s[2]
    if kind == "hamming_logical":
        return [(sum(ins) % 2) ^ int(pos != 0)]
    if kind == "hamming_correction":
        return [int(pos == j + 1) for j in range(7)]
    raise ValueError(kind)


def _allocator(c: CircuitDiagram, extra: int = 0):
    """Map wires to tableau slots with reuse of freed slots (program order)."""
    slot: dict[int, int] = {w: i for i, w in enumerate(c.inputs)}
    free: list[int] = []
    top = len(c.inputs) + extra
    return slot, free, top


# ---------------------------------------------------------------------------
# Tableau runs


@dataclass
class SimRecord:
    outcomes: dict
    cbits: dict
    state: StabilizerGroup | None = None
    residual_frame: PauliString | None = None
    classical_out: tuple = ()


def _pauli_fault_map(c: CircuitDiagram, f: FaultPattern | None) -> dict:
    if f is None:
        return {}
    f.check(c)
    return dict(f.assignments)


def run_tableau(
    c: CircuitDiagram,
    input_state: StabilizerTableau | Sequence[str] | None = None,
    seed: int | None = 0,
    faults: FaultPattern | None = None,
    classical_in: Sequence[int] = (),
    forced_zero: bool = False,
    skip_paulis: bool = False,
    forced_outcomes: dict | None = None,
) -> SimRecord:
    """Exact stabilizer simulation of a Clifford circuit.

    ``input_state`` is a tableau over the inputs (optionally followed by
    spectator reference qubits, kept untouched and reported in the final
    state) or a list of eigenstate labels.  With ``forced_zero`` every random
    measurement returns 0; ``skip_paulis`` drops all Pauli gates and frame
    corrections, which is the reference run the frame engine works against.
    ``forced_outcomes`` fixes the result of random measurements by location id.
    """
    rng = np.random.default_rng(seed)
    n_in = c.n_in
    if input_state is None:
        base = StabilizerTableau(n_in)
    elif isinstance(input_state, StabilizerTableau):
        base = input_state
    else:
        base = StabilizerTableau.from_labels(list(input_state))
    spectators = base.n - n_in
    if spectators < 0:
        raise ValueError("input state has fewer qubits than the circuit inputs")
    peak = c.peak_qubits() + spectators
    tab = StabilizerTableau(max(peak, base.n))
    # embed the input tableau into the first slots
    m = base.n
    tab.x[:m, :m], tab.z[:m, :m], tab.r[:m] = base.x[:m], base.z[:m], base.r[:m]
    N = tab.n
    tab.x[N : N + m, :m], tab.z[N : N + m, :m], tab.r[N : N + m] = base.x[m:], base.z[m:], base.r[m:]
    slot = {w: i for i, w in enumerate(c.inputs)}
    used_fresh = base.n
    free: list[int] = []
    bits: dict[int, int] = {}
    for b, v in zip(c.classical_in, classical_in):
        bits[b] = int(v)
    for b in c.classical_in:
        bits.setdefault(b, 0)
    outcomes: dict[int, int] = {}
    fmap = _pauli_fault_map(c, faults)

    def fresh_slot() -> tuple[int, bool]:
        nonlocal used_fresh
        if free:
            return free.pop(), True
        used_fresh += 1
        return used_fresh - 1, False

    def apply_fault(loc: Location) -> None:
        label = fmap.get(loc.id)
        if label:
            for w, ch in zip(loc.qubit_lines, label):
                tab.pauli(ch, slot[w])

    for op in c.ops:
        if isinstance(op, Location):
            k = op.kind
            if k == "t_gate":
                raise NonCliffordError("T gate is outside the stabilizer formalism")
            if k in ("measure_z", "trace"):
                apply_fault(op)
                s = slot.pop(op.qubit_lines[0])
                if k == "measure_z":
                    want = (forced_outcomes or {}).get(op.id, 0 if forced_zero else None)
                    v = tab.measure(s, rng, forced=want)
                    bits[op.cbit] = v
                    outcomes[op.id] = v
                free.append(s)
                continue
            if k == "prepare_z":
                s, dirty = fresh_slot()
                if dirty:
                    tab.reset(s, None if forced_zero else rng)
                slot[op.qubit_lines[0]] = s
            elif k == "hadamard":
                tab.h(slot[op.qubit_lines[0]])
            elif k == "cnot":
                tab.cnot(slot[op.qubit_lines[0]], slot[op.qubit_lines[1]])
            elif k in ("pauli_x", "pauli_y", "pauli_z"):
                if not skip_paulis and (op.condition < 0 or bits[op.condition]):
                    tab.pauli(k[-1].upper(), slot[op.qubit_lines[0]])
            apply_fault(op)
        elif isinstance(op, Classical):
            vals = _classical_eval(op.kind, [bits[b] for b in op.ins])
            for b, v in zip(op.outs, vals):
                bits[b] = v
        elif isinstance(op, FrameUpdate):
            if not skip_paulis and (op.condition < 0 or bits[op.condition]):
                for w in op.qubits:
                    tab.pauli(op.label, slot[w])
        elif isinstance(op, CondSwap):
            if bits[op.condition]:
                for a, b in op.pairs:
                    slot[a], slot[b] = slot[b], slot[a]
        elif isinstance(op, Discard):
            for w in op.qubits:
                free.append(slot.pop(w))
        elif isinstance(op, Peek):
            v = tab.deterministic_value(slot[op.qubit])
            if v is None:
                raise NonDeterministicPeek(f"peek of q{op.qubit} is not deterministic")
            bits[op.cbit] = v
        elif isinstance(op, ChannelInsertion):
            labels = list(op.channel.probs)
            probs = np.array([op.channel.probs[k] for k in labels])
            tab.pauli(labels[int(rng.choice(len(labels), p=probs / probs.sum()))], slot[op.qubit])
    keep = [slot[w] for w in c.outputs] + list(range(n_in, base.n))
    return SimRecord(
        outcomes=outcomes,
        cbits=bits,
        state=tab.stabilizer_group(keep),
        classical_out=tuple(bits[b] for b in c.classical_out),
    )


def skeleton_outcomes(c: CircuitDiagram) -> np.ndarray:
    """Measurement values of the Pauli-free reference run (random outcomes forced to 0)."""
    rec = run_tableau(c, None, seed=None, forced_zero=True, skip_paulis=True)
    ref = np.zeros(c.n_cbits, dtype=np.uint8)
    for loc in c.locations:
        if loc.kind == "measure_z":
            ref[loc.cbit] = rec.outcomes[loc.id]
    return ref


# ---------------------------------------------------------------------------
# Bit packing


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(trials, k) bool -> (k, words) uint64 with trial t in word t//64, bit t%64."""
    bits = np.asarray(bits, dtype=bool)
    trials, k = bits.shape
    words = max(1, -(-trials // 64))
    padded = np.zeros((k, words * 64), dtype=bool)
    padded[:, :trials] = bits.T
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(k, words)


def unpack_bits(words: np.ndarray, trials: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`: (k, words) -> (trials, k) bool."""
    k = words.shape[0]
    raw = np.ascontiguousarray(words).view(np.uint8).reshape(k, -1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :trials].T.astype(bool)


def _random_words(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 1 << 64, size=shape, dtype=np.uint64)


# ---------------------------------------------------------------------------
# Frame engine

_LOC_ORDER = {
    "measure_z": 0,
    "trace": 1,
    "prepare_z": 2,
    "hadamard": 3,
    "cnot": 4,
    "pauli_x": 5,
    "pauli_y": 5,
    "pauli_z": 5,
    "wait": 6,
    "t_gate": 7,
}


@dataclass
class _Group:
    key: tuple
    items: list = field(default_factory=list)
    wires: set = field(default_factory=set)
    bits: set = field(default_factory=set)
    loc_ids: list = field(default_factory=list)


def _op_key(op) -> tuple:
    if isinstance(op, Location):
        k = op.kind
        if k in ("pauli_x", "pauli_y", "pauli_z"):
            return ("pauli",)
        return (k,)
    if isinstance(op, Classical):
        return ("classical", op.kind, len(op.ins))
    if isinstance(op, FrameUpdate):
        return ("pauli",)
    if isinstance(op, CondSwap):
        return ("cswap",)
    if isinstance(op, Discard):
        return ("discard",)
    if isinstance(op, Peek):
        return ("peek",)
    if isinstance(op, ChannelInsertion):
        return ("channel",)
    raise TypeError(op)


def _execution_order(c: CircuitDiagram) -> list:
    if not c.scheduled:
        return list(c.ops)
    by_t: dict[int, tuple[list, list]] = {}
    for op in c.ops:
        locs, rest = by_t.setdefault(op.timestep, ([], []))
        (locs if isinstance(op, Location) else rest).append(op)
    order = []
    for t in sorted(by_t):
        locs, rest = by_t[t]
        locs.sort(key=lambda o: _LOC_ORDER[o.kind])
        order.extend(locs)
        # level the zero-time operations so independent ones share a group
        wire_lvl: dict[int, int] = {}
        bit_lvl: dict[int, int] = {}
        levelled = []
        for i, op in enumerate(rest):
            lvl = 0
            for w in op.wires:
                lvl = max(lvl, wire_lvl.get(w, -1) + 1)
            for b in reads_of(op) + writes_of(op):
                lvl = max(lvl, bit_lvl.get(b, -1) + 1)
            for w in op.wires:
                wire_lvl[w] = lvl
            for b in reads_of(op) + writes_of(op):
                bit_lvl[b] = lvl
            levelled.append((lvl, _op_key(op), i, op))
        levelled.sort(key=lambda e: (e[0], e[1], e[2]))
        order.extend(op for _, _, _, op in levelled)
    return order


class FrameProgram:
    """A circuit compiled into vectorised groups over packed trial words."""

    def __init__(self, c: CircuitDiagram, keep_cbits: Sequence[int] = ()) -> None:
        for loc in c.locations:
            if loc.kind == "t_gate":
                raise NonCliffordError("T gate is outside the stabilizer formalism")
        self.circuit = c
        order = _execution_order(c)
        groups: list[_Group] = []
        cur: _Group | None = None
        for op in order:
            key = _op_key(op)
            wires = set(op.wires)
            bits = set(reads_of(op)) | set(writes_of(op))
            if cur is None or cur.key != key or (wires & cur.wires) or (bits & cur.bits):
                cur = _Group(key)
                groups.append(cur)
            if isinstance(op, FrameUpdate):
                for w in op.qubits:
                    if w in cur.wires:
                        cur = _Group(key)
                        groups.append(cur)
                    cur.items.append(("frame", op.label, w, op.condition))
                    cur.wires.add(w)
                cur.bits |= bits
                continue
            cur.items.append(op)
            cur.wires |= wires
            cur.bits |= bits
        self._allocate(c, groups, set(keep_cbits) | set(c.classical_out))

    def _allocate(self, c: CircuitDiagram, groups: list[_Group], keep: set) -> None:
        last_read: dict[int, int] = {}
        for gi, g in enumerate(groups):
            for it in g.items:
                if isinstance(it, tuple):
                    if it[3] >= 0:
                        last_read[it[3]] = gi
                else:
                    for b in reads_of(it):
                        last_read[b] = gi
        qslot = {w: i for i, w in enumerate(c.inputs)}
        qfree: list[int] = []
        qtop = len(c.inputs)
        cslot: dict[int, int] = {}
        cfree: list[int] = []
        ctop = 0
        for b in c.classical_in:
            cslot[b] = ctop
            ctop += 1
        loc_ids, _ = c.slot_table()
        first_slot = np.searchsorted(loc_ids, np.arange(len(c.locations)))
        n_slots = len(loc_ids)
        self.fault_group = np.zeros(n_slots, dtype=np.int64)
        self.fault_qubit = np.zeros(n_slots, dtype=np.int64)
        self.meas_cbit_ref: list = []
        compiled = []
        for gi, g in enumerate(groups):
            q_release: list[int] = []
            c_release: list[int] = []
            kind = g.key[0]
            if kind == "prepare_z":
                slots = []
                for op in g.items:
                    if qfree:
                        s = qfree.pop()
                    else:
                        s = qtop
                        qtop += 1
                    qslot[op.qubit_lines[0]] = s
                    slots.append(s)
                    self._map_fault(op, first_slot, gi, [s])
                compiled.append(("prep", np.array(slots)))
            elif kind in ("hadamard", "wait"):
                slots = [qslot[op.qubit_lines[0]] for op in g.items]
                for op, s in zip(g.items, slots):
                    self._map_fault(op, first_slot, gi, [s])
                compiled.append(("h" if kind == "hadamard" else "nop", np.array(slots)))
            elif kind == "cnot":
                cs = [qslot[op.qubit_lines[0]] for op in g.items]
                ts = [qslot[op.qubit_lines[1]] for op in g.items]
                for op, a, b in zip(g.items, cs, ts):
                    self._map_fault(op, first_slot, gi, [a, b])
                compiled.append(("cnot", np.array(cs), np.array(ts)))
            elif kind == "pauli":
                sl, xb, zb, cond = [], [], [], []
                for it in g.items:
                    if isinstance(it, tuple):
                        _, label, w, cnd = it
                    else:
                        label, w, cnd = it.kind[-1].upper(), it.qubit_lines[0], it.condition
                        self._map_fault(it, first_slot, gi, [qslot[w]])
                    sl.append(qslot[w])
                    xb.append(label in ("X", "Y"))
                    zb.append(label in ("Z", "Y"))
                    cond.append(cslot[cnd] if cnd >= 0 else -1)
                compiled.append(("pauli", np.array(sl), np.array(xb), np.array(zb), np.array(cond)))
            elif kind in ("measure_z", "trace", "discard", "peek"):
                slots, cbs, refs = [], [], []
                for op in g.items:
                    if kind == "discard":
                        for w in op.qubits:
                            s = qslot.pop(w)
                            slots.append(s)
                            q_release.append(s)
                        continue
                    w = op.qubit_lines[0] if isinstance(op, Location) else op.qubit
                    s = qslot[w]
                    slots.append(s)
                    if isinstance(op, Location):
                        self._map_fault(op, first_slot, gi, [s])
                    if kind in ("measure_z", "trace"):
                        qslot.pop(w)
                        q_release.append(s)
                    if kind in ("measure_z", "peek"):
                        b = op.cbit
                        if cfree:
                            cs = cfree.pop()
                        else:
                            cs = ctop
                            ctop += 1
                        cslot[b] = cs
                        cbs.append(cs)
                        refs.append(b)
                        if b not in last_read and b not in keep:
                            c_release.append(cs)
                if kind in ("measure_z", "peek"):
                    compiled.append(("meas" if kind == "measure_z" else "peek", np.array(slots), np.array(cbs), np.array(refs)))
                else:
                    compiled.append(("clear", np.array(slots)))
            elif kind == "classical":
                ins = np.array([[cslot[b] for b in op.ins] for op in g.items])
                outs = []
                for op in g.items:
                    row = []
                    for b in op.outs:
                        if cfree:
                            cs = cfree.pop()
                        else:
                            cs = ctop
                            ctop += 1
                        cslot[b] = cs
                        row.append(cs)
                        if b not in last_read and b not in keep:
                            c_release.append(cs)
                    outs.append(row)
                compiled.append(("classical", g.key[1], ins, np.array(outs)))
            elif kind == "cswap":
                a, b, cond = [], [], []
                for op in g.items:
                    for x, y in op.pairs:
                        a.append(qslot[x])
                        b.append(qslot[y])
                        cond.append(cslot[op.condition])
                compiled.append(("cswap", np.array(a), np.array(b), np.array(cond)))
            elif kind == "channel":
                compiled.append(("channel", [(qslot[op.qubit], op.channel) for op in g.items]))
            else:
                raise NonCliffordError(f"cannot simulate {kind}")
            # release classical bits whose last reader was this group
            for it in g.items:
                rd = [it[3]] if isinstance(it, tuple) and it[3] >= 0 else ([] if isinstance(it, tuple) else list(reads_of(it)))
                for b in rd:
                    if last_read.get(b) == gi and b not in keep and b in cslot:
                        c_release.append(cslot[b])
            qfree.extend(q_release)
            cfree.extend(sorted(set(c_release), reverse=True))
        self.groups = compiled
        self.pre_fault = np.array([g[0] in ("meas", "clear") for g in compiled], dtype=bool)
        self.n_qslots = qtop
        self.n_cslots = ctop
        self.out_slots = np.array([qslot[w] for w in c.outputs], dtype=np.int64)
        self.in_slots = np.arange(len(c.inputs), dtype=np.int64)
        self.cout_slots = np.array([cslot[b] for b in c.classical_out], dtype=np.int64)
        self.cin_slots = np.array([cslot[b] for b in c.classical_in], dtype=np.int64)
        self.keep_slots = {b: cslot[b] for b in keep if b in cslot}
        self.n_fault_slots = n_slots

    def _map_fault(self, op: Location, first_slot: np.ndarray, gi: int, phys: list) -> None:
        base = int(first_slot[op.id])
        for k, s in enumerate(phys):
            self.fault_group[base + k] = gi
            self.fault_qubit[base + k] = s

    # ------------------------------------------------------------------
    def run(
        self,
        trials: int,
        faults: tuple | None = None,
        input_x: np.ndarray | None = None,
        input_z: np.ndarray | None = None,
        classical_in: np.ndarray | None = None,
        reference: np.ndarray | None = None,
        randomize: bool = False,
        rng: np.random.Generator | None = None,
        record: Sequence[int] = (),
    ) -> "FrameResult":
        """Propagate Pauli frames for ``trials`` runs.

        ``faults`` is ``(trial, slot, code)`` with codes 1..3 for X, Y, Z.
        ``reference`` holds the reference run's measurement values per bit.
        """
        rng = rng or np.random.default_rng()
        W = max(1, -(-trials // 64))
        X = np.zeros((max(self.n_qslots, 1), W), dtype=np.uint64)
        Z = np.zeros_like(X)
        C = np.zeros((max(self.n_cslots, 1), W), dtype=np.uint64)
        if input_x is not None:
            X[self.in_slots] = pack_bits(np.asarray(input_x).reshape(trials, -1))
        if input_z is not None:
            Z[self.in_slots] = pack_bits(np.asarray(input_z).reshape(trials, -1))
        if classical_in is not None and self.cin_slots.size:
            C[self.cin_slots] = pack_bits(np.asarray(classical_in).reshape(trials, -1))
        tail = trials % 64
        valid_last = ALL_ONES if tail == 0 else np.uint64((1 << tail) - 1)

        inject = self._prepare_faults(faults, trials, W)
        for gi, g in enumerate(self.groups):
            pre = self.pre_fault[gi]
            if pre and gi in inject:
                self._inject(X, Z, inject[gi])
            op = g[0]
            if op == "prep":
                X[g[1]] = 0
                Z[g[1]] = _random_words(rng, (g[1].size, W)) if randomize else 0
            elif op == "h":
                tmp = X[g[1]]
                X[g[1]] = Z[g[1]]
                Z[g[1]] = tmp
            elif op == "cnot":
                X[g[2]] ^= X[g[1]]
                Z[g[1]] ^= Z[g[2]]
            elif op == "pauli":
                _, sl, xb, zb, cond = g
                mask = np.empty((sl.size, W), dtype=np.uint64)
                unc = cond < 0
                mask[unc] = ALL_ONES
                if (~unc).any():
                    mask[~unc] = C[cond[~unc]]
                if xb.any():
                    X[sl[xb]] ^= mask[xb]
                if zb.any():
                    Z[sl[zb]] ^= mask[zb]
            elif op in ("meas", "peek"):
                _, sl, cb, refs = g
                vals = X[sl].copy()
                if reference is not None:
                    r = reference[refs].astype(bool)
                    vals[r] ^= ALL_ONES
                C[cb] = vals
                if op == "meas":
                    X[sl] = 0
                    Z[sl] = 0
            elif op == "clear":
                X[g[1]] = 0
                Z[g[1]] = 0
            elif op == "classical":
                _, kind, ins, outs = g
                C[outs] = _classical_words(kind, C[ins])
            elif op == "cswap":
                _, a, b, cond = g
                m = C[cond]
                for arr in (X, Z):
                    d = (arr[a] ^ arr[b]) & m
                    arr[a] ^= d
                    arr[b] ^= d
            elif op == "channel":
                for s, ch in g[1]:
                    labels = list(ch.probs)
                    probs = np.array([ch.probs[k] for k in labels])
                    pick = rng.choice(len(labels), size=trials, p=probs / probs.sum())
                    xs = np.array([lab in ("X", "Y") for lab in labels])[pick]
                    zs = np.array([lab in ("Z", "Y") for lab in labels])[pick]
                    X[s] ^= pack_bits(xs[:, None])[0]
                    Z[s] ^= pack_bits(zs[:, None])[0]
            if not pre and gi in inject:
                self._inject(X, Z, inject[gi])
        X[:, -1] &= valid_last
        Z[:, -1] &= valid_last
        C[:, -1] &= valid_last
        rec = {b: unpack_bits(C[[self.keep_slots[b]]], trials)[:, 0] for b in record if b in self.keep_slots}
        return FrameResult(
            trials=trials,
            out_x=unpack_bits(X[self.out_slots], trials) if self.out_slots.size else np.zeros((trials, 0), bool),
            out_z=unpack_bits(Z[self.out_slots], trials) if self.out_slots.size else np.zeros((trials, 0), bool),
            classical_out=unpack_bits(C[self.cout_slots], trials) if self.cout_slots.size else np.zeros((trials, 0), bool),
            recorded=rec,
        )

    def _prepare_faults(self, faults, trials: int, W: int) -> dict:
        if faults is None:
            return {}
        trial, slot, code = faults
        if len(trial) == 0:
            return {}
        trial = np.asarray(trial, dtype=np.int64)
        slot = np.asarray(slot, dtype=np.int64)
        code = np.asarray(code, dtype=np.int64)
        grp = self.fault_group[slot]
        order = np.argsort(grp, kind="stable")
        grp, trial, slot, code = grp[order], trial[order], slot[order], code[order]
        phys = self.fault_qubit[slot]
        word = trial >> 6
        bit = np.left_shift(np.uint64(1), (trial & 63).astype(np.uint64))
        xs = (code == 1) | (code == 2)
        zs = (code == 2) | (code == 3)
        bounds = np.flatnonzero(np.diff(grp)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [grp.size]))
        out = {}
        for s, e in zip(starts, ends):
            sl = slice(s, e)
            out[int(grp[s])] = (phys[sl], word[sl], bit[sl], xs[sl], zs[sl])
        return out

    @staticmethod
    def _inject(X: np.ndarray, Z: np.ndarray, pack) -> None:
        phys, word, bit, xs, zs = pack
        if xs.any():
            np.bitwise_xor.at(X, (phys[xs], word[xs]), bit[xs])
        if zs.any():
            np.bitwise_xor.at(Z, (phys[zs], word[zs]), bit[zs])


def _classical_words(kind: str, ins: np.ndarray) -> np.ndarray:
    """Evaluate a batch of classical ops; ``ins`` has shape (ops, arity, words)."""
    if kind == "xor":
        return np.bitwise_xor.reduce(ins, axis=1)[:, None, :]
    if kind == "and":
        return np.bitwise_and.reduce(ins, axis=1)[:, None, :]
    if kind == "or":
        return np.bitwise_or.reduce(ins, axis=1)[:, None, :]
    s = [ins[:, a] ^ ins[:, b] ^ ins[:, c] ^ ins[:, d] for a, b, c, d in HAMMING_ROWS]
    if kind == "hamming_logical":
        par = np.bitwise_xor.reduce(ins, axis=1)
        return (par ^ (s[0] | s[1] | s[2]))[:, None, :]
    if kind == "hamming_correction":
        out = np.empty_like(ins)
        for j in range(7):
            v = j + 1
            term = ALL_ONES
            for k, sk in enumerate(s):
                want = (v >> (2 - k)) & 1
                term = term & (sk if want else ~sk)
            out[:, j] = term
        return out
    raise ValueError(kind)


@dataclass
class FrameResult:
    trials: int
    out_x: np.ndarray
    out_z: np.ndarray
    classical_out: np.ndarray
    recorded: dict


_PROGRAM_CACHE: dict = {}


def frame_program(c: CircuitDiagram, keep_cbits: Sequence[int] = ()) -> FrameProgram:
    key = (id(c), tuple(keep_cbits))
    hit = _PROGRAM_CACHE.get(key)
    if hit is not None and hit.circuit is c:
        return hit
    prog = FrameProgram(c, keep_cbits)
    if len(_PROGRAM_CACHE) > 64:
        _PROGRAM_CACHE.clear()
    _PROGRAM_CACHE[key] = prog
    return prog


def run_frame(
    c: CircuitDiagram,
    f: FaultPattern | None = None,
    reference: np.ndarray | None = None,
    seed: int | None = 0,
    input_frame: PauliString | None = None,
    randomize: bool = False,
) -> SimRecord:
    """Single-run frame propagation returning the residual Pauli on the outputs."""
    prog = frame_program(c, keep_cbits=[loc.cbit for loc in c.locations if loc.kind == "measure_z"])
    faults = None
    if f is not None:
        slots, codes = f.slot_faults(c)
        faults = (np.zeros(slots.size, dtype=np.int64), slots, codes)
    ix = iz = None
    if input_frame is not None:
        ix = np.array(input_frame.x_bits, dtype=bool)[None, :]
        iz = np.array(input_frame.z_bits, dtype=bool)[None, :]
    meas_bits = [loc.cbit for loc in c.locations if loc.kind == "measure_z"]
    res = prog.run(1, faults, ix, iz, reference=reference, randomize=randomize, rng=np.random.default_rng(seed), record=meas_bits)
    residual = PauliString(c.n_out, tuple(int(v) for v in res.out_x[0]), tuple(int(v) for v in res.out_z[0]), 0)
    outcomes = {loc.id: int(res.recorded[loc.cbit][0]) for loc in c.locations if loc.kind == "measure_z"}
    return SimRecord(
        outcomes=outcomes,
        cbits={b: int(v[0]) for b, v in res.recorded.items()},
        residual_frame=residual,
        classical_out=tuple(int(v) for v in res.classical_out[0]),
    )


# ---------------------------------------------------------------------------
# Induced logical channels


@dataclass
class ChannelEstimate:
    channel: PauliChannel
    stderr: dict
    trials: int


def frames_to_labels(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Integer code per trial for an n-qubit Pauli: base-4 digits I,X,Y,Z."""
    code = np.zeros(x.shape[0], dtype=np.int64)
    for j in range(x.shape[1]):
        digit = np.where(x[:, j] & z[:, j], 2, np.where(x[:, j], 1, np.where(z[:, j], 3, 0)))
        code = code * 4 + digit
    return code


def code_to_label(code: int, n: int) -> str:
    out = []
    for _ in range(n):
        out.append("IXYZ"[code % 4])
        code //= 4
    return "".join(reversed(out))


def channel_of_circuit(
    c: CircuitDiagram,
    nm: NoiseModel,
    data_lines: Sequence[int] | None = None,
    trials: int = 10000,
    seed: int = 0,
    batch: int = 1 << 16,
) -> ChannelEstimate:
    """Monte-Carlo estimate of the Pauli channel the faults induce on the output lines."""
    idx = list(range(c.n_out)) if data_lines is None else list(data_lines)
    prog = frame_program(c)
    n_slots = prog.n_fault_slots
    counts = np.zeros(4 ** len(idx), dtype=np.int64)
    ss = np.random.SeedSequence(seed)
    done = 0
    for child in ss.spawn(max(1, -(-trials // batch))):
        t = min(batch, trials - done)
        if t <= 0:
            break
        rng = np.random.default_rng(child)
        faults = sample_slot_faults(n_slots, nm.p, t, rng)
        res = prog.run(t, faults, rng=rng)
        counts += np.bincount(frames_to_labels(res.out_x[:, idx], res.out_z[:, idx]), minlength=counts.size)
        done += t
    probs = counts / trials
    n = len(idx)
    labels = {code_to_label(k, n): float(v) for k, v in enumerate(probs) if v > 0}
    stderr = {code_to_label(k, n): float(np.sqrt(max(v * (1 - v), 1.0 / trials) / trials)) for k, v in enumerate(probs)}
    return ChannelEstimate(PauliChannel(n, labels), stderr, trials)


def exact_channel_expansion(
    c: CircuitDiagram, data_lines: Sequence[int] | None = None, max_weight: int = 2
) -> dict:
    """Exact polynomial coefficients (in p) of each output Pauli up to ``max_weight``.

    Returns ``{label: (c0, c1, ..., c_w)}`` with Fraction coefficients; the
    neglected remainder is O(p^(w+1)).
    """
    idx = list(range(c.n_out)) if data_lines is None else list(data_lines)
    prog = frame_program(c)
    n_slots = prog.n_fault_slots
    if pattern_count(n_slots, max_weight) > ENUMERATION_BUDGET:
        raise BudgetError("exact expansion exceeds the enumeration budget")
    n = len(idx)
    out: dict[str, list] = {}
    for w in range(max_weight + 1):
        count, trial, slot, code = enumerate_slot_faults(n_slots, w)
        poly = weight_polynomial(w, n_slots, max_weight)
        tallies = np.zeros(4**n, dtype=np.int64)
        chunk = 1 << 18
        for start in range(0, count, chunk):
            stop = min(count, start + chunk)
            lo, hi = np.searchsorted(trial, [start, stop])
            res = prog.run(stop - start, (trial[lo:hi] - start, slot[lo:hi], code[lo:hi]))
            tallies += np.bincount(frames_to_labels(res.out_x[:, idx], res.out_z[:, idx]), minlength=tallies.size)
        for k, v in enumerate(tallies):
            if v:
                lab = code_to_label(k, n)
                acc = out.setdefault(lab, [Fraction(0)] * (max_weight + 1))
                for d in range(max_weight + 1):
                    acc[d] += int(v) * poly[d]
    return {k: tuple(v) for k, v in out.items()}
