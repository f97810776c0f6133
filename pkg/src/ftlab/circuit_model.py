"""Located circuit diagrams, Pauli fault patterns and the i.i.d. Pauli noise model.

A circuit is a program-ordered list of operations on integer wires and
classical bits.  Noisy operations are :class:`Location` objects; everything
else (classical processing, Pauli-frame corrections, conditional swaps used
for ancilla selection, noiseless discards, analysis-only peeks and
communication-channel insertions) is noiseless and occupies no time.

Noise insertion follows the located-circuit convention: one Pauli after each
single-qubit gate and preparation, a pair of Paulis after a CNOT, and one
Pauli before a measurement or trace.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

from .pauli_core import PauliChannel

KINDS = (
    "pauli_x",
    "pauli_y",
    "pauli_z",
    "hadamard",
    "t_gate",
    "wait",
    "cnot",
    "prepare_z",
    "measure_z",
    "trace",
)
PAULI_KINDS = {"pauli_x": "X", "pauli_y": "Y", "pauli_z": "Z"}
CLASSICAL_KINDS = ("xor", "and", "or", "hamming_logical", "hamming_correction")
ENUMERATION_BUDGET = 10**7
LABEL_CODES = {"I": 0, "X": 1, "Y": 2, "Z": 3}
CODE_LABELS = "IXYZ"


class BudgetError(RuntimeError):
    """Raised when a request exceeds an enumeration, qubit or dimension cap."""


def out_degree(kind: str) -> int:
    if kind in ("measure_z", "trace"):
        return 0
    if kind == "cnot":
        return 2
    return 1


def slots_of(kind: str) -> int:
    return 2 if kind == "cnot" else 1


# ---------------------------------------------------------------------------
# Operations


@dataclass(frozen=True, slots=True)
class Location:
    id: int
    kind: str
    qubit_lines: tuple
    timestep: int = -1
    cbit: int = -1
    condition: int = -1
    tag: int = -1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown location kind {self.kind!r}")
        arity = 2 if self.kind == "cnot" else 1
        if len(self.qubit_lines) != arity:
            raise ValueError(f"{self.kind} acts on {arity} line(s)")
        if self.kind == "cnot" and self.qubit_lines[0] == self.qubit_lines[1]:
            raise ValueError("cnot needs two distinct lines")
        if self.kind == "measure_z" and self.cbit < 0:
            raise ValueError("measure_z needs an output bit")
        if self.condition >= 0 and self.kind not in PAULI_KINDS:
            raise ValueError("only Pauli gates may be classically controlled")

    @property
    def out_degree(self) -> int:
        return out_degree(self.kind)

    @property
    def wires(self) -> tuple:
        return self.qubit_lines


@dataclass(frozen=True, slots=True)
class Classical:
    """Noiseless classical processing on bits."""

    kind: str
    outs: tuple
    ins: tuple
    timestep: int = -1

    def __post_init__(self) -> None:
        if self.kind not in CLASSICAL_KINDS:
            raise ValueError(f"unknown classical op {self.kind!r}")
        if self.kind in ("hamming_logical", "hamming_correction") and len(self.ins) != 7:
            raise ValueError("Hamming decoding reads 7 bits")
        if self.kind == "hamming_correction" and len(self.outs) != 7:
            raise ValueError("Hamming correction writes 7 bits")
        if self.kind not in ("hamming_correction",) and len(self.outs) != 1:
            raise ValueError(f"{self.kind} writes a single bit")

    wires = ()


@dataclass(frozen=True, slots=True)
class FrameUpdate:
    """Noiseless (optionally bit-controlled) Pauli applied to each listed wire."""

    label: str
    qubits: tuple
    condition: int = -1
    timestep: int = -1

    @property
    def wires(self) -> tuple:
        return self.qubits


@dataclass(frozen=True, slots=True)
class CondSwap:
    """Swap the two wires of every pair when ``condition`` is 1."""

    pairs: tuple
    condition: int
    timestep: int = -1

    @property
    def wires(self) -> tuple:
        return tuple(w for pair in self.pairs for w in pair)


@dataclass(frozen=True, slots=True)
class Discard:
    """Noiseless removal of wires that are no longer needed."""

    qubits: tuple
    timestep: int = -1

    @property
    def wires(self) -> tuple:
        return self.qubits


@dataclass(frozen=True, slots=True)
class Peek:
    """Analysis-only read of a Z value that must be deterministic."""

    qubit: int
    cbit: int
    timestep: int = -1

    @property
    def wires(self) -> tuple:
        return (self.qubit,)


@dataclass(frozen=True, slots=True, eq=False)
class ChannelInsertion:
    """A single-qubit Pauli communication channel acting on one wire."""

    qubit: int
    channel: PauliChannel
    timestep: int = -1

    @property
    def wires(self) -> tuple:
        return (self.qubit,)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ChannelInsertion)
            and self.qubit == other.qubit
            and self.timestep == other.timestep
            and dict(self.channel.probs) == dict(other.channel.probs)
        )

    def __hash__(self) -> int:
        return hash((self.qubit, self.timestep, tuple(self.channel.probs.items())))


NOISELESS = (Classical, FrameUpdate, CondSwap, Discard, Peek, ChannelInsertion)


def reads_of(op) -> tuple:
    if isinstance(op, Location):
        return (op.condition,) if op.condition >= 0 else ()
    if isinstance(op, Classical):
        return op.ins
    if isinstance(op, (FrameUpdate,)):
        return (op.condition,) if op.condition >= 0 else ()
    if isinstance(op, CondSwap):
        return (op.condition,)
    return ()


def writes_of(op) -> tuple:
    if isinstance(op, Location):
        return (op.cbit,) if op.kind == "measure_z" else ()
    if isinstance(op, Classical):
        return op.outs
    if isinstance(op, Peek):
        return (op.cbit,)
    return ()


def with_timestep(op, t: int):
    if isinstance(op, Location):
        return Location(op.id, op.kind, op.qubit_lines, t, op.cbit, op.condition, op.tag)
    if isinstance(op, Classical):
        return Classical(op.kind, op.outs, op.ins, t)
    if isinstance(op, FrameUpdate):
        return FrameUpdate(op.label, op.qubits, op.condition, t)
    if isinstance(op, CondSwap):
        return CondSwap(op.pairs, op.condition, t)
    if isinstance(op, Discard):
        return Discard(op.qubits, t)
    if isinstance(op, Peek):
        return Peek(op.qubit, op.cbit, t)
    if isinstance(op, ChannelInsertion):
        return ChannelInsertion(op.qubit, op.channel, t)
    raise TypeError(op)


# ---------------------------------------------------------------------------
# Circuit diagrams


@dataclass(frozen=True, eq=False)
class CircuitDiagram:
    n_wires: int
    inputs: tuple
    outputs: tuple
    n_cbits: int
    classical_in: tuple
    classical_out: tuple
    ops: tuple
    scheduled: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        self._validate()

    # -- structure -----------------------------------------------------
    @property
    def n_in(self) -> int:
        return len(self.inputs)

    @property
    def n_out(self) -> int:
        return len(self.outputs)

    @property
    def locations(self) -> tuple:
        cached = self.__dict__.get("_locations")
        if cached is None:
            cached = tuple(op for op in self.ops if isinstance(op, Location))
            object.__setattr__(self, "_locations", cached)
        return cached

    @property
    def depth(self) -> int:
        if not self.scheduled:
            raise ValueError("circuit is not scheduled")
        return 1 + max((loc.timestep for loc in self.locations), default=-1)

    def wiring(self) -> list:
        """DAG edges ``(from_location_id, to_location_id, wire)`` between consecutive locations."""
        last: dict[int, int] = {}
        edges = []
        for loc in self.locations:
            for w in loc.qubit_lines:
                if w in last:
                    edges.append((last[w], loc.id, w))
                last[w] = loc.id
            if loc.kind in ("measure_z", "trace"):
                last.pop(loc.qubit_lines[0], None)
        return edges

    def slot_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Map every noise slot to (location id, position within the location)."""
        cached = self.__dict__.get("_slots")
        if cached is None:
            loc_ids, pos = [], []
            for loc in self.locations:
                for k in range(slots_of(loc.kind)):
                    loc_ids.append(loc.id)
                    pos.append(k)
            cached = (np.array(loc_ids, dtype=np.int64), np.array(pos, dtype=np.int64))
            object.__setattr__(self, "_slots", cached)
        return cached

    def count_kinds(self) -> dict:
        out: dict[str, int] = {}
        for loc in self.locations:
            out[loc.kind] = out.get(loc.kind, 0) + 1
        return out

    def peak_qubits(self) -> int:
        alive = set(self.inputs)
        peak = len(alive)
        for op in self.ops:
            if isinstance(op, Location) and op.kind == "prepare_z":
                alive.add(op.qubit_lines[0])
                peak = max(peak, len(alive))
            elif isinstance(op, Location) and op.kind in ("measure_z", "trace"):
                alive.discard(op.qubit_lines[0])
            elif isinstance(op, Discard):
                alive.difference_update(op.qubits)
        return peak

    # -- validation ----------------------------------------------------
    def _validate(self) -> None:
        alive = set(self.inputs)
        if len(alive) != len(self.inputs):
            raise ValueError("duplicate input wires")
        written = set(self.classical_in)
        expect_id = 0
        for op in self.ops:
            for b in reads_of(op):
                if b not in written:
                    raise ValueError(f"bit c{b} read before it is written ({op})")
            if isinstance(op, Location):
                if op.id != expect_id:
                    raise ValueError("location ids must be consecutive in program order")
                expect_id += 1
                if op.kind == "prepare_z":
                    w = op.qubit_lines[0]
                    if w in alive:
                        raise ValueError(f"prepare on live wire q{w}")
                    alive.add(w)
                else:
                    for w in op.qubit_lines:
                        if w not in alive:
                            raise ValueError(f"{op.kind} on dead wire q{w}")
                    if op.kind in ("measure_z", "trace"):
                        alive.discard(op.qubit_lines[0])
            elif isinstance(op, Discard):
                for w in op.qubits:
                    if w not in alive:
                        raise ValueError(f"discard of dead wire q{w}")
                    alive.discard(w)
            else:
                for w in op.wires:
                    if w not in alive:
                        raise ValueError(f"{type(op).__name__} on dead wire q{w}")
            for b in writes_of(op):
                written.add(b)
        if alive != set(self.outputs) or len(self.outputs) != len(set(self.outputs)):
            raise ValueError("live wires at the end must be exactly the outputs")
        for b in self.classical_out:
            if b not in written:
                raise ValueError(f"classical output c{b} never written")
        top = max([w for op in self.ops for w in op.wires] + list(self.inputs) + [-1])
        if top >= self.n_wires:
            raise ValueError("wire index out of range")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CircuitDiagram):
            return NotImplemented
        return (
            self.n_wires == other.n_wires
            and self.inputs == other.inputs
            and self.outputs == other.outputs
            and self.n_cbits == other.n_cbits
            and self.classical_in == other.classical_in
            and self.classical_out == other.classical_out
            and self.scheduled == other.scheduled
            and self.ops == other.ops
        )

    __hash__ = None  # type: ignore[assignment]


def slot_count(c: CircuitDiagram) -> int:
    return sum(slots_of(loc.kind) for loc in c.locations)


# ---------------------------------------------------------------------------
# Builder


class CircuitBuilder:
    """Append-only helper that allocates fresh wires and bits."""

    def __init__(self) -> None:
        self.ops: list = []
        self.n_wires = 0
        self.n_cbits = 0
        self._next_loc = 0
        self.tag = -1

    def wire(self) -> int:
        self.n_wires += 1
        return self.n_wires - 1

    def wires(self, k: int) -> list[int]:
        return [self.wire() for _ in range(k)]

    def bit(self) -> int:
        self.n_cbits += 1
        return self.n_cbits - 1

    def bits(self, k: int) -> list[int]:
        return [self.bit() for _ in range(k)]

    def loc(self, kind: str, *lines: int, cbit: int = -1, condition: int = -1) -> int:
        self.ops.append(Location(self._next_loc, kind, tuple(lines), -1, cbit, condition, self.tag))
        self._next_loc += 1
        return self._next_loc - 1

    def prep(self, w: int | None = None) -> int:
        if w is None:
            w = self.wire()
        self.loc("prepare_z", w)
        return w

    def h(self, w: int) -> None:
        self.loc("hadamard", w)

    def cnot(self, c: int, t: int) -> None:
        self.loc("cnot", c, t)

    def pauli(self, letter: str, w: int, condition: int = -1) -> None:
        self.loc({"X": "pauli_x", "Y": "pauli_y", "Z": "pauli_z"}[letter.upper()], w, condition=condition)

    def wait(self, w: int) -> None:
        self.loc("wait", w)

    def t(self, w: int) -> None:
        self.loc("t_gate", w)

    def measure(self, w: int, cbit: int | None = None) -> int:
        if cbit is None:
            cbit = self.bit()
        self.loc("measure_z", w, cbit=cbit)
        return cbit

    def trace(self, w: int) -> None:
        self.loc("trace", w)

    def classical(self, kind: str, ins: Sequence[int], n_out: int = 1) -> list[int]:
        outs = self.bits(n_out)
        self.ops.append(Classical(kind, tuple(outs), tuple(ins)))
        return outs

    def frame(self, label: str, qubits: Sequence[int], condition: int = -1) -> None:
        self.ops.append(FrameUpdate(label.upper(), tuple(qubits), condition))

    def cswap(self, pairs: Sequence[tuple[int, int]], condition: int) -> None:
        self.ops.append(CondSwap(tuple(tuple(p) for p in pairs), condition))

    def discard(self, qubits: Sequence[int]) -> None:
        self.ops.append(Discard(tuple(qubits)))

    def peek(self, w: int) -> int:
        b = self.bit()
        self.ops.append(Peek(w, b))
        return b

    def channel(self, w: int, ch: PauliChannel) -> None:
        self.ops.append(ChannelInsertion(w, ch))

    def append_op(self, op) -> None:
        if isinstance(op, Location):
            op = Location(self._next_loc, op.kind, op.qubit_lines, -1, op.cbit, op.condition, op.tag)
            self._next_loc += 1
        self.ops.append(op)

    def build(
        self,
        inputs: Sequence[int],
        outputs: Sequence[int],
        classical_in: Sequence[int] = (),
        classical_out: Sequence[int] = (),
        meta: dict | None = None,
    ) -> CircuitDiagram:
        return CircuitDiagram(
            self.n_wires,
            tuple(inputs),
            tuple(outputs),
            self.n_cbits,
            tuple(classical_in),
            tuple(classical_out),
            tuple(self.ops),
            False,
            dict(meta or {}),
        )


# ---------------------------------------------------------------------------
# Scheduling


def _op_time_kind(op) -> bool:
    return isinstance(op, Location)


def schedule(c: CircuitDiagram) -> CircuitDiagram:
    """Assign timesteps and insert explicit wait locations on idle live wires.

    Operations are placed as soon as possible, except that sub-circuits
    rooted in fresh preparations are pushed as late as their consumers allow,
    so ancillas are not prepared long before they are used.  Noiseless
    operations take no time: they happen at the end of their timestep.
    """
    if c.scheduled:
        return c
    ops = list(c.ops)
    n = len(ops)
    is_loc = [isinstance(op, Location) for op in ops]
    preds: list[list[int]] = [[] for _ in range(n)]
    last_wire: dict[int, int] = {}
    last_write: dict[int, int] = {}
    readers: dict[int, list[int]] = {}
    for i, op in enumerate(ops):
        ps = set()
        for w in op.wires:
            if w in last_wire:
                ps.add(last_wire[w])
        for b in reads_of(op):
            if b in last_write:
                ps.add(last_write[b])
        for b in writes_of(op):
            if b in last_write:
                ps.add(last_write[b])
            ps.update(readers.get(b, ()))
        ps.discard(i)
        preds[i] = sorted(ps)
        for w in op.wires:
            last_wire[w] = i
        for b in reads_of(op):
            readers.setdefault(b, []).append(i)
        for b in writes_of(op):
            last_write[b] = i
            readers[b] = []

    def gap(pred: int, succ: int) -> int:
        return 1 if is_loc[succ] else 0

    asap = [0] * n
    for i in range(n):
        t = 0 if is_loc[i] else -1
        for j in preds[i]:
            t = max(t, asap[j] + gap(j, i))
        asap[i] = t

    # a prep-rooted operation may slide later without lengthening any wire
    input_set = set(c.inputs)
    movable = [False] * n
    wire_prev_movable: dict[int, bool] = {w: False for w in input_set}
    for i, op in enumerate(ops):
        if isinstance(op, Location) and op.kind == "prepare_z":
            mv = True
        elif op.wires:
            mv = all(wire_prev_movable.get(w, False) for w in op.wires)
        else:
            mv = bool(preds[i]) and all(movable[j] for j in preds[i])
        movable[i] = mv
        for w in op.wires:
            wire_prev_movable[w] = mv
        if isinstance(op, Location) and op.kind in ("measure_z", "trace"):
            wire_prev_movable.pop(op.qubit_lines[0], None)
        if isinstance(op, Discard):
            for w in op.qubits:
                wire_prev_movable.pop(w, None)

    succs: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in preds[i]:
            succs[j].append(i)

    time = list(asap)
    INF = 1 << 60
    for i in range(n - 1, -1, -1):
        if not movable[i] or not succs[i]:
            continue
        latest = INF
        for s in succs[i]:
            if movable[s] and not any(True for _ in succs[s]):
                continue  # movable sinks follow their inputs in the forward pass
            latest = min(latest, time[s] - gap(i, s))
        if latest != INF and latest > time[i]:
            time[i] = latest
    for i in range(n):
        t = time[i]
        for j in preds[i]:
            t = max(t, time[j] + gap(j, i))
        time[i] = t

    final_t = max([time[i] for i in range(n) if is_loc[i]] + [-1])
    # live intervals and waits
    busy: dict[int, set] = {}
    born: dict[int, int] = {w: 0 for w in c.inputs}
    intervals: list[tuple[int, int, int]] = []
    for i, op in enumerate(ops):
        if isinstance(op, Location):
            for w in op.qubit_lines:
                busy.setdefault(w, set()).add(time[i])
            if op.kind == "prepare_z":
                born[op.qubit_lines[0]] = time[i]
            elif op.kind in ("measure_z", "trace"):
                w = op.qubit_lines[0]
                intervals.append((w, born.pop(w), time[i]))
        elif isinstance(op, Discard):
            for w in op.qubits:
                intervals.append((w, born.pop(w), time[i]))
    for w, start in born.items():
        intervals.append((w, start, final_t))

    # tag each wait with the provenance of the next location on its wire
    loc_events: dict[int, list[tuple[int, int]]] = {}
    for i, op in enumerate(ops):
        if isinstance(op, Location):
            for w in op.qubit_lines:
                loc_events.setdefault(w, []).append((time[i], op.tag))
    for w in loc_events:
        loc_events[w].sort()

    waits: list[tuple[int, int, int]] = []
    for w, start, end in intervals:
        b = busy.get(w, set())
        events = loc_events.get(w, [])
        times = [te for te, _ in events]
        for t in range(start, end + 1):
            if t in b:
                continue
            k = bisect.bisect_right(times, t)
            if k < len(events):
                tag = events[k][1]
            elif k > 0:
                tag = events[k - 1][1]
            else:
                tag = -1
            waits.append((t, w, tag))

    tagged = [(time[i], 0 if is_loc[i] else 1, i, ops[i]) for i in range(n)]
    tagged += [(t, 0, n + k, Location(0, "wait", (w,), t, -1, -1, tag)) for k, (t, w, tag) in enumerate(waits)]
    tagged.sort(key=lambda e: (e[0], e[1], e[2]))
    out_ops = []
    next_id = 0
    for t, _, _, op in tagged:
        if isinstance(op, Location):
            op = Location(next_id, op.kind, op.qubit_lines, t, op.cbit, op.condition, op.tag)
            next_id += 1
        else:
            op = with_timestep(op, t)
        out_ops.append(op)
    return CircuitDiagram(
        c.n_wires, c.inputs, c.outputs, c.n_cbits, c.classical_in, c.classical_out, tuple(out_ops), True, dict(c.meta)
    )


# ---------------------------------------------------------------------------
# Composition


def _remap_op(op, wmap: Mapping[int, int], boff: Mapping[int, int] | int):
    def b(x: int) -> int:
        if x < 0:
            return x
        return boff[x] if isinstance(boff, Mapping) else x + boff

    if isinstance(op, Location):
        return Location(
            0, op.kind, tuple(wmap[w] for w in op.qubit_lines), -1, b(op.cbit), b(op.condition), op.tag
        )
    if isinstance(op, Classical):
        return Classical(op.kind, tuple(b(x) for x in op.outs), tuple(b(x) for x in op.ins))
    if isinstance(op, FrameUpdate):
        return FrameUpdate(op.label, tuple(wmap[w] for w in op.qubits), b(op.condition))
    if isinstance(op, CondSwap):
        return CondSwap(tuple((wmap[x], wmap[y]) for x, y in op.pairs), b(op.condition))
    if isinstance(op, Discard):
        return Discard(tuple(wmap[w] for w in op.qubits))
    if isinstance(op, Peek):
        return Peek(wmap[op.qubit], b(op.cbit))
    if isinstance(op, ChannelInsertion):
        return ChannelInsertion(wmap[op.qubit], op.channel)
    raise TypeError(op)


def _append(builder: CircuitBuilder, c: CircuitDiagram, wmap: dict, bmap: dict) -> None:
    for w in range(c.n_wires):
        if w not in wmap:
            wmap[w] = builder.wire()
    for x in range(c.n_cbits):
        if x not in bmap:
            bmap[x] = builder.bit()
    for op in c.ops:
        builder.append_op(_remap_op(op, wmap, bmap))


def compose_serial(a: CircuitDiagram, b: CircuitDiagram) -> CircuitDiagram:
    """Run ``a`` then ``b``; a's quantum (and classical, if sizes agree) outputs feed b."""
    if a.n_out != b.n_in:
        raise ValueError(f"arity mismatch: {a.n_out} outputs vs {b.n_in} inputs")
    if b.classical_in and len(b.classical_in) != len(a.classical_out):
        raise ValueError("classical arity mismatch")
    builder = CircuitBuilder()
    wa: dict = {}
    ba: dict = {}
    _append(builder, a, wa, ba)
    wb = {w: wa[o] for w, o in zip(b.inputs, a.outputs)}
    bb = {x: ba[o] for x, o in zip(b.classical_in, a.classical_out)}
    _append(builder, b, wb, bb)
    return builder.build(
        [wa[w] for w in a.inputs],
        [wb[w] for w in b.outputs],
        [ba[x] for x in a.classical_in],
        [bb[x] for x in b.classical_out],
    )


def compose_parallel(a: CircuitDiagram, b: CircuitDiagram) -> CircuitDiagram:
    builder = CircuitBuilder()
    wa: dict = {}
    ba: dict = {}
    _append(builder, a, wa, ba)
    wb: dict = {}
    bb: dict = {}
    _append(builder, b, wb, bb)
    return builder.build(
        [wa[w] for w in a.inputs] + [wb[w] for w in b.inputs],
        [wa[w] for w in a.outputs] + [wb[w] for w in b.outputs],
        [ba[x] for x in a.classical_in] + [bb[x] for x in b.classical_in],
        [ba[x] for x in a.classical_out] + [bb[x] for x in b.classical_out],
    )


def concatenate(*parts: CircuitDiagram) -> CircuitDiagram:
    """Serial composition of scheduled circuits that keeps every part's schedule.

    Part k starts after part k-1 has finished, so locations (and noise slots)
    of earlier parts come first in the result.
    """
    if not parts:
        raise ValueError("nothing to concatenate")
    for c in parts:
        if not c.scheduled:
            raise ValueError("concatenate expects scheduled circuits")
    builder = CircuitBuilder()
    ops = []
    offset = 0
    prev_out: list = []
    prev_cout: list = []
    first_in: list = []
    first_cin: list = []
    next_id = 0
    for k, c in enumerate(parts):
        if k and c.n_in != len(prev_out):
            raise ValueError(f"arity mismatch: {len(prev_out)} outputs vs {c.n_in} inputs")
        wmap = {w: o for w, o in zip(c.inputs, prev_out)}
        bmap = {x: o for x, o in zip(c.classical_in, prev_cout)} if k else {}
        for w in range(c.n_wires):
            if w not in wmap:
                wmap[w] = builder.wire()
        for x in range(c.n_cbits):
            if x not in bmap:
                bmap[x] = builder.bit()
        if k == 0:
            first_in = [wmap[w] for w in c.inputs]
            first_cin = [bmap[x] for x in c.classical_in]
        for op in c.ops:
            new = with_timestep(_remap_op(op, wmap, bmap), op.timestep + offset)
            if isinstance(new, Location):
                new = Location(next_id, new.kind, new.qubit_lines, new.timestep, new.cbit, new.condition, new.tag)
                next_id += 1
            ops.append(new)
        offset += c.depth if c.locations else 0
        prev_out = [wmap[w] for w in c.outputs]
        prev_cout = [bmap[x] for x in c.classical_out]
    return CircuitDiagram(
        builder.n_wires,
        tuple(first_in),
        tuple(prev_out),
        builder.n_cbits,
        tuple(first_cin),
        tuple(prev_cout),
        tuple(ops),
        True,
        {"parts": len(parts)},
    )


# ---------------------------------------------------------------------------
# Fault patterns and the noise model


@dataclass(frozen=True)
class NoiseModel:
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"fault probability {self.p} outside [0, 1]")


@dataclass(frozen=True)
class FaultPattern:
    """Pauli labels per location: one letter, or two letters for a CNOT.

    Only non-identity assignments are stored; every other location carries
    the identity label.
    """

    n_locations: int
    assignments: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for lid, label in self.assignments.items():
            label = str(label).upper()
            if not 0 <= int(lid) < self.n_locations:
                raise ValueError(f"location {lid} out of range")
            if any(ch not in "IXYZ" for ch in label) or len(label) not in (1, 2):
                raise ValueError(f"bad fault label {label!r}")
            if set(label) != {"I"}:
                clean[int(lid)] = label
        object.__setattr__(self, "assignments", dict(sorted(clean.items())))

    def label(self, lid: int, kind: str) -> str:
        default = "II" if kind == "cnot" else "I"
        return self.assignments.get(lid, default)

    def check(self, c: CircuitDiagram) -> None:
        if self.n_locations != len(c.locations):
            raise ValueError("pattern does not match the circuit's locations")
        for lid, label in self.assignments.items():
            want = slots_of(c.locations[lid].kind)
            if len(label) != want:
                raise ValueError(f"location {lid} needs a {want}-letter label")

    def weight(self) -> int:
        return sum(sum(ch != "I" for ch in lab) for lab in self.assignments.values())

    def slot_faults(self, c: CircuitDiagram) -> tuple[np.ndarray, np.ndarray]:
        """(slot indices, Pauli codes) of the non-identity slots."""
        self.check(c)
        loc_ids, pos = c.slot_table()
        first = np.searchsorted(loc_ids, np.arange(len(c.locations)))
        slots, codes = [], []
        for lid, label in self.assignments.items():
            for k, ch in enumerate(label):
                if ch != "I":
                    slots.append(int(first[lid]) + k)
                    codes.append(LABEL_CODES[ch])
        return np.array(slots, dtype=np.int64), np.array(codes, dtype=np.int8)

    @classmethod
    def from_slot_faults(cls, c: CircuitDiagram, slots: Sequence[int], codes: Sequence[int]) -> "FaultPattern":
        loc_ids, pos = c.slot_table()
        labels: dict[int, list[str]] = {}
        for s, code in zip(slots, codes):
            lid = int(loc_ids[s])
            cur = labels.setdefault(lid, list("I" * slots_of(c.locations[lid].kind)))
            cur[int(pos[s])] = CODE_LABELS[int(code)]
        return cls(len(c.locations), {k: "".join(v) for k, v in labels.items()})

    def restrict(self, location_ids: Sequence[int]) -> dict:
        keep = set(location_ids)
        return {k: v for k, v in self.assignments.items() if k in keep}

    def to_json(self) -> str:
        return json.dumps({"n_locations": self.n_locations, "assignments": {str(k): v for k, v in self.assignments.items()}})

    @classmethod
    def from_json(cls, text: str) -> "FaultPattern":
        data = json.loads(text)
        return cls(int(data["n_locations"]), {int(k): v for k, v in data["assignments"].items()})


def fault_pattern_probability(c: CircuitDiagram, f: FaultPattern, nm: NoiseModel) -> float:
    f.check(c)
    total = slot_count(c)
    k = f.weight()
    return (1.0 - nm.p) ** (total - k) * (nm.p / 3.0) ** k


def sample_slot_faults(n_slots: int, p: float, trials: int, rng: np.random.Generator):
    """Sparse i.i.d. faults: arrays (trial, slot, code) sorted by slot."""
    if p <= 0.0 or n_slots == 0 or trials == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=np.int8)
    space = n_slots * trials
    if p >= 1.0:
        flat = np.arange(space, dtype=np.int64)
    else:
        k = int(rng.binomial(space, p))
        flat = np.sort(rng.choice(space, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    slots = flat // trials
    trial = flat % trials
    codes = rng.integers(1, 4, size=flat.size).astype(np.int8)
    return trial, slots, codes


def sample_fixed_weight(n_slots: int, weight: int, trials: int, rng: np.random.Generator):
    """Exactly ``weight`` distinct faulty slots per trial, uniformly placed."""
    if weight == 0 or trials == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=np.int8)
    if weight > n_slots:
        raise ValueError("weight exceeds slot count")
    keys = rng.random((trials, n_slots)) if n_slots <= 4096 else None
    if keys is not None:
        slots = np.argpartition(keys, weight - 1, axis=1)[:, :weight]
    else:
        slots = np.empty((trials, weight), dtype=np.int64)
        filled = np.zeros(trials, dtype=np.int64)
        slots[:, 0] = rng.integers(0, n_slots, trials)
        filled[:] = 1
        for j in range(1, weight):
            cand = rng.integers(0, n_slots, trials)
            bad = (slots[:, :j] == cand[:, None]).any(axis=1)
            while bad.any():
                cand[bad] = rng.integers(0, n_slots, int(bad.sum()))
                bad = (slots[:, :j] == cand[:, None]).any(axis=1)
            slots[:, j] = cand
    trial = np.repeat(np.arange(trials, dtype=np.int64), weight)
    flat_slots = slots.reshape(-1).astype(np.int64)
    codes = rng.integers(1, 4, size=flat_slots.size).astype(np.int8)
    order = np.argsort(flat_slots, kind="stable")
    return trial[order], flat_slots[order], codes[order]


def sample_fault_pattern(c: CircuitDiagram, nm: NoiseModel, seed: int) -> FaultPattern:
    rng = np.random.default_rng(seed)
    n = slot_count(c)
    faulty = rng.random(n) < nm.p
    codes = rng.integers(1, 4, size=n)
    idx = np.nonzero(faulty)[0]
    return FaultPattern.from_slot_faults(c, idx, codes[idx])


def pattern_count(n_slots: int, w: int) -> int:
    return sum(math.comb(n_slots, k) * 3**k for k in range(w + 1))


def weight_polynomial(k: int, n_slots: int, degree: int) -> tuple:
    """Exact coefficients of (p/3)^k (1-p)^(N-k) in powers of p up to ``degree``."""
    coeffs = [Fraction(0)] * (degree + 1)
    m = n_slots - k
    for j in range(0, degree - k + 1):
        coeffs[k + j] = Fraction(math.comb(m, j) * (-1) ** j, 3**k)
    return tuple(coeffs)


def enumerate_patterns_up_to_weight(c: CircuitDiagram, w: int) -> Iterator[tuple[FaultPattern, tuple]]:
    n = slot_count(c)
    if pattern_count(n, w) > ENUMERATION_BUDGET:
        raise BudgetError(f"{pattern_count(n, w)} patterns exceed the enumeration budget")
    for k in range(w + 1):
        poly = weight_polynomial(k, n, w)
        for slots in itertools.combinations(range(n), k):
            for codes in itertools.product((1, 2, 3), repeat=k):
                yield FaultPattern.from_slot_faults(c, slots, codes), poly


def enumerate_slot_faults(n_slots: int, w: int):
    """All patterns of exact weight ``w`` as flat arrays (pattern, slot, code)."""
    if math.comb(n_slots, w) * 3**w > ENUMERATION_BUDGET:
        raise BudgetError("weight enumeration exceeds the budget")
    if w == 0:
        empty = np.zeros(0, dtype=np.int64)
        return 1, empty, empty, np.zeros(0, dtype=np.int8)
    combos = np.array(list(itertools.combinations(range(n_slots), w)), dtype=np.int64).reshape(-1, w)
    paulis = np.array(list(itertools.product((1, 2, 3), repeat=w)), dtype=np.int8).reshape(-1, w)
    nc, npl = combos.shape[0], paulis.shape[0]
    slots = np.repeat(combos, npl, axis=0)
    codes = np.tile(paulis, (nc, 1))
    count = nc * npl
    trial = np.repeat(np.arange(count, dtype=np.int64), w)
    return count, trial, slots.reshape(-1), codes.reshape(-1)


# ---------------------------------------------------------------------------
# Text format

_TOKEN_ARGS = {"H": 1, "X": 1, "Y": 1, "Z": 1, "T": 1, "WAIT": 1, "PREP": 1, "TRACE": 1, "CNOT": 2, "MEASZ": 1}
_KIND_TOKEN = {
    "hadamard": "H",
    "pauli_x": "X",
    "pauli_y": "Y",
    "pauli_z": "Z",
    "t_gate": "T",
    "wait": "WAIT",
    "prepare_z": "PREP",
    "trace": "TRACE",
    "cnot": "CNOT",
    "measure_z": "MEASZ",
}
_TOKEN_KIND = {v: k for k, v in _KIND_TOKEN.items()}


def _q(w: int) -> str:
    return f"q{w}"


def _c(b: int) -> str:
    return f"c{b}"


def _op_text(op) -> str:
    if isinstance(op, Location):
        s = _KIND_TOKEN[op.kind] + " " + " ".join(_q(w) for w in op.qubit_lines)
        if op.kind == "measure_z":
            s += " -> " + _c(op.cbit)
        if op.condition >= 0:
            s += " if " + _c(op.condition)
        if op.tag >= 0:
            s += f" @{op.tag}"
        return s
    if isinstance(op, Classical):
        return f"{op.kind.upper()} " + " ".join(map(_c, op.outs)) + " = " + " ".join(map(_c, op.ins))
    if isinstance(op, FrameUpdate):
        s = f"FRAME {op.label} " + " ".join(map(_q, op.qubits))
        return s + (f" if {_c(op.condition)}" if op.condition >= 0 else "")
    if isinstance(op, CondSwap):
        return "CSWAP " + " ".join(f"{_q(a)}:{_q(b)}" for a, b in op.pairs) + f" if {_c(op.condition)}"
    if isinstance(op, Discard):
        return "DISCARD " + " ".join(map(_q, op.qubits))
    if isinstance(op, Peek):
        return f"PEEK {_q(op.qubit)} -> {_c(op.cbit)}"
    if isinstance(op, ChannelInsertion):
        return f"CHANNEL {_q(op.qubit)} " + " ".join(f"{k}={v!r}" for k, v in op.channel.probs.items())
    raise TypeError(op)


def to_text(c: CircuitDiagram) -> str:
    """One line per timestep (scheduled) or per operation (unscheduled); ';' separates tokens."""
    head = [
        "# ftlab circuit",
        f"wires {c.n_wires}",
        f"cbits {c.n_cbits}",
        "inputs " + " ".join(map(_q, c.inputs)),
        "outputs " + " ".join(map(_q, c.outputs)),
        "cin " + " ".join(map(_c, c.classical_in)),
        "cout " + " ".join(map(_c, c.classical_out)),
        "scheduled " + ("yes" if c.scheduled else "no"),
    ]
    body: list[str] = []
    if c.scheduled:
        groups: dict[int, list[str]] = {}
        for op in c.ops:
            groups.setdefault(max(op.timestep, -1), []).append(_op_text(op))
        for t in range(-1, max(groups) + 1 if groups else 0):
            items = groups.get(t, [])
            if t == -1 and not items:
                continue
            body.append(f"{t}: " + "; ".join(items))
    else:
        body = [_op_text(op) for op in c.ops]
    return "\n".join(head + body) + "\n"


def _parse_bit(tok: str) -> int:
    if not tok.startswith("c"):
        raise ValueError(f"expected a bit, got {tok!r}")
    return int(tok[1:])


def _parse_wire(tok: str) -> int:
    if not tok.startswith("q"):
        raise ValueError(f"expected a wire, got {tok!r}")
    return int(tok[1:])


def _parse_op(text: str, t: int, loc_id: int):
    tag = -1
    m = re.search(r"\s@(\d+)\s*$", text)
    if m:
        tag = int(m.group(1))
        text = text[: m.start()]
    cond = -1
    m = re.search(r"\sif\s+(c\d+)\s*$", text)
    if m:
        cond = _parse_bit(m.group(1))
        text = text[: m.start()]
    toks = text.split()
    head = toks[0].upper()
    if head in _TOKEN_KIND:
        kind = _TOKEN_KIND[head]
        cbit = -1
        if kind == "measure_z":
            if len(toks) != 4 or toks[2] != "->":
                raise ValueError(f"bad measurement {text!r}")
            cbit = _parse_bit(toks[3])
            lines = (_parse_wire(toks[1]),)
        else:
            lines = tuple(_parse_wire(x) for x in toks[1:])
            if len(lines) != _TOKEN_ARGS[head]:
                raise ValueError(f"bad arity in {text!r}")
        return Location(loc_id, kind, lines, t, cbit, cond, tag)
    if head.lower() in CLASSICAL_KINDS:
        eq = toks.index("=")
        return Classical(head.lower(), tuple(map(_parse_bit, toks[1:eq])), tuple(map(_parse_bit, toks[eq + 1 :])), t)
    if head == "FRAME":
        return FrameUpdate(toks[1].upper(), tuple(map(_parse_wire, toks[2:])), cond, t)
    if head == "CSWAP":
        pairs = tuple(tuple(_parse_wire(x) for x in tok.split(":")) for tok in toks[1:])
        return CondSwap(pairs, cond, t)
    if head == "DISCARD":
        return Discard(tuple(map(_parse_wire, toks[1:])), t)
    if head == "PEEK":
        return Peek(_parse_wire(toks[1]), _parse_bit(toks[3]), t)
    if head == "CHANNEL":
        probs = {}
        for tok in toks[2:]:
            k, v = tok.split("=")
            probs[k] = float(v)
        return ChannelInsertion(_parse_wire(toks[1]), PauliChannel(len(next(iter(probs))), probs), t)
    raise ValueError(f"unknown token {head!r}")


def from_text(text: str) -> CircuitDiagram:
    header: dict[str, list[str]] = {}
    ops = []
    loc_id = 0
    scheduled = False
    body_lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key = line.split()[0]
        if key in ("wires", "cbits", "inputs", "outputs", "cin", "cout", "scheduled"):
            header[key] = line.split()[1:]
            continue
        body_lines.append(line)
    scheduled = header.get("scheduled", ["no"])[0] == "yes"
    for idx, line in enumerate(body_lines):
        t = -1
        m = re.match(r"^(-?\d+):\s*(.*)$", line)
        if m:
            t = int(m.group(1))
            line = m.group(2)
        elif scheduled:
            t = idx
        for part in [p.strip() for p in line.split(";") if p.strip()]:
            op = _parse_op(part, t if scheduled else -1, loc_id)
            if isinstance(op, Location):
                loc_id += 1
            ops.append(op)
    wires = [_parse_wire(x) for x in header.get("inputs", [])]
    outs = [_parse_wire(x) for x in header.get("outputs", [])]
    n_wires = int(header["wires"][0]) if "wires" in header else 1 + max(
        [w for op in ops for w in op.wires] + wires + outs + [-1]
    )
    all_bits = [b for op in ops for b in reads_of(op) + writes_of(op)]
    n_cbits = int(header["cbits"][0]) if "cbits" in header else 1 + max(all_bits + [-1])
    return CircuitDiagram(
        n_wires,
        tuple(wires),
        tuple(outs),
        n_cbits,
        tuple(_parse_bit(x) for x in header.get("cin", [])),
        tuple(_parse_bit(x) for x in header.get("cout", [])),
        tuple(ops),
        scheduled,
    )
