"""The 7-qubit Steane code, its concatenation and fault-tolerant gadgets.

Syndrome bits are ordered like the generators: bits 0..2 come from the X-type
checks (they detect Z errors) and bits 3..5 from the Z-type checks (they
detect X errors).  Check row k acts on the qubits where column j (0-based)
of the Hamming matrix has a 1, i.e. qubit j sits at position j+1 read as a
3-bit binary number with row 0 as the most significant bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit_model import (
    ChannelInsertion,
    CircuitBuilder,
    CircuitDiagram,
    Classical,
    CondSwap,
    Discard,
    FaultPattern,
    FrameUpdate,
    Location,
    NoiseModel,
    Peek,
    sample_fixed_weight,
    schedule,
    slot_count,
    to_text,
)
from .pauli_core import PauliString, commutes

HAMMING = np.array(
    [
        [0, 0, 0, 1, 1, 1, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [1, 0, 1, 0, 1, 0, 1],
    ],
    dtype=np.uint8,
)
BLOCK = 7
ATTEMPTS = 3
SUPPORTED_LEVELS = (1, 2)


# ---------------------------------------------------------------------------
# Code description


@dataclass(frozen=True)
class CodeSpec:
    n_phys: int
    generators: tuple
    logical_x: PauliString
    logical_z: PauliString
    syndrome_table: Mapping

    def syndrome(self, e: PauliString) -> tuple:
        return tuple(0 if commutes(g, e) else 1 for g in self.generators)

    def correction(self, s: Sequence[int]) -> PauliString:
        return self.syndrome_table[tuple(int(b) for b in s)]


@dataclass(frozen=True)
class ConcatenatedCode:
    level: int
    base: CodeSpec

    @property
    def n_phys(self) -> int:
        return self.base.n_phys**self.level

    @property
    def syndrome_qubits(self) -> int:
        return self.n_phys - 1


def _position(bits: Sequence[int]) -> int:
    """Qubit index flagged by a 3-bit Hamming syndrome, or -1 for zero."""
    return 4 * int(bits[0]) + 2 * int(bits[1]) + int(bits[2]) - 1


@lru_cache(maxsize=1)
def steane_spec() -> CodeSpec:
    gens = []
    for letter in "XZ":
        for row in HAMMING:
            gens.append(PauliString.from_label("".join(letter if b else "I" for b in row)))
    table = {}
    for s in itertools.product((0, 1), repeat=6):
        zpos = _position(s[:3])
        xpos = _position(s[3:])
        x = [0] * 7
        z = [0] * 7
        if xpos >= 0:
            x[xpos] = 1
        if zpos >= 0:
            z[zpos] = 1
        table[s] = PauliString(7, tuple(x), tuple(z), 0)
    return CodeSpec(
        7,
        tuple(gens),
        PauliString.from_label("X" * 7),
        PauliString.from_label("Z" * 7),
        table,
    )


def concatenated(level: int) -> ConcatenatedCode:
    if level < 1:
        raise ValueError("level must be at least 1")
    return ConcatenatedCode(level, steane_spec())


# ---------------------------------------------------------------------------
# GF(2) helpers and the CSS encoder


def _gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One solution of a x = b over GF(2)."""
    a = a.copy() % 2
    b = b.copy() % 2
    m, n = a.shape
    pivots = []
    row = 0
    for col in range(n):
        hit = [r for r in range(row, m) if a[r, col]]
        if not hit:
            continue
        r = hit[0]
        a[[row, r]] = a[[r, row]]
        b[[row, r]] = b[[r, row]]
        for rr in range(m):
            if rr != row and a[rr, col]:
                a[rr] ^= a[row]
                b[rr] ^= b[row]
        pivots.append(col)
        row += 1
    if any(b[r] for r in range(row, m)):
        raise ValueError("inconsistent system")
    x = np.zeros(n, dtype=np.uint8)
    for r, col in enumerate(pivots):
        x[col] = b[r]
    return x


def gf2_inverse(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    aug = np.concatenate([a % 2, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        hit = [r for r in range(col, n) if aug[r, col]]
        if not hit:
            raise ValueError("singular matrix")
        aug[[col, hit[0]]] = aug[[hit[0], col]]
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] ^= aug[col]
    return aug[:, n:]


@dataclass(frozen=True)
class EncoderLayout:
    """Unitary encoder U = N * H_a for the block code.

    ``data`` hosts the logical qubit, ``a`` the three qubits whose |1>
    flags an X-check syndrome bit and ``b`` the three for the Z-checks.
    ``cnots`` is the network N in application order.
    """

    data: int
    a: tuple
    b: tuple
    cnots: tuple
    x_images: np.ndarray


@lru_cache(maxsize=1)
def encoder_layout() -> EncoderLayout:
    ones = np.ones(7, dtype=np.uint8)
    pure_x = []
    for k in range(3):
        rhs = np.zeros(4, dtype=np.uint8)
        rhs[k] = 1
        pure_x.append(_gf2_solve(np.vstack([HAMMING, ones]), rhs))
    roles = ["d", "a0", "a1", "a2", "b0", "b1", "b2"]
    images = np.vstack([ones, HAMMING, np.array(pure_x)]).astype(np.uint8)
    m = images.copy()
    assigned: dict[str, int] = {}
    ops = []
    free_rows = list(range(7))
    for col in range(7):
        row = next(r for r in free_rows if m[r, col])
        free_rows.remove(row)
        assigned[roles[row]] = col
        for k in range(7):
            if k != col and m[row, k]:
                m[:, k] ^= m[:, col]
                ops.append((col, k))
    cnots = tuple(reversed(ops))
    return EncoderLayout(
        assigned["d"],
        tuple(assigned[f"a{k}"] for k in range(3)),
        tuple(assigned[f"b{k}"] for k in range(3)),
        cnots,
        images,
    )


# ---------------------------------------------------------------------------
# Ideal encoder and decoder circuits


def _ideal_decode_block(b: CircuitBuilder, wires: Sequence[int]) -> tuple[int, list[int]]:
    lay = encoder_layout()
    for c, t in reversed(lay.cnots):
        b.cnot(wires[c], wires[t])
    for q in lay.a:
        b.h(wires[q])
    syn = [wires[q] for q in lay.a + lay.b]
    data = wires[lay.data]
    peeks = [b.peek(w) for w in syn]
    fix_x = b.classical("or", peeks[3:])[0]
    fix_z = b.classical("or", peeks[:3])[0]
    b.frame("X", [data], fix_x)
    b.frame("Z", [data], fix_z)
    return data, syn


def _ideal_encode_block(b: CircuitBuilder, data: int, syn: Sequence[int]) -> list[int]:
    lay = encoder_layout()
    peeks = [b.peek(w) for w in syn]
    fix_x = b.classical("or", peeks[3:])[0]
    fix_z = b.classical("or", peeks[:3])[0]
    b.frame("Z", [data], fix_z)
    b.frame("X", [data], fix_x)
    wires = [0] * 7
    wires[lay.data] = data
    for q, w in zip(lay.a + lay.b, syn):
        wires[q] = w
    for q in lay.a:
        b.h(wires[q])
    for c, t in lay.cnots:
        b.cnot(wires[c], wires[t])
    return wires


def _check_level(level: int) -> None:
    if level not in SUPPORTED_LEVELS:
        raise ValueError(f"unsupported level {level}; circuits exist for levels 1 and 2")


def _decode_recursive(b: CircuitBuilder, wires: Sequence[int], level: int) -> tuple[int, list[int]]:
    if level == 1:
        return _ideal_decode_block(b, wires)
    size = BLOCK ** (level - 1)
    inner_data, inner_syn = [], []
    for j in range(BLOCK):
        d, s = _decode_recursive(b, wires[j * size : (j + 1) * size], level - 1)
        inner_data.append(d)
        inner_syn.append(s)
    d, s = _ideal_decode_block(b, inner_data)
    return d, s + [w for block in inner_syn for w in block]


def _encode_recursive(b: CircuitBuilder, data: int, syn: Sequence[int], level: int) -> list[int]:
    if level == 1:
        return _ideal_encode_block(b, data, syn)
    size = BLOCK ** (level - 1)
    inner = size - 1
    outer = _ideal_encode_block(b, data, syn[:6])
    out = []
    for j in range(BLOCK):
        out += _encode_recursive(b, outer[j], syn[6 + j * inner : 6 + (j + 1) * inner], level - 1)
    return out


def ideal_decoder_circuit(level: int) -> CircuitDiagram:
    """Noise-free basis change block -> (data qubit, syndrome qubits)."""
    _check_level(level)
    b = CircuitBuilder()
    wires = b.wires(BLOCK**level)
    d, syn = _decode_recursive(b, wires, level)
    return b.build(wires, [d] + syn, meta={"kind": "ideal_decoder", "level": level})


def ideal_encoder_circuit(level: int) -> CircuitDiagram:
    """Inverse of :func:`ideal_decoder_circuit` on syndrome basis states."""
    _check_level(level)
    b = CircuitBuilder()
    data = b.wire()
    syn = b.wires(BLOCK**level - 1)
    out = _encode_recursive(b, data, syn, level)
    return b.build([data] + syn, out, meta={"kind": "ideal_encoder", "level": level})


# ---------------------------------------------------------------------------
# Frame-level ideal decoding


def _hamming_syndrome_bits(v: np.ndarray) -> np.ndarray:
    return (v.astype(np.uint8) @ HAMMING.T) % 2


def decode_block_frames(x: np.ndarray, z: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Logical Pauli (x, z) bits left on a block after ideal decoding.

    ``x`` and ``z`` have shape (trials, 7**level).
    """
    x = np.asarray(x, dtype=bool)
    z = np.asarray(z, dtype=bool)
    if level > 1:
        t = x.shape[0]
        size = BLOCK ** (level - 1)
        ix, iz = decode_block_frames(x.reshape(t * BLOCK, size), z.reshape(t * BLOCK, size), level - 1)
        return decode_block_frames(ix.reshape(t, BLOCK), iz.reshape(t, BLOCK), 1)
    sx = _hamming_syndrome_bits(x).any(axis=1)
    sz = _hamming_syndrome_bits(z).any(axis=1)
    lx = (x.sum(axis=1) % 2).astype(bool) ^ sx
    lz = (z.sum(axis=1) % 2).astype(bool) ^ sz
    return lx, lz


def frame_syndrome(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Level-1 syndrome bits (X-check bits first) of Pauli frames, shape (trials, 6)."""
    return np.concatenate([_hamming_syndrome_bits(z), _hamming_syndrome_bits(x)], axis=1).astype(bool)


def decode_pauli(e: PauliString, level: int = 1) -> PauliString:
    """Logical Pauli (phase dropped) left after ideal decoding of ``e``."""
    lx, lz = decode_block_frames(np.array([e.x_bits]), np.array([e.z_bits]), level)
    return PauliString(1, (int(lx[0]),), (int(lz[0]),), 0)


# ---------------------------------------------------------------------------
# Encoding and verification circuits for ancilla blocks

PIVOTS = (0, 1, 3)
# rounds of three disjoint CNOTs; pivot q copies onto the rest of its check row
_ENCODER_ROUNDS = (
    ((0, 2), (1, 5), (3, 6)),
    ((0, 4), (1, 6), (3, 5)),
    ((0, 6), (1, 2), (3, 4)),
)


def _coset_weights() -> np.ndarray:
    stab = [np.zeros(7, dtype=np.uint8)]
    for r in range(1, 8):
        stab.append(np.array([(r >> (2 - k)) & 1 for k in range(3)], dtype=np.uint8) @ HAMMING % 2)
    weights = np.zeros(128, dtype=np.int64)
    for e in range(128):
        v = np.array([(e >> j) & 1 for j in range(7)], dtype=np.uint8)
        weights[e] = min(int(((v + s) % 2).sum()) for s in stab)
    return weights


def _bits_to_int(v: Iterable[int]) -> int:
    return sum(int(b) << j for j, b in enumerate(v))


def _single_fault_x_errors(cnots: Sequence[tuple[int, int]]) -> list[int]:
    """X errors on the block produced by one fault during the encoding CNOTs."""
    outs = set()
    steps = len(cnots)
    for start in range(-1, steps):
        seeds = []
        for q in range(7):
            seeds.append({q})
        if start >= 0:
            c, t = cnots[start]
            seeds.append({c, t})
        for seed in seeds:
            v = [0] * 7
            for q in seed:
                v[q] = 1
            for c, t in cnots[start + 1 :]:
                if v[c]:
                    v[t] ^= 1
            outs.add(_bits_to_int(v))
    return sorted(outs)


@lru_cache(maxsize=1)
def verification_plan() -> tuple[tuple, tuple]:
    """Pick a CNOT order and a weight-3 check support that catches every dangerous error."""
    weights = _coset_weights()
    codewords = []
    # weight-3 words of the Hamming code double as logical representatives
    for v in range(128):
        bits = np.array([(v >> j) & 1 for j in range(7)], dtype=np.uint8)
        if bits.sum() == 3 and not ((HAMMING @ bits) % 2).any():
            codewords.append(tuple(int(j) for j in np.nonzero(bits)[0]))
    for order in itertools.permutations(range(3)):
        cnots = tuple(g for r in order for g in _ENCODER_ROUNDS[r])
        errors = _single_fault_x_errors(cnots)
        for support in codewords:
            ok = True
            for e in errors:
                caught = sum((e >> j) & 1 for j in support) % 2 == 1
                if weights[e] >= 2 and not caught:
                    ok = False
                    break
            if ok:
                return cnots, support
    raise RuntimeError("no single-flag verification plan found")


def _encode_block(b: CircuitBuilder, basis: str) -> list[int]:
    cnots, _ = verification_plan()
    w = [b.prep() for _ in range(BLOCK)]
    if basis == "Z":
        for q in PIVOTS:
            b.h(w[q])
        for c, t in cnots:
            b.cnot(w[c], w[t])
    else:
        for q in range(BLOCK):
            if q not in PIVOTS:
                b.h(w[q])
        for c, t in cnots:
            b.cnot(w[t], w[c])
    return w


def verified_block(b: CircuitBuilder, basis: str, attempts: int = ATTEMPTS) -> list[int]:
    """Encoded |0> (basis 'Z') or |+> (basis 'X') checked by one flag qubit.

    ``attempts`` copies are prepared side by side; the first accepted copy is
    swapped into place and the others are discarded.  If every copy is
    rejected the last one is used.
    """
    _, support = verification_plan()
    blocks, flags = [], []
    for _ in range(attempts):
        w = _encode_block(b, basis)
        f = b.prep()
        if basis == "Z":
            for j in support:
                b.cnot(w[j], f)
        else:
            b.h(f)
            for j in support:
                b.cnot(f, w[j])
            b.h(f)
        flags.append(b.measure(f))
        blocks.append(w)
    if attempts > 1:
        b.cswap(list(zip(blocks[0], blocks[1])), flags[0])
        cond = flags[0]
        for k in range(2, attempts):
            cond = b.classical("and", [cond, flags[k - 1]])[0]
            b.cswap(list(zip(blocks[0], blocks[k])), cond)
        for blk in blocks[1:]:
            b.discard(blk)
    return blocks[0]


def steane_ec(b: CircuitBuilder, data: Sequence[int], attempts: int = ATTEMPTS) -> None:
    """Steane-style correction: X errors via an encoded |+>, then Z errors via an encoded |0>."""
    plus = verified_block(b, "X", attempts)
    for d, a in zip(data, plus):
        b.cnot(d, a)
    bits = [b.measure(a) for a in plus]
    corr = b.classical("hamming_correction", bits, 7)
    for d, c in zip(data, corr):
        b.frame("X", [d], c)
    zero = verified_block(b, "Z", attempts)
    for a, d in zip(zero, data):
        b.cnot(a, d)
    for a in zero:
        b.h(a)
    bits = [b.measure(a) for a in zero]
    corr = b.classical("hamming_correction", bits, 7)
    for d, c in zip(data, corr):
        b.frame("Z", [d], c)


def transversal_measure(b: CircuitBuilder, block: Sequence[int], out: int | None = None) -> int:
    bits = [b.measure(w) for w in block]
    if out is None:
        return b.classical("hamming_logical", bits)[0]
    b.ops.append(Classical("hamming_logical", (out,), tuple(bits)))
    return out


# ---------------------------------------------------------------------------
# Implementation of circuits (Def-3 style replacement)


@dataclass
class _Regions:
    entries: list = field(default_factory=list)

    def new(self, rect: int, role: str, block: int = 0) -> int:
        self.entries.append({"rect": rect, "role": role, "block": block})
        return len(self.entries) - 1


def _bit_for(b: CircuitBuilder, bitmap: dict, x: int) -> int:
    if x not in bitmap:
        bitmap[x] = b.bit()
    return bitmap[x]


def _rectangle(
    b: CircuitBuilder,
    op: Location,
    blocks: dict,
    bitmap: dict,
    regions: _Regions,
    attempts: int,
) -> dict:
    kind = op.kind
    info: dict = {"source": op.id, "kind": kind, "wires": list(op.qubit_lines), "ec": []}
    gid = regions.new(op.id, "gadget")
    info["gadget"] = gid
    b.tag = gid
    cond = bitmap[op.condition] if op.condition >= 0 else -1
    if kind == "t_gate":
        raise ValueError("T gates have no transversal Clifford rectangle")
    if kind == "prepare_z":
        blocks[op.qubit_lines[0]] = verified_block(b, "Z", attempts)
    elif kind == "measure_z":
        blk = blocks.pop(op.qubit_lines[0])
        out = _bit_for(b, bitmap, op.cbit)
        transversal_measure(b, blk, out)
        b.tag = -1
        return info
    elif kind == "trace":
        for w in blocks.pop(op.qubit_lines[0]):
            b.trace(w)
        b.tag = -1
        return info
    elif kind == "cnot":
        for c, t in zip(blocks[op.qubit_lines[0]], blocks[op.qubit_lines[1]]):
            b.cnot(c, t)
    else:
        for w in blocks[op.qubit_lines[0]]:
            if kind == "hadamard":
                b.h(w)
            elif kind == "wait":
                b.wait(w)
            else:
                b.pauli(kind[-1].upper(), w, cond)
    for k, line in enumerate(op.qubit_lines):
        eid = regions.new(op.id, "ec", k)
        b.tag = eid
        steane_ec(b, blocks[line], attempts)
        info["ec"].append(eid)
    b.tag = -1
    return info


def _implement_once(c: CircuitDiagram, attempts: int) -> CircuitDiagram:
    src = schedule(c)
    b = CircuitBuilder()
    blocks = {w: b.wires(BLOCK) for w in src.inputs}
    in_blocks = {w: list(v) for w, v in blocks.items()}
    bitmap: dict[int, int] = {}
    for x in src.classical_in:
        bitmap[x] = b.bit()
    regions = _Regions()
    rects: dict[int, dict] = {}
    last_on_wire: dict[int, int] = {}
    for op in src.ops:
        if isinstance(op, Location):
            leading = []
            for line in op.qubit_lines:
                prev = last_on_wire.get(line)
                if prev is not None:
                    pinfo = rects[prev]
                    k = pinfo["wires"].index(line)
                    if k < len(pinfo["ec"]):
                        leading.append(pinfo["ec"][k])
            info = _rectangle(b, op, blocks, bitmap, regions, attempts)
            info["leading"] = leading
            rects[op.id] = info
            for line in op.qubit_lines:
                last_on_wire[line] = op.id
            if op.kind in ("measure_z", "trace"):
                last_on_wire.pop(op.qubit_lines[0], None)
        elif isinstance(op, Classical):
            ins = [bitmap[x] for x in op.ins]
            outs = [_bit_for(b, bitmap, x) for x in op.outs]
            b.ops.append(Classical(op.kind, tuple(outs), tuple(ins)))
        elif isinstance(op, FrameUpdate):
            cond = bitmap[op.condition] if op.condition >= 0 else -1
            b.frame(op.label, [w for q in op.qubits for w in blocks[q]], cond)
        elif isinstance(op, CondSwap):
            pairs = []
            for x, y in op.pairs:
                pairs += list(zip(blocks[x], blocks[y]))
            b.cswap(pairs, bitmap[op.condition])
        elif isinstance(op, Discard):
            b.discard([w for q in op.qubits for w in blocks.pop(q)])
        elif isinstance(op, (Peek, ChannelInsertion)):
            raise ValueError(f"{type(op).__name__} has no encoded implementation")
    meta = {
        "level": c.meta.get("level", 0) + 1,
        "regions": regions.entries,
        "rects": rects,
        "source": src,
        "blocks": {w: list(blocks[w]) for w in src.outputs},
        "attempts": attempts,
    }
    built = b.build(
        [w for q in src.inputs for w in in_blocks[q]],
        [w for q in src.outputs for w in blocks[q]],
        [bitmap[x] for x in src.classical_in],
        [bitmap[x] for x in src.classical_out],
        meta=meta,
    )
    out = schedule(built)
    out.meta["level"] = meta["level"]
    return out


def implement(c: CircuitDiagram, level: int = 1, attempts: int = ATTEMPTS) -> CircuitDiagram:
    """Replace every qubit by a code block and every location by its rectangle.

    Level 2 applies the level-1 replacement twice, so level-2 rectangles are
    built from level-1 rectangles.
    """
    _check_level(level)
    for loc in c.locations:
        if loc.kind == "t_gate":
            raise ValueError("T gates have no transversal Clifford rectangle")
    base = c
    if "level" not in base.meta:
        base = CircuitDiagram(
            c.n_wires, c.inputs, c.outputs, c.n_cbits, c.classical_in, c.classical_out, c.ops, c.scheduled, dict(c.meta, level=0)
        )
    out = _implement_once(base, attempts)
    if level == 2:
        out = _implement_once(out, attempts)
    return out


@lru_cache(maxsize=4)
def ec_circuit(level: int, attempts: int = ATTEMPTS) -> CircuitDiagram:
    """Error correction on one level-``level`` block (input block -> output block)."""
    _check_level(level)
    if level == 1:
        b = CircuitBuilder()
        data = b.wires(BLOCK)
        b.tag = 0
        steane_ec(b, data, attempts)
        return schedule(b.build(data, data, meta={"level": 1, "kind": "ec"}))
    return _implement_once(ec_circuit(1, attempts), attempts)


# ---------------------------------------------------------------------------
# Gadget library


@dataclass(frozen=True)
class GadgetSet:
    gadgets: Mapping
    ec: CircuitDiagram


def _gadget(kind: str, attempts: int) -> CircuitDiagram:
    b = CircuitBuilder()
    if kind == "prepare_z":
        out = verified_block(b, "Z", attempts)
        return schedule(b.build([], out, meta={"kind": kind}))
    if kind == "cnot":
        c = b.wires(BLOCK)
        t = b.wires(BLOCK)
        for x, y in zip(c, t):
            b.cnot(x, y)
        return schedule(b.build(c + t, c + t, meta={"kind": kind}))
    data = b.wires(BLOCK)
    if kind == "measure_z":
        bit = transversal_measure(b, data)
        return schedule(b.build(data, [], classical_out=[bit], meta={"kind": kind}))
    for w in data:
        if kind == "hadamard":
            b.h(w)
        elif kind == "wait":
            b.wait(w)
        elif kind == "trace":
            b.trace(w)
        else:
            b.pauli(kind[-1].upper(), w)
    outs = [] if kind == "trace" else data
    return schedule(b.build(data, outs, meta={"kind": kind}))


def gadget_set(attempts: int = ATTEMPTS) -> GadgetSet:
    kinds = ("pauli_x", "pauli_y", "pauli_z", "hadamard", "wait", "cnot", "prepare_z", "measure_z", "trace")
    return GadgetSet({k: _gadget(k, attempts) for k in kinds}, ec_circuit(1, attempts))


def export_library(directory: str | Path, attempts: int = ATTEMPTS) -> list[Path]:
    """Write every gadget, the EC and the ideal circuits as text circuit files."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    gs = gadget_set(attempts)
    items = dict(gs.gadgets)
    items["ec"] = gs.ec
    items["ideal_decoder"] = ideal_decoder_circuit(1)
    items["ideal_encoder"] = ideal_encoder_circuit(1)
    for name, circ in items.items():
        target = path / f"{name}.circ"
        target.write_text(to_text(circ))
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# Extended rectangles and goodness


@dataclass
class ExRec:
    source: int
    kind: str
    level: int
    locations: np.ndarray
    gadget: int = -1
    leading: tuple = ()
    trailing: tuple = ()
    subs: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.locations.size)


def _region_array(c: CircuitDiagram) -> np.ndarray:
    return np.array([loc.tag for loc in c.locations], dtype=np.int64)


def _level1_exrecs(cimpl: CircuitDiagram) -> list[ExRec]:
    tags = _region_array(cimpl)
    by_region: dict[int, list[int]] = {}
    for lid, t in enumerate(tags):
        by_region.setdefault(int(t), []).append(lid)
    out = []
    for sid, info in cimpl.meta["rects"].items():
        regs = [info["gadget"]] + list(info["ec"]) + list(info["leading"])
        locs = sorted(set(itertools.chain.from_iterable(by_region.get(r, []) for r in regs)))
        out.append(
            ExRec(
                sid,
                info["kind"],
                1,
                np.array(locs, dtype=np.int64),
                info["gadget"],
                tuple(info["leading"]),
                tuple(info["ec"]),
            )
        )
    out.sort(key=lambda e: e.source)
    return out


def exrec_partition(cimpl: CircuitDiagram) -> list[ExRec]:
    """Extended rectangles of an implemented circuit, one per source location.

    Level-2 ExRecs carry their level-1 sub-ExRecs in ``subs``.
    """
    if "rects" not in cimpl.meta:
        raise ValueError("circuit was not produced by implement")
    level = cimpl.meta.get("level", 1)
    if level == 1:
        return _level1_exrecs(cimpl)
    inner = _level1_exrecs(cimpl)  # sub-ExRecs indexed by level-1 location ids
    by_source = {e.source: e for e in inner}
    mid = cimpl.meta["source"]
    outer = _level1_exrecs(mid)
    result = []
    for ex in outer:
        subs = [by_source[int(l)] for l in ex.locations if int(l) in by_source]
        locs = np.unique(np.concatenate([s.locations for s in subs])) if subs else np.zeros(0, dtype=np.int64)
        result.append(ExRec(ex.source, ex.kind, 2, locs, ex.gadget, ex.leading, ex.trailing, subs))
    return result


def _faulty_locations(f) -> set:
    if isinstance(f, FaultPattern):
        return set(f.assignments)
    return {int(x) for x in f}


def _faults_by_region(cimpl_tags: np.ndarray, faulty: Iterable[int]) -> dict:
    counts: dict[int, int] = {}
    for lid in faulty:
        r = int(cimpl_tags[lid])
        counts[r] = counts.get(r, 0) + 1
    return counts


def _level1_bad(ex: ExRec, faulty: set) -> bool:
    hits = 0
    for lid in faulty:
        pos = np.searchsorted(ex.locations, lid)
        if pos < ex.locations.size and ex.locations[pos] == lid:
            hits += 1
            if hits >= 2:
                return True
    return False


def independent_bad_count(subs: Sequence[ExRec], region_counts: Mapping[int, int]) -> int:
    """Bad sub-ExRecs counted so that two never share the faults of a common EC."""
    consumed: set = set()
    bad = 0
    for sub in sorted(subs, key=lambda s: s.source):
        regs = [sub.gadget] + list(sub.trailing) + [r for r in sub.leading if r not in consumed]
        if sum(region_counts.get(r, 0) for r in regs) >= 2:
            bad += 1
            consumed.update(sub.trailing)
    return bad


def exrec_good(f, exrec: ExRec, cimpl: CircuitDiagram | None = None) -> bool:
    """Level 1: at most one faulty location.  Level 2: at most one independent bad sub-ExRec."""
    faulty = _faulty_locations(f)
    if exrec.level == 1:
        return not _level1_bad(exrec, faulty)
    if cimpl is None:
        raise ValueError("level-2 goodness needs the implemented circuit")
    counts = _faults_by_region(_region_array(cimpl), faulty)
    return independent_bad_count(exrec.subs, counts) <= 1


def all_good(f, cimpl: CircuitDiagram) -> bool:
    return all(exrec_good(f, ex, cimpl) for ex in exrec_partition(cimpl))


# ---------------------------------------------------------------------------
# correctness of implemented circuits with classical I/O


def verify_transformation(c: CircuitDiagram, f: FaultPattern, level: int = 1, cimpl: CircuitDiagram | None = None) -> bool:
    """True when the faulty implemented circuit reproduces the ideal classical I/O for every classical input."""
    from .stabilizer_sim import frame_program, run_tableau

    if not c.classical_out:
        raise ValueError("circuit needs classical outputs")
    cimpl = cimpl or implement(c, level)
    prog = frame_program(cimpl)
    slots, codes = f.slot_faults(cimpl)
    k = len(c.classical_in)
    inputs = np.array(list(itertools.product((0, 1), repeat=k)), dtype=bool).reshape(-1, k)
    trials = inputs.shape[0]
    trial = np.repeat(np.arange(trials), slots.size)
    faults = (trial, np.tile(slots, trials), np.tile(codes, trials))
    res = prog.run(trials, faults, classical_in=inputs)
    for t in range(trials):
        ideal = run_tableau(c, None, seed=0, classical_in=[int(v) for v in inputs[t]]).classical_out
        if tuple(int(v) for v in res.classical_out[t]) != tuple(ideal):
            return False
    return True


# ---------------------------------------------------------------------------
# Goodness statistics


@dataclass
class GoodnessModel:
    """Stratified failure model P(p) = sum_w Binom(N, w, p) f(w) for one ExRec."""

    level: int
    kind: str
    n_slots: int
    weights: np.ndarray
    f: np.ndarray
    f_stderr: np.ndarray
    samples: int

    def probability(self, p: float) -> float:
        from scipy.stats import binom

        pmf = binom.pmf(self.weights, self.n_slots, p)
        top = int(self.weights.max())
        tail = float(binom.sf(top, self.n_slots, p))
        return float(np.dot(pmf, self.f) + tail)

    def stderr(self, p: float) -> float:
        from scipy.stats import binom

        pmf = binom.pmf(self.weights, self.n_slots, p)
        return float(np.sqrt(np.dot(pmf**2, self.f_stderr**2)))


def _slot_location_table(cimpl: CircuitDiagram, locs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    loc_ids, _ = cimpl.slot_table()
    mask = np.isin(loc_ids, locs)
    return np.nonzero(mask)[0], loc_ids[mask]


def goodness_model(
    cimpl: CircuitDiagram,
    exrec: ExRec,
    max_weight: int,
    samples: int,
    seed: int = 0,
) -> GoodnessModel:
    """Estimate f(w) = P(ExRec not good | w faulty slots placed uniformly).

    Level 1 is exact.  Level 2 uses importance sampling: a bad level-2 ExRec
    needs two disjoint slot pairs inside two distinct sub-ExRecs, so pairs are
    planted inside sub-ExRecs and reweighted back to the uniform measure.
    """
    _, slot_locs = _slot_location_table(cimpl, exrec.locations)
    n = slot_locs.size
    weights = np.arange(0, max_weight + 1)
    f = np.zeros(weights.size)
    se = np.zeros(weights.size)
    if exrec.level == 1:
        for w in weights:
            if w >= 2:
                f[w] = 1.0 - _single_location_probability(slot_locs, int(w))
    else:
        rng = np.random.default_rng(seed)
        sampler = _PairSampler(exrec, slot_locs)
        tags = _region_array(cimpl)
        for w in weights:
            if w >= 4 and w <= n:
                f[w], se[w] = sampler.estimate(int(w), samples, tags, rng)
    return GoodnessModel(exrec.level, exrec.kind, n, weights, f, se, samples)


class _PairSampler:
    """Proposal that plants one slot pair in each of two distinct sub-ExRecs."""

    def __init__(self, exrec: ExRec, slot_locs: np.ndarray) -> None:
        from math import comb

        self.exrec = exrec
        self.slot_locs = slot_locs
        self.n = int(slot_locs.size)
        self.members = [np.flatnonzero(np.isin(slot_locs, sub.locations)) for sub in exrec.subs]
        self.slot_subs: dict[int, set] = {}
        for k, m in enumerate(self.members):
            for sl in m.tolist():
                self.slot_subs.setdefault(sl, set()).add(k)
        pair_counts = np.array([comb(int(m.size), 2) for m in self.members], dtype=float)
        self.pair_probs = pair_counts / pair_counts.sum()
        self.log_z = float(np.log(pair_counts.sum() ** 2 - np.sum(pair_counts**2)))

    def _decompositions(self, slots: Sequence[int]) -> int:
        subs = [self.slot_subs.get(s, set()) for s in slots]
        pairs = list(itertools.combinations(range(len(slots)), 2))
        common = {pr: subs[pr[0]] & subs[pr[1]] for pr in pairs}
        total = 0
        for p1 in pairs:
            if not common[p1]:
                continue
            for p2 in pairs:
                if set(p1) & set(p2) or not common[p2]:
                    continue
                total += len(common[p1]) * len(common[p2]) - len(common[p1] & common[p2])
        return total

    def estimate(self, w: int, samples: int, tags: np.ndarray, rng: np.random.Generator) -> tuple[float, float]:
        from math import lgamma

        def log_comb(a: int, b: int) -> float:
            return lgamma(a + 1) - lgamma(b + 1) - lgamma(a - b + 1)

        log_scale = self.log_z + log_comb(self.n, w - 4) - log_comb(self.n, w)
        values = np.zeros(samples)
        n_subs = len(self.members)
        for t in range(samples):
            a, b = rng.choice(n_subs, size=2, p=self.pair_probs)
            if a == b:
                continue
            picked = list(rng.choice(self.members[a], 2, replace=False))
            picked += list(rng.choice(self.members[b], 2, replace=False))
            if w > 4:
                picked += list(rng.choice(self.n, w - 4, replace=False))
            if len(set(picked)) < w:
                continue
            faulty = set(self.slot_locs[picked].tolist())
            counts = _faults_by_region(tags, faulty)
            if independent_bad_count(self.exrec.subs, counts) >= 2:
                values[t] = np.exp(log_scale) / self._decompositions(picked)
        mean = float(values.mean())
        return mean, float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0


def _single_location_probability(slot_locs: np.ndarray, w: int) -> float:
    """P(w uniformly chosen distinct slots all lie on one location)."""
    from math import comb

    _, sizes = np.unique(slot_locs, return_counts=True)
    total = comb(int(slot_locs.size), w)
    hit = sum(comb(int(s), w) for s in sizes)
    return hit / total


def fit_exponent(ps: Sequence[float], probs: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of log P against log p."""
    lx = np.log(np.asarray(ps, dtype=float))
    ly = np.log(np.asarray(probs, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def fit_p0(p: float, prob: float, level: int) -> float:
    """Solve prob = p0 (p/p0)^(2^level) for p0."""
    e = 2**level
    return float((p**e / prob) ** (1.0 / (e - 1)))
