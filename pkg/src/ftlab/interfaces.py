"""Teleportation interfaces between a physical qubit and the concatenated code.

``Enc_{0->1}`` teleports a physical qubit into a level-1 block through the
entangled pair (|0>|0_L> + |1>|1_L>)/sqrt(2); ``Dec_{1->0}`` teleports a block
back out through the same resource state.  Higher levels are built by
implementing these circuits in the code one level down and chaining them.

Interface circuits are kept as chains of separately scheduled parts so that
level-2 interfaces never need to be flattened into one huge circuit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .circuit_model import (
    ENUMERATION_BUDGET,
    BudgetError,
    CircuitBuilder,
    CircuitDiagram,
    FaultPattern,
    concatenate,
    enumerate_slot_faults,
    pattern_count,
    sample_slot_faults,
    schedule,
    weight_polynomial,
)
from .stabilizer_sim import FrameProgram, FrameResult, frame_program
from .steane_concat import (
    ATTEMPTS,
    BLOCK,
    _check_level,
    decode_block_frames,
    ec_circuit,
    implement,
    steane_ec,
    transversal_measure,
    verification_plan,
    verified_block,
)

# logical input frames used by the correctness tests: I, X, Y, Z
FRAME_X = np.array([0, 1, 1, 0], dtype=bool)
FRAME_Z = np.array([0, 0, 1, 1], dtype=bool)


# ---------------------------------------------------------------------------
# Chains of scheduled circuits


class CircuitChain:
    """Scheduled circuits run back to back; outputs of part k feed part k+1."""

    def __init__(self, parts: Sequence[CircuitDiagram]) -> None:
        if not parts:
            raise ValueError("empty chain")
        for a, b in zip(parts, parts[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"arity mismatch: {a.n_out} outputs vs {b.n_in} inputs")
        self.parts = tuple(schedule(p) for p in parts)
        self._programs: list[FrameProgram | None] = [None] * len(self.parts)

    @property
    def n_in(self) -> int:
        return self.parts[0].n_in

    @property
    def n_out(self) -> int:
        return self.parts[-1].n_out

    @cached_property
    def slot_offsets(self) -> np.ndarray:
        sizes = [self.program(k).n_fault_slots for k in range(len(self.parts))]
        return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)

    @property
    def n_slots(self) -> int:
        return int(self.slot_offsets[-1])

    @property
    def n_locations(self) -> int:
        return sum(len(p.locations) for p in self.parts)

    def program(self, k: int) -> FrameProgram:
        if self._programs[k] is None:
            self._programs[k] = FrameProgram(self.parts[k])
        return self._programs[k]

    def circuit(self) -> CircuitDiagram:
        """The whole chain as one circuit; location ids follow the part order."""
        return concatenate(*self.parts)

    def split_faults(self, faults) -> list:
        """Split ``(trial, slot, code)`` over chain slots into per-part triples."""
        if faults is None:
            return [None] * len(self.parts)
        trial, slot, code = (np.asarray(a, dtype=np.int64) for a in faults)
        part = np.searchsorted(self.slot_offsets, slot, side="right") - 1
        out = []
        for k in range(len(self.parts)):
            m = part == k
            out.append((trial[m], slot[m] - self.slot_offsets[k], code[m]))
        return out

    def run(
        self,
        trials: int,
        faults=None,
        input_x: np.ndarray | None = None,
        input_z: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        between: Callable | None = None,
        classical_in: np.ndarray | None = None,
    ) -> list[FrameResult]:
        """Propagate frames through every part.

        ``between(k, x, z)`` may rewrite the frames handed from part k to k+1.
        ``classical_in`` feeds the first part only.
        """
        rng = rng or np.random.default_rng()
        x, z = input_x, input_z
        results = []
        for k, f in enumerate(self.split_faults(faults)):
            cin = classical_in if k == 0 else None
            res = self.program(k).run(trials, f, x, z, classical_in=cin, rng=rng)
            results.append(res)
            x, z = res.out_x, res.out_z
            if between is not None and k + 1 < len(self.parts):
                x, z = between(k, x, z)
        return results


# ---------------------------------------------------------------------------
# Level-1 interface circuits


def _entangled_pair(b: CircuitBuilder, attempts: int) -> tuple[int, list[int]]:
    """Physical qubit maximally entangled with a level-1 block.

    The block starts as a verified |0_L>; CNOTs from the physical qubit onto a
    weight-3 logical-X support then give (|0>|0_L> + |1>|1_L>)/sqrt(2).
    """
    block = verified_block(b, "Z", attempts)
    p = b.prep()
    b.h(p)
    _, support = verification_plan()
    for j in support:
        b.cnot(p, block[j])
    return p, block


def _bell_measure(b: CircuitBuilder, first: int, second: int) -> tuple[int, int]:
    b.cnot(first, second)
    b.h(first)
    return b.measure(first), b.measure(second)


def build_enc_0_1(attempts: int = ATTEMPTS) -> CircuitDiagram:
    """Teleport one physical qubit into a level-1 block, ending in error correction."""
    b = CircuitBuilder()
    src = b.wire()
    p, block = _entangled_pair(b, attempts)
    z_bit, x_bit = _bell_measure(b, src, p)
    for w in block:
        b.pauli("X", w, x_bit)
    for w in block:
        b.pauli("Z", w, z_bit)
    steane_ec(b, block, attempts)
    return schedule(b.build([src], block, meta={"kind": "enc_0_1"}))


def build_dec_1_0(attempts: int = ATTEMPTS) -> CircuitDiagram:
    """Teleport a level-1 block out to one physical qubit."""
    b = CircuitBuilder()
    data = b.wires(BLOCK)
    p, block = _entangled_pair(b, attempts)
    for x, y in zip(data, block):
        b.cnot(x, y)
    for x in data:
        b.h(x)
    z_bit = transversal_measure(b, data)
    x_bit = transversal_measure(b, block)
    b.pauli("X", p, x_bit)
    b.pauli("Z", p, z_bit)
    return schedule(b.build(data, [p], meta={"kind": "dec_1_0"}))


# ---------------------------------------------------------------------------
# Interfaces at level l


@dataclass
class InterfacePair:
    level: int
    enc_parts: tuple
    dec_parts: tuple
    attempts: int = ATTEMPTS

    @cached_property
    def enc(self) -> CircuitChain:
        return CircuitChain(self.enc_parts)

    @cached_property
    def dec(self) -> CircuitChain:
        return CircuitChain(self.dec_parts)

    @cached_property
    def dec_ec(self) -> CircuitChain:
        """The decoder preceded by one level-``level`` error correction."""
        return CircuitChain((ec_circuit(self.level, self.attempts),) + tuple(self.dec_parts))

    @property
    def enc_circuit(self) -> CircuitDiagram:
        return self.enc.circuit()

    @property
    def dec_circuit(self) -> CircuitDiagram:
        return self.dec.circuit()

    def location_counts(self) -> dict:
        return {
            "enc": self.enc.n_locations,
            "dec": self.dec.n_locations,
            "dec_ec": self.dec_ec.n_locations,
            "enc_0_1": len(self.enc_parts[0].locations),
            "dec_1_0_ec": len(ec_circuit(1, self.attempts).locations) + len(self.dec_parts[-1].locations),
        }


@lru_cache(maxsize=4)
def build_interface(level: int, attempts: int = ATTEMPTS) -> InterfacePair:
    """Enc_l = Enc_{(l-1)->l} o ... o Enc_{0->1} and the mirrored decoder chain."""
    _check_level(level)
    enc01 = build_enc_0_1(attempts)
    dec10 = build_dec_1_0(attempts)
    enc_parts = [enc01]
    dec_parts = [dec10]
    for lower in range(1, level):
        enc_parts.append(implement(enc01, lower, attempts))
        dec_parts.insert(0, implement(dec10, lower, attempts))
    return InterfacePair(level, tuple(enc_parts), tuple(dec_parts), attempts)


# ---------------------------------------------------------------------------
# Correctness under fault patterns


def _frames(trials: int, n: int, lines: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Logical frames I, X, Y, Z repeated over ``trials`` groups of four."""
    fx = np.tile(FRAME_X, trials)
    fz = np.tile(FRAME_Z, trials)
    x = np.zeros((4 * trials, n), dtype=bool)
    z = np.zeros((4 * trials, n), dtype=bool)
    cols = list(range(n)) if lines is None else list(lines)
    x[:, cols] = fx[:, None]
    z[:, cols] = fz[:, None]
    return x, z


def _expand_faults(faults, copies: int = 4):
    """Repeat every trial's faults for each of the ``copies`` input frames."""
    trial, slot, code = (np.asarray(a, dtype=np.int64) for a in faults)
    k = np.arange(copies)
    return (
        (trial[:, None] * copies + k[None, :]).ravel(),
        np.repeat(slot, copies),
        np.repeat(code, copies),
    )


def enc_failures(pair: InterfacePair, trials: int, faults) -> np.ndarray:
    """Per-trial flag: the faulty encoder does not act as the identity on the data."""
    fx, fz = _frames(trials, 1)
    res = pair.enc.run(4 * trials, _expand_faults(faults), fx, fz)
    lx, lz = decode_block_frames(res[-1].out_x, res[-1].out_z, pair.level)
    bad = (lx != fx[:, 0]) | (lz != fz[:, 0])
    return bad.reshape(trials, 4).any(axis=1)


def dec_failures(pair: InterfacePair, trials: int, faults) -> np.ndarray:
    """Per-trial flag: the faulty Dec o EC output differs from the ideally decoded EC output."""
    n = BLOCK**pair.level
    fx, fz = _frames(trials, n)
    snap: dict = {}

    def grab(k: int, x: np.ndarray, z: np.ndarray):
        if k == 0:
            snap["x"], snap["z"] = decode_block_frames(x, z, pair.level)
        return x, z

    res = pair.dec_ec.run(4 * trials, _expand_faults(faults), fx, fz, between=grab)
    ox, oz = res[-1].out_x[:, 0], res[-1].out_z[:, 0]
    bad = (ox != snap["x"]) | (oz != snap["z"])
    return bad.reshape(trials, 4).any(axis=1)


def _pattern_triple(chain: CircuitChain, f: FaultPattern, parts: Sequence[CircuitDiagram]) -> tuple:
    offsets_loc = np.cumsum([0] + [len(p.locations) for p in parts])
    slots, codes = [], []
    for k, part in enumerate(parts):
        lo, hi = offsets_loc[k], offsets_loc[k + 1]
        sub = FaultPattern(len(part.locations), {lid - lo: lab for lid, lab in f.assignments.items() if lo <= lid < hi})
        s, c = sub.slot_faults(part)
        slots.append(s + chain.slot_offsets[k])
        codes.append(c)
    s = np.concatenate(slots)
    return np.zeros(s.size, dtype=np.int64), s, np.concatenate(codes)


def enc_is_correct(f: FaultPattern, level: int = 1) -> bool:
    """Correctness of the encoder under ``f`` (location ids of the flattened encoder)."""
    pair = build_interface(level)
    return not enc_failures(pair, 1, _pattern_triple(pair.enc, f, pair.enc.parts))[0]


def dec_is_correct(f: FaultPattern, level: int = 1) -> bool:
    """Correctness of Dec o EC under ``f`` (location ids of the flattened Dec o EC)."""
    pair = build_interface(level)
    return not dec_failures(pair, 1, _pattern_triple(pair.dec_ec, f, pair.dec_ec.parts))[0]


# ---------------------------------------------------------------------------
# Failure probabilities


@dataclass
class FailureEstimate:
    p: float
    level: int
    p_fail_enc: float
    se_enc: float
    p_fail_dec: float
    se_dec: float
    trials: int
    linear_coeff: tuple
    ci_enc: tuple = (0.0, 0.0)
    ci_dec: tuple = (0.0, 0.0)
    c1_exact: dict = field(default_factory=dict)
    c2_exact: dict = field(default_factory=dict)
    loc_counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "p": self.p,
            "trials": self.trials,
            "p_fail_enc": self.p_fail_enc,
            "se_enc": self.se_enc,
            "ci_enc": list(self.ci_enc),
            "p_fail_dec": self.p_fail_dec,
            "se_dec": self.se_dec,
            "ci_dec": list(self.ci_dec),
            "linear_coeff": list(self.linear_coeff),
            "c1_exact": {k: str(v) for k, v in self.c1_exact.items()},
            "c2_exact": {k: str(v) for k, v in self.c2_exact.items()},
            "loc_counts": self.loc_counts,
        }


def wilson_interval(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _mc_failures(chain: CircuitChain, check: Callable, p: float, trials: int, rng: np.random.Generator, batch: int) -> int:
    bad = 0
    done = 0
    while done < trials:
        t = min(batch, trials - done)
        faults = sample_slot_faults(chain.n_slots, p, t, rng)
        bad += int(check(t, faults).sum())
        done += t
    return bad


def failure_polynomial(pair: InterfacePair, which: str, max_weight: int = 2) -> tuple:
    """Exact coefficients (c0, c1, ..., c_w) of P(not correct) in powers of p.

    Every pattern with at most ``max_weight`` faulty slots is simulated; the
    neglected remainder is O(p^(w+1)).
    """
    chain = pair.enc if which == "enc" else pair.dec_ec
    check = (lambda t, f: enc_failures(pair, t, f)) if which == "enc" else (lambda t, f: dec_failures(pair, t, f))
    n = chain.n_slots
    if pattern_count(n, max_weight) > ENUMERATION_BUDGET:
        raise BudgetError(f"{pattern_count(n, max_weight)} patterns exceed the enumeration budget")
    coeffs = [Fraction(0)] * (max_weight + 1)
    for w in range(max_weight + 1):
        count, trial, slot, code = enumerate_slot_faults(n, w)
        failing = 0
        chunk = 1 << 16
        for start in range(0, count, chunk):
            stop = min(count, start + chunk)
            lo, hi = np.searchsorted(trial, [start, stop])
            failing += int(check(stop - start, (trial[lo:hi] - start, slot[lo:hi], code[lo:hi])).sum())
        poly = weight_polynomial(w, n, max_weight)
        for d in range(max_weight + 1):
            coeffs[d] += failing * poly[d]
    return tuple(coeffs)


def estimate_failure(
    level: int,
    p: float,
    trials: int,
    seed: int = 0,
    exact: bool | None = None,
    batch: int = 1 << 14,
) -> FailureEstimate:
    """Monte-Carlo failure rates of Enc_l and Dec_l o EC_l (plus exact c1, c2 at level 1)."""
    pair = build_interface(level)
    ss = np.random.SeedSequence(seed)
    enc_seed, dec_seed = ss.spawn(2)
    if p == 0:
        k_enc = k_dec = 0
    else:
        k_enc = _mc_failures(pair.enc, lambda t, f: enc_failures(pair, t, f), p, trials, np.random.default_rng(enc_seed), batch)
        k_dec = _mc_failures(pair.dec_ec, lambda t, f: dec_failures(pair, t, f), p, trials, np.random.default_rng(dec_seed), batch)
    pe, pd = k_enc / trials, k_dec / trials
    se = lambda q: float(np.sqrt(max(q * (1 - q), 1.0 / trials) / trials)) if q > 0 else 0.0
    ci_e, ci_d = wilson_interval(k_enc, trials), wilson_interval(k_dec, trials)
    if p > 0:
        worst = max(pe, pd)
        hi = max(ci_e[1], ci_d[1])
        lo = max(ci_e[0], ci_d[0])
        # fitted linear coefficient c1 of P_fail = c1 p + O(p^2); the envelope is 2 c1 p
        linear = (worst / p, lo / p, hi / p)
    else:
        linear = (0.0, 0.0, 0.0)
    c1, c2 = {}, {}
    if exact or (exact is None and level == 1):
        for which in ("enc", "dec"):
            poly = failure_polynomial(pair, which, 2)
            c1[which], c2[which] = poly[1], poly[2]
    return FailureEstimate(
        p,
        level,
        pe,
        se(pe),
        pd,
        se(pd),
        trials,
        linear,
        ci_e,
        ci_d,
        c1,
        c2,
        pair.location_counts(),
    )
