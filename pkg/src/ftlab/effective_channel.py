"""Effective single-use channel seen by encoded data sent through a physical Pauli channel.

The data leaves the code through ``Dec_l o EC_l``, crosses the physical
channel T on one physical qubit and re-enters through ``Enc_l``.  Under
i.i.d. Pauli faults the net logical error is the product of three
independent Paulis: the decoder's output error, the sample of T and the
logical error left by the encoder.  That product structure gives both a
Monte-Carlo estimator and an exact low-order expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .circuit_model import (
    ENUMERATION_BUDGET,
    BudgetError,
    enumerate_slot_faults,
    pattern_count,
    sample_slot_faults,
    weight_polynomial,
)
from .interfaces import CircuitChain, InterfacePair, build_interface, failure_polynomial
from .pauli_core import PauliChannel, total_variation
from .stabilizer_sim import frames_to_labels
from .steane_concat import decode_block_frames

LABELS = "IXYZ"
_X = np.array([0, 1, 1, 0], dtype=bool)
_Z = np.array([0, 0, 1, 1], dtype=bool)
# product table on codes I, X, Y, Z (phases dropped)
_MUL = np.array([[(int(_X[a] ^ _X[b]) + 2 * int(_Z[a] ^ _Z[b])) for b in range(4)] for a in range(4)])
_MUL = np.array([0, 1, 3, 2])[_MUL]


def _codes(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return frames_to_labels(x.reshape(-1, 1), z.reshape(-1, 1))


@dataclass
class EffectiveChannelEstimate:
    level: int
    p: float
    physical: PauliChannel
    q_fail: float
    q_fail_se: float
    residual: PauliChannel | None
    composed: PauliChannel
    composed_se: np.ndarray
    residual_se: np.ndarray
    trials: int
    exact: bool = False
    subtraction_residual: np.ndarray = field(default_factory=lambda: np.zeros(4))
    negative_flags: tuple = ()
    notes: tuple = ("physical channel restricted to the Pauli sector", "single-use marginal only")

    def consistency_gap(self) -> float:
        """Largest entry of |composed - ((1-q) T + q N)|; zero up to rounding."""
        if self.residual is None:
            mix = self.physical.vector()
        else:
            mix = (1 - self.q_fail) * self.physical.vector() + self.q_fail * self.residual.vector()
        return float(np.max(np.abs(self.composed.vector() - mix)))

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "p": self.p,
            "trials": self.trials,
            "exact": self.exact,
            "physical": self.physical.to_json(),
            "q_fail": self.q_fail,
            "q_fail_se": self.q_fail_se,
            "residual": None if self.residual is None else self.residual.to_json(),
            "composed": self.composed.to_json(),
            "composed_se": self.composed_se.tolist(),
            "negative_flags": list(self.negative_flags),
            "notes": list(self.notes),
        }


@dataclass
class ChannelDistanceReport:
    tv: float
    diamond_equiv: float
    bound_rhs: float
    tv_se: float = 0.0

    @property
    def within_budget(self) -> bool:
        return self.tv <= self.bound_rhs + 4 * self.tv_se

    def to_json(self) -> dict:
        return {
            "tv": self.tv,
            "tv_se": self.tv_se,
            "diamond_equiv": self.diamond_equiv,
            "budget": self.bound_rhs,
            "within_budget": self.within_budget,
        }


def _check_physical(t: PauliChannel) -> None:
    if t.n != 1:
        raise ValueError("the physical channel must act on one qubit")


def _round_trip_chain(pair: InterfacePair) -> tuple[CircuitChain, int]:
    parts = tuple(pair.dec_ec.parts) + tuple(pair.enc.parts)
    return CircuitChain(parts), len(pair.dec_ec.parts) - 1


def _sample_codes(t: PauliChannel, size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(4, size=size, p=t.vector())


def _split(
    net: np.ndarray, err: np.ndarray, physical: PauliChannel
) -> tuple:
    """Composed channel (1-q) T + q N from the trials, with T known exactly.

    The circuit error is independent of the sample of T, so trials without a
    circuit failure contribute T itself; only the failure weight q and the
    conditional channel N are estimated.
    """
    trials = net.size
    t = physical.vector()
    failed = err != 0
    k = int(failed.sum())
    q = k / trials
    q_se = float(np.sqrt(q * (1 - q) / trials))
    if k:
        res = np.bincount(net[failed], minlength=4) / k
        res_se = np.sqrt(res * (1 - res) / k)
        residual = PauliChannel.from_vector(1, res)
    else:
        res = np.zeros(4)
        res_se = np.zeros(4)
        residual = None
    composed = (1 - q) * t + q * res
    composed_se = np.sqrt((res - t) ** 2 * q * (1 - q) / trials + (q * res_se) ** 2)
    # subtraction route on the raw frequencies: (empirical - (1-q) T) / q, which may dip below zero
    if q > 0:
        raw = np.bincount(net, minlength=4) / trials
        raw_se = np.sqrt(raw * (1 - raw) / trials)
        sub = (raw - (1 - q) * t) / q
        sub_se = raw_se / q
        flags = tuple(LABELS[i] for i in range(4) if sub[i] < -3 * sub_se[i] - 1e-15)
    else:
        sub = np.zeros(4)
        flags = ()
    return PauliChannel.from_vector(1, composed), composed_se, q, q_se, residual, res_se, sub, flags


def extract(
    T: PauliChannel,
    level: int,
    p: float,
    trials: int,
    seed: int = 0,
    batch: int = 1 << 14,
) -> EffectiveChannelEstimate:
    """Monte-Carlo estimate of the effective channel on the data line."""
    _check_physical(T)
    if trials < 1:
        raise ValueError("trials must be positive")
    pair = build_interface(level)
    chain, junction = _round_trip_chain(pair)
    nets, errs = [], []
    seeds = np.random.SeedSequence(seed).spawn((trials + batch - 1) // batch)
    done = 0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        m = min(batch, trials - done)
        t_codes = _sample_codes(T, m, rng)
        faults = sample_slot_faults(chain.n_slots, p, m, rng)

        def insert(k: int, x: np.ndarray, z: np.ndarray):
            if k == junction:
                x = x.copy()
                z = z.copy()
                x[:, 0] ^= _X[t_codes]
                z[:, 0] ^= _Z[t_codes]
            return x, z

        res = chain.run(m, faults, rng=rng, between=insert)
        lx, lz = decode_block_frames(res[-1].out_x, res[-1].out_z, level)
        net = _codes(lx, lz)
        nets.append(net)
        errs.append(_MUL[net, t_codes])
        done += m
    net = np.concatenate(nets)
    err = np.concatenate(errs)
    composed, composed_se, q, q_se, residual, res_se, sub, flags = _split(net, err, T)
    return EffectiveChannelEstimate(
        level, p, T, q, q_se, residual, composed, composed_se, res_se, trials, False, sub, flags
    )


# ---------------------------------------------------------------------------
# Exact expansion


def _segment_outcomes(chain: CircuitChain, decode_level: int | None, max_weight: int) -> list:
    """Polynomial coefficients (in p) of each output logical error of one segment.

    ``decode_level`` None means the segment ends on a physical qubit.
    """
    n = chain.n_slots
    if pattern_count(n, max_weight) > ENUMERATION_BUDGET:
        raise BudgetError(f"{pattern_count(n, max_weight)} patterns exceed the enumeration budget")
    coeffs = [[Fraction(0)] * (max_weight + 1) for _ in range(4)]
    for w in range(max_weight + 1):
        count, trial, slot, code = enumerate_slot_faults(n, w)
        hist = np.zeros(4, dtype=np.int64)
        chunk = 1 << 16
        for start in range(0, count, chunk):
            stop = min(count, start + chunk)
            lo, hi = np.searchsorted(trial, [start, stop])
            res = chain.run(stop - start, (trial[lo:hi] - start, slot[lo:hi], code[lo:hi]))
            x, z = res[-1].out_x, res[-1].out_z
            if decode_level is not None:
                x, z = decode_block_frames(x, z, decode_level)
            else:
                x, z = x[:, 0], z[:, 0]
            hist += np.bincount(_codes(x, z), minlength=4)
        poly = weight_polynomial(w, n, max_weight)
        for label in range(4):
            for d in range(max_weight + 1):
                coeffs[label][d] += int(hist[label]) * poly[d]
    return coeffs


def effective_polynomial(level: int = 1, max_weight: int = 2) -> dict:
    """Exact coefficients of the fault-induced logical error distribution, up to p**max_weight.

    Returns {"dec": ..., "enc": ..., "net": ...}, each a list over I, X, Y, Z
    of coefficient lists.  "net" is the product distribution of the two.
    """
    pair = build_interface(level)
    dec = _segment_outcomes(pair.dec_ec, None, max_weight)
    enc = _segment_outcomes(pair.enc, level, max_weight)
    net = [[Fraction(0)] * (max_weight + 1) for _ in range(4)]
    for a in range(4):
        for b in range(4):
            for i in range(max_weight + 1):
                for j in range(max_weight + 1 - i):
                    net[_MUL[a, b]][i + j] += dec[a][i] * enc[b][j]
    return {"dec": dec, "enc": enc, "net": net}


def _evaluate(coeffs: Sequence[Sequence[Fraction]], p: float) -> np.ndarray:
    return np.array([float(sum(c * Fraction(p) ** d for d, c in enumerate(row))) for row in coeffs])


def _truncated_channel(v: np.ndarray) -> PauliChannel:
    # a truncated expansion can leave entries of size O(p**(w+1)) slightly negative
    return PauliChannel.from_vector(1, v, clip=True)


def extract_exact(T: PauliChannel, p: float, level: int = 1, max_weight: int = 2) -> EffectiveChannelEstimate:
    """Effective channel from exhaustive enumeration, exact to order p**max_weight."""
    _check_physical(T)
    err = _evaluate(effective_polynomial(level, max_weight)["net"], p)
    tv = T.vector()
    composed = np.zeros(4)
    for e in range(4):
        for t in range(4):
            composed[_MUL[e, t]] += err[e] * tv[t]
    q = float(1.0 - err[0])
    residual = None
    if q > 0:
        res = np.zeros(4)
        for e in range(1, 4):
            for t in range(4):
                res[_MUL[e, t]] += err[e] * tv[t]
        residual = _truncated_channel(res / q)
    return EffectiveChannelEstimate(
        level,
        p,
        T,
        q,
        0.0,
        residual,
        _truncated_channel(composed),
        np.zeros(4),
        np.zeros(4),
        0,
        True,
    )


# ---------------------------------------------------------------------------
# Distances


def envelope_constant(max_weight: int = 1) -> float:
    """Level-1 interface constant: the larger exact linear coefficient of Enc and Dec o EC."""
    return float(max(_linear_coefficients(max_weight)))


_C1_CACHE: dict = {}


def _linear_coefficients(max_weight: int) -> tuple:
    if max_weight not in _C1_CACHE:
        pair = build_interface(1)
        _C1_CACHE[max_weight] = tuple(failure_polynomial(pair, which, max_weight)[1] for which in ("enc", "dec"))
    return _C1_CACHE[max_weight]


def distance_to_ideal(est: EffectiveChannelEstimate, uses_in: int = 1, uses_out: int = 1) -> ChannelDistanceReport:
    """Total variation between the effective and the physical channel, with the linear budget."""
    tv = total_variation(est.composed, est.physical)
    tv_se = float(0.5 * np.sum(est.composed_se))
    budget = 2 * (uses_in + uses_out) * envelope_constant() * est.p
    return ChannelDistanceReport(tv, 2 * tv, budget, tv_se)
