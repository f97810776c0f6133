"""Named experiments producing streams of result rows.

Every experiment is a generator of :class:`ResultRow`.  Rows echo the full
parameterization, carry metrics as (value, stderr) pairs and are
deterministic given the seed (wall time excepted).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from . import capacity_bounds as cb
from . import shannon_lab as sl
from .circuit_model import CircuitBuilder, CircuitDiagram, enumerate_slot_faults, sample_slot_faults
from .effective_channel import distance_to_ideal, extract, extract_exact
from .interfaces import CircuitChain, build_interface, estimate_failure
from .pauli_core import CqChannel, DenseChannel, DensityOperator, PauliChannel, depolarizing, depolarizing_dense
from .stabilizer_sim import frame_program, run_tableau
from .steane_concat import (
    HAMMING,
    exrec_good,
    exrec_partition,
    fit_exponent,
    fit_p0,
    goodness_model,
    implement,
)


class ConfigError(ValueError):
    """A parameter failed validation; ``param`` names the offender."""

    def __init__(self, param: str, message: str) -> None:
        super().__init__(f"{param}: {message}")
        self.param = param


@dataclass
class ResultRow:
    experiment: str
    params: dict
    metrics: dict
    flags: dict = field(default_factory=dict)
    wall_time: float = 0.0
    plot: tuple | None = None  # (x param, y metric, series label)

    def __post_init__(self) -> None:
        clean = {}
        for name, (value, se) in self.metrics.items():
            value, se = float(value), float(se)
            if not (math.isfinite(value) and math.isfinite(se)):
                self.flags[f"{name}_nonfinite"] = True
                continue
            clean[name] = (value, se)
        self.metrics = clean

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "metrics": {k: {"value": v, "stderr": s} for k, (v, s) in self.metrics.items()},
            "flags": self.flags,
            "wall_time": self.wall_time,
        }

    def flat(self) -> dict:
        out = {"experiment": self.experiment}
        out.update({f"param.{k}": _scalar(v) for k, v in self.params.items()})
        for k, (v, s) in self.metrics.items():
            out[f"{k}"] = v
            out[f"{k}.stderr"] = s
        out.update({f"flag.{k}": _scalar(v) for k, v in self.flags.items()})
        out["wall_time"] = self.wall_time
        return out

    def plot_point(self) -> dict | None:
        if self.plot is None:
            return None
        x, y, series = self.plot
        value, se = self.metrics[y]
        return {"series": series, "x": self.params[x], "y": value, "yerr": se}


def _scalar(v):
    if isinstance(v, (list, tuple)):
        return ";".join(str(a) for a in v)
    return v


def _timed(fn: Callable[[], tuple]) -> tuple:
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _require(cond: bool, param: str, message: str) -> None:
    if not cond:
        raise ConfigError(param, message)


def _check_level(level: int) -> None:
    _require(level in (1, 2), "level", "must be 1 or 2")


def _check_prob(p: float, name: str) -> None:
    _require(0.0 <= p <= 1.0, name, "must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Interfaces and effective channel


def interface_failure(level: int, p: float, trials: int, seed: int = 0, exact: bool | None = None) -> Iterator[ResultRow]:
    _check_level(level)
    _check_prob(p, "p")
    _require(trials > 0, "trials", "must be positive")
    est, dt = _timed(lambda: estimate_failure(level, p, trials, seed=seed, exact=exact))
    metrics = {
        "p_fail_enc": (est.p_fail_enc, est.se_enc),
        "p_fail_dec": (est.p_fail_dec, est.se_dec),
        "linear_coeff": (est.linear_coeff[0], 0.0),
        "linear_coeff_lo": (est.linear_coeff[1], 0.0),
        "linear_coeff_hi": (est.linear_coeff[2], 0.0),
    }
    for which, c1 in est.c1_exact.items():
        metrics[f"c1_{which}"] = (float(c1), 0.0)
    for which, c2 in est.c2_exact.items():
        metrics[f"c2_{which}"] = (float(c2), 0.0)
    flags = {"exact_expansion": bool(est.c1_exact), "locations": est.loc_counts}
    params = {"level": level, "p": p, "trials": trials, "seed": seed}
    yield ResultRow("interface-failure", params, metrics, flags, dt, ("p", "p_fail_dec", f"level {level}"))


def _physical_channel(name: str, strength: float) -> PauliChannel:
    if name == "identity":
        return depolarizing(0.0)
    if name == "depolarizing":
        _check_prob(strength, "strength")
        return depolarizing(strength)
    if name == "iq":
        _check_prob(strength, "strength")
        return iq_channel(strength)
    raise ConfigError("channel", f"unknown channel {name!r}")


def iq_channel(q: float) -> PauliChannel:
    """(1-q) id + q times the completely depolarizing channel, as Pauli probabilities."""
    return PauliChannel.from_vector(1, np.array([1 - 3 * q / 4, q / 4, q / 4, q / 4]))


def effective_channel(
    channel: str, strength: float, level: int, p: float, trials: int, seed: int = 0, exact: bool = False
) -> Iterator[ResultRow]:
    _check_level(level)
    _check_prob(p, "p")
    T = _physical_channel(channel, strength)
    if exact:
        _require(level == 1, "exact", "exact expansion is available at level 1 only")
        est, dt = _timed(lambda: extract_exact(T, p, level))
    else:
        _require(trials > 0, "trials", "must be positive")
        est, dt = _timed(lambda: extract(T, level, p, trials, seed))
    dist = distance_to_ideal(est)
    metrics = {"q_fail": (est.q_fail, est.q_fail_se), "tv": (dist.tv, dist.tv_se), "budget": (dist.bound_rhs, 0.0)}
    for k, label in enumerate("IXYZ"):
        metrics[f"composed_{label}"] = (est.composed.vector()[k], est.composed_se[k])
        if est.residual is not None:
            metrics[f"residual_{label}"] = (est.residual.vector()[k], est.residual_se[k])
    flags = {
        "within_budget": dist.within_budget,
        "negative_subtraction": list(est.negative_flags),
        "exact": est.exact,
    }
    params = {"channel": channel, "strength": strength, "level": level, "p": p, "trials": trials, "seed": seed}
    yield ResultRow("effective-channel", params, metrics, flags, dt, ("p", "tv", f"{channel} level {level}"))


# ---------------------------------------------------------------------------
# Goodness scaling


def _gadget_circuit(kind: str) -> CircuitDiagram:
    b = CircuitBuilder()
    if kind == "cnot":
        q0, q1 = b.wire(), b.wire()
        b.cnot(q0, q1)
        return b.build([q0, q1], [q0, q1])
    if kind == "h":
        q = b.wire()
        b.h(q)
        return b.build([q], [q])
    raise ConfigError("gadget", f"unknown gadget {kind!r}")


@lru_cache(maxsize=4)
def _implemented_gadget(kind: str, level: int) -> tuple:
    c = _gadget_circuit(kind)
    cimpl = implement(c, level)
    return cimpl, exrec_partition(cimpl)[0]


def threshold_scan(
    grid: Sequence[float],
    levels: Sequence[int] = (1, 2),
    gadget: str = "cnot",
    samples: int = 2000,
    max_weight: int = 8,
    seed: int = 0,
) -> Iterator[ResultRow]:
    """Goodness failure of one ExRec against p, with slope and p0 fits per level."""
    _require(len(grid) >= 2, "grid", "needs at least two points")
    for p in grid:
        _require(0.0 < p < 1.0, "grid", "points must lie in (0, 1)")
    for level in levels:
        _check_level(level)
    _require(max_weight >= 2 * max(levels), "max_weight", "must reach 2^level")
    slopes = {}
    for level in levels:
        t0 = time.perf_counter()
        cimpl, exrec = _implemented_gadget(gadget, level)
        model = goodness_model(cimpl, exrec, max_weight, samples, seed)
        build_time = time.perf_counter() - t0
        probs = [model.probability(p) for p in grid]
        for p, prob in zip(grid, probs):
            params = {"level": level, "p": p, "gadget": gadget, "samples": samples, "max_weight": max_weight, "seed": seed}
            metrics = {"p_not_good": (prob, model.stderr(p)), "p0_fit": (fit_p0(p, prob, level), 0.0)}
            flags = {"exrec_slots": model.n_slots}
            yield ResultRow("threshold-scan", params, metrics, flags, build_time, ("p", "p_not_good", f"level {level}"))
            build_time = 0.0
        slope, intercept = fit_exponent(grid, probs)
        slopes[level] = slope
        params = {"level": level, "grid": list(grid), "gadget": gadget, "samples": samples, "seed": seed}
        yield ResultRow("threshold-scan", params, {"exponent": (slope, 0.0), "log_prefactor": (intercept, 0.0)}, {"summary": True})
    if 1 in slopes and 2 in slopes:
        params = {"grid": list(grid), "gadget": gadget, "samples": samples, "seed": seed}
        yield ResultRow("threshold-scan", params, {"exponent_ratio": (slopes[2] / slopes[1], 0.0)}, {"summary": True})


# ---------------------------------------------------------------------------
# Exhaustive weight-1 audit


def audit_circuit() -> CircuitDiagram:
    """Three gates with classical I/O: conditional X preparations, a CNOT, two measurements."""
    b = CircuitBuilder()
    c0, c1 = b.bits(2)
    q0, q1 = b.prep(), b.prep()
    b.pauli("X", q0, c0)
    b.pauli("X", q1, c1)
    b.cnot(q0, q1)
    m0, m1 = b.measure(q0), b.measure(q1)
    return b.build([], [], [c0, c1], [m0, m1])


def exrec_audit(level: int = 1) -> Iterator[ResultRow]:
    """Every single-slot fault pattern: good patterns must give the ideal classical I/O."""
    _check_level(level)
    t0 = time.perf_counter()
    c = audit_circuit()
    cimpl = implement(c, level)
    prog = frame_program(cimpl)
    loc_ids, _ = cimpl.slot_table()
    exrecs = exrec_partition(cimpl)
    inputs = np.array(list(itertools.product((0, 1), repeat=len(c.classical_in))), dtype=bool)
    ideal = np.array([run_tableau(c, None, seed=0, classical_in=[int(v) for v in row]).classical_out for row in inputs], dtype=bool)
    for w in (1,):
        count, trial, slot, code = enumerate_slot_faults(prog.n_fault_slots, w)
        patterns_locs = loc_ids[slot].reshape(count, w)
        good = np.array([all(exrec_good(set(row.tolist()), ex, cimpl) for ex in exrecs) for row in patterns_locs])
        wrong = np.zeros(count, dtype=bool)
        for k, row in enumerate(inputs):
            res = prog.run(count, (trial, slot, code), classical_in=np.repeat(row[None, :], count, axis=0))
            wrong |= (res.classical_out != ideal[k]).any(axis=1)
        counterexamples = int(np.sum(good & wrong))
        params = {"level": level, "weight": w, "circuit": "prep+cx, prep+cx, cnot, measure x2"}
        metrics = {
            "patterns": (count, 0.0),
            "good_patterns": (int(good.sum()), 0.0),
            "bad_patterns_wrong": (int(np.sum(~good & wrong)), 0.0),
            "counterexamples": (counterexamples, 0.0),
        }
        flags = {"lemma_holds": counterexamples == 0, "locations": len(cimpl.locations)}
        yield ResultRow("exrec-audit", params, metrics, flags, time.perf_counter() - t0)
        t0 = time.perf_counter()


# ---------------------------------------------------------------------------
# Bounds, capacities, Shannon experiments


BOUND_NAMES = (
    "ft_cq",
    "sep_avp_quantum",
    "avp_classical",
    "avp_quantum",
    "postselection",
    "good_code",
    "good_code_error",
    "ft_classical",
    "ft_quantum",
    "decoupling_fidelity",
    "alpha0",
    "hashing_root",
)


def bounds(name: str, **kw) -> Iterator[ResultRow]:
    """Evaluate one closed-form bound; keyword arguments are its parameters."""
    kw = {k: v for k, v in kw.items() if v is not None}

    def need(*keys: str) -> list:
        missing = [k for k in keys if k not in kw]
        if missing:
            raise ConfigError(missing[0], f"required by bound {name!r}")
        return [kw[k] for k in keys]

    t0 = time.perf_counter()
    if name == "alpha0":
        value = cb.alpha0()
        yield ResultRow("bounds", {"name": name}, {"value": (value, 0.0)}, {}, time.perf_counter() - t0)
        return
    if name == "hashing_root":
        value = cb.hashing_root()
        yield ResultRow("bounds", {"name": name}, {"value": (value, 0.0)}, {}, time.perf_counter() - t0)
        return
    if name == "postselection":
        m, p, delta, dB = need("m", "p", "delta", "dB")
        f = cb.postselection_factor(int(m), p, delta, int(dB))
        params = {"name": name, "m": int(m), "p": p, "delta": delta, "dB": int(dB)}
        metrics = {"log2_growth": (f.log2_growth, 0.0), "log2_tail": (f.log2_tail, 0.0)}
        yield ResultRow("bounds", params, metrics, {}, time.perf_counter() - t0)
        return
    if name == "ft_cq":
        C, d, c, p = need("C", "d", "c", "p")
        rep = cb.ft_cq_lower_bound(C, int(d), c, p, kw.get("p0"))
    elif name == "sep_avp_quantum":
        Q, p, dB = need("Q", "p", "dB")
        rep = cb.sep_avp_quantum_bound(Q, p, int(dB), kw.get("C"), kw.get("p0"))
    elif name == "avp_classical":
        chi, k, p, dB = need("value_k", "k", "p", "dB")
        rep = cb.avp_classical_lower_bound(chi, int(k), p, int(dB))
    elif name == "avp_quantum":
        ic, k, p, dA, dB = need("value_k", "k", "p", "dA", "dB")
        rep = cb.avp_quantum_lower_bound(ic, int(k), p, int(dA), int(dB))
    elif name == "good_code":
        p, q, c = need("p", "q", "c")
        rep = cb.good_code_bound(p, q, c, kw.get("p0"))
    elif name == "good_code_error":
        m, delta, p, q, c, alpha = need("m", "delta", "p", "q", "c", "alpha")
        rep = cb.good_code_scheme_error(int(m), delta, p, q, c, alpha, int(kw.get("j", 1)), kw.get("eps_m", 0.0), kw.get("p0"))
    elif name in ("ft_classical", "ft_quantum"):
        v, k, p, c, d1, d2 = need("value_k", "k", "p", "c", "d1", "d2")
        rep = cb.ft_capacity_lower_bound(name[3:], v, int(k), p, c, int(d1), int(d2), kw.get("p0"))
    elif name == "decoupling_fidelity":
        m, R, delta, mu, ic = need("m", "R", "delta", "mu_min", "value_k")
        rep = cb.decoupling_fidelity_bound(int(m), R, delta, mu, ic)
    else:
        raise ConfigError("name", f"unknown bound {name!r}; choose from {', '.join(BOUND_NAMES)}")
    params = {"name": name, **{k: v for k, v in rep.params.items() if v is not None}}
    flags = {"valid": rep.valid, "violations": list(rep.violations), "notes": list(rep.notes), "provenance": rep.provenance}
    yield ResultRow("bounds", params, {"value": (rep.value, 0.0)}, flags, time.perf_counter() - t0)


def _ket(v: Sequence[complex]) -> DensityOperator:
    return DensityOperator.from_vector(np.asarray(v, dtype=complex))


def _amplitude_damping(gamma: float) -> DenseChannel:
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return DenseChannel(2, 2, (k0, k1))


def _pauli_dense(q: float) -> DenseChannel:
    """Depolarizing with X, Y, Z each at q/3."""
    ops = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    ws = [1 - q, q / 3, q / 3, q / 3]
    return DenseChannel(2, 2, tuple(math.sqrt(w) * np.asarray(o, dtype=complex) for w, o in zip(ws, ops) if w > 0))


def named_cq_channel(name: str) -> CqChannel:
    if name == "zero_plus":
        return CqChannel(2, (_ket([1, 0]), _ket(np.array([1, 1]) / math.sqrt(2))))
    if name == "orthogonal":
        return CqChannel(2, (_ket([1, 0]), _ket([0, 1])))
    if name == "trivial":
        return CqChannel(2, (_ket([1, 0]), _ket([1, 0])))
    raise ConfigError("channel", f"unknown cq channel {name!r}")


def named_quantum_channel(name: str, strength: float) -> DenseChannel:
    if name == "depolarizing":
        return _pauli_dense(strength)
    if name == "amplitude_damping":
        return _amplitude_damping(strength)
    if name == "completely_depolarizing":
        return depolarizing_dense(strength)
    if name == "identity":
        return _pauli_dense(0.0)
    raise ConfigError("channel", f"unknown quantum channel {name!r}")


def capacity(kind: str, channel: str, strength: float = 0.0, restarts: int = 16, seed: int = 0, tol: float = 1e-6) -> Iterator[ResultRow]:
    t0 = time.perf_counter()
    params = {"kind": kind, "channel": channel, "strength": strength, "restarts": restarts, "seed": seed, "tol": tol}
    if kind == "holevo_cq":
        res = cb.holevo_capacity_cq(named_cq_channel(channel), tol=tol)
        metrics = {"value": (res.value, 0.0), "dual_upper": (res.upper, 0.0)}
        flags = {"converged": res.converged, "argmax": [float(a) for a in res.argmax]}
    elif kind == "coherent":
        res = cb.max_coherent_information(named_quantum_channel(channel, strength), restarts=restarts, tol=tol, seed=seed)
        metrics = {"value": (res.value, 0.0), "restart_spread": (res.spread, 0.0)}
        flags = {"argmax_diag": [float(v) for v in np.real(np.diag(res.argmax))]}
    elif kind == "holevo":
        res = cb.channel_holevo(named_quantum_channel(channel, strength), restarts=restarts, seed=seed)
        metrics = {"value": (res.value, 0.0), "restart_spread": (res.spread, 0.0)}
        flags = {}
    else:
        raise ConfigError("kind", "must be holevo_cq, coherent or holevo")
    yield ResultRow("capacity", params, metrics, flags, time.perf_counter() - t0)


def _parse_dist(text: str | Sequence[float]) -> list:
    if isinstance(text, str):
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise ConfigError("dist", "comma separated floats expected") from exc
    else:
        vals = [float(v) for v in text]
    _require(all(v >= 0 for v in vals) and abs(sum(vals) - 1) < 1e-9, "dist", "must be a probability vector")
    return vals


def shannon(
    kind: str,
    dist: str | Sequence[float] = "0.9,0.05,0.05",
    n: int = 4,
    delta: float = 0.1,
    trials: int = 100000,
    codebooks: int = 50,
    messages: int = 2,
    channel: str = "zero_plus",
    seed: int = 0,
) -> Iterator[ResultRow]:
    t0 = time.perf_counter()
    params = {"kind": kind, "n": n, "delta": delta, "seed": seed}
    if kind == "typical":
        probs = _parse_dist(dist)
        spec = sl.TypicalSetSpec(tuple(probs), n, delta)
        chk = sl.typicality_probability(spec, trials, seed)
        params.update(dist=probs, trials=trials)
        metrics = {
            "probability": (chk.empirical, chk.se),
            "exact_probability": (sl.exact_typical_probability(spec), 0.0),
            "floor": (chk.floor, 0.0),
            "floor_two_sided": (chk.floor_two_sided, 0.0),
            "typical_size": (len(sl.typical_set(spec)), 0.0),
        }
        flags = {"floor_holds": chk.holds, "equipartition": sl.check_equipartition(spec)}
    elif kind == "packing":
        cq = named_cq_channel(channel)
        res = sl.packing_experiment(cq, [0.5, 0.5], n, messages, delta, codebooks, seed)
        params.update(channel=channel, messages=messages, codebooks=codebooks)
        metrics = {"mean_success": (res.mean_success, res.se), "floor": (res.thm41_bound, 0.0), "chi": (res.chi, 0.0)}
        flags = {"floor_vacuous": res.bound_vacuous, "pgm_flags": list(res.flags)}
    else:
        raise ConfigError("kind", "must be typical or packing")
    yield ResultRow("shannon", params, metrics, flags, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# End-to-end pipeline


def _gf2_rank(m: np.ndarray) -> int:
    m = m.copy() % 2
    rank = 0
    for col in range(m.shape[1]):
        piv = [r for r in range(rank, m.shape[0]) if m[r, col]]
        if not piv:
            continue
        m[[rank, piv[0]]] = m[[piv[0], rank]]
        for r in range(m.shape[0]):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    return rank


@lru_cache(maxsize=1)
def _outer_code() -> tuple:
    # np.linalg.matrix_rank works over the reals; redo the basis choice over GF(2)
    words = [np.array(v, dtype=np.uint8) for v in itertools.product((0, 1), repeat=7) if not (HAMMING @ np.array(v) % 2).any()]
    rows: list = []
    for v in words:
        if _gf2_rank(np.array(rows + [v], dtype=np.uint8)) > len(rows):
            rows.append(v)
        if len(rows) == 4:
            break
    G = np.array(rows, dtype=np.uint8)
    msgs = np.array(list(itertools.product((0, 1), repeat=4)), dtype=np.uint8)
    codewords = msgs @ G % 2
    return G, msgs, codewords


def hamming_decode(received: np.ndarray) -> np.ndarray:
    """Syndrome decoding of rows of 7 bits; returns the message index of the decoded codeword."""
    _, _, codewords = _outer_code()
    r = received.astype(np.uint8) % 2
    syn = r @ HAMMING.T % 2
    pos = syn @ np.array([4, 2, 1])  # qubit j sits at position j+1
    fixed = r.copy()
    hit = pos > 0
    fixed[np.flatnonzero(hit), pos[hit] - 1] ^= 1
    lookup = {tuple(w): k for k, w in enumerate(codewords)}
    return np.array([lookup[tuple(row)] for row in fixed], dtype=np.int64)


def baseline_classical_error(q: float, m: int = 7) -> float:
    """Block error of the outer code when each line flips with probability q/2 and circuits are perfect."""
    f = q / 2
    return 1.0 - ((1 - f) ** m + m * f * (1 - f) ** (m - 1))


@lru_cache(maxsize=2)
def line_chain(level: int) -> tuple[CircuitChain, int]:
    """Implemented bit preparation, Dec, physical line, Enc, implemented measurement.

    Returns the chain and the index of the part after which the physical channel acts.
    """
    b = CircuitBuilder()
    cbit = b.bit()
    q = b.prep()
    b.pauli("X", q, cbit)
    prep = implement(b.build([], [q], [cbit], []), level)
    b = CircuitBuilder()
    q = b.wire()
    m = b.measure(q)
    meas = implement(b.build([q], [], [], [m]), level)
    pair = build_interface(level)
    parts = (prep,) + tuple(pair.dec.parts) + tuple(pair.enc.parts) + (meas,)
    return CircuitChain(parts), len(pair.dec.parts)


@dataclass
class EndToEndResult:
    level: int
    p: float
    q: float
    blocks: int
    eps_cl: float
    eps_cl_se: float
    line_flip: float
    line_flip_se: float
    baseline: float


def run_end_to_end(level: int, p: float, q: float, blocks: int, seed: int = 0, batch_blocks: int = 2048) -> EndToEndResult:
    """Classical messages over m = 7 uses of I_q through the encoded pipeline."""
    chain, junction = line_chain(level)
    G, msgs, codewords = _outer_code()
    T = iq_channel(q)
    n_lines = 7
    wrong = flips = 0
    seeds = np.random.SeedSequence(seed).spawn((blocks + batch_blocks - 1) // batch_blocks)
    done = 0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        nb = min(batch_blocks, blocks - done)
        msg = rng.integers(0, 16, nb)
        bits = codewords[msg].reshape(-1)
        trials = bits.size
        t_codes = rng.choice(4, size=trials, p=T.vector())
        faults = sample_slot_faults(chain.n_slots, p, trials, rng) if p > 0 else None
        xflip = np.array([0, 1, 1, 0], dtype=bool)[t_codes]
        zflip = np.array([0, 0, 1, 1], dtype=bool)[t_codes]

        def insert(k: int, x: np.ndarray, z: np.ndarray):
            if k == junction:
                x = x.copy()
                z = z.copy()
                x[:, 0] ^= xflip
                z[:, 0] ^= zflip
            return x, z

        res = chain.run(trials, faults, rng=rng, between=insert, classical_in=bits[:, None].astype(bool))
        out = res[-1].classical_out[:, 0].astype(np.uint8)
        flips += int(np.sum(out != bits))
        decoded = hamming_decode(out.reshape(nb, n_lines))
        wrong += int(np.sum(decoded != msg))
        done += nb
    eps = wrong / blocks
    lf = flips / (blocks * n_lines)
    return EndToEndResult(
        level,
        p,
        q,
        blocks,
        eps,
        math.sqrt(eps * (1 - eps) / blocks),
        lf,
        math.sqrt(lf * (1 - lf) / (blocks * n_lines)),
        baseline_classical_error(q, n_lines),
    )


def quantum_surrogate(composed: PauliChannel) -> float:
    """1 - min over Pauli-axis eigenstates of the fidelity: 1 - p_I - min(p_X, p_Y, p_Z)."""
    v = composed.vector()
    return float(1.0 - v[0] - v[1:].min())


def end_to_end(level: int, p: float, q: float, m: int = 7, blocks: int = 20000, quantum_trials: int = 0, seed: int = 0) -> Iterator[ResultRow]:
    _check_level(level)
    _check_prob(p, "p")
    _check_prob(q, "q")
    _require(m == 7, "m", "the outer code uses exactly 7 lines")
    _require(blocks > 0, "blocks", "must be positive")
    t0 = time.perf_counter()
    r = run_end_to_end(level, p, q, blocks, seed)
    metrics = {
        "eps_cl": (r.eps_cl, r.eps_cl_se),
        "line_flip": (r.line_flip, r.line_flip_se),
        "baseline_eps_cl": (r.baseline, 0.0),
    }
    flags = {"surrogate": "eps_q is a Pauli-frame surrogate"}
    if quantum_trials > 0:
        est = extract(iq_channel(q), level, p, quantum_trials, seed + 1)
        v = est.composed.vector()
        se = est.composed_se
        worst = int(np.argmin(v[1:])) + 1
        metrics["eps_q"] = (quantum_surrogate(est.composed), float(math.hypot(se[0], se[worst])))
    params = {"level": level, "p": p, "q": q, "m": m, "blocks": blocks, "quantum_trials": quantum_trials, "seed": seed}
    yield ResultRow("end-to-end", params, metrics, flags, time.perf_counter() - t0, ("p", "eps_cl", f"level {level}"))


REGISTRY: dict[str, Callable[..., Iterator[ResultRow]]] = {
    "interface-failure": interface_failure,
    "effective-channel": effective_channel,
    "threshold-scan": threshold_scan,
    "exrec-audit": exrec_audit,
    "bounds": bounds,
    "capacity": capacity,
    "shannon": shannon,
    "end-to-end": end_to_end,
}
