"""Small-block typicality and packing experiments.

Typical sets are enumerated exhaustively, typical projectors are built in
the product eigenbasis, and random codebooks are decoded with the
pretty-good measurement by dense linear algebra.  Block sizes are kept
small enough that every quantity is exact up to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .capacity_bounds import Ensemble, holevo_chi
from .circuit_model import ENUMERATION_BUDGET, BudgetError
from .pauli_core import CqChannel, DensityOperator, shannon_entropy

MAX_DENSE_DIM = 2**10
PGM_CUTOFF = 1e-10


def _dist(p: Sequence[float]) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.ndim != 1 or v.size == 0 or v.min() < 0 or abs(v.sum() - 1) > 1e-10:
        raise ValueError("not a probability vector")
    return v


def hoeffding_floor(n: int, delta: float, p_min: float, two_sided: bool = False) -> float:
    """1 - exp(-2 n delta^2 / log2(p_min)^2); equal to 1 when p_min = 1.

    A deviation in either direction leaves the typical set, so the two-sided
    Hoeffding inequality doubles the exponential term; ``two_sided`` gives
    that weaker but always valid floor.
    """
    if p_min >= 1.0:
        return 1.0
    tail = math.exp(-2 * n * delta * delta / math.log2(p_min) ** 2)
    return 1.0 - (2 * tail if two_sided else tail)


# ---------------------------------------------------------------------------
# Classical typicality


@dataclass(frozen=True, eq=False)
class TypicalSetSpec:
    dist: tuple
    n: int
    delta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "dist", tuple(_dist(self.dist)))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def probs(self) -> np.ndarray:
        return np.array(self.dist)

    @property
    def entropy(self) -> float:
        return shannon_entropy(self.dist)

    @property
    def p_min(self) -> float:
        p = self.probs
        return float(p[p > 0].min())


def all_sequences(alphabet: int, n: int) -> np.ndarray:
    """Every length-n string over range(alphabet), lexicographic, as rows."""
    if alphabet**n > ENUMERATION_BUDGET:
        raise BudgetError(f"{alphabet}^{n} sequences exceed the enumeration budget")
    grids = np.indices((alphabet,) * n).reshape(n, -1).T
    return grids.astype(np.int8 if alphabet < 128 else np.int32)


def _surprisal(seqs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """-(1/n) log2 p(x^n) per row; +inf for zero-probability strings."""
    with np.errstate(divide="ignore"):
        logs = np.log2(probs)
    return -logs[seqs].sum(axis=1) / seqs.shape[1]


def is_typical(seq: Sequence[int], spec: TypicalSetSpec) -> bool:
    s = _surprisal(np.asarray(seq, dtype=np.int64)[None, :], spec.probs)[0]
    return bool(abs(s - spec.entropy) <= spec.delta)


def typical_set(spec: TypicalSetSpec) -> np.ndarray:
    """Rows of the delta-typical set, in lexicographic order."""
    seqs = all_sequences(len(spec.dist), spec.n)
    s = _surprisal(seqs, spec.probs)
    return seqs[np.abs(s - spec.entropy) <= spec.delta]


def sequence_probabilities(seqs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return np.prod(probs[seqs], axis=1)


def check_equipartition(spec: TypicalSetSpec) -> bool:
    """Every typical string has probability at most 2^{-n(H - delta)}."""
    t = typical_set(spec)
    if t.size == 0:
        return True
    bound = 2.0 ** (-spec.n * (spec.entropy - spec.delta))
    return bool(np.all(sequence_probabilities(t, spec.probs) <= bound * (1 + 1e-12)))


def exact_typical_probability(spec: TypicalSetSpec) -> float:
    t = typical_set(spec)
    return float(sequence_probabilities(t, spec.probs).sum()) if t.size else 0.0


@dataclass
class FloorCheck:
    empirical: float
    se: float
    floor: float
    floor_two_sided: float = -math.inf

    @property
    def holds(self) -> bool:
        return self.empirical >= self.floor - 4 * self.se

    def to_json(self) -> dict:
        return {
            "empirical": self.empirical,
            "se": self.se,
            "floor": self.floor,
            "floor_two_sided": self.floor_two_sided,
            "holds": self.holds,
        }


def typicality_probability(spec: TypicalSetSpec, trials: int, seed: int = 0) -> FloorCheck:
    """Monte-Carlo P(X^n typical) against the Hoeffding floor."""
    rng = np.random.default_rng(seed)
    seqs = rng.choice(len(spec.dist), size=(trials, spec.n), p=spec.probs)
    s = _surprisal(seqs, spec.probs)
    hit = float(np.mean(np.abs(s - spec.entropy) <= spec.delta))
    args = (spec.n, spec.delta, spec.p_min)
    return FloorCheck(hit, math.sqrt(hit * (1 - hit) / trials), hoeffding_floor(*args), hoeffding_floor(*args, two_sided=True))


# ---------------------------------------------------------------------------
# Conditional typicality


def _joint(joint: np.ndarray) -> np.ndarray:
    j = np.asarray(joint, dtype=float)
    if j.ndim != 2 or j.min() < 0 or abs(j.sum() - 1) > 1e-10:
        raise ValueError("joint distribution must be a non-negative matrix summing to 1")
    return j


def conditional_entropy(joint: np.ndarray) -> float:
    """H(X,Y) - H(X)."""
    j = _joint(joint)
    return shannon_entropy(j.ravel()) - shannon_entropy(j.sum(axis=1))


def conditional_matrix(joint: np.ndarray) -> np.ndarray:
    """p(y|x), with zero rows where p(x) = 0."""
    j = _joint(joint)
    px = j.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(px > 0, j / np.where(px > 0, px, 1), 0.0)


def r_min(joint: np.ndarray) -> float:
    c = conditional_matrix(joint)
    return float(c[_joint(joint) > 0].min())


def _conditional_surprisal(xn: np.ndarray, yseqs: np.ndarray, cond: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logs = np.log2(cond)
    return -logs[xn[None, :], yseqs].sum(axis=1) / yseqs.shape[1]


def conditional_typical_set(joint: np.ndarray, xn: Sequence[int], delta: float) -> np.ndarray:
    """Rows y^n typical given x^n; empty when p(x^n) = 0."""
    j = _joint(joint)
    xn = np.asarray(xn, dtype=np.int64)
    if np.any(j.sum(axis=1)[xn] == 0):
        return np.zeros((0, xn.size), dtype=np.int8)
    yseqs = all_sequences(j.shape[1], xn.size)
    s = _conditional_surprisal(xn, yseqs, conditional_matrix(j))
    return yseqs[np.abs(s - conditional_entropy(j)) <= delta]


def conditional_size_bound(joint: np.ndarray, n: int, delta: float) -> float:
    return 2.0 ** (n * (conditional_entropy(joint) + delta))


def exact_conditional_probability(joint: np.ndarray, n: int, delta: float) -> float:
    """E over x^n of P(Y^n typical given x^n), by enumeration of all pairs."""
    j = _joint(joint)
    cond = conditional_matrix(j)
    px = j.sum(axis=1)
    xs = all_sequences(j.shape[0], n)
    ys = all_sequences(j.shape[1], n)
    if xs.shape[0] * ys.shape[0] > ENUMERATION_BUDGET:
        raise BudgetError("joint enumeration exceeds the budget")
    h = conditional_entropy(j)
    total = 0.0
    for xn in xs:
        pxn = float(np.prod(px[xn]))
        if pxn == 0:
            continue
        s = _conditional_surprisal(xn.astype(np.int64), ys, cond)
        mask = np.abs(s - h) <= delta
        total += pxn * float(np.prod(cond[xn[None, :], ys[mask]], axis=1).sum())
    return total


def conditional_probability(joint: np.ndarray, n: int, delta: float, trials: int, seed: int = 0) -> FloorCheck:
    """Monte-Carlo E_x P(Y^n typical | x^n) against the Hoeffding floor."""
    j = _joint(joint)
    rng = np.random.default_rng(seed)
    flat = rng.choice(j.size, size=(trials, n), p=j.ravel())
    xs, ys = np.divmod(flat, j.shape[1])
    with np.errstate(divide="ignore"):
        logs = np.log2(conditional_matrix(j))
    s = -logs[xs, ys].sum(axis=1) / n
    hit = float(np.mean(np.abs(s - conditional_entropy(j)) <= delta))
    args = (n, delta, r_min(j))
    return FloorCheck(hit, math.sqrt(hit * (1 - hit) / trials), hoeffding_floor(*args), hoeffding_floor(*args, two_sided=True))


# ---------------------------------------------------------------------------
# Quantum typicality


def _eig(rho: DensityOperator) -> tuple[np.ndarray, np.ndarray]:
    lam, vec = np.linalg.eigh(rho.matrix)
    lam = np.clip(lam, 0.0, None)
    return lam / lam.sum(), vec


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


@dataclass
class TypicalProjector:
    """Projector diagonal in a product eigenbasis: columns of ``basis`` selected by ``mask``."""

    basis: np.ndarray
    mask: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return int(self.mask.sum())

    def matrix(self) -> np.ndarray:
        v = self.basis[:, self.mask]
        return v @ v.conj().T


def _product_basis(vecs: Sequence[np.ndarray], n_factors: int) -> np.ndarray:
    return _kron_all(list(vecs)) if n_factors else np.eye(1)


def quantum_typical_projector(rho: DensityOperator, n: int, delta: float) -> TypicalProjector:
    """Typical projector of rho^{(x) n} built from the eigenvalue distribution of rho."""
    if rho.dim > 4 or rho.dim**n > 10**4:
        raise BudgetError("typical projector too large for dense algebra")
    lam, vec = _eig(rho)
    seqs = all_sequences(rho.dim, n)
    h = shannon_entropy(lam)
    s = _surprisal(seqs, lam)
    mask = np.abs(s - h) <= delta
    basis = _product_basis([vec] * n, n)
    weights = sequence_probabilities(seqs, lam)
    return TypicalProjector(basis, mask, weights)


def tensor_power(m: np.ndarray, n: int) -> np.ndarray:
    return _kron_all([m] * n)


def typical_operator_gap(rho: DensityOperator, n: int, delta: float) -> float:
    """Smallest eigenvalue of 2^{-n(S - delta)} Pi - Pi rho^{(x) n} Pi; never negative beyond rounding."""
    proj = quantum_typical_projector(rho, n, delta)
    pi = proj.matrix()
    s = shannon_entropy(_eig(rho)[0])
    big = tensor_power(rho.matrix, n)
    diff = 2.0 ** (-n * (s - delta)) * pi - pi @ big @ pi
    return float(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)).min())


def quantum_typical_probability(rho: DensityOperator, n: int, delta: float) -> FloorCheck:
    """Tr(Pi rho^{(x) n}) (exact) against the floor with the smallest nonzero eigenvalue."""
    proj = quantum_typical_projector(rho, n, delta)
    value = float(np.real(np.trace(proj.matrix() @ tensor_power(rho.matrix, n))))
    lam = _eig(rho)[0]
    args = (n, delta, float(lam[lam > 1e-15].min()))
    return FloorCheck(value, 0.0, hoeffding_floor(*args), hoeffding_floor(*args, two_sided=True))


@dataclass
class EnsembleEig:
    probs: np.ndarray
    values: list
    vectors: list

    def joint(self) -> np.ndarray:
        return self.probs[:, None] * np.array(self.values)


def ensemble_eig(probs: Sequence[float], states: Sequence[DensityOperator]) -> EnsembleEig:
    vals, vecs = [], []
    for s in states:
        lam, v = _eig(s)
        vals.append(lam)
        vecs.append(v)
    return EnsembleEig(_dist(probs), vals, vecs)


def conditional_typical_projector(
    probs: Sequence[float], states: Sequence[DensityOperator], xn: Sequence[int], delta: float
) -> TypicalProjector:
    """Projector onto conditionally typical eigenvector strings of rho_{x^n}."""
    e = ensemble_eig(probs, states)
    d = states[0].dim
    if d ** len(xn) > MAX_DENSE_DIM:
        raise BudgetError("conditional projector too large for dense algebra")
    xn = np.asarray(xn, dtype=np.int64)
    basis = _product_basis([e.vectors[x] for x in xn], len(xn))
    joint = e.joint()
    if np.any(e.probs[xn] == 0):
        return TypicalProjector(basis, np.zeros(d ** len(xn), dtype=bool), np.zeros(d ** len(xn)))
    ys = all_sequences(d, len(xn))
    cond = conditional_matrix(joint)
    s = _conditional_surprisal(xn, ys, cond)
    mask = np.abs(s - conditional_entropy(joint)) <= delta
    weights = np.prod(cond[xn[None, :], ys], axis=1)
    return TypicalProjector(basis, mask, weights)


def product_state(states: Sequence[DensityOperator], xn: Sequence[int]) -> np.ndarray:
    return _kron_all([states[x].matrix for x in xn])


def conditional_quantum_probability(
    probs: Sequence[float], states: Sequence[DensityOperator], n: int, delta: float
) -> FloorCheck:
    """Exact average of Tr(Pi_{x^n} rho_{x^n}) over x^n, against the floor with mu_min."""
    e = ensemble_eig(probs, states)
    cond = conditional_matrix(e.joint())
    h = conditional_entropy(e.joint())
    d = states[0].dim
    xs = all_sequences(len(e.probs), n)
    ys = all_sequences(d, n)
    total = 0.0
    for xn in xs:
        pxn = float(np.prod(e.probs[xn]))
        if pxn == 0:
            continue
        xn64 = xn.astype(np.int64)
        s = _conditional_surprisal(xn64, ys, cond)
        mask = np.abs(s - h) <= delta
        total += pxn * float(np.prod(cond[xn64[None, :], ys[mask]], axis=1).sum())
    mu = min(float(v[v > 1e-15].min()) for p, v in zip(e.probs, e.values) if p > 0)
    return FloorCheck(total, 0.0, hoeffding_floor(n, delta, mu), hoeffding_floor(n, delta, mu, two_sided=True))


# ---------------------------------------------------------------------------
# Pretty-good measurement and packing


@dataclass
class Codebook:
    M: int
    codewords: np.ndarray
    povm: list
    complement: np.ndarray
    flags: tuple = ()

    def completeness_error(self) -> float:
        total = sum(self.povm) + self.complement
        return float(np.abs(total - np.eye(total.shape[0])).max())


def _inv_sqrt(s: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray, bool]:
    lam, vec = np.linalg.eigh(0.5 * (s + s.conj().T))
    scale = max(float(np.abs(lam).max()), 1e-300)
    keep = lam > cutoff * scale
    kept = vec[:, keep]
    inv = kept @ np.diag(lam[keep] ** -0.5) @ kept.conj().T
    support = kept @ kept.conj().T
    near = bool(np.any((lam > cutoff * scale) & (lam < 1e3 * cutoff * scale)))
    return inv, support, near


def pgm_povm(ops: Sequence[np.ndarray], cutoff: float = PGM_CUTOFF) -> tuple[list, np.ndarray, tuple]:
    """Pretty-good measurement for positive operators, completed by identity minus the sum."""
    ops = [np.asarray(o, dtype=complex) for o in ops]
    d = ops[0].shape[0]
    if d > MAX_DENSE_DIM:
        raise BudgetError("operators exceed the dense dimension cap")
    for o in ops:
        if np.linalg.eigvalsh(0.5 * (o + o.conj().T)).min() < -1e-10:
            raise ValueError("operators must be positive semidefinite")
    s = sum(ops)
    inv, support, near = _inv_sqrt(s, cutoff)
    povm = [inv @ o @ inv for o in ops]
    complement = np.eye(d) - support
    flags = ("near-singular sum of operators",) if near else ()
    return povm, complement, flags


def pgm_success(povm: Sequence[np.ndarray], states: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([float(np.real(np.trace(l @ s))) for l, s in zip(povm, states)])


def two_state_pgm_error(overlap: float) -> float:
    """Per-state error of the square-root measurement on two equiprobable pure states."""
    return (1 - math.sqrt(1 - overlap**2)) / 2


def helstrom_success(rho0: np.ndarray, rho1: np.ndarray, p0: float = 0.5) -> float:
    diff = p0 * rho0 - (1 - p0) * rho1
    return 0.5 * (1 + float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum()))


@dataclass
class PackingResult:
    mean_success: float
    se: float
    thm41_bound: float
    successes: np.ndarray
    rate: float
    chi: float
    flags: tuple = ()

    @property
    def bound_vacuous(self) -> bool:
        return self.thm41_bound <= 0

    def to_json(self) -> dict:
        return {
            "mean_success": self.mean_success,
            "se": self.se,
            "floor": self.thm41_bound,
            "floor_vacuous": self.bound_vacuous,
            "rate": self.rate,
            "chi": self.chi,
            "codebooks": int(self.successes.size),
            "flags": list(self.flags),
        }


def packing_floor(n: int, rate: float, delta: float, chi: float, lam_min: float, mu_min: float) -> float:
    """1 - 4 e^{-2n d^2/log2(lam)^2} - 2 e^{-2n d^2/log2(mu)^2} - 4 * 2^{n(R - chi + 2 d)}."""
    return (
        1
        - 4 * (1 - hoeffding_floor(n, delta, lam_min))
        - 2 * (1 - hoeffding_floor(n, delta, mu_min))
        - 4 * 2.0 ** (n * (rate - chi + 2 * delta))
    )


def _draw_words(rng: np.random.Generator, prior: np.ndarray, n: int, M: int, distinct: bool) -> np.ndarray:
    if not distinct:
        return rng.choice(len(prior), size=(M, n), p=prior)
    seqs = all_sequences(len(prior), n)
    w = sequence_probabilities(seqs, prior)
    pick = rng.choice(seqs.shape[0], size=M, replace=False, p=w / w.sum())
    return seqs[pick].astype(np.int64)


def packing_experiment(
    cq: CqChannel,
    prior: Sequence[float],
    n: int,
    M: int,
    delta: float,
    codebooks: int,
    seed: int = 0,
    cutoff: float = PGM_CUTOFF,
    distinct: bool = False,
) -> PackingResult:
    """Random codebooks decoded by the PGM of typical-projector-sandwiched code states.

    Codewords are i.i.d. draws from ``prior``; ``distinct`` instead draws M
    different strings with probability proportional to their prior weight.
    """
    prior = _dist(prior)
    if cq.dim**n > MAX_DENSE_DIM:
        raise BudgetError(f"output dimension {cq.dim}^{n} exceeds {MAX_DENSE_DIM}")
    if M > cq.alphabet_size**n:
        raise ValueError("more messages than input strings")
    states = list(cq.outputs)
    avg = DensityOperator(cq.dim, sum(p * s.matrix for p, s in zip(prior, states)))
    pi = quantum_typical_projector(avg, n, delta).matrix() if cq.dim**n <= 10**4 else None
    chi = holevo_chi(Ensemble(tuple(prior), tuple(states)))
    lam = _eig(avg)[0]
    eig = ensemble_eig(prior, states)
    mu = min(float(v[v > 1e-15].min()) for p, v in zip(eig.probs, eig.values) if p > 0)
    rate = math.log2(M) / n
    floor = packing_floor(n, rate, delta, chi, float(lam[lam > 1e-15].min()), mu)
    seeds = np.random.SeedSequence(seed).spawn(codebooks)
    out = np.zeros(codebooks)
    flags: set = set()
    for b, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        words = _draw_words(rng, prior, n, M, distinct)
        ys, rhos = [], []
        for w in words:
            proj = conditional_typical_projector(prior, states, w, delta).matrix()
            ys.append(pi @ proj @ pi)
            rhos.append(product_state(states, w))
        povm, _, f = pgm_povm(ys, cutoff)
        flags.update(f)
        out[b] = float(pgm_success(povm, rhos).mean())
    se = float(out.std(ddof=1) / math.sqrt(codebooks)) if codebooks > 1 else 0.0
    return PackingResult(float(out.mean()), se, floor, out, rate, chi, tuple(sorted(flags)))


def codebook(cq: CqChannel, prior: Sequence[float], n: int, M: int, delta: float, seed: int = 0) -> Codebook:
    """One random codebook with its sandwiched PGM."""
    prior = _dist(prior)
    states = list(cq.outputs)
    avg = DensityOperator(cq.dim, sum(p * s.matrix for p, s in zip(prior, states)))
    pi = quantum_typical_projector(avg, n, delta).matrix()
    rng = np.random.default_rng(seed)
    words = rng.choice(len(prior), size=(M, n), p=prior)
    ys = [pi @ conditional_typical_projector(prior, states, w, delta).matrix() @ pi for w in words]
    povm, comp, flags = pgm_povm(ys)
    return Codebook(M, words, povm, comp, flags)
