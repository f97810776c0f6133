"""Entropic quantities, capacity optimizers and closed-form rate bounds.

All logarithms are base 2.  Bounds return a :class:`BoundReport` that keeps
the inputs, the value in bits and the preconditions that failed, so an
invalid report always says why.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect, minimize

from .pauli_core import (
    CqChannel,
    DenseChannel,
    DensityOperator,
    binary_entropy,
    shannon_entropy,
    spectrum,
    von_neumann_entropy,
)

LOG2E = math.log2(math.e)
# largest p**k for which the quantum AVP bound applies; 2*sqrt(x(1-x)) = 1/2 there
QUANTUM_AVP_LIMIT = (2 - math.sqrt(3)) / 4


def h2(x: float) -> float:
    return binary_entropy(min(max(x, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Ensembles and Holevo quantities


@dataclass(frozen=True, eq=False)
class Ensemble:
    probs: tuple
    states: tuple

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        states = tuple(s if isinstance(s, DensityOperator) else DensityOperator(len(s), s) for s in self.states)
        if len(probs) != len(states) or not probs:
            raise ValueError("probabilities and states must be non-empty and of equal length")
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-10:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if len({s.dim for s in states}) != 1:
            raise ValueError("states must share one dimension")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def average(self) -> np.ndarray:
        return sum(p * s.matrix for p, s in zip(self.probs, self.states))


def holevo_chi(e: Ensemble) -> float:
    """S(average) minus the average entropy, clamped at zero against rounding."""
    value = von_neumann_entropy(e.average()) - sum(
        p * von_neumann_entropy(s) for p, s in zip(e.probs, e.states) if p > 0
    )
    return max(0.0, value)


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """D(rho || sigma) in bits; infinite when the support of rho is not inside that of sigma."""
    lr, vr = np.linalg.eigh(rho)
    ls, vs = np.linalg.eigh(sigma)
    lr = np.where(lr < 1e-14, 0.0, lr)
    keep = ls > 1e-14
    # overlap weights |<r_i|s_j>|^2
    w = np.abs(vr.conj().T @ vs) ** 2
    if np.any((lr[:, None] * w)[:, ~keep] > 1e-12):
        return math.inf
    nz = lr > 0
    first = float(np.sum(lr[nz] * np.log2(lr[nz])))
    second = float(np.sum((lr[:, None] * w)[:, keep] * np.log2(ls[keep])[None, :]))
    return first - second


@dataclass
class CapacityResult:
    value: float
    upper: float
    argmax: object
    converged: bool
    iterations: int

    @property
    def gap(self) -> float:
        return self.upper - self.value


def holevo_capacity_cq(T: CqChannel, tol: float = 1e-6, max_iter: int = 100000) -> CapacityResult:
    """Alternating maximization of the Holevo quantity over input distributions.

    The dual value max_i D(T(i) || average) upper-bounds the capacity, so
    ``upper - value`` certifies the achieved accuracy.
    """
    if T.alphabet_size > 32 or T.dim > 8:
        raise ValueError("cq channel too large for the optimizer")
    outs = [o.matrix for o in T.outputs]
    p = np.full(T.alphabet_size, 1.0 / T.alphabet_size)
    value = upper = 0.0
    for it in range(1, max_iter + 1):
        avg = sum(pi * o for pi, o in zip(p, outs))
        d = np.array([relative_entropy(o, avg) for o in outs])
        value = float(np.dot(p, d))
        upper = float(d.max())
        if upper - value <= tol:
            return CapacityResult(max(value, 0.0), upper, p, True, it)
        p = p * np.exp2(d - upper)
        p = p / p.sum()
    return CapacityResult(max(value, 0.0), upper, p, False, max_iter)


# ---------------------------------------------------------------------------
# Coherent information


def purification(rho: DensityOperator) -> np.ndarray:
    """A vector on reference (x) system whose system marginal is rho."""
    lam, vec = np.linalg.eigh(rho.matrix)
    lam = np.clip(lam, 0.0, None)
    d = rho.dim
    psi = np.zeros(d * d, dtype=complex)
    for k in range(d):
        psi += math.sqrt(lam[k]) * np.kron(np.eye(d)[k], vec[:, k])
    return psi


def coherent_information(T: DenseChannel, rho_in: DensityOperator) -> float:
    """S(B) - S(AB) for (id (x) T) applied to a purification of rho_in."""
    if rho_in.dim != T.dim_in:
        raise ValueError("input state dimension does not match the channel")
    d = rho_in.dim
    psi = purification(rho_in)
    joint = np.outer(psi, psi.conj())
    out = np.zeros((d * T.dim_out, d * T.dim_out), dtype=complex)
    for k in T.kraus_ops:
        big = np.kron(np.eye(d), k)
        out += big @ joint @ big.conj().T
    s_b = von_neumann_entropy(T.apply_matrix(rho_in.matrix))
    return s_b - von_neumann_entropy(out)


def coherent_information_complementary(T: DenseChannel, rho_in: DensityOperator) -> float:
    """S(T(rho)) - S(T^c(rho)); equal to the purification route."""
    return von_neumann_entropy(T.apply_matrix(rho_in.matrix)) - von_neumann_entropy(
        T.complementary().apply_matrix(rho_in.matrix)
    )


def _state_from_params(x: np.ndarray, d: int) -> np.ndarray:
    a = x[: d * d].reshape(d, d) + 1j * x[d * d :].reshape(d, d)
    m = a @ a.conj().T
    return m / np.trace(m).real


@dataclass
class OptimizationResult:
    value: float
    argmax: np.ndarray
    restarts: int
    spread: float

    def to_json(self) -> dict:
        return {"value": self.value, "restarts": self.restarts, "spread": self.spread}


def max_coherent_information(
    T: DenseChannel, restarts: int = 16, tol: float = 1e-6, seed: int = 0
) -> OptimizationResult:
    """Multi-start Nelder-Mead ascent of the coherent information over input states.

    ``spread`` is the range of the best values found by the restarts that
    land within 1e-3 of the optimum, a proxy for the achieved tolerance.
    """
    d = T.dim_in
    if d > 4:
        raise ValueError("input dimension above 4 is outside the optimizer's range")

    def neg(x: np.ndarray) -> float:
        m = _state_from_params(x, d)
        return -coherent_information(T, DensityOperator(d, m))

    rng = np.random.default_rng(seed)
    starts = [np.concatenate((np.eye(d).ravel(), np.zeros(d * d)))]
    starts += [rng.normal(size=2 * d * d) for _ in range(max(restarts, 1) - 1)]
    best = None
    values = []
    for x0 in starts:
        res = minimize(neg, x0, method="Nelder-Mead", options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": 20000, "maxfev": 40000})
        values.append(-res.fun)
        if best is None or res.fun < best.fun:
            best = res
    vals = np.array(values)
    top = vals.max()
    near = vals[vals > top - 1e-3]
    return OptimizationResult(float(top), _state_from_params(best.x, d), len(starts), float(top - near.min()))


def channel_holevo(T: DenseChannel, n_states: int | None = None, restarts: int = 8, seed: int = 0) -> OptimizationResult:
    """Holevo quantity of a channel maximized over ensembles of pure input states."""
    d = T.dim_in
    k = n_states or d * d
    rng = np.random.default_rng(seed)

    def neg(x: np.ndarray) -> float:
        logits = x[:k]
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        vecs = x[k:].reshape(k, 2, d)
        states = []
        for v in vecs:
            psi = v[0] + 1j * v[1]
            psi = psi / max(np.linalg.norm(psi), 1e-15)
            states.append(T.apply_matrix(np.outer(psi, psi.conj())))
        avg = sum(p * s for p, s in zip(probs, states))
        return -(von_neumann_entropy(avg) - sum(p * von_neumann_entropy(s) for p, s in zip(probs, states)))

    best = None
    values = []
    for _ in range(max(restarts, 1)):
        x0 = np.concatenate((np.zeros(k), rng.normal(size=2 * k * d)))
        res = minimize(neg, x0, method="Powell", options={"xtol": 1e-8, "ftol": 1e-10, "maxfev": 200000})
        values.append(-res.fun)
        if best is None or res.fun < best.fun:
            best = res
    vals = np.array(values)
    return OptimizationResult(float(vals.max()), best.x, len(values), float(vals.max() - np.sort(vals)[-min(2, vals.size)]))


def two_letter_comparison(T: DenseChannel, restarts: int = 8, seed: int = 0) -> dict:
    """Single-letter value against the best value on two uses (product vs entangled inputs)."""
    one = max_coherent_information(T, restarts, seed=seed)
    two = max_coherent_information(T.tensor(T), restarts, seed=seed)
    return {
        "single": one.value,
        "product_two_uses": 2 * one.value,
        "two_uses": two.value,
        "per_use_gain": two.value / 2 - one.value,
    }


# ---------------------------------------------------------------------------
# Bound reports


@dataclass
class BoundReport:
    name: str
    params: dict
    value: float
    valid: bool
    provenance: str
    violations: tuple = ()
    notes: tuple = ()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "value": self.value,
            "valid": self.valid,
            "provenance": self.provenance,
            "violations": list(self.violations),
            "notes": list(self.notes),
        }


def _report(name: str, params: dict, value: float, checks: dict, provenance: str, notes: Sequence[str] = ()) -> BoundReport:
    violations = tuple(k for k, ok in checks.items() if not ok)
    return BoundReport(name, params, float(value), not violations, provenance, violations, tuple(notes))


def _ceil_log2(d: int) -> int:
    if d < 1:
        raise ValueError("dimension must be positive")
    return (d - 1).bit_length()


def ft_cq_lower_bound(C: float, d: int, c: float, p: float, p0: float | None = None) -> BoundReport:
    """Fault-tolerant classical capacity of a cq channel with d-dimensional outputs."""
    j = _ceil_log2(d)
    x = 2 * c * p * j
    value = C - 2 * c * p * j * j - 2 * (1 + x) * h2(x / (1 + x))
    checks = {"p <= 1/(2 c ceil(log2 d))": j == 0 or x <= 1.0}
    notes = []
    if p0 is None:
        notes.append("p0 not supplied; threshold condition unchecked")
    else:
        checks["p <= p0/2"] = p <= p0 / 2
    return _report("ft_cq", {"C": C, "d": d, "c": c, "p": p, "p0": p0}, value, checks, "cq rate under gate noise", notes)


def continuity_penalty(p: float, dB: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return 2 * p * math.log2(dB) + (1 + p) * h2(p / (1 + p))


def sep_avp_quantum_bound(
    Q: float, p: float, dB: int, C: float | None = None, p0: float | None = None
) -> BoundReport:
    """Quantum rate under perturbations with separable environments."""
    value = Q - continuity_penalty(p, dB)
    checks = {
        "C(T) > 0": C is not None and C > 0,
        "p <= p0": p0 is not None and p <= p0,
    }
    return _report(
        "sep_avp_quantum",
        {"Q": Q, "p": p, "dB": dB, "C": C, "p0": p0},
        value,
        checks,
        "continuity bound, separable environments",
        ["p0 is existential; the bound is conditional on it"],
    )


def _sqrt_log_term(scale: float, x: float) -> float:
    """sqrt(scale) * |log2 x|, with the p -> 0 limit taken as 0."""
    if scale == 0.0:
        return 0.0
    return math.sqrt(scale) * abs(math.log2(x))


def avp_classical_lower_bound(chi_k: float, k: int, p: float, dB: int) -> BoundReport:
    """Classical rate under arbitrary perturbations from the k-letter Holevo quantity chi_k."""
    if k < 1:
        raise ValueError("k must be positive")
    checks = {"0 <= p < 1": 0.0 <= p < 1.0}
    lb = math.log2(dB)
    value = (
        chi_k / k
        - _sqrt_log_term(2 * k * p * lb, p / dB)
        - 3 * p * lb
        - (1 + p) * h2(p / (1 + p))
    )
    return _report("avp_classical", {"chi_k": chi_k, "k": k, "p": p, "dB": dB}, value, checks, "classical rate, all environments")


def eta(eps: float, dA: int) -> float:
    """Continuity correction for the quantum bound; arguments are clipped into [0, 1]."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    r = math.sqrt(max(eps * (1 - eps), 0.0))
    return (2 * eps + 4 * r) * math.log2(dA) + h2(2 * eps) + h2(2 * r)


def avp_quantum_lower_bound(icoh_k: float, k: int, p: float, dA: int, dB: int) -> BoundReport:
    """Quantum rate under arbitrary perturbations from the k-letter coherent information."""
    if k < 1:
        raise ValueError("k must be positive")
    pk = p**k
    checks = {"0 <= p < 1": 0.0 <= p < 1.0, "p^k <= (2-sqrt3)/4": pk <= QUANTUM_AVP_LIMIT}
    lb = math.log2(dB)
    inner = min(p / dA, p * p / dB) if p > 0 else 1.0
    value = (
        icoh_k / k
        - eta(pk, dA)
        - 3 * _sqrt_log_term(k * p * lb, inner)
        - 4 * p * lb
        - (1 + p) * h2(p / (1 + p))
    )
    return _report(
        "avp_quantum", {"icoh_k": icoh_k, "k": k, "p": p, "dA": dA, "dB": dB}, value, checks, "quantum rate, all environments"
    )


@dataclass
class PostselectionFactors:
    log2_growth: float
    log2_tail: float

    @property
    def growth(self) -> float:
        return math.inf if self.log2_growth > 1023 else 2.0**self.log2_growth

    @property
    def tail(self) -> float:
        return 0.0 if self.log2_tail < -1074 else 2.0**self.log2_tail


def postselection_factor(m: int, p: float, delta: float, dB: int) -> PostselectionFactors:
    """Growth d_B^{m(p+delta)} and Chernoff tail exp(-m delta^2 / 3p), in the log2 domain."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if p < 0:
        raise ValueError("p must be non-negative")
    growth = m * (p + delta) * math.log2(dB)
    tail = -math.inf if p == 0 else -m * delta * delta / (3 * p) * LOG2E
    return PostselectionFactors(growth, tail)


def chernoff_tail_mc(m: int, p: float, delta: float, samples: int, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo P(mean of m Bernoulli(p) > p + delta) and its standard error."""
    rng = np.random.default_rng(seed)
    k = rng.binomial(m, p, size=samples)
    hit = float(np.mean(k / m > p + delta))
    return hit, math.sqrt(hit * (1 - hit) / samples)


def alpha0(xtol: float = 1e-14) -> float:
    """Smallest alpha with h2(2 alpha) = 1/2."""
    return float(bisect(lambda a: h2(2 * a) - 0.5, 0.0, 0.25, xtol=xtol))


def good_code_bound(p: float, q: float, c: float, p0: float | None = None) -> BoundReport:
    """Quantum rate over (1-q) id + q T from asymptotically good codes."""
    a0 = alpha0()
    value = 1 - 2 * h2(8 * c * p + 2 * q)
    checks = {"p <= 1/c": c * p <= 1.0, "4cp + q <= alpha0": 4 * c * p + q <= a0}
    notes = []
    if p0 is None:
        notes.append("p0 not supplied; threshold condition unchecked")
    else:
        checks["p <= p0/2"] = p <= p0 / 2
    return _report("good_code", {"p": p, "q": q, "c": c, "p0": p0}, value, checks, "good-code rate, qubit channel", notes)


def calderbank_shor_rate(alpha: float) -> float:
    return 1 - 2 * h2(2 * alpha)


def good_code_scheme_error(
    m: int,
    delta: float,
    p: float,
    q: float,
    c: float,
    alpha: float,
    j: int = 1,
    eps_m: float = 0.0,
    p0: float | None = None,
) -> BoundReport:
    """Error eps_m + 3 exp(-m delta^2 / 3x) of the good-code scheme, x = 4jcp + q."""
    x = 4 * j * c * p + q
    tail = 0.0 if x == 0 else 3 * math.exp(-m * delta * delta / (3 * x))
    checks = {"p < 1/c": c * p < 1.0, "x + delta < alpha": x + delta < alpha}
    if p0 is not None:
        checks["p < p0/2"] = p < p0 / 2
    return _report(
        "good_code_error",
        {"m": m, "delta": delta, "p": p, "q": q, "c": c, "alpha": alpha, "j": j, "eps_m": eps_m, "p0": p0},
        eps_m + tail,
        checks,
        "good-code scheme error",
    )


def ft_capacity_lower_bound(
    kind: str,
    value_k: float,
    k: int,
    p: float,
    c: float,
    d1: int,
    d2: int,
    p0: float | None = None,
) -> BoundReport:
    """Gate-noise rate via the perturbation bound at the effective strength 2(j1+j2)cp."""
    j1, j2 = _ceil_log2(d1), _ceil_log2(d2)
    p_eff = 2 * (j1 + j2) * c * p
    if kind == "classical":
        inner = avp_classical_lower_bound(value_k, k, min(p_eff, 1 - 1e-15), d2)
    elif kind == "quantum":
        inner = avp_quantum_lower_bound(value_k, k, min(p_eff, 1 - 1e-15), d1, d2)
    else:
        raise ValueError("kind must be 'classical' or 'quantum'")
    checks = {f"inner: {v}": False for v in inner.violations}
    checks["p <= 1/(2(j1+j2)c)"] = p_eff <= 1.0
    notes = []
    if p0 is None:
        notes.append("p0 not supplied; threshold condition unchecked")
    else:
        checks["p <= p0/2"] = p <= p0 / 2
    return _report(
        f"ft_{kind}",
        {"value_k": value_k, "k": k, "p": p, "c": c, "d1": d1, "d2": d2, "p0": p0, "p_eff": p_eff},
        inner.value,
        checks,
        f"{kind} rate under gate noise",
        notes,
    )


def threshold_from_grid(bound: Callable[[float], float], target: float, eps: float, grid: Sequence[float]) -> float | None:
    """Largest grid point p such that the bound stays >= target - eps on every grid point up to p.

    This is a numerical stand-in for an existential threshold, not a proven constant.
    """
    found = None
    for p in sorted(grid):
        if bound(p) >= target - eps:
            found = p
        else:
            break
    return found


# ---------------------------------------------------------------------------
# Decoupling


def decoupling_error(m: int, R: float, delta: float, mu_min: float, icoh: float) -> float:
    """4 sqrt(3) exp(-m delta^2 / log2(mu_min)^2) + 2^{-(m/2)(icoh - R - 3 delta)}."""
    if not 0.0 < mu_min < 1.0:
        raise ValueError("mu_min must lie in (0, 1)")
    if m <= 0 or delta <= 0 or R <= 0:
        raise ValueError("m, delta and R must be positive")
    first = math.log2(4 * math.sqrt(3)) - m * delta * delta / math.log2(mu_min) ** 2 * LOG2E
    second = -(m / 2) * (icoh - R - 3 * delta)
    top = max(first, second)
    if top > 1023:
        return math.inf
    return 2.0**first + 2.0**second


def decoupling_fidelity_bound(m: int, R: float, delta: float, mu_min: float, icoh: float) -> BoundReport:
    """Entanglement fidelity floor 1 - 2 eps_m, clipped to [0, 1]."""
    eps = decoupling_error(m, R, delta, mu_min, icoh)
    raw = 1 - 2 * eps
    value = min(max(raw, 0.0), 1.0)
    checks = {"Rm > 1": R * m > 1, "not saturated": raw == value}
    notes = ["vacuous: eps_m >= 1"] if eps >= 1 else []
    return _report(
        "decoupling_fidelity",
        {"m": m, "R": R, "delta": delta, "mu_min": mu_min, "icoh": icoh, "eps_m": eps},
        value,
        checks,
        "decoupling fidelity floor",
        notes,
    )


def min_positive_eigenvalue(*ops: np.ndarray) -> float:
    vals = np.concatenate([spectrum(o) for o in ops])
    return float(vals[vals > 0].min())


def decoupling_mu_min(T: DenseChannel, phi: DensityOperator) -> float:
    """Smallest positive eigenvalue over phi, T(phi) and T^c(phi)."""
    return min_positive_eigenvalue(
        phi.matrix, T.apply_matrix(phi.matrix), T.complementary().apply_matrix(phi.matrix)
    )


def hashing_bound(q: float) -> float:
    """Coherent information of the Pauli depolarizing channel at the maximally mixed input."""
    return 1 - h2(q) - q * math.log2(3)


def hashing_root() -> float:
    return float(bisect(hashing_bound, 0.01, 0.5, xtol=1e-14))


def ensemble_entropy_bound(e: Ensemble) -> float:
    return min(shannon_entropy(e.probs), math.log2(e.dim))
