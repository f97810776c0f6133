"""Pauli algebra, Pauli channels, small dense states/channels and entropies.

Phase convention: a PauliString is ``i**phase_exponent`` times the tensor
product of single-qubit matrices sigma(x, z) with sigma(0,0)=I, sigma(1,0)=X,
sigma(0,1)=Z and sigma(1,1)=Y, where Y = iXZ.  With this convention X*Z = -iY,
i.e. phase_exponent 3 on the letter Y.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

EIG_FLOOR = 1e-12
NEG_TOL = 1e-10
HERM_TOL = 1e-10

_LETTER = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
_BITS = {v: k for k, v in _LETTER.items()}
_PHASE_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}

_SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Phase-tracked Pauli operator on ``n`` qubits in symplectic form."""

    n: int
    x_bits: tuple[int, ...]
    z_bits: tuple[int, ...]
    phase_exponent: int = 0

    def __post_init__(self) -> None:
        xs = tuple(int(b) & 1 for b in self.x_bits)
        zs = tuple(int(b) & 1 for b in self.z_bits)
        if len(xs) != self.n or len(zs) != self.n:
            raise ValueError(f"bit vectors must have length {self.n}")
        object.__setattr__(self, "x_bits", xs)
        object.__setattr__(self, "z_bits", zs)
        object.__setattr__(self, "phase_exponent", int(self.phase_exponent) % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, (0,) * n, (0,) * n, 0)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels such as ``"XIZ"``, ``"-iY"`` or ``"+XX"``."""
        phase = 0
        for prefix, value in (("+i", 1), ("-i", 3), ("i", 1), ("-", 2), ("+", 0)):
            if label.startswith(prefix) and len(label) > len(prefix):
                rest = label[len(prefix):]
                if rest and rest[0] in "IXYZ":
                    phase, label = value, rest
                    break
        try:
            pairs = [_BITS[ch] for ch in label.upper()]
        except KeyError as exc:
            raise ValueError(f"bad Pauli label {label!r}") from exc
        return cls(len(pairs), tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), phase)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        x, z = _BITS[letter.upper()]
        xs = [0] * n
        zs = [0] * n
        xs[qubit], zs[qubit] = x, z
        return cls(n, tuple(xs), tuple(zs))

    @property
    def label(self) -> str:
        return "".join(_LETTER[(x, z)] for x, z in zip(self.x_bits, self.z_bits))

    @property
    def weight(self) -> int:
        return sum(1 for x, z in zip(self.x_bits, self.z_bits) if x or z)

    def key(self) -> str:
        """Phase-free label used as a channel key."""
        return self.label

    def without_phase(self) -> "PauliString":
        return PauliString(self.n, self.x_bits, self.z_bits, 0)

    def to_matrix(self) -> np.ndarray:
        mat = np.array([[1.0 + 0j]])
        for letter in self.label:
            mat = np.kron(mat, _SIGMA[letter])
        return (1j ** self.phase_exponent) * mat

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def __str__(self) -> str:
        return _PHASE_PREFIX[self.phase_exponent] + self.label

    def to_json(self) -> dict:
        return {"n": self.n, "x": list(self.x_bits), "z": list(self.z_bits), "phase": self.phase_exponent}

    @classmethod
    def from_json(cls, data: Mapping) -> "PauliString":
        return cls(int(data["n"]), tuple(data["x"]), tuple(data["z"]), int(data.get("phase", 0)))


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Operator product ``a @ b`` with exact phase bookkeeping."""
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    phase = a.phase_exponent + b.phase_exponent
    xs, zs = [], []
    for x1, z1, x2, z2 in zip(a.x_bits, a.z_bits, b.x_bits, b.z_bits):
        x3, z3 = x1 ^ x2, z1 ^ z2
        # sigma(x,z) = i^{xz} X^x Z^z and Z^z1 X^x2 = (-1)^{z1 x2} X^x2 Z^z1
        phase += x1 * z1 + x2 * z2 + 2 * z1 * x2 - x3 * z3
        xs.append(x3)
        zs.append(z3)
    return PauliString(a.n, tuple(xs), tuple(zs), phase)


def symplectic_form(a: PauliString, b: PauliString) -> int:
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    return sum(x1 * z2 + z1 * x2 for x1, z1, x2, z2 in zip(a.x_bits, a.z_bits, b.x_bits, b.z_bits)) & 1


def commutes(a: PauliString, b: PauliString) -> bool:
    return symplectic_form(a, b) == 0


def all_pauli_labels(n: int) -> list[str]:
    return ["".join(t) for t in itertools.product("IXYZ", repeat=n)]


def _sort_key(label: str) -> tuple:
    bits = [_BITS[ch] for ch in label]
    return tuple(b[0] for b in bits), tuple(b[1] for b in bits)


# ---------------------------------------------------------------------------
# Pauli channels


@dataclass(frozen=True)
class PauliChannel:
    """Probability distribution over phase-free Pauli operators on ``n`` qubits."""

    n: int
    probs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cleaned: dict[str, float] = {}
        for key, value in self.probs.items():
            label = key.label if isinstance(key, PauliString) else str(key).upper()
            if len(label) != self.n or any(ch not in "IXYZ" for ch in label):
                raise ValueError(f"bad channel key {key!r} for n={self.n}")
            value = float(value)
            if value < 0:
                raise ValueError(f"negative probability {value} for {label}")
            if value > 0:
                cleaned[label] = cleaned.get(label, 0.0) + value
        total = sum(cleaned.values())
        if abs(total - 1.0) > 1e-12 * max(1, len(cleaned)):
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", dict(sorted(cleaned.items(), key=lambda kv: _sort_key(kv[0]))))

    @classmethod
    def identity(cls, n: int = 1) -> "PauliChannel":
        return cls(n, {"I" * n: 1.0})

    @classmethod
    def from_vector(cls, n: int, vector: Sequence[float], clip: bool = False) -> "PauliChannel":
        """Build from a length-4**n vector indexed like ``all_pauli_labels(n)``."""
        vec = np.asarray(vector, dtype=float)
        if clip:
            vec = np.clip(vec, 0.0, None)
            vec = vec / vec.sum()
        return cls(n, {lab: float(v) for lab, v in zip(all_pauli_labels(n), vec) if v > 0})

    def prob(self, label: str) -> float:
        return self.probs.get(label.upper(), 0.0)

    def vector(self) -> np.ndarray:
        return np.array([self.prob(lab) for lab in all_pauli_labels(self.n)])

    def compose(self, other: "PauliChannel") -> "PauliChannel":
        """Channel ``other`` applied after ``self`` (Pauli labels multiply)."""
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        out: dict[str, float] = {}
        for la, pa in self.probs.items():
            a = PauliString.from_label(la)
            for lb, pb in other.probs.items():
                lab = pauli_mul(PauliString.from_label(lb), a).label
                out[lab] = out.get(lab, 0.0) + pa * pb
        total = sum(out.values())
        return PauliChannel(self.n, {k: v / total for k, v in out.items()})

    def tensor(self, other: "PauliChannel") -> "PauliChannel":
        out = {la + lb: pa * pb for la, pa in self.probs.items() for lb, pb in other.probs.items()}
        return PauliChannel(self.n + other.n, out)

    def to_dense(self) -> "DenseChannel":
        kraus = [math.sqrt(p) * PauliString.from_label(lab).to_matrix() for lab, p in self.probs.items()]
        return DenseChannel(2 ** self.n, 2 ** self.n, tuple(kraus))

    def to_json(self) -> dict:
        return {"n": self.n, "probs": dict(self.probs)}

    @classmethod
    def from_json(cls, data: Mapping) -> "PauliChannel":
        return cls(int(data["n"]), dict(data["probs"]))


def depolarizing(p: float, n: int = 1) -> PauliChannel:
    """Single-qubit D_p: identity with probability 1-p, each of X, Y, Z with p/3."""
    if n != 1:
        raise ValueError("only the single-qubit depolarizing channel is defined here")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return PauliChannel(1, {"I": 1.0 - p, "X": p / 3, "Y": p / 3, "Z": p / 3})


def total_variation(a: PauliChannel, b: PauliChannel) -> float:
    keys = set(a.probs) | set(b.probs)
    return 0.5 * sum(abs(a.prob(k) - b.prob(k)) for k in keys)


# ---------------------------------------------------------------------------
# Dense states and channels


def _hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    dim: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {m.shape} does not match dim {self.dim}")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.conj().T).max() > HERM_TOL * scale:
            raise ValueError("matrix is not Hermitian")
        m = _hermitian_part(m)
        if abs(np.trace(m).real - 1.0) > 1e-10:
            raise ValueError(f"trace {np.trace(m).real} != 1")
        if np.linalg.eigvalsh(m).min() < -NEG_TOL:
            raise ValueError("matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_vector(cls, psi: Sequence[complex]) -> "DensityOperator":
        v = np.asarray(psi, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(v.size, np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(dim, np.eye(dim) / dim)

    def tensor(self, other: "DensityOperator") -> "DensityOperator":
        return DensityOperator(self.dim * other.dim, np.kron(self.matrix, other.matrix))

    def to_json(self) -> dict:
        flat = self.matrix.reshape(-1)
        return {"dim": self.dim, "matrix": [[float(v.real), float(v.imag)] for v in flat]}

    @classmethod
    def from_json(cls, data: Mapping) -> "DensityOperator":
        dim = int(data["dim"])
        vals = np.array([complex(re, im) for re, im in data["matrix"]]).reshape(dim, dim)
        return cls(dim, vals)


@dataclass(frozen=True, eq=False)
class DenseChannel:
    """CPTP map given by Kraus operators of shape (dim_out, dim_in)."""

    dim_in: int
    dim_out: int
    kraus_ops: tuple

    def __post_init__(self) -> None:
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise ValueError("need at least one Kraus operator")
        for k in ops:
            if k.shape != (self.dim_out, self.dim_in):
                raise ValueError(f"Kraus shape {k.shape} != {(self.dim_out, self.dim_in)}")
            k.setflags(write=False)
        total = sum(k.conj().T @ k for k in ops)
        if np.abs(total - np.eye(self.dim_in)).max() > 1e-10:
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus_ops", ops)

    @classmethod
    def identity(cls, dim: int) -> "DenseChannel":
        return cls(dim, dim, (np.eye(dim),))

    @classmethod
    def unitary(cls, u: np.ndarray) -> "DenseChannel":
        u = np.asarray(u, dtype=complex)
        return cls(u.shape[1], u.shape[0], (u,))

    def apply(self, rho: DensityOperator | np.ndarray) -> DensityOperator:
        m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
        if m.shape != (self.dim_in, self.dim_in):
            raise ValueError("dimension mismatch")
        out = sum(k @ m @ k.conj().T for k in self.kraus_ops)
        return DensityOperator(self.dim_out, _hermitian_part(out))

    def apply_matrix(self, m: np.ndarray) -> np.ndarray:
        return sum(k @ m @ k.conj().T for k in self.kraus_ops)

    def choi(self) -> np.ndarray:
        """Unnormalised Choi matrix sum_ij |i><j| (x) T(|i><j|)."""
        d = self.dim_in
        out = np.zeros((d * self.dim_out, d * self.dim_out), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                out += np.kron(e, self.apply_matrix(e))
        return out

    def isometry(self) -> np.ndarray:
        """Stinespring isometry V: C^{d_in} -> C^{d_out} (x) C^{#Kraus}."""
        r = len(self.kraus_ops)
        v = np.zeros((self.dim_out * r, self.dim_in), dtype=complex)
        for k, op in enumerate(self.kraus_ops):
            for b in range(self.dim_out):
                v[b * r + k, :] = op[b, :]
        return v

    def complementary(self) -> "DenseChannel":
        """Channel to the Stinespring environment."""
        r = len(self.kraus_ops)
        ops = []
        for b in range(self.dim_out):
            ops.append(np.array([k[b, :] for k in self.kraus_ops]))
        return DenseChannel(self.dim_in, r, tuple(ops))

    def compose(self, after: "DenseChannel") -> "DenseChannel":
        """``after`` applied following ``self``."""
        if after.dim_in != self.dim_out:
            raise ValueError("dimension mismatch")
        ops = tuple(b @ a for b in after.kraus_ops for a in self.kraus_ops)
        return DenseChannel(self.dim_in, after.dim_out, ops)

    def tensor(self, other: "DenseChannel") -> "DenseChannel":
        ops = tuple(np.kron(a, b) for a in self.kraus_ops for b in other.kraus_ops)
        return DenseChannel(self.dim_in * other.dim_in, self.dim_out * other.dim_out, ops)


def depolarizing_dense(q: float, dim: int = 2) -> DenseChannel:
    """rho -> (1 - q) rho + q Tr(rho) I/d via the Weyl/Pauli Kraus form (qubits)."""
    if dim != 2:
        raise ValueError("only qubit depolarizing supported")
    ops = [math.sqrt(1 - 3 * q / 4) * _SIGMA["I"]] + [math.sqrt(q / 4) * _SIGMA[s] for s in "XYZ"]
    return DenseChannel(2, 2, tuple(ops))


@dataclass(frozen=True, eq=False)
class CqChannel:
    alphabet_size: int
    outputs: tuple

    def __post_init__(self) -> None:
        outs = tuple(o if isinstance(o, DensityOperator) else DensityOperator(len(o), o) for o in self.outputs)
        if len(outs) != self.alphabet_size:
            raise ValueError("output list length must equal alphabet size")
        if len({o.dim for o in outs}) != 1:
            raise ValueError("outputs must share one dimension")
        object.__setattr__(self, "outputs", outs)

    @property
    def dim(self) -> int:
        return self.outputs[0].dim


def apply_pauli_channel(ch: PauliChannel, rho: DensityOperator) -> DensityOperator:
    if 2 ** ch.n != rho.dim:
        raise ValueError(f"channel on {ch.n} qubits cannot act on dimension {rho.dim}")
    out = np.zeros_like(rho.matrix)
    for label, p in ch.probs.items():
        mat = PauliString.from_label(label).to_matrix()
        out = out + p * (mat @ rho.matrix @ mat.conj().T)
    return DensityOperator(rho.dim, _hermitian_part(out))


def pauli_twirl(ch: DenseChannel) -> PauliChannel:
    """Diagonal of the process (chi) matrix in the Pauli basis."""
    if ch.dim_in != ch.dim_out:
        raise ValueError("twirl needs a square channel")
    n = int(round(math.log2(ch.dim_in)))
    if 2 ** n != ch.dim_in:
        raise ValueError("dimension is not a power of two")
    d2 = 4 ** n
    vec = []
    for label in all_pauli_labels(n):
        p_mat = PauliString.from_label(label).to_matrix()
        vec.append(sum(abs(np.trace(p_mat.conj().T @ k)) ** 2 for k in ch.kraus_ops) / d2)
    return PauliChannel.from_vector(n, vec, clip=True)


# ---------------------------------------------------------------------------
# Entropies


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def shannon_entropy(probs: Iterable[float]) -> float:
    return -sum(p * math.log2(p) for p in probs if p > 0)


def spectrum(rho: DensityOperator | np.ndarray) -> np.ndarray:
    """Eigenvalues with drift handling: below -1e-10 is an error, tiny values are zeroed."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    evals = np.linalg.eigvalsh(_hermitian_part(m))
    if evals.min() < -NEG_TOL:
        raise ValueError(f"operator has eigenvalue {evals.min():.3e} < 0")
    evals = np.where(evals < EIG_FLOOR, 0.0, evals)
    return evals


def von_neumann_entropy(rho: DensityOperator | np.ndarray) -> float:
    evals = spectrum(rho)
    nz = evals[evals > 0]
    return float(-(nz * np.log2(nz)).sum())


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``."""
    dims = list(dims)
    n = len(dims)
    t = np.asarray(m).reshape(dims + dims)
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    for offset, i in enumerate(sorted(drop)):
        axis = i - offset
        t = np.trace(t, axis1=axis, axis2=axis + t.ndim // 2)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return t.reshape(d, d)
