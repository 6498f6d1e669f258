"""Dense linear algebra for one- and two-qubit states.

Basis convention: spin-down is index 0, spin-up is index 1. Two-qubit
states are ordered (Q_L, Q_M) with Q_L the slow index, so the joint basis
reads ``|dd>, |du>, |ud>, |uu>``.

Operators are plain ``numpy`` arrays. Validation helpers check the
unitary / trace-preserving properties where the caller asks for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

UNITARY_ATOL = 1e-9
STATE_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


class QopsError(ValueError):
    """Raised for malformed states, operators or channels."""


def _check_dim(dim: int) -> None:
    if dim not in (2, 4):
        raise QopsError(f"dimension must be 2 or 4, got {dim}")


def check_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> np.ndarray:
    """Return ``u`` as a complex array after checking ``u^dag u = I``."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise QopsError(f"operator must be square, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > atol:
        raise QopsError(f"operator is not unitary (max deviation {err:.3g})")
    return u


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    """Global-phase-insensitive equality ``|tr(U^dag V)| / d >= 1 - atol``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        return False
    overlap = abs(np.trace(u.conj().T @ v)) / u.shape[0]
    return bool(overlap >= 1.0 - atol)


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b`` with ``a`` on the slow index."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    for m in (a, b):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QopsError("tensor operands must be square matrices")
    if a.shape[0] * b.shape[0] > 4:
        raise QopsError(
            f"tensor product of dims {a.shape[0]} and {b.shape[0]} exceeds 4"
        )
    return np.kron(a, b)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure state vector or a density matrix of dimension 2 or 4."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=complex)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if data.ndim == 1:
            _check_dim(data.shape[0])
            norm = np.vdot(data, data).real
            if abs(norm - 1.0) > STATE_ATOL:
                raise QopsError(f"state vector norm^2 is {norm!r}, expected 1")
        elif data.ndim == 2:
            if data.shape[0] != data.shape[1]:
                raise QopsError("density matrix must be square")
            _check_dim(data.shape[0])
            if np.max(np.abs(data - data.conj().T)) > STATE_ATOL:
                raise QopsError("density matrix is not Hermitian")
            tr = np.trace(data).real
            if abs(tr - 1.0) > STATE_ATOL:
                raise QopsError(f"density matrix trace is {tr!r}, expected 1")
            if np.linalg.eigvalsh(data).min() < -STATE_ATOL:
                raise QopsError("density matrix has a negative eigenvalue")
        else:
            raise QopsError("state data must be a vector or a matrix")

    @property
    def mode(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_qubits(self) -> int:
        return 1 if self.dim == 2 else 2

    def density_matrix(self) -> np.ndarray:
        if self.mode == "pure":
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        if self.mode == "mixed":
            return self
        return QuantumState(self.density_matrix())

    def purity(self) -> float:
        rho = self.density_matrix()
        return float(np.trace(rho @ rho).real)

    @classmethod
    def basis(cls, index: int, dim: int = 2) -> "QuantumState":
        _check_dim(dim)
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def from_spins(cls, spins: str) -> "QuantumState":
        """Build a basis state from a string such as ``"d"``, ``"ud"``."""
        if len(spins) not in (1, 2) or set(spins) - {"u", "d"}:
            raise QopsError(f"spin label must be 'u'/'d' per qubit, got {spins!r}")
        index = int(spins.replace("d", "0").replace("u", "1"), 2)
        return cls.basis(index, 2 ** len(spins))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A completely positive, trace-preserving map given by Kraus operators."""

    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise QopsError("a channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        _check_dim(dim)
        for k in ops:
            if k.shape != (dim, dim):
                raise QopsError("all Kraus operators must share one square shape")
            k.setflags(write=False)
        total = sum(k.conj().T @ k for k in ops)
        err = np.max(np.abs(total - np.eye(dim)))
        if err > UNITARY_ATOL:
            raise QopsError(f"channel is not trace preserving (deviation {err:.3g})")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a density matrix or a stack of them (``(..., d, d)``)."""
        out = np.zeros_like(rho, dtype=complex)
        for k in self.kraus_ops:
            out += k @ rho @ k.conj().T
        return out

    def superoperator(self) -> np.ndarray:
        """Row-major vectorised action: ``vec(E(rho)) = S @ vec(rho)``."""
        return sum(np.kron(k, k.conj()) for k in self.kraus_ops)

    def compose(self, other: "KrausChannel") -> "KrausChannel":
        """Channel that applies ``other`` first, then ``self``."""
        return KrausChannel(tuple(a @ b for a in self.kraus_ops for b in other.kraus_ops))

    @classmethod
    def identity(cls, dim: int = 2) -> "KrausChannel":
        return cls((np.eye(dim, dtype=complex),))


def lift_channel(channel: KrausChannel, qubit: int) -> KrausChannel:
    """Embed a single-qubit channel into the two-qubit space."""
    if channel.dim != 2:
        raise QopsError("only single-qubit channels can be lifted")
    if qubit == 0:
        return KrausChannel(tuple(np.kron(k, I2) for k in channel.kraus_ops))
    if qubit == 1:
        return KrausChannel(tuple(np.kron(I2, k) for k in channel.kraus_ops))
    raise QopsError(f"qubit index must be 0 or 1, got {qubit}")


def apply_unitary(s: QuantumState, u: np.ndarray) -> QuantumState:
    u = np.asarray(u, dtype=complex)
    if u.shape != (s.dim, s.dim):
        raise QopsError(f"operator shape {u.shape} does not match state dim {s.dim}")
    if s.mode == "pure":
        return QuantumState(u @ s.data)
    return QuantumState(u @ s.data @ u.conj().T)


def apply_channel(s: QuantumState, c: KrausChannel) -> QuantumState:
    if c.dim != s.dim:
        raise QopsError(f"channel dim {c.dim} does not match state dim {s.dim}")
    rho = c(s.density_matrix())
    # Hermitian part only; drops rounding-level antihermitian noise.
    return QuantumState(0.5 * (rho + rho.conj().T))


def up_probabilities(s: QuantumState) -> dict[str, float]:
    """Z-basis outcome table.

    One qubit gives ``{"d", "u"}``; two qubits give ``{"dd", "du", "ud", "uu"}``
    with the first letter for Q_L.
    """
    if s.mode == "pure":
        probs = np.abs(s.data) ** 2
    else:
        probs = np.real(np.diag(s.data))
    probs = np.clip(probs, 0.0, 1.0)
    labels = ("d", "u") if s.dim == 2 else ("dd", "du", "ud", "uu")
    return {k: float(p) for k, p in zip(labels, probs)}


def sample_shots(p: float, shots: int, rng: np.random.Generator) -> int:
    """Number of spin-up outcomes in ``shots`` repetitions at probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise QopsError(f"probability must lie in [0, 1], got {p!r}")
    if shots < 1:
        raise QopsError("shots must be >= 1")
    return int(rng.binomial(shots, p))


def sample_per_shot(probs: Sequence[float] | np.ndarray, rng: np.random.Generator) -> int:
    """One Bernoulli draw per entry; used when each shot has its own noise."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    return int(np.count_nonzero(rng.random(probs.shape[0]) < probs))
