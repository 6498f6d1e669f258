"""Single- and two-qubit Clifford groups and RB sequence generation.

Single-qubit Cliffords use the primitive alphabet {I, +-X/2, +-Y/2, X, Y}
(45 primitives over 24 elements, i.e. 1.875 on average). Two-qubit
Cliffords are built from CZ and single-qubit Cliffords in four classes:
single-qubit (576), CNOT-like (5184), iSWAP-like (5184) and SWAP-like (576).

Two-qubit element ids are ``cls * 576 + 24 * i_L + i_M`` where ``cls`` in
0..19 selects the class block: 0 single-qubit, 1..9 CNOT-like, 10..18
iSWAP-like, 19 SWAP-like. Id 0 is the identity in both groups.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .control import primitive_unitary
from .qops import CZ, equal_up_to_phase

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1

# Time-ordered primitive lists; index 0 must stay the identity.
SINGLE_QUBIT_DECOMPOSITIONS: tuple[tuple[str, ...], ...] = (
    ("I",),
    # Paulis
    ("X",),
    ("Y",),
    ("Y", "X"),
    # 2pi/3 rotations
    ("X/2", "Y/2"),
    ("X/2", "-Y/2"),
    ("-X/2", "Y/2"),
    ("-X/2", "-Y/2"),
    ("Y/2", "X/2"),
    ("Y/2", "-X/2"),
    ("-Y/2", "X/2"),
    ("-Y/2", "-X/2"),
    # pi/2 rotations
    ("X/2",),
    ("-X/2",),
    ("Y/2",),
    ("-Y/2",),
    ("-X/2", "Y/2", "X/2"),
    ("-X/2", "-Y/2", "X/2"),
    # Hadamard-like
    ("X", "Y/2"),
    ("X", "-Y/2"),
    ("Y", "X/2"),
    ("Y", "-X/2"),
    ("X/2", "Y/2", "X/2"),
    ("-X/2", "Y/2", "-X/2"),
)

# Subsets used by the entangling classes (S1 and its X/2, Y/2 conjugates).
S1 = ((), ("Y/2", "X/2"), ("-X/2", "-Y/2"))
S1_X = (("X/2",), ("X/2", "Y/2", "X/2"), ("-Y/2",))
S1_Y = (("Y/2",), ("-X/2", "-Y/2", "X/2"), ("Y", "X/2"))

N1 = 24
N2 = 11520
BLOCK = 576

# A primitive token is (qubit, name) with qubit 0 = Q_L, 1 = Q_M, or ("CZ",).
Token = tuple


class CliffordError(RuntimeError):
    pass


@dataclass(frozen=True)
class CliffordElement:
    id: int
    unitary: np.ndarray
    primitives: tuple
    cz_count: int = 0

    @property
    def n_qubits(self) -> int:
        return 1 if self.unitary.shape[0] == 2 else 2

    @property
    def primitive_count(self) -> int:
        return sum(1 for t in self.primitives if t != ("CZ",))


def canonical(u: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first nonzero entry (row-major) is real positive."""
    flat = u.reshape(-1)
    idx = int(np.argmax(np.abs(flat) > 1e-6))
    ph = flat[idx] / abs(flat[idx])
    return u / ph


def phase_key(u: np.ndarray) -> bytes:
    c = np.round(canonical(u), 6) + (0.0 + 0.0j)
    return c.real.tobytes() + c.imag.tobytes()


def compose_primitives(primitives: Iterable[str]) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for name in primitives:
        u = primitive_unitary(name) @ u
    return u


def compose_tokens(tokens: Iterable[Token]) -> np.ndarray:
    """Two-qubit unitary of a time-ordered token list."""
    u = np.eye(4, dtype=complex)
    eye = np.eye(2)
    for tok in tokens:
        if tok == ("CZ",):
            g = CZ
        else:
            q, name = tok
            p = primitive_unitary(name)
            g = np.kron(p, eye) if q == 0 else np.kron(eye, p)
        u = g @ u
    return u


@functools.lru_cache(maxsize=1)
def single_qubit_group() -> tuple[CliffordElement, ...]:
    out = []
    for i, prims in enumerate(SINGLE_QUBIT_DECOMPOSITIONS):
        u = canonical(compose_primitives(prims))
        u.setflags(write=False)
        out.append(CliffordElement(i, u, tuple(prims), 0))
    return tuple(out)


def _tokens(q: int, prims: Sequence[str]) -> list[Token]:
    return [(q, p) for p in prims if p != "I"]


def split_two_qubit_id(idx: int) -> tuple[int, int, int]:
    if not 0 <= idx < N2:
        raise CliffordError(f"two-qubit Clifford id out of range: {idx}")
    cls, rem = divmod(idx, BLOCK)
    i_L, i_M = divmod(rem, N1)
    return cls, i_L, i_M


def two_qubit_tokens(idx: int) -> tuple[list[Token], int]:
    """Time-ordered primitive tokens and CZ count of element ``idx``."""
    cls, i_L, i_M = split_two_qubit_id(idx)
    toks = _tokens(0, SINGLE_QUBIT_DECOMPOSITIONS[i_L]) + _tokens(1, SINGLE_QUBIT_DECOMPOSITIONS[i_M])
    cz = ("CZ",)
    if cls == 0:
        return toks, 0
    if 1 <= cls <= 9:
        a, b = divmod(cls - 1, 3)
        toks += [cz] + _tokens(0, S1[a]) + _tokens(1, S1_Y[b])
        return toks, 1
    if 10 <= cls <= 18:
        a, b = divmod(cls - 10, 3)
        toks += [cz, (0, "Y/2"), (1, "-X/2"), cz] + _tokens(0, S1_Y[a]) + _tokens(1, S1_X[b])
        return toks, 2
    toks += [cz, (0, "-Y/2"), (1, "Y/2"), cz, (0, "Y/2"), (1, "-Y/2"), cz, (1, "Y/2")]
    return toks, 3


def _cache_dir() -> Path:
    env = os.environ.get("QSHUTTLE_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "qshuttle"


def _table_fingerprint() -> str:
    h = hashlib.sha256()
    h.update(repr((CACHE_FORMAT_VERSION, SINGLE_QUBIT_DECOMPOSITIONS, S1, S1_X, S1_Y)).encode())
    return h.hexdigest()[:16]


def _build_two_qubit_unitaries() -> np.ndarray:
    singles = [e.unitary for e in single_qubit_group()]
    starters = np.array([np.kron(a, b) for a in singles for b in singles])  # (576, 4, 4)
    mixers = [np.eye(4, dtype=complex)]
    for cls in range(1, 20):
        toks, _ = two_qubit_tokens(cls * BLOCK)  # starters are identity at i_L = i_M = 0
        mixers.append(compose_tokens(toks))
    mats = np.concatenate([m @ starters for m in mixers])
    return np.array([canonical(m) for m in mats])


class TwoQubitGroup:
    """The 11,520-element two-qubit Clifford group with fast lookups.

    Unitaries are built once and cached under ``QSHUTTLE_CACHE_DIR``
    (default ``~/.cache/qshuttle``); decompositions are derived from ids.
    """

    def __init__(self, unitaries: np.ndarray):
        if unitaries.shape != (N2, 4, 4):
            raise CliffordError(f"unexpected table shape {unitaries.shape}")
        self.unitaries = unitaries
        self.unitaries.setflags(write=False)
        self._index: dict[bytes, int] | None = None

    def __len__(self) -> int:
        return N2

    def __getitem__(self, idx: int) -> CliffordElement:
        toks, ncz = two_qubit_tokens(idx)
        return CliffordElement(idx, self.unitaries[idx], tuple(toks), ncz)

    def __iter__(self):
        return (self[i] for i in range(N2))

    @property
    def index(self) -> dict[bytes, int]:
        if self._index is None:
            self._index = {}
            for i, u in enumerate(self.unitaries):
                self._index.setdefault(phase_key(u), i)
        return self._index

    def find(self, u: np.ndarray) -> int | None:
        """Id of the element equal to ``u`` up to phase, or None."""
        i = self.index.get(phase_key(u))
        if i is not None and equal_up_to_phase(self.unitaries[i], u):
            return i
        return None

    @classmethod
    def load(cls, cache: bool = True) -> "TwoQubitGroup":
        path = _cache_dir() / f"clifford2_{_table_fingerprint()}.npy"
        if cache and path.exists():
            try:
                return cls(np.load(path))
            except (OSError, ValueError, CliffordError) as exc:
                log.warning("ignoring unreadable Clifford cache %s: %s", path, exc)
        table = _build_two_qubit_unitaries()
        if cache:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{os.getpid()}.tmp.npy")
                np.save(tmp, table)
                os.replace(tmp, path)
            except OSError as exc:
                log.warning("could not write Clifford cache %s: %s", path, exc)
        return cls(table)


@functools.lru_cache(maxsize=1)
def two_qubit_group() -> TwoQubitGroup:
    return TwoQubitGroup.load()


def group_unitaries(n_qubits: int) -> np.ndarray:
    if n_qubits == 1:
        return np.array([e.unitary for e in single_qubit_group()])
    if n_qubits == 2:
        return two_qubit_group().unitaries
    raise CliffordError("only 1- and 2-qubit groups exist here")


def compose(ids: Sequence[int], n_qubits: int) -> np.ndarray:
    """Unitary of the time-ordered product of group elements."""
    mats = group_unitaries(n_qubits)
    u = np.eye(2**n_qubits, dtype=complex)
    for i in ids:
        u = mats[i] @ u
    return u


def recovery_gate(product: np.ndarray, target: str, n_qubits: int | None = None) -> int:
    """Lowest id ``R`` with ``R @ product`` mapping all-down to the target basis state."""
    product = np.asarray(product)
    n = n_qubits or (1 if product.shape[0] == 2 else 2)
    if target not in ("up", "down"):
        raise CliffordError("target must be 'up' or 'down'")
    mats = group_unitaries(n)
    t = mats.shape[1] - 1 if target == "up" else 0
    amps = mats[:, t, :] @ product[:, 0]
    hits = np.flatnonzero(np.abs(amps) ** 2 > 1.0 - 1e-9)
    if hits.size == 0:
        raise CliffordError("no recovery element found; product is not a Clifford")
    return int(hits[0])


@dataclass(frozen=True)
class RbSequence:
    """One RB circuit: random elements, optional interleaved gate, recovery."""

    length: int
    elements: tuple[int, ...]
    recovery: int
    target: str
    n_qubits: int
    interleaved: str | None = None
    interleaved_id: int | None = None

    def gate_ids(self) -> list[int]:
        """All group ids in execution order (interleaved gates included)."""
        out: list[int] = []
        for e in self.elements:
            out.append(e)
            if self.interleaved is not None:
                out.append(self.interleaved_id)
        out.append(self.recovery)
        return out

    def export_line(self) -> str:
        ids = [str(i) for i in self.gate_ids()[:-1]]
        return ",".join(ids + [f"R:{self.recovery}"])


INTERLEAVE_GATES = {"CZ": CZ, "I": np.eye(4, dtype=complex)}


def interleave_id(name: str, n_qubits: int = 2) -> int:
    if n_qubits == 1:
        if name != "I":
            raise CliffordError("only the identity can be interleaved in 1Q RB")
        return 0
    idx = two_qubit_group().find(INTERLEAVE_GATES[name])
    if idx is None:
        raise CliffordError(f"{name} is not in the Clifford group")
    return idx


def generate_rb_sequences(
    L_values: Sequence[int],
    n_sequences: int,
    rng: np.random.Generator,
    *,
    n_qubits: int = 2,
    interleave: str | None = None,
) -> list[tuple[RbSequence, RbSequence]]:
    """Matched (target up, target down) pairs for every length and sequence index.

    Ordering is length-major then sequence index. Both members of a pair
    share the random elements and differ only in the recovery.
    """
    if not L_values:
        raise CliffordError("L_values must not be empty")
    if n_sequences < 1:
        raise CliffordError("n_sequences must be >= 1")
    size = N1 if n_qubits == 1 else N2
    mats = group_unitaries(n_qubits)
    inter_id = interleave_id(interleave, n_qubits) if interleave else None
    out = []
    for L in L_values:
        for _ in range(n_sequences):
            elems = tuple(int(x) for x in rng.integers(0, size, int(L)))
            u = np.eye(2**n_qubits, dtype=complex)
            for e in elems:
                u = mats[e] @ u
                if inter_id is not None:
                    u = mats[inter_id] @ u
            pair = tuple(
                RbSequence(int(L), elems, recovery_gate(u, tgt, n_qubits), tgt, n_qubits, interleave, inter_id)
                for tgt in ("up", "down")
            )
            out.append(pair)
    return out


def export_sequences(pairs: Iterable[tuple[RbSequence, RbSequence]]) -> str:
    lines = [s.export_line() for pair in pairs for s in pair]
    return "\n".join(lines) + ("\n" if lines else "")
