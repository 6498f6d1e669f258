"""Noise models: quasi-static detuning, Markovian dephasing, depolarizing
oracle channels, the shuttle preservation channel and readout flips."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .qops import KrausChannel

MECHANISMS = (
    "quasistatic",
    "idle_dephasing",
    "rabi_dephasing",
    "dcz_dephasing",
    "echo_decay",
    "shuttle",
    "readout",
)


class NoiseModelError(ValueError):
    pass


@dataclass(frozen=True)
class ShuttleFidelities:
    """Per-cycle preservation fidelities of one back-and-forth shuttle."""

    F_u: float = 0.99971
    F_d: float = 0.99975
    F_p: float = 0.9962


@dataclass(frozen=True)
class NoiseModel:
    """Noise parameters; per-qubit tuples are ordered (Q_L, Q_M)."""

    t2_star: tuple[float, float] = (3e-6, 4e-6)
    t2_echo: tuple[float, float] = (18e-6, 28e-6)
    n_echo: tuple[float, float] = (1.1, 1.3)
    t2_rabi: tuple[float, float] = (40e-6, 40e-6)
    t2_dcz: tuple[float, float] = (7e-6, 7e-6)
    shuttle: ShuttleFidelities = field(default_factory=ShuttleFidelities)
    eps_up: tuple[float, float] = (0.0, 0.0)
    eps_down: tuple[float, float] = (0.0, 0.0)
    enabled: dict = field(
        default_factory=lambda: {
            "quasistatic": True,
            "idle_dephasing": False,
            "rabi_dephasing": True,
            "dcz_dephasing": True,
            "echo_decay": True,
            "shuttle": True,
            "readout": True,
        }
    )
    # "shot": new detuning per shot; "sequence": one draw per executed sequence.
    quasistatic_resample: str = "shot"

    def __post_init__(self) -> None:
        for name in ("t2_star", "t2_echo", "n_echo", "t2_rabi", "t2_dcz"):
            vals = getattr(self, name)
            if len(vals) != 2 or any(not v > 0 for v in vals):
                raise NoiseModelError(f"{name}: need two positive values, got {vals!r}")
        for name in ("eps_up", "eps_down"):
            vals = getattr(self, name)
            if len(vals) != 2 or any(not 0.0 <= v < 1.0 for v in vals):
                raise NoiseModelError(f"{name}: values must lie in [0, 1), got {vals!r}")
        for f in fields(ShuttleFidelities):
            v = getattr(self.shuttle, f.name)
            if not 0.0 < v <= 1.0:
                raise NoiseModelError(f"shuttle.{f.name} must lie in (0, 1], got {v!r}")
        unknown = set(self.enabled) - set(MECHANISMS)
        if unknown:
            raise NoiseModelError(f"unknown noise mechanism(s): {sorted(unknown)}")
        if self.quasistatic_resample not in ("shot", "sequence"):
            raise NoiseModelError("quasistatic_resample must be 'shot' or 'sequence'")
        full = {m: bool(self.enabled.get(m, False)) for m in MECHANISMS}
        object.__setattr__(self, "enabled", full)

    def on(self, mechanism: str) -> bool:
        return self.enabled[mechanism]

    def with_enabled(self, **flags: bool) -> "NoiseModel":
        import dataclasses

        merged = dict(self.enabled)
        merged.update(flags)
        return dataclasses.replace(self, enabled=merged)

    def silent(self) -> "NoiseModel":
        return self.with_enabled(**{m: False for m in MECHANISMS})

    def sigma_f(self) -> np.ndarray:
        if not self.on("quasistatic"):
            return np.zeros(2)
        return np.array([sigma_from_t2star(t) for t in self.t2_star])


def sigma_from_t2star(t2_star: float) -> float:
    """Gaussian width (Hz) of quasi-static detuning giving exp(-(t/T2*)^2) decay.

    For ``df ~ N(0, s)``, ``E[cos(2 pi df t)] = exp(-2 pi^2 s^2 t^2)``, so the
    envelope matches when ``s = sqrt(2) / (2 pi T2*)``.
    """
    if not t2_star > 0:
        raise NoiseModelError("t2_star must be positive")
    if math.isinf(t2_star):
        return 0.0
    return math.sqrt(2.0) / (2.0 * math.pi * t2_star)


def sample_quasistatic(
    model: NoiseModel, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Per-qubit detuning draws in Hz, shape ``(2,)`` or ``(size, 2)``."""
    sigma = model.sigma_f()
    shape = (2,) if size is None else (size, 2)
    draws = rng.standard_normal(shape)
    return draws * sigma


def coherence_channel(factor: float) -> KrausChannel:
    """Single-qubit phase damping that scales coherences by ``factor``."""
    if not 0.0 <= factor <= 1.0:
        raise NoiseModelError(f"coherence factor must lie in [0, 1], got {factor!r}")
    q = 0.5 * (1.0 - factor)
    return KrausChannel(
        (math.sqrt(1.0 - q) * np.eye(2), math.sqrt(q) * np.diag([1.0, -1.0]))
    )


def dephasing_channel(t: float, t2: float) -> KrausChannel:
    """Markovian dephasing for a time ``t``: coherences decay as exp(-t/t2)."""
    if t < 0 or not t2 > 0:
        raise NoiseModelError("need t >= 0 and t2 > 0")
    return coherence_channel(math.exp(-t / t2))


def depolarizing_channel(p: float, dim: int = 2) -> KrausChannel:
    """``rho -> p rho + (1 - p) I/dim`` as a Pauli-twirl Kraus set."""
    if not 0.0 <= p <= 1.0:
        raise NoiseModelError(f"depolarizing parameter must lie in [0, 1], got {p!r}")
    paulis_1q = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    if dim == 2:
        paulis = paulis_1q
    elif dim == 4:
        paulis = [np.kron(a, b) for a in paulis_1q for b in paulis_1q]
    else:
        raise NoiseModelError("dim must be 2 or 4")
    n = len(paulis)
    # Uniform Pauli twirl with weight (1 - p)/n on every Pauli (identity included).
    w_id = p + (1.0 - p) / n
    w_other = (1.0 - p) / n
    ops = [math.sqrt(w_id) * paulis[0].astype(complex)]
    ops += [math.sqrt(w_other) * P.astype(complex) for P in paulis[1:]]
    return KrausChannel(tuple(ops))


def shuttle_cycle_channel(
    F_u: float, F_d: float, F_p: float, *, power: float = 1.0
) -> KrausChannel:
    """Moving-qubit channel for one shuttle cycle (or a fraction via ``power``).

    One application flips spin-down with probability ``1 - F_d`` and spin-up
    with probability ``1 - F_u``, and scales the coherence by exactly ``F_p``.
    Built as a generalized amplitude damping step plus pure dephasing; this is
    completely positive only when ``F_p**2 <= F_u * F_d``.

    ``power=0.5`` gives the single-transfer channel, with each fidelity
    replaced by its square root.
    """
    for name, v in (("F_u", F_u), ("F_d", F_d), ("F_p", F_p)):
        if not 0.0 < v <= 1.0:
            raise NoiseModelError(f"{name} must lie in (0, 1], got {v!r}")
    F_u, F_d, F_p = F_u**power, F_d**power, F_p**power
    if F_p**2 > F_u * F_d * (1.0 + 1e-12):
        raise NoiseModelError(
            f"F_p^2 = {F_p**2:.8f} exceeds F_u*F_d = {F_u * F_d:.8f}; "
            "no completely positive channel has these fidelities"
        )
    a = 1.0 - F_d  # down -> up
    b = 1.0 - F_u  # up -> down
    amp = math.sqrt(F_u * F_d)
    # Index 0 is spin-down.
    k0 = np.array([[math.sqrt(1 - a), 0], [0, math.sqrt(1 - b)]], dtype=complex)
    k1 = np.array([[0, 0], [math.sqrt(a), 0]], dtype=complex)
    k2 = np.array([[0, math.sqrt(b)], [0, 0]], dtype=complex)
    relax = KrausChannel((k0, k1, k2))
    extra = min(1.0, F_p / amp)
    return coherence_channel(extra).compose(relax)


def two_level_survival(n: np.ndarray | int, F_u: float, F_d: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form spin-up probability after ``n`` cycles of the population chain.

    Returns ``(p_up_from_down, p_up_from_up)``.
    """
    n = np.asarray(n, dtype=float)
    a, b = 1.0 - F_d, 1.0 - F_u
    s = a + b
    if s == 0.0:
        return np.zeros_like(n), np.ones_like(n)
    lam = (1.0 - s) ** n
    from_down = a / s * (1.0 - lam)
    from_up = (a + b * lam) / s
    return from_down, from_up


def readout_flip(p_ideal: float | np.ndarray, eps_up: float, eps_down: float):
    """Reported spin-up probability with asymmetric readout errors.

    ``eps_up`` is the chance an up spin reads as down, ``eps_down`` the chance
    a down spin reads as up.
    """
    return p_ideal * (1.0 - eps_up) + (1.0 - p_ideal) * eps_down


def readout_matrix(eps_up: float, eps_down: float) -> np.ndarray:
    """Column-stochastic confusion matrix on (down, up) probabilities."""
    return np.array([[1.0 - eps_down, eps_up], [eps_down, 1.0 - eps_up]])
