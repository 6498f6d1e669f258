"""Pulse and gate layer.

Single-qubit drive in the rotating frame, software phase frames (virtual Z),
ZZ exchange evolution, shuttling, and the decoupled-CZ constructions.
Frequencies are in Hz and times in seconds; Planck's constant is factored
out of every Hamiltonian, so ``H`` is in Hz and ``U = exp(-2 pi i H t)``.

Drive phase convention: a drive phase ``phi`` rotates about the Bloch axis
``(cos phi, -sin phi, 0)``. Gate names use the axis azimuth instead
(``X`` = 0, ``Y`` = pi/2); the drive phase is its negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from . import noise as noise_mod
from .noise import NoiseModel
from .qops import I2, KrausChannel, lift_channel

if TYPE_CHECKING:
    from .device import DeviceConfig

TWO_PI = 2.0 * math.pi

# Axis azimuth (rad) and rotation angle (rad) of each primitive gate.
PRIMITIVES: dict[str, tuple[float, float]] = {
    "I": (0.0, 0.0),
    "X/2": (0.0, math.pi / 2),
    "-X/2": (math.pi, math.pi / 2),
    "Y/2": (math.pi / 2, math.pi / 2),
    "-Y/2": (-math.pi / 2, math.pi / 2),
    "X": (0.0, math.pi),
    "Y": (math.pi / 2, math.pi),
}


class ControlError(ValueError):
    pass


def wrap_phase(phi):
    """Map angles into (-pi, pi]."""
    out = -((-np.asarray(phi, dtype=float) + math.pi) % TWO_PI - math.pi)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Single-qubit drive
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PulseSpec:
    """A constant-amplitude resonant pulse.

    ``duration`` defaults to the pi/2 time ``1/(4 f_R)``.
    """

    f_R: float
    delta_f: float = 0.0
    phi: float = 0.0
    duration: float | None = None
    steps: int = 1

    def __post_init__(self) -> None:
        if not self.f_R > 0:
            raise ControlError("f_R must be positive")
        if self.duration is None:
            object.__setattr__(self, "duration", 1.0 / (4.0 * self.f_R))
        if self.duration < 0:
            raise ControlError("duration must be non-negative")
        if self.steps < 1:
            raise ControlError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.duration / self.steps


def rotating_hamiltonian(delta_f: float, f_R: float, phi: float) -> np.ndarray:
    """Drive Hamiltonian in units of h: ``(1/2)[[df, f_R e^{i phi}], [f_R e^{-i phi}, -df]]``."""
    if not f_R > 0:
        raise ControlError("f_R must be positive")
    return 0.5 * np.array(
        [[delta_f, f_R * np.exp(1j * phi)], [f_R * np.exp(-1j * phi), -delta_f]],
        dtype=complex,
    )


def _su2_exp(hx, hy, hz, t):
    """``exp(-i pi t (hx X + hy Y + hz Z))`` for broadcastable field components.

    This is the propagator of ``H = (1/2) h.sigma`` over time ``t``.
    """
    hx, hy, hz, t = np.broadcast_arrays(
        np.asarray(hx, float), np.asarray(hy, float), np.asarray(hz, float), np.asarray(t, float)
    )
    norm = np.sqrt(hx**2 + hy**2 + hz**2)
    theta = math.pi * norm * t
    c = np.cos(theta)
    # sin(theta)/norm without dividing by zero.
    s_over = np.where(norm > 0, np.sin(theta) / np.where(norm > 0, norm, 1.0), math.pi * t)
    u = np.empty(hx.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s_over * hz
    u[..., 1, 1] = c + 1j * s_over * hz
    u[..., 0, 1] = -1j * s_over * (hx - 1j * hy)
    u[..., 1, 0] = -1j * s_over * (hx + 1j * hy)
    return u


def drive_propagator(delta_f, f_R: float, phi: float, duration: float) -> np.ndarray:
    """Exact propagator of the (time-independent) drive; vectorised over ``delta_f``."""
    return _su2_exp(f_R * math.cos(phi), -f_R * math.sin(phi), delta_f, duration)


def evolve_pulse(p: PulseSpec) -> np.ndarray:
    """Product of ``p.steps`` identical short-time propagators."""
    h = rotating_hamiltonian(p.delta_f, p.f_R, p.phi)
    step = _su2_exp(2 * h[0, 1].real, -2 * h[0, 1].imag, 2 * h[0, 0].real, p.dt)
    return np.linalg.matrix_power(step, p.steps)


def rotation(axis_azimuth: float, angle: float) -> np.ndarray:
    """Ideal rotation by ``angle`` about the in-plane axis at ``axis_azimuth``."""
    return _su2_exp(math.cos(axis_azimuth), math.sin(axis_azimuth), 0.0, angle / TWO_PI)


def primitive_unitary(name: str) -> np.ndarray:
    azimuth, angle = PRIMITIVES[name]
    return rotation(azimuth, angle)


def rz(theta: float) -> np.ndarray:
    """``exp(-i theta Z / 2)``: relative phase ``theta`` on spin-up."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


# ---------------------------------------------------------------------------
# Phase frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseFrame:
    """Accumulated software phase per qubit, kept in (-pi, pi]."""

    phases: tuple[float, ...] = (0.0, 0.0)

    def __getitem__(self, qubit: int) -> float:
        return self.phases[qubit]

    def drive_phase(self, qubit: int, phi: float) -> float:
        return phi + self.phases[qubit]


def virtual_z(frame: PhaseFrame, qubit: int, phase: float) -> PhaseFrame:
    """Zero-duration Z rotation: later pulses on ``qubit`` get ``phi + phase``."""
    phases = list(frame.phases)
    phases[qubit] = wrap_phase(phases[qubit] + phase)
    return PhaseFrame(tuple(phases))


# ---------------------------------------------------------------------------
# Exchange, DCZ and CZ
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeSpec:
    """Exchange block parameters.

    ``phi_uncond_L`` / ``phi_uncond_M`` are the unconditional phases (relative
    phase on spin-up) that a decoupled exchange block leaves on each qubit.
    They are not refocused by the decoupling pi pulses; ``dcz`` splits each
    one evenly over the two halves in the echo's toggling frame.
    """

    J: float = 1.25e6
    t_evol: float = 0.4e-6
    phi_uncond_L: float = 0.065 * math.pi
    phi_uncond_M: float = 0.04 * math.pi

    def __post_init__(self) -> None:
        if self.J < 0:
            raise ControlError("J must be non-negative")
        if self.t_evol < 0:
            raise ControlError("t_evol must be non-negative")

    @property
    def phi_uncond(self) -> tuple[float, float]:
        return (self.phi_uncond_L, self.phi_uncond_M)


def zz_phases(J, t) -> np.ndarray:
    """Diagonal of ``exp(-2 pi i (J/4) t Z(x)Z)``; broadcasts over ``J*t``."""
    a = np.asarray(0.5 * math.pi * np.asarray(J) * np.asarray(t))[..., None]
    return np.exp(-1j * a * np.array([1.0, -1.0, -1.0, 1.0]))


def local_phase_diag(phi_L, phi_M) -> np.ndarray:
    """Diagonal applying relative phases on spin-up of each qubit."""
    phi_L = np.asarray(phi_L, dtype=float)[..., None]
    phi_M = np.asarray(phi_M, dtype=float)[..., None]
    bits_L = np.array([0.0, 0.0, 1.0, 1.0])
    bits_M = np.array([0.0, 1.0, 0.0, 1.0])
    return np.exp(1j * (phi_L * bits_L + phi_M * bits_M))


def exchange_evolve(spec: ExchangeSpec) -> np.ndarray:
    """ZZ evolution for ``spec.t_evol`` plus the unconditional phases."""
    d = zz_phases(spec.J, spec.t_evol) * local_phase_diag(spec.phi_uncond_L, spec.phi_uncond_M)
    return np.diag(d)


def conditional_phase(u: np.ndarray) -> float:
    """``phi_dd + phi_uu - phi_du - phi_ud`` of a diagonal 4x4 unitary, in (-pi, pi]."""
    u = np.asarray(u)
    if np.max(np.abs(u - np.diag(np.diag(u)))) > 1e-9:
        raise ControlError("conditional_phase needs a diagonal unitary")
    d = np.diag(u)
    return wrap_phase(np.angle(d[0] * d[3] / (d[1] * d[2])))


def _free_diag(delta_f: Sequence[float], t: float) -> np.ndarray:
    # Free precession: relative phase 2 pi df t on spin-up of each qubit.
    return local_phase_diag(TWO_PI * delta_f[0] * t, TWO_PI * delta_f[1] * t)


def dcz(
    spec: ExchangeSpec,
    pi_axis: str = "Y",
    *,
    detuning: Sequence[float] = (0.0, 0.0),
    t2_dcz: Sequence[float] | None = None,
):
    """Decoupled CZ: half evolution, simultaneous pi on both qubits, half evolution.

    ``detuning`` adds static Z terms (Hz) to both halves; they cancel in the
    echo. Returns the 4x4 unitary, or a ``KrausChannel`` when ``t2_dcz``
    (per-qubit Markovian dephasing times) is given.
    """
    if pi_axis not in ("X", "Y"):
        raise ControlError("pi_axis must be 'X' or 'Y'")
    half = 0.5 * spec.t_evol
    phi_L, phi_M = spec.phi_uncond
    zz = zz_phases(spec.J, half)
    free = _free_diag(detuning, half)
    first = np.diag(zz * free * local_phase_diag(-0.5 * phi_L, -0.5 * phi_M))
    second = np.diag(zz * free * local_phase_diag(0.5 * phi_L, 0.5 * phi_M))
    pi = primitive_unitary(pi_axis)
    u = second @ np.kron(pi, pi) @ first
    if t2_dcz is None:
        return u
    # Z-dephasing commutes with the diagonal parts and is covariant under the
    # in-plane pi pulses, so it can be applied once after the whole block.
    deph = lift_channel(noise_mod.dephasing_channel(spec.t_evol, t2_dcz[0]), 0).compose(
        lift_channel(noise_mod.dephasing_channel(spec.t_evol, t2_dcz[1]), 1)
    )
    return KrausChannel(tuple(k @ u for k in deph.kraus_ops))


def cz_corrections(spec: ExchangeSpec) -> tuple[float, float]:
    """Virtual-Z phases that turn the DCZ (after undoing its pi pulses) into CZ.

    The undoing pi pulse reverses the sign of the unconditional phase seen
    after the DCZ, so the correction applied after it is ``+phi_uncond``.
    """
    zz_local = -math.pi * spec.J * spec.t_evol
    return (zz_local + spec.phi_uncond_L, zz_local + spec.phi_uncond_M)


def cz_from_dcz(spec: ExchangeSpec, pi_axis: str = "Y") -> np.ndarray:
    """CZ built as DCZ, pi pulses on both qubits, and virtual-Z corrections.

    Equals ``diag(1, 1, 1, -1)`` up to global phase when ``J t_evol = 1/2``
    and the calibration phases match the generative ones.
    """
    pi = primitive_unitary(pi_axis)
    corr_L, corr_M = cz_corrections(spec)
    return np.kron(rz(corr_L), rz(corr_M)) @ np.kron(pi, pi) @ dcz(spec, pi_axis)


# ---------------------------------------------------------------------------
# Shuttling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShuttleSpec:
    direction: str
    phase_shift: float = 0.0

    def __post_init__(self) -> None:
        if self.direction not in ("to_coupled", "to_sparse"):
            raise ControlError("direction must be 'to_coupled' or 'to_sparse'")


# ---------------------------------------------------------------------------
# Batched executor
# ---------------------------------------------------------------------------

_BITS = {
    1: [np.array([0, 1])],
    2: [np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])],
}


@dataclass
class Executor:
    """Runs a gate sequence for ``K`` noise realisations at once.

    The state is a stack of density matrices ``(K, d, d)``; realisation ``k``
    carries its own quasi-static detunings ``detunings[k]`` (Hz). The phase
    frame and the operation state (sparse / coupled) are shared.

    Args:
        n_qubits: 1 or 2. With one qubit, ``qubit_ids`` names which device
            qubit it is (so noise parameters are picked correctly).
        detunings: ``(K, 2)`` quasi-static offsets, indexed by device qubit.
        noise: mechanism switches and parameters.
        f_rabi: Rabi frequency used for timed pulses.
        J_sparse, J_coupled: exchange in each operation state.
        exchange: calibration/generative parameters of the exchange block.
        shuttle_phase: deterministic phase per transfer on the moving qubit.
        timed_pulses: when False every pulse is an instantaneous ideal rotation.
        ideal_dcz_pulses: pi pulses inside DCZ/CZ composites are ideal.
    """

    n_qubits: int
    detunings: np.ndarray
    noise: NoiseModel
    f_rabi: float = 2.5e6
    J_sparse: float = 0.0
    J_coupled: float = 1.25e6
    exchange: ExchangeSpec = field(default_factory=ExchangeSpec)
    shuttle_phase: float = 0.0
    timed_pulses: bool = True
    ideal_dcz_pulses: bool = True
    qubit_ids: tuple[int, ...] = (0, 1)
    moving_qubit: int = 1

    def __post_init__(self) -> None:
        if self.n_qubits not in (1, 2):
            raise ControlError("n_qubits must be 1 or 2")
        self.detunings = np.atleast_2d(np.asarray(self.detunings, dtype=float))
        self.K = self.detunings.shape[0]
        self.dim = 2**self.n_qubits
        if self.n_qubits == 2:
            self.qubit_ids = (0, 1)
        rho = np.zeros((self.K, self.dim, self.dim), dtype=complex)
        rho[:, 0, 0] = 1.0
        self.rho = rho
        self.frame = PhaseFrame((0.0,) * self.n_qubits)
        self.op_state = "sparse"
        self.elapsed = 0.0
        self._bits = _BITS[self.n_qubits]
        self._shuttle_half: np.ndarray | None = None

    # -- helpers ----------------------------------------------------------
    def _df(self, q: int) -> np.ndarray:
        return self.detunings[:, self.qubit_ids[q]]

    def _param(self, values: Sequence[float], q: int) -> float:
        return values[self.qubit_ids[q]]

    @property
    def J(self) -> float:
        return self.J_coupled if self.op_state == "coupled" else self.J_sparse

    def _apply_diag(self, d: np.ndarray) -> None:
        # d: (K, dim) or (dim,)
        d = np.asarray(d)
        self.rho = self.rho * d[..., :, None] * np.conj(d)[..., None, :]

    def _dephase(self, factors: Sequence[float]) -> None:
        mask = np.ones((self.dim, self.dim))
        for q, c in enumerate(factors):
            if c == 1.0:
                continue
            b = self._bits[q]
            mask = mask * np.where(b[:, None] != b[None, :], c, 1.0)
        self.rho = self.rho * mask

    def _apply_local(self, ops: dict[int, np.ndarray], diag: np.ndarray | None = None) -> None:
        """Apply single-qubit operators (``(2,2)`` or ``(K,2,2)``) in parallel,
        followed by the optional diagonal ``diag`` of shape ``(K, dim)``."""
        if self.n_qubits == 1:
            u = ops[0]
        else:
            a = ops.get(0, I2)
            b = ops.get(1, I2)
            if a.ndim == 2 and b.ndim == 2:
                u = np.kron(a, b)
            else:
                # Batched Kronecker product by broadcasting.
                u = (a[..., :, None, :, None] * b[..., None, :, None, :]).reshape(-1, 4, 4)
        if diag is not None:
            u = diag[..., :, None] * u
        self.rho = u @ self.rho @ np.conj(np.swapaxes(u, -1, -2))

    def _free_evolution(self, t: float, qubits: Iterable[int]) -> np.ndarray:
        """Diagonal (K, dim) for detuning precession of ``qubits`` and ZZ."""
        d = np.ones((self.K, self.dim), dtype=complex)
        for q in qubits:
            d = d * np.exp(1j * TWO_PI * self._df(q)[:, None] * t * self._bits[q][None, :])
        if self.n_qubits == 2 and self.J != 0.0:
            d = d * zz_phases(self.J, t)[None, :]
        return d

    def _idle_factors(self, t: float, qubits: Iterable[int]) -> list[float]:
        f = [1.0] * self.n_qubits
        if self.noise.on("idle_dephasing"):
            for q in qubits:
                f[q] = math.exp(-t / self._param(self.noise.t2_echo, q))
        return f

    # -- operations -------------------------------------------------------
    def virtual_z(self, qubit: int, phase: float) -> None:
        self.frame = virtual_z(self.frame, qubit, phase)

    def unitary(self, u: np.ndarray) -> None:
        """Instantaneous ideal unitary on the full register."""
        self.rho = u @ self.rho @ u.conj().T

    def logical_unitary(self, u: np.ndarray) -> None:
        """Apply ``u`` to the logical state, i.e. through the current phase frame."""
        f = [rz(self.frame[q]) for q in range(self.n_qubits)]
        r = f[0] if self.n_qubits == 1 else np.kron(f[0], f[1])
        self.unitary(r.conj().T @ u @ r)

    def decohere(self, factors: Sequence[float]) -> None:
        """Scale each qubit's coherences by the given factor."""
        self._dephase(factors)

    def channel(self, c: KrausChannel) -> None:
        self.rho = c(self.rho)

    def depolarize(self, p: float, qubit: int | None = None) -> None:
        """Depolarizing oracle on the register or on one qubit."""
        if qubit is None or self.n_qubits == 1:
            eye = np.eye(self.dim) / self.dim
            tr = np.trace(self.rho, axis1=1, axis2=2)[:, None, None]
            self.rho = p * self.rho + (1.0 - p) * tr * eye
            return
        r = self.rho.reshape(self.K, 2, 2, 2, 2)
        if qubit == 0:
            reduced = np.einsum("kacad->kcd", r)
            mixed = np.einsum("ab,kcd->kacbd", np.eye(2) / 2, reduced)
        else:
            reduced = np.einsum("kacbc->kab", r)
            mixed = np.einsum("kab,cd->kacbd", reduced, np.eye(2) / 2)
        self.rho = p * self.rho + (1.0 - p) * mixed.reshape(self.K, 4, 4)

    def pulse(self, qubits, name_or_axis, angle: float | None = None, *, ideal: bool = False) -> None:
        """Drive pulse on one qubit or simultaneously on several.

        ``name_or_axis`` is a primitive name (``"X/2"``, ``"-Y/2"``, ...) or an
        axis azimuth in radians, in which case ``angle`` is required.
        """
        if isinstance(qubits, int):
            qubits = (qubits,)
        if isinstance(name_or_axis, str):
            azimuth, angle = PRIMITIVES[name_or_axis]
        else:
            azimuth = float(name_or_axis)
            if angle is None:
                raise ControlError("angle required when an axis azimuth is given")
        if angle == 0.0:
            return
        if ideal or not self.timed_pulses:
            ops = {q: rotation(azimuth - self.frame[q], angle) for q in qubits}
            self._apply_local(ops)
            return
        duration = angle / (TWO_PI * self.f_rabi)
        # Dephasing is applied between segments of at most a pi/2 rotation.
        n_seg = max(1, math.ceil(angle / (math.pi / 2) - 1e-9)) if self.noise.on("rabi_dephasing") else 1
        dt = duration / n_seg
        ops = {}
        for q in qubits:
            phi = -azimuth + self.frame[q]
            df = self._df(q) if self.noise.on("quasistatic") else np.zeros(self.K)
            ops[q] = drive_propagator(df, self.f_rabi, phi, dt)
        others = [q for q in range(self.n_qubits) if q not in qubits]
        free = self._free_evolution(dt, others if self.noise.on("quasistatic") else [])
        factors = self._idle_factors(dt, others)
        if self.noise.on("rabi_dephasing"):
            for q in qubits:
                # Driven-evolution envelope exp(-t/T2Rabi) needs twice the Z-dephasing rate.
                factors[q] *= math.exp(-2.0 * dt / self._param(self.noise.t2_rabi, q))
        for _ in range(n_seg):
            self._apply_local(ops, free)
            self._dephase(factors)
        self.elapsed += duration

    def idle(self, t: float) -> None:
        if t < 0:
            raise ControlError("idle time must be non-negative")
        if t == 0:
            return
        qs = range(self.n_qubits) if self.noise.on("quasistatic") else []
        self._apply_diag(self._free_evolution(t, qs))
        self._dephase(self._idle_factors(t, range(self.n_qubits)))
        self.elapsed += t

    def exchange_block(self, t: float, phi_L: float = 0.0, phi_M: float = 0.0) -> None:
        """Free evolution at the current J plus explicit unconditional phases."""
        if self.n_qubits != 2:
            raise ControlError("exchange needs two qubits")
        qs = range(2) if self.noise.on("quasistatic") else []
        d = self._free_evolution(t, qs) * local_phase_diag(phi_L, phi_M)[None, :]
        self._apply_diag(d)
        if self.op_state == "coupled":
            if self.noise.on("dcz_dephasing"):
                self._dephase([math.exp(-t / self.noise.t2_dcz[q]) for q in range(2)])
        else:
            self._dephase(self._idle_factors(t, range(2)))
        self.elapsed += t

    def dcz(self, t_evol: float | None = None, pi_axis: str = "Y") -> None:
        """Half evolution, simultaneous pi on both qubits, half evolution."""
        t = self.exchange.t_evol if t_evol is None else t_evol
        if self.op_state == "coupled":
            phi_L, phi_M = self.exchange.phi_uncond
        else:
            phi_L = phi_M = 0.0
        self.exchange_block(0.5 * t, -0.5 * phi_L, -0.5 * phi_M)
        self.pulse((0, 1), pi_axis, ideal=self.ideal_dcz_pulses)
        self.exchange_block(0.5 * t, 0.5 * phi_L, 0.5 * phi_M)

    def shuttle(self, direction: str, *, compensate: bool = True) -> None:
        """Move the moving qubit between the sparse and the coupled position."""
        spec = ShuttleSpec(direction, self.shuttle_phase)
        expected = "to_coupled" if self.op_state == "sparse" else "to_sparse"
        if direction != expected:
            raise ControlError(f"cannot shuttle {direction} from the {self.op_state} state")
        q = self.moving_qubit if self.n_qubits == 2 else 0
        if spec.phase_shift:
            ops = {q: rz(spec.phase_shift)}
            self._apply_local(ops)
        if self.noise.on("shuttle"):
            if self._shuttle_half is None:
                s = self.noise.shuttle
                ch = noise_mod.shuttle_cycle_channel(s.F_u, s.F_d, s.F_p, power=0.5)
                if self.n_qubits == 2:
                    ch = lift_channel(ch, q)
                # Superoperator on row-major vec(rho): sum_k K (x) conj(K).
                self._shuttle_half = sum(np.kron(k, k.conj()) for k in ch.kraus_ops)
            flat = self.rho.reshape(self.K, self.dim * self.dim) @ self._shuttle_half.T
            self.rho = flat.reshape(self.K, self.dim, self.dim)
        if compensate and spec.phase_shift:
            self.virtual_z(q, -spec.phase_shift)
        self.op_state = "coupled" if direction == "to_coupled" else "sparse"

    def cz(self, pi_axis: str = "Y") -> None:
        """Shuttle in, DCZ, shuttle out, undo the pi pulses, virtual-Z corrections."""
        self.shuttle("to_coupled")
        self.dcz(pi_axis=pi_axis)
        self.shuttle("to_sparse")
        self.pulse((0, 1), pi_axis, ideal=self.ideal_dcz_pulses)
        spec = replace(self.exchange, J=self.J_coupled)
        corr_L, corr_M = cz_corrections(spec)
        self.virtual_z(0, corr_L)
        self.virtual_z(1, corr_M)

    # -- readout ----------------------------------------------------------
    def probabilities(self) -> np.ndarray:
        """Outcome probabilities ``(K, dim)`` including readout flips when enabled."""
        p = np.clip(np.real(np.diagonal(self.rho, axis1=1, axis2=2)), 0.0, 1.0)
        if self.noise.on("readout"):
            mats = [
                noise_mod.readout_matrix(
                    self._param(self.noise.eps_up, q), self._param(self.noise.eps_down, q)
                )
                for q in range(self.n_qubits)
            ]
            m = mats[0] if self.n_qubits == 1 else np.kron(mats[0], mats[1])
            p = p @ m.T
        return p

    def up_probability(self, qubit: int | None = None) -> np.ndarray:
        """P(up) of one qubit, or P(up, up) of both when ``qubit`` is None."""
        p = self.probabilities()
        if self.n_qubits == 1:
            return p[:, 1]
        if qubit is None:
            return p[:, 3]
        return p[:, 2] + p[:, 3] if qubit == 0 else p[:, 1] + p[:, 3]

    def copy(self) -> "Executor":
        import copy as _copy

        new = _copy.copy(self)
        new.rho = self.rho.copy()
        return new


def executor_from_config(
    cfg: "DeviceConfig",
    n_qubits: int,
    detunings: np.ndarray,
    *,
    qubit_ids: tuple[int, ...] = (0, 1),
    noise: NoiseModel | None = None,
    **kwargs,
) -> Executor:
    exch = ExchangeSpec(cfg.J_on, cfg.t_evol_cz, cfg.phi_uncond_L, cfg.phi_uncond_M)
    return Executor(
        n_qubits=n_qubits,
        detunings=detunings,
        noise=cfg.noise if noise is None else noise,
        f_rabi=cfg.f_rabi,
        J_sparse=cfg.J_off,
        J_coupled=cfg.J_on,
        exchange=exch,
        shuttle_phase=cfg.shuttle_phase,
        qubit_ids=qubit_ids,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# Unconditional phase calibration
# ---------------------------------------------------------------------------


def dcz_probe(
    ex: Executor, probe: int, control_up: bool, final_azimuths: np.ndarray, pi_axis: str = "Y",
    *, with_shuttle: bool = False, t_evol: float | None = None,
) -> np.ndarray:
    """Ramsey-style DCZ probe; returns ``(len(final_azimuths), K)`` probe P(up).

    Probe: X/2, DCZ, then a final pi/2 about the swept axis. The control
    qubit starts in spin-down, or spin-up after an ideal X.
    """
    control = 1 - probe
    if control_up:
        ex.pulse(control, "X", ideal=True)
    ex.pulse(probe, "X/2", ideal=True)
    if with_shuttle:
        ex.shuttle("to_coupled")
    ex.dcz(t_evol, pi_axis=pi_axis)
    if with_shuttle:
        ex.shuttle("to_sparse")
    out = []
    for az in final_azimuths:
        e = ex.copy()
        e.pulse(probe, float(az), math.pi / 2, ideal=True)
        out.append(e.up_probability(probe))
    return np.array(out)


def split_probe_phases(phi_down: float, phi_up: float) -> tuple[float, float]:
    """Controlled phase in [0, 2 pi) and unconditional phase from two probe offsets."""
    controlled = float((phi_up - phi_down) % TWO_PI)
    uncond = wrap_phase(phi_down + 0.5 * controlled)
    return controlled, uncond


def calibrate_unconditional_phases(
    spec: ExchangeSpec, probe_resolution: float = math.pi / 16, pi_axis: str = "Y"
) -> dict:
    """Recover the unconditional phases of a DCZ with noiseless probe circuits.

    The final pi/2 axis is swept in steps of ``probe_resolution``; the fitted
    offsets for control down/up give the controlled phase (their difference)
    and the unconditional phase (their midpoint).
    """
    from .analysis import extract_phase

    n = max(8, int(math.ceil(TWO_PI / probe_resolution)))
    az = np.arange(n) * (TWO_PI / n)
    quiet = NoiseModel().silent()
    result: dict = {}
    for probe, name in ((0, "L"), (1, "M")):
        offsets = []
        for control_up in (False, True):
            ex = Executor(2, np.zeros((1, 2)), quiet, J_sparse=spec.J, J_coupled=spec.J, exchange=spec)
            ex.op_state = "coupled"
            p = dcz_probe(ex, probe, control_up, az, pi_axis)[:, 0]
            offsets.append(extract_phase(az, p).params["phi0"])
        base = 0.0 if pi_axis == "Y" else math.pi
        controlled, uncond = split_probe_phases(offsets[0] - base, offsets[1] - base)
        result[f"phi_{name}"] = uncond
        result[f"controlled_{name}"] = controlled
        result[f"offsets_{name}"] = tuple(offsets)
    return result
