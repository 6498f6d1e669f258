"""Experiment protocols: each builds circuits on the executor, samples
shots, fits the relevant decay model and returns an :class:`ExperimentResult`.

Random numbers come from labelled streams (:func:`qshuttle.rng.stream`), so
every raw series depends only on the configuration and the master seed.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import analysis
from .analysis import DecayFit, FitError, extract_phase
from .clifford import (
    INTERLEAVE_GATES,
    N1,
    SINGLE_QUBIT_DECOMPOSITIONS,
    generate_rb_sequences,
    group_unitaries,
    recovery_gate,
    two_qubit_tokens,
)
from .control import (
    PRIMITIVES,
    ExchangeSpec,
    Executor,
    PulseSpec,
    calibrate_unconditional_phases,
    dcz_probe,
    evolve_pulse,
    executor_from_config,
    split_probe_phases,
    wrap_phase,
)
from .device import DeviceConfig
from .noise import NoiseModel, sample_quasistatic
from .qops import sample_per_shot, sample_shots
from .rng import stream

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

DETUNING_SWEEP_LENGTHS = tuple(range(1, 102, 10))
DETUNING_SWEEP_SEQUENCES = 1000
DETUNING_SWEEP_STEPS = 1000
DETUNING_SWEEP_RABI = (1e6, 2e6, 4e6, 8e6)
DETUNING_SWEEP_GRID = (0.0, 1e3, 2e3, 5e3, 1e4, 2e4, 5e4, 1e5, 2e5)

RB_LENGTHS_1Q = (1, 5, 10, 20, 50, 100, 200, 300, 500)
RB_LENGTHS_2Q = (1, 2, 3, 4, 6, 8, 10, 13, 16, 20)

POLARIZATION_DWELL = 120e-6
COHERENCE_DWELL = 1.2e-6


@dataclass
class ExperimentResult:
    """Raw series, fits and summary scalars of one experiment run."""

    experiment: str
    columns: tuple[str, ...]
    rows: list[tuple]
    fits: list[DecayFit]
    scalars: dict[str, float]
    seed: int
    config_digest: str
    metadata: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        # A decay too slow to resolve is reported as a bound, not a failure.
        return bool(self.metadata.get("lower_bound")) or all(f.converged for f in self.fits)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _realizations(noise: NoiseModel, rng: np.random.Generator, shots: int) -> np.ndarray:
    """Quasi-static detunings: one per shot, or one shared draw per run.

    Without quasi-static noise all realizations coincide, so one suffices.
    """
    per_shot = noise.quasistatic_resample == "shot" and noise.enabled["quasistatic"]
    k = shots if per_shot else 1
    return sample_quasistatic(noise, rng, k)


def _count_up(probs: np.ndarray, shots: int, rng: np.random.Generator) -> int:
    """Spin-up count for ``shots`` given per-realization probabilities."""
    probs = np.clip(np.asarray(probs, dtype=float).ravel(), 0.0, 1.0)
    if probs.size == shots:
        return sample_per_shot(probs, rng)
    if probs.size == 1:
        return sample_shots(float(probs[0]), shots, rng)
    raise ValueError("need one probability per shot or a single probability")


def _joint_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome counts (dd, du, ud, uu) for two-qubit probabilities ``(K, 4)``."""
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum(axis=1, keepdims=True)
    if probs.shape[0] == 1:
        return rng.multinomial(shots, probs[0])
    if probs.shape[0] != shots:
        raise ValueError("need one probability row per shot or a single row")
    cum = np.cumsum(probs, axis=1)
    u = rng.random(shots)[:, None]
    outcome = np.minimum((u > cum).sum(axis=1), 3)
    return np.bincount(outcome, minlength=4)


def _amplitude(phases: np.ndarray, ys: np.ndarray) -> float:
    """Peak-to-peak fringe visibility over a full sweep of the final axis."""
    return 2.0 * analysis._linear_cosine(np.asarray(phases, dtype=float), np.asarray(ys, dtype=float))[0]


def _phase_grid(n: int) -> np.ndarray:
    return np.arange(n) * (TWO_PI / n)


def _result(name, columns, rows, fits, scalars, seed, cfg, **kw) -> ExperimentResult:
    return ExperimentResult(name, tuple(columns), rows, fits, scalars, seed, cfg.digest(), **kw)


def _check_qubit(qubit: int) -> None:
    if qubit not in (0, 1):
        raise ValueError("qubit must be 0 (Q_L) or 1 (Q_M)")


# ---------------------------------------------------------------------------
# Single-qubit characterization
# ---------------------------------------------------------------------------


def run_ramsey(
    cfg: DeviceConfig,
    qubit: int = 0,
    delays: Sequence[float] | None = None,
    shots: int = 1000,
    seed: int = 0,
    n_phases: int = 8,
) -> ExperimentResult:
    """X/2, free evolution, pi/2 about a swept axis; Gaussian fit of the fringe amplitude."""
    _check_qubit(qubit)
    delays = np.linspace(0.0, 10e-6, 41) if delays is None else np.asarray(delays, dtype=float)
    phases = _phase_grid(n_phases)
    rows, amps = [], []
    for i, t in enumerate(delays):
        det = _realizations(cfg.noise, stream(seed, f"ramsey/q{qubit}/delay/{i}/noise"), shots)
        ex = executor_from_config(cfg, 1, det, qubit_ids=(qubit,))
        ex.pulse(0, "X/2")
        ex.idle(float(t))
        ys = []
        for j, ph in enumerate(phases):
            e = ex.copy()
            e.pulse(0, float(ph), math.pi / 2)
            n_up = _count_up(e.up_probability(), shots, stream(seed, f"ramsey/q{qubit}/delay/{i}/phase/{j}"))
            ys.append(n_up / shots)
            rows.append((float(t), float(ph), n_up / shots))
        amps.append(_amplitude(phases, ys))
    f = analysis.fit("gaussian", delays, amps)
    scalars: dict[str, float] = {}
    lower_bound = False
    span = float(delays.max())
    T = f.params["T"]
    if f.converged and T < 10.0 * span:
        scalars["T2_star"] = T
        scalars["T2_star_err"] = f.stderr["T"]
    else:
        # No measurable decay inside the window.
        scalars["T2_star_lower_bound"] = 10.0 * span
        lower_bound = True
    scalars["amplitude"] = f.params["A"]
    return _result(
        "ramsey", ("delay_s", "phase_rad", "up_prob"), rows, [f], scalars, seed, cfg,
        metadata={"qubit": qubit, "shots": shots, "n_phases": n_phases, "lower_bound": lower_bound},
        tables={"amplitudes": [{"delay_s": float(t), "amplitude": float(a)} for t, a in zip(delays, amps)]},
    )


def run_echo(
    cfg: DeviceConfig,
    qubit: int = 0,
    delays: Sequence[float] | None = None,
    shots: int = 1000,
    seed: int = 0,
    n_phases: int = 8,
) -> ExperimentResult:
    """X/2, tau, X, tau, pi/2 about a swept axis; stretched-exponential fit vs 2 tau.

    ``delays`` are total evolution times ``2 tau``. Quasi-static detuning is
    refocused by the pi pulse; the echo decay block
    ``exp(-(2 tau / T2echo)^n)`` is applied when that mechanism is enabled.
    """
    _check_qubit(qubit)
    delays = np.linspace(0.0, 80e-6, 41) if delays is None else np.asarray(delays, dtype=float)
    phases = _phase_grid(n_phases)
    t2e = cfg.noise.t2_echo[qubit]
    n_e = cfg.noise.n_echo[qubit]
    rows, amps = [], []
    for i, t in enumerate(delays):
        det = _realizations(cfg.noise, stream(seed, f"echo/q{qubit}/delay/{i}/noise"), shots)
        ex = executor_from_config(cfg, 1, det, qubit_ids=(qubit,))
        ex.pulse(0, "X/2")
        ex.idle(0.5 * float(t))
        ex.pulse(0, "X")
        ex.idle(0.5 * float(t))
        if cfg.noise.on("echo_decay"):
            ex.decohere([math.exp(-((float(t) / t2e) ** n_e))])
        ys = []
        for j, ph in enumerate(phases):
            e = ex.copy()
            e.pulse(0, float(ph), math.pi / 2)
            n_up = _count_up(e.up_probability(), shots, stream(seed, f"echo/q{qubit}/delay/{i}/phase/{j}"))
            ys.append(n_up / shots)
            rows.append((float(t), float(ph), n_up / shots))
        amps.append(_amplitude(phases, ys))
    f = analysis.fit("stretched_exp", delays, amps)
    scalars = {"amplitude": f.params["A"]}
    lower_bound = False
    span = float(delays.max())
    if f.converged and f.params["T"] < 10.0 * span:
        scalars.update(T2_echo=f.params["T"], T2_echo_err=f.stderr["T"], n=f.params["n"], n_err=f.stderr["n"])
    else:
        scalars["T2_echo_lower_bound"] = 10.0 * span
        lower_bound = True
    return _result(
        "echo", ("evolution_s", "phase_rad", "up_prob"), rows, [f], scalars, seed, cfg,
        metadata={"qubit": qubit, "shots": shots, "n_phases": n_phases, "lower_bound": lower_bound},
        tables={"amplitudes": [{"evolution_s": float(t), "amplitude": float(a)} for t, a in zip(delays, amps)]},
    )


def run_rabi(
    cfg: DeviceConfig,
    qubit: int = 0,
    burst_times: Sequence[float] | None = None,
    shots: int = 1000,
    seed: int = 0,
    envelope: str = "rabi",
) -> ExperimentResult:
    """Resonant drive for a swept burst time; fit of the damped Rabi model.

    The burst is stepped through the (increasing) burst times on one set of
    noise realizations, which is equivalent to separate bursts from the
    ground state because the drive is constant.
    """
    _check_qubit(qubit)
    if burst_times is None:
        burst_times = np.arange(0.0, 10e-6 + 1e-12, 10e-9)
    t = np.asarray(burst_times, dtype=float)
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("burst_times must be non-negative and increasing")
    det = _realizations(cfg.noise, stream(seed, f"rabi/q{qubit}/noise"), shots)
    ex = executor_from_config(cfg, 1, det, qubit_ids=(qubit,))
    rows, ys = [], []
    prev = 0.0
    for i, tb in enumerate(t):
        step = tb - prev
        if step > 0:
            ex.pulse(0, 0.0, TWO_PI * cfg.f_rabi * step)
        prev = tb
        n_up = _count_up(ex.up_probability(), shots, stream(seed, f"rabi/q{qubit}/burst/{i}"))
        ys.append(n_up / shots)
        rows.append((float(tb), n_up / shots))
    t2s = cfg.noise.t2_star[qubit] if cfg.noise.on("quasistatic") else math.inf
    f = analysis.fit(envelope, t, ys, t2_star=t2s)
    scalars = {
        "f_R": f.params["f_R"],
        "f_R_err": f.stderr["f_R"],
        "T2_rabi": f.params["T"],
        "T2_rabi_err": f.stderr["T"],
    }
    return _result(
        "rabi", ("burst_s", "up_prob"), rows, [f], scalars, seed, cfg,
        metadata={"qubit": qubit, "shots": shots, "envelope": envelope, "t2_star_fixed": t2s},
    )


# ---------------------------------------------------------------------------
# Shuttling
# ---------------------------------------------------------------------------


def _shuttle_cycles(ex: Executor, n: int) -> None:
    for _ in range(n):
        ex.shuttle("to_coupled")
        ex.shuttle("to_sparse")


def run_shuttle_repeat(
    cfg: DeviceConfig,
    mode: str = "polarization",
    n_values: Sequence[int] | None = None,
    shots: int = 1000,
    seed: int = 0,
    n_phases: int = 8,
) -> ExperimentResult:
    """Repeated back-and-forth shuttling of Q_M.

    ``polarization``: prepare spin-down or spin-up, shuttle ``n`` cycles,
    measure; a joint fit of both curves gives F_u and F_d. ``coherence``:
    X/2, ``n/2`` cycles, X, ``n/2`` cycles, pi/2 about a swept axis; the
    oscillation amplitude decays as F_p^n.

    The dwell time is fixed independent of ``n`` (120 us for polarization,
    1.2 us for coherence, split around the refocusing pulse).
    """
    if mode not in ("polarization", "coherence"):
        raise ValueError("mode must be 'polarization' or 'coherence'")
    if n_values is None:
        n_values = range(0, 1001, 100) if mode == "polarization" else range(0, 401, 40)
    n_values = [int(n) for n in n_values]
    if any(n < 0 for n in n_values) or sorted(set(n_values)) != n_values:
        raise ValueError("n_values must be distinct, increasing and non-negative")
    moving = (1,)
    rows: list[tuple] = []
    meta = {"mode": mode, "shots": shots, "n_values": n_values, "moving_qubit": "Q_M"}

    if mode == "polarization":
        dwell = POLARIZATION_DWELL
        curves = {}
        for init in ("down", "up"):
            # Cycles accumulate on one set of realizations; the dwell is
            # applied to a copy so it does not compound with n.
            det = _realizations(cfg.noise, stream(seed, f"shuttle/pol/{init}/noise"), shots)
            ex = executor_from_config(cfg, 1, det, qubit_ids=moving)
            if init == "up":
                ex.pulse(0, "X")
            ys, done = [], 0
            for i, n in enumerate(n_values):
                _shuttle_cycles(ex, n - done)
                done = n
                e = ex.copy()
                e.idle(dwell)
                n_up = _count_up(e.up_probability(), shots, stream(seed, f"shuttle/pol/{init}/{i}/shots"))
                ys.append(n_up / shots)
                rows.append((n, init, n_up / shots))
            curves[init] = ys
        f = analysis.fit_shuttle_populations(n_values, curves["down"], curves["up"])
        scalars = {
            "F_u": f.params["F_u"],
            "F_u_err": f.stderr["F_u"],
            "F_d": f.params["F_d"],
            "F_d_err": f.stderr["F_d"],
        }
        meta["dwell_time_s"] = {str(n): dwell for n in n_values}
        return _result("shuttle-repeat", ("n", "init", "up_prob"), rows, [f], scalars, seed, cfg, metadata=meta)

    dwell = COHERENCE_DWELL
    phases = _phase_grid(n_phases)
    amps = []
    for i, n in enumerate(n_values):
        det = _realizations(cfg.noise, stream(seed, f"shuttle/coh/{i}/noise"), shots)
        ex = executor_from_config(cfg, 1, det, qubit_ids=moving)
        ex.pulse(0, "X/2")
        _shuttle_cycles(ex, n // 2)
        ex.idle(0.5 * dwell)
        ex.pulse(0, "X")
        _shuttle_cycles(ex, n - n // 2)
        ex.idle(0.5 * dwell)
        ys = []
        for j, ph in enumerate(phases):
            e = ex.copy()
            e.pulse(0, float(ph), math.pi / 2)
            n_up = _count_up(e.up_probability(), shots, stream(seed, f"shuttle/coh/{i}/phase/{j}"))
            ys.append(n_up / shots)
            rows.append((n, float(ph), n_up / shots))
        amps.append(_amplitude(phases, ys))
    f = analysis.fit("rb_exp", n_values, amps)
    F_p = f.params["p"]
    scalars = {
        "F_p": F_p,
        "F_p_err": f.stderr["p"],
        "n_one_over_e": -1.0 / math.log(F_p) if 0 < F_p < 1 else math.inf,
    }
    meta["dwell_time_s"] = {str(n): dwell for n in n_values}
    return _result(
        "shuttle-repeat", ("n", "phase_rad", "up_prob"), rows, [f], scalars, seed, cfg, metadata=meta,
        tables={"amplitudes": [{"n": n, "amplitude": float(a)} for n, a in zip(n_values, amps)]},
    )


# ---------------------------------------------------------------------------
# Detuning sweep (coherent-error RB)
# ---------------------------------------------------------------------------


def detuned_cliffords(f_R: float, delta_f: float, steps: int = DETUNING_SWEEP_STEPS) -> np.ndarray:
    """The 24 single-qubit Clifford unitaries built from detuned pi/2 pulses."""
    half = {}
    for name, (azimuth, angle) in PRIMITIVES.items():
        if angle == 0.0:
            continue
        u = evolve_pulse(PulseSpec(f_R, delta_f, -azimuth, 1.0 / (4.0 * f_R), steps))
        half[name] = u if angle < math.pi else u @ u
    out = np.empty((N1, 2, 2), dtype=complex)
    for i, prims in enumerate(SINGLE_QUBIT_DECOMPOSITIONS):
        u = np.eye(2, dtype=complex)
        for name in prims:
            if name != "I":
                u = half[name] @ u
        out[i] = u
    return out


def run_detuning_sweep(
    cfg: DeviceConfig | None = None,
    f_R_values: Sequence[float] = DETUNING_SWEEP_RABI,
    delta_f_grid: Sequence[float] = DETUNING_SWEEP_GRID,
    seed: int = 0,
    n_sequences: int = DETUNING_SWEEP_SEQUENCES,
    L_values: Sequence[int] = DETUNING_SWEEP_LENGTHS,
    steps: int = DETUNING_SWEEP_STEPS,
) -> ExperimentResult:
    """Single-qubit RB with a static drive detuning and no other noise.

    Exact probabilities (no shot noise). The same random sequences are used
    for every (f_R, delta_f) point.
    """
    cfg = cfg or DeviceConfig()
    L_values = [int(L) for L in L_values]
    rng = stream(seed, "detuning/sequences")
    ideal = group_unitaries(1)
    seqs = []  # per L: (ids (n_seq, L), recovery up (n_seq,), recovery down (n_seq,))
    for L in L_values:
        ids = rng.integers(0, N1, (n_sequences, L))
        u = np.broadcast_to(np.eye(2, dtype=complex), (n_sequences, 2, 2)).copy()
        for j in range(L):
            u = ideal[ids[:, j]] @ u
        rec = np.array([[recovery_gate(u[s], tgt, 1) for tgt in ("up", "down")] for s in range(n_sequences)])
        seqs.append((ids, rec[:, 0], rec[:, 1]))

    rows = []
    fits = []
    scalars: dict[str, float] = {}
    curves: dict[str, list] = {}
    for f_R in f_R_values:
        key = f"{f_R:g}"
        curves[key] = []
        for df in delta_f_grid:
            C = detuned_cliffords(float(f_R), float(df), steps)
            means = []
            for L, (ids, r_up, r_down) in zip(L_values, seqs):
                u = np.broadcast_to(np.eye(2, dtype=complex), (n_sequences, 2, 2)).copy()
                for j in range(L):
                    u = C[ids[:, j]] @ u
                p_up = np.abs((C[r_up] @ u)[:, 1, 0]) ** 2
                p_anti = np.abs((C[r_down] @ u)[:, 1, 0]) ** 2
                F = analysis.sequence_fidelity(p_up, p_anti)
                means.append(float(F.mean()))
                rows.append((float(f_R), float(df), L, float(F.mean())))
            f = analysis.fit("rb_exp", L_values, means)
            f.fixed.update(f_R=float(f_R), delta_f=float(df))
            fits.append(f)
            F_p = analysis.primitive_fidelity(analysis.clifford_fidelity(f.params["p"], 1))
            curves[key].append({"delta_f": float(df), "p": f.params["p"], "F_p": F_p})
            scalars[f"F_p[f_R={f_R:g},delta_f={df:g}]"] = F_p
    meta = {"L_values": L_values, "n_sequences": n_sequences, "steps": steps, "shots": None}
    return _result(
        "detuning-sweep", ("f_R_hz", "delta_f_hz", "L", "sequence_fidelity"), rows, fits, scalars, seed, cfg,
        metadata=meta, tables={"curves": curves},
    )


# ---------------------------------------------------------------------------
# Randomized benchmarking
# ---------------------------------------------------------------------------


def _run_clifford_1q_simultaneous(ex: Executor, idx: int, oracle_p: float | None) -> None:
    if oracle_p is not None:
        u = group_unitaries(1)[idx]
        ex.logical_unitary(np.kron(u, u))
        ex.depolarize(oracle_p, 0)
        ex.depolarize(oracle_p, 1)
        return
    for name in SINGLE_QUBIT_DECOMPOSITIONS[idx]:
        if name != "I":
            ex.pulse((0, 1), name)


def _run_clifford_2q(ex: Executor, idx: int, oracle_p: float | None) -> None:
    if oracle_p is not None:
        ex.logical_unitary(group_unitaries(2)[idx])
        ex.depolarize(oracle_p)
        return
    toks, _ = two_qubit_tokens(idx)
    for tok in toks:
        if tok == ("CZ",):
            ex.cz()
        else:
            ex.pulse(tok[0], tok[1])


def run_rb(
    cfg: DeviceConfig,
    arity: str = "2q",
    interleave: str | None = None,
    L_values: Sequence[int] | None = None,
    n_sequences: int | None = None,
    shots: int | None = None,
    seed: int = 0,
    *,
    interleave_cz: bool = False,
    oracle_p: float | None = None,
    ideal_interleaved: bool = False,
    n_resamples: int = 500,
) -> ExperimentResult:
    """Clifford randomized benchmarking.

    Args:
        arity: ``"1q_simultaneous"`` (same sequence on both qubits, each
            measured) or ``"2q"`` (joint spin-up probability).
        interleave: ``None``, ``"CZ"`` or ``"I"`` (2q only). A reference
            series is always run; the interleaved series uses fresh sequences.
        interleave_cz: shorthand for ``interleave="CZ"``.
        oracle_p: zero-duration mode; every random Clifford is applied as an
            ideal unitary followed by a depolarizing channel with this
            parameter, and all other noise is off.
        ideal_interleaved: apply the interleaved gate as an ideal unitary.
    """
    if interleave_cz:
        if interleave not in (None, "CZ"):
            raise ValueError("interleave_cz conflicts with interleave")
        interleave = "CZ"
    if arity not in ("1q_simultaneous", "2q"):
        raise ValueError("arity must be '1q_simultaneous' or '2q'")
    if interleave not in (None, "CZ", "I"):
        raise ValueError("interleave must be None, 'CZ' or 'I'")
    if arity == "1q_simultaneous" and interleave is not None:
        raise ValueError("interleaving is only defined for 2q RB")
    two = arity == "2q"
    d = cfg.defaults
    L_values = list(L_values or (RB_LENGTHS_2Q if two else RB_LENGTHS_1Q))
    n_sequences = n_sequences or (d.sequences_2q if two else d.sequences_1q)
    shots = shots or (d.shots_2q if two else d.shots_1q)
    noise = cfg.noise.silent() if oracle_p is not None else cfg.noise
    nq = 2 if two else 1
    series_list = ["ref"] + (["int"] if interleave else [])
    run_clifford = _run_clifford_2q if two else _run_clifford_1q_simultaneous

    rows = []
    for series in series_list:
        gate = interleave if series == "int" else None
        pairs = generate_rb_sequences(
            L_values, n_sequences, stream(seed, f"rb/{arity}/{series}/sequences"), n_qubits=nq, interleave=gate
        )
        for k, (seq_up, seq_down) in enumerate(pairs):
            L = seq_up.length
            s = k % n_sequences
            label = f"rb/{arity}/{series}/L/{L}/seq/{s}"
            det = _realizations(noise, stream(seed, label + "/noise"), shots)
            ex = executor_from_config(cfg, 2, det, noise=noise, timed_pulses=oracle_p is None)
            for e in seq_up.elements:
                run_clifford(ex, e, oracle_p)
                if gate is not None:
                    _run_interleaved(ex, gate, oracle_p is not None or ideal_interleaved)
            for seq in (seq_up, seq_down):
                e = ex.copy()
                run_clifford(e, seq.recovery, oracle_p)
                probs = e.probabilities()
                counts = _joint_counts(probs, shots, stream(seed, f"{label}/{seq.target}/shots"))
                if two:
                    rows.append((L, s, seq.target, int(counts[3]), shots, series))
                else:
                    # Qubit L is the slow index: outcomes (dd, du, ud, uu).
                    rows.append((L, s, seq.target, int(counts[2] + counts[3]), shots, "L"))
                    rows.append((L, s, seq.target, int(counts[1] + counts[3]), shots, "M"))
    rows.sort(key=lambda r: (r[5], r[0], r[1], r[2] != "up"))
    columns = analysis.RB_COLUMNS
    curves = analysis.rb_curves_from_rows(dict(zip(columns, r)) for r in rows)
    fits, scalars = analysis.summarize_rb(
        curves, "2q" if two else "1q", stream(seed, f"rb/{arity}/bootstrap"), n_resamples
    )
    meta = {
        "arity": arity,
        "interleave": interleave,
        "L_values": L_values,
        "n_sequences": n_sequences,
        "shots": shots,
        "oracle_p": oracle_p,
        "ideal_interleaved": ideal_interleaved,
        "n_resamples": n_resamples,
    }
    tables = {
        name: {"L": c.lengths.tolist(), "mean_fidelity": c.mean().tolist()} for name, c in sorted(curves.items())
    }
    return _result("rb2q" if two else "rb1q", columns, rows, fits, scalars, seed, cfg, metadata=meta, tables=tables)


_CZ_UNITARY = INTERLEAVE_GATES["CZ"]


def _run_interleaved(ex: Executor, gate: str, ideal: bool) -> None:
    if gate == "I":
        return
    if ideal:
        ex.logical_unitary(_CZ_UNITARY)
    else:
        ex.cz()


def summarize_rb_rows(rows, seed: int, arity: str, n_resamples: int = 500) -> tuple[list[DecayFit], dict]:
    """Recompute RB fits and scalars from raw rows (e.g. a re-read CSV)."""
    curves = analysis.rb_curves_from_rows(rows)
    mode = "2q" if arity == "2q" else "1q"
    return analysis.summarize_rb(curves, mode, stream(seed, f"rb/{arity}/bootstrap"), n_resamples)


# ---------------------------------------------------------------------------
# Exchange characterization
# ---------------------------------------------------------------------------


def _probe_phase(ex: Executor, probe: int, control_up: bool, az, pi_axis, shots, rng_label, seed, **kw):
    probs = dcz_probe(ex, probe, control_up, az, pi_axis, **kw)
    counts = [_count_up(p, shots, stream(seed, f"{rng_label}/az/{j}")) for j, p in enumerate(probs)]
    ys = np.array(counts) / shots
    return extract_phase(az, ys), counts


def run_residual_j_probe(
    cfg: DeviceConfig,
    t_evol_grid: Sequence[float] | None = None,
    shots: int = 1000,
    seed: int = 0,
    n_phases: int = 16,
    J_off: float | None = None,
) -> ExperimentResult:
    """Controlled phase on Q_L vs decoupled evolution time in the sparse state.

    Each point runs X/2 on Q_L, half evolution, pi on both, half evolution,
    and a pi/2 about a swept axis, with Q_M down or up. The slope of the
    controlled phase ``2 pi J t`` gives the residual J.
    """
    if J_off is not None:
        cfg = dataclasses.replace(cfg, J_off=float(J_off))
    grid = np.linspace(0.0, 100e-6, 11) if t_evol_grid is None else np.asarray(t_evol_grid, dtype=float)
    az = _phase_grid(n_phases)
    rows, controlled, errs = [], [], []
    for i, t in enumerate(grid):
        phis = []
        for control_up in (False, True):
            tag = "up" if control_up else "down"
            label = f"residual/t/{i}/{tag}"
            det = _realizations(cfg.noise, stream(seed, label + "/noise"), shots)
            ex = executor_from_config(cfg, 2, det)
            fit_, counts = _probe_phase(ex, 0, control_up, az, "X", shots, label, seed, t_evol=float(t))
            phis.append(fit_)
            rows += [(float(t), tag, float(a), c, shots) for a, c in zip(az, counts)]
        controlled.append(wrap_phase(phis[1].params["phi0"] - phis[0].params["phi0"]))
        errs.append(math.hypot(phis[0].stderr["phi0"], phis[1].stderr["phi0"]))
    f = analysis.fit("linear", grid, controlled)
    J = f.params["slope"] / TWO_PI
    J_err = f.stderr["slope"] / TWO_PI
    scalars = {"J_off": J, "J_off_err": J_err, "J_on": cfg.J_on, "on_off_ratio": cfg.J_on / J if J > 0 else math.inf}
    return _result(
        "residual-j", ("t_evol_s", "control", "phase_rad", "up_count", "shots"), rows, [f], scalars, seed, cfg,
        metadata={"shots": shots, "n_phases": n_phases, "probe": "Q_L"},
        tables={
            "controlled_phase": [
                {"t_evol_s": float(t), "phase": float(c), "err": float(e)} for t, c, e in zip(grid, controlled, errs)
            ]
        },
    )


def run_dcz_calibration(
    cfg: DeviceConfig,
    shots: int = 1000,
    seed: int = 0,
    probe_resolution: float = math.pi / 16,
    pi_axis: str = "X",
    J: float | None = None,
) -> ExperimentResult:
    """Probe circuits for the controlled and unconditional DCZ phases.

    For each probe qubit the DCZ (including both shuttles) runs with the
    other qubit down and up; the fitted phase offsets give the controlled
    phase (difference) and the unconditional phase (midpoint).
    """
    if J is not None:
        cfg = dataclasses.replace(cfg, J_on=float(J))
    n = max(8, int(math.ceil(TWO_PI / probe_resolution)))
    az = _phase_grid(n)
    base = 0.0 if pi_axis == "Y" else math.pi
    rows, fits, scalars = [], [], {}
    for probe, name in ((0, "L"), (1, "M")):
        res = []
        for control_up in (False, True):
            tag = "up" if control_up else "down"
            label = f"dcz/probe_{name}/{tag}"
            det = _realizations(cfg.noise, stream(seed, label + "/noise"), shots)
            ex = executor_from_config(cfg, 2, det)
            f, counts = _probe_phase(ex, probe, control_up, az, pi_axis, shots, label, seed, with_shuttle=True)
            f.fixed.update(probe=name, control=tag)
            fits.append(f)
            res.append(f)
            rows += [(name, tag, float(a), c, shots) for a, c in zip(az, counts)]
        e_down, e_up = res[0].stderr["phi0"], res[1].stderr["phi0"]
        controlled, uncond = split_probe_phases(res[0].params["phi0"] - base, res[1].params["phi0"] - base)
        scalars[f"controlled_{name}"] = controlled
        scalars[f"controlled_{name}_err"] = math.hypot(e_down, e_up)
        scalars[f"phi_uncond_{name}"] = uncond
        scalars[f"phi_uncond_{name}_err"] = 0.5 * math.hypot(e_down, e_up)
    ref = calibrate_unconditional_phases(
        ExchangeSpec(cfg.J_on, cfg.t_evol_cz, cfg.phi_uncond_L, cfg.phi_uncond_M), probe_resolution, pi_axis
    )
    w_L = 1.0 / scalars["controlled_L_err"] ** 2
    w_M = 1.0 / scalars["controlled_M_err"] ** 2
    scalars["controlled_phase"] = (w_L * scalars["controlled_L"] + w_M * scalars["controlled_M"]) / (w_L + w_M)
    scalars["controlled_phase_err"] = 1.0 / math.sqrt(w_L + w_M)
    scalars["controlled_phase_over_pi"] = scalars["controlled_phase"] / math.pi
    scalars["noiseless_phi_uncond_L"] = ref["phi_L"]
    scalars["noiseless_phi_uncond_M"] = ref["phi_M"]
    return _result(
        "dcz-cal", ("probe", "control", "phase_rad", "up_count", "shots"), rows, fits, scalars, seed, cfg,
        metadata={"shots": shots, "n_phases": n, "pi_axis": pi_axis, "J_on": cfg.J_on, "t_evol": cfg.t_evol_cz},
    )


__all__ = [
    "ExperimentResult",
    "FitError",
    "run_ramsey",
    "run_echo",
    "run_rabi",
    "run_shuttle_repeat",
    "run_detuning_sweep",
    "run_rb",
    "run_residual_j_probe",
    "run_dcz_calibration",
    "summarize_rb_rows",
    "detuned_cliffords",
]
