"""Decay-model fitting, RB fidelity formulas and bootstrap error bars."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .noise import two_level_survival

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
CLIFFORD_PRIMITIVES_1Q = 1.875
MAX_ITERATIONS = 200
TOLERANCE = 1e-10  # relative step
FTOL = 1e-14
GTOL = 1e-12
# Relative finite-difference step; the default step is absolute below 1, which
# is useless for parameters in seconds.
DIFF_STEP = 1e-6
MIN_PHASE_AMPLITUDE = 0.05


class FitError(ValueError):
    pass


class UnreliablePhaseError(FitError):
    pass


@dataclass
class DecayFit:
    """Result of a least-squares fit.

    ``converged`` is False when the optimizer stopped on its evaluation
    budget or the relative gradient at the solution is not small; the
    parameters are then the best values found.
    """

    model: str
    params: dict[str, float]
    stderr: dict[str, float]
    residual: float
    converged: bool
    fixed: dict[str, float] = field(default_factory=dict)

    def predict(self, xs) -> np.ndarray:
        m = MODELS[self.model]
        return m.func(np.asarray(xs, dtype=float), *[self.params[k] for k in m.params], **self.fixed)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "converged": self.converged,
            "residual": self.residual,
        }


# ---------------------------------------------------------------------------
# Model registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """A fit model: ``func(x, *params, **fixed)`` plus optional analytic Jacobian."""

    name: str
    params: tuple[str, ...]
    func: Callable[..., np.ndarray]
    init: Callable[..., list[float]]
    bounds: tuple[tuple[float, ...], tuple[float, ...]]
    jac: Callable[..., np.ndarray] | None = None


def _rb_exp(x, A, p):
    return A * np.power(p, x)


def _rb_exp_jac(x, A, p):
    return np.column_stack([np.power(p, x), A * x * np.power(p, x - 1.0)])


def _exp(x, A, T):
    return A * np.exp(-x / T)


def _exp_jac(x, A, T):
    e = np.exp(-x / T)
    return np.column_stack([e, A * e * x / T**2])


def _gaussian(x, A, T):
    return A * np.exp(-((x / T) ** 2))


def _gaussian_jac(x, A, T):
    e = np.exp(-((x / T) ** 2))
    return np.column_stack([e, 2.0 * A * e * x**2 / T**3])


def _stretched(x, A, T, n):
    return A * np.exp(-np.power(x / T, n))


def _stretched_jac(x, A, T, n):
    r = x / T
    u = np.power(r, n)
    e = np.exp(-u)
    with np.errstate(divide="ignore", invalid="ignore"):
        ulog = np.where(r > 0, u * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return np.column_stack([e, A * e * u * n / T, -A * e * ulog])


def _q_literal(t, f_R, t2_star):
    return t**2 / (f_R * t2_star**2) ** 2


def _q_quasistatic(t, f_R, t2_star):
    return (t / (math.pi * f_R * t2_star**2)) ** 2


def rabi_envelope_literal(t, f_R, t2_star):
    """W(t, f_R) with the grouping ``(1 + t^2 / (f_R T2*^2)^2)^(-1/4)``."""
    return (1.0 + _q_literal(t, f_R, t2_star)) ** -0.25


def rabi_envelope_quasistatic(t, f_R, t2_star):
    """W(t, f_R) for Gaussian quasi-static detuning, ``(1 + (t / (pi f_R T2*^2))^2)^(-1/4)``."""
    return (1.0 + _q_quasistatic(t, f_R, t2_star)) ** -0.25


def _make_rabi(q):
    # Both envelopes are (1 + q)^(-1/4) with q proportional to 1/f_R^2.
    def parts(x, f_R, t2_star):
        if not math.isfinite(t2_star):
            return 1.0, 0.0
        qq = q(x, f_R, t2_star)
        w = (1.0 + qq) ** -0.25
        return w, w * qq / (2.0 * f_R * (1.0 + qq))

    def func(x, A, f_R, T, phi, c, t2_star=math.inf):
        w, _ = parts(x, f_R, t2_star)
        return c - A * np.exp(-x / T) * w * np.cos(TWO_PI * f_R * x + phi)

    def jac(x, A, f_R, T, phi, c, t2_star=math.inf):
        w, dw = parts(x, f_R, t2_star)
        e = np.exp(-x / T)
        th = TWO_PI * f_R * x + phi
        cos, sin = np.cos(th), np.sin(th)
        g = e * w * cos
        d_f = -A * e * (dw * cos - w * sin * TWO_PI * x)
        ones = np.ones_like(x)
        return np.column_stack([-g, d_f * ones, -A * (x / T**2) * g, A * e * w * sin * ones, ones])

    return func, jac


_rabi_literal, _rabi_literal_jac = _make_rabi(_q_literal)
_rabi_qs, _rabi_qs_jac = _make_rabi(_q_quasistatic)


def _cosine_phase(x, A, phi0, c):
    return A * np.cos(x - phi0) + c


def _cosine_phase_jac(x, A, phi0, c):
    return np.column_stack([np.cos(x - phi0), A * np.sin(x - phi0), np.ones_like(x)])


def _linear(x, slope, intercept):
    return slope * x + intercept


def _linear_jac(x, slope, intercept):
    return np.column_stack([x, np.ones_like(x)])


def _loglinear(x, y, transform=lambda x: x):
    """Fit log(y) = a + b * transform(x) over positive points."""
    mask = y > 1e-12
    if mask.sum() < 2:
        return math.log(max(float(np.max(np.abs(y))), 1e-12)), -1.0 / max(float(np.ptp(x)), 1e-300)
    b, a = np.polyfit(transform(x[mask]), np.log(y[mask]), 1)
    return a, b


def _init_rb(x, y, **_):
    a, b = _loglinear(x, y)
    return [math.exp(a), min(max(math.exp(b), 1e-6), 1.0)]


def _init_exp(x, y, **_):
    a, b = _loglinear(x, y)
    T = -1.0 / b if b < 0 else 10.0 * float(np.ptp(x) or 1.0)
    return [math.exp(a), T]


def _init_gauss(x, y, **_):
    a, b = _loglinear(x, y, lambda v: v**2)
    T = math.sqrt(-1.0 / b) if b < 0 else 10.0 * float(np.ptp(x) or 1.0)
    return [math.exp(a), T]


def _init_stretched(x, y, **_):
    A, T = _init_exp(x, y)
    return [A, T, 1.0]


def _fft_frequency(x, y) -> float:
    n = max(len(x), 64)
    grid = np.linspace(x[0], x[-1], n)
    yy = np.interp(grid, x, y) - np.mean(y)
    spec = np.abs(np.fft.rfft(yy, 8 * n))
    freqs = np.fft.rfftfreq(8 * n, grid[1] - grid[0])
    spec[0] = 0.0
    return float(freqs[int(np.argmax(spec))])


def _init_rabi(x, y, **_):
    c = float(np.mean(y))
    A = 0.5 * float(np.ptp(y))
    f = _fft_frequency(x, y)
    T = 10.0 * float(np.ptp(x) or 1.0)
    best = None
    for phi in np.linspace(-math.pi, math.pi, 8, endpoint=False):
        r = np.sum((_rabi_literal(x, A, f, T, phi, c) - y) ** 2)
        if best is None or r < best[0]:
            best = (r, phi)
    return [A, f, T, best[1], c]


def _init_cos(x, y, **_):
    A, phi0, c = _linear_cosine(x, y)
    return [A, phi0, c]


def _init_linear(x, y, **_):
    return list(np.polyfit(x, y, 1))


INF = math.inf
MODELS: dict[str, Model] = {
    "rb_exp": Model("rb_exp", ("A", "p"), _rb_exp, _init_rb, ((-INF, 1e-12), (INF, 1.0)), _rb_exp_jac),
    "exp": Model("exp", ("A", "T"), _exp, _init_exp, ((-INF, 1e-300), (INF, INF)), _exp_jac),
    "gaussian": Model("gaussian", ("A", "T"), _gaussian, _init_gauss, ((-INF, 1e-300), (INF, INF)), _gaussian_jac),
    "stretched_exp": Model(
        "stretched_exp",
        ("A", "T", "n"),
        _stretched,
        _init_stretched,
        ((-INF, 1e-300, 0.5), (INF, INF, 3.0)),
        _stretched_jac,
    ),
    "rabi": Model(
        "rabi",
        ("A", "f_R", "T", "phi", "c"),
        _rabi_literal,
        _init_rabi,
        ((-INF, 0.0, 1e-300, -INF, -INF), (INF, INF, INF, INF, INF)),
        _rabi_literal_jac,
    ),
    "rabi_quasistatic": Model(
        "rabi_quasistatic",
        ("A", "f_R", "T", "phi", "c"),
        _rabi_qs,
        _init_rabi,
        ((-INF, 0.0, 1e-300, -INF, -INF), (INF, INF, INF, INF, INF)),
        _rabi_qs_jac,
    ),
    "cosine_phase": Model(
        "cosine_phase", ("A", "phi0", "c"), _cosine_phase, _init_cos, ((-INF,) * 3, (INF,) * 3), _cosine_phase_jac
    ),
    "linear": Model("linear", ("slope", "intercept"), _linear, _init_linear, ((-INF,) * 2, (INF,) * 2), _linear_jac),
}


def register_model(model: Model) -> None:
    """Add or replace a fit model, e.g. an alternative Rabi envelope."""
    MODELS[model.name] = model


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _clip_into(x0, lo, hi):
    return np.clip(np.asarray(x0, dtype=float), lo, hi)


def relative_gradient(J, r, theta, lo, hi) -> float:
    """Largest cosine between the residual and a free Jacobian column.

    Columns of parameters sitting on an active bound are excluded.
    """
    rnorm = np.linalg.norm(r)
    if rnorm < 1e-12:
        return 0.0
    g = J.T @ r
    cn = np.linalg.norm(J, axis=0)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    tol = 1e-9 * np.maximum(np.abs(theta), 1e-300)
    at_lo = (theta - lo <= tol) & (g > 0)
    at_hi = (hi - theta <= tol) & (g < 0)
    free = ~(at_lo | at_hi) & (cn > 0)
    if not free.any():
        return 0.0
    return float(np.max(np.abs(g[free]) / (cn[free] * rnorm)))


def _central_jacobian(resid, theta) -> np.ndarray:
    h = DIFF_STEP * np.where(theta != 0.0, np.abs(theta), 1.0)
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h[i]
        cols.append((resid(theta + e) - resid(theta - e)) / (2.0 * h[i]))
    return np.column_stack(cols)


def _gauss_newton_polish(resid, jac, theta, r, J, lo, hi, steps: int = 3):
    """Undamped Gauss-Newton steps near the optimum.

    Near the solution the achievable relative cost decrease falls to machine
    precision, so trust-region acceptance stalls before the gradient is
    small. A plain Gauss-Newton step is accepted when the cost does not grow
    beyond rounding.
    """
    for _ in range(steps):
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        cand = np.clip(theta + step, lo, hi)
        r_new = resid(cand)
        if not np.all(np.isfinite(r_new)) or r_new @ r_new > (r @ r) * (1.0 + 1e-12):
            break
        theta, r = cand, r_new
        J = jac(theta)
    return theta, r, J


def fit(
    model: str,
    xs,
    ys,
    weights=None,
    *,
    p0: Sequence[float] | None = None,
    **fixed: float,
) -> DecayFit:
    """Bounded least-squares fit of ``model`` to ``(xs, ys)``.

    Args:
        model: a name in ``MODELS``.
        weights: optional per-point residual multipliers (e.g. ``1/sigma``).
        p0: optional starting point overriding the model heuristic.
        **fixed: fixed model constants (``t2_star`` for the Rabi models).
    """
    if model not in MODELS:
        raise FitError(f"unknown model {model!r}; known: {sorted(MODELS)}")
    m = MODELS[model]
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("xs and ys must be 1-D arrays of equal length")
    if len(x) < len(m.params) + 1:
        raise FitError(f"{model} needs at least {len(m.params) + 1} points, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise FitError("xs must be strictly increasing")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError("xs and ys must be finite")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)

    def resid(theta):
        return w * (m.func(x, *theta, **fixed) - y)

    if m.jac is not None:

        def jac(theta):
            return w[:, None] * m.jac(x, *theta, **fixed)

    else:

        def jac(theta):
            return _central_jacobian(resid, theta)

    lo, hi = m.bounds
    start = p0 if p0 is not None else m.init(x, y, **fixed)
    theta0 = _clip_into(start, lo, hi)
    budget = MAX_ITERATIONS * (len(theta0) + 1)
    y_scale = float(np.linalg.norm(w * y))

    def solve(start):
        return optimize.least_squares(
            resid,
            start,
            bounds=(lo, hi),
            method="trf",
            jac=jac if m.jac is not None else "3-point",
            diff_step=DIFF_STEP,
            x_scale="jac",
            xtol=TOLERANCE,
            ftol=FTOL,
            gtol=GTOL,
            max_nfev=budget,
        )

    def stationary(theta, r, J) -> bool:
        # Near-exact data leaves only rounding in the residual, so its direction is meaningless.
        if float(np.linalg.norm(r)) <= 1e-7 * y_scale:
            return True
        return relative_gradient(J, r, theta, lo, hi) < 1e-8

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            res = solve(theta0)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("%s fit failed: %s", model, exc)
            params = dict(zip(m.params, map(float, theta0)))
            return DecayFit(model, params, {k: math.nan for k in m.params}, math.nan, False, dict(fixed))
        theta, r, J = res.x, res.fun, res.jac
        if res.status > 0 and not stationary(theta, r, J):
            theta, r, J = _gauss_newton_polish(resid, jac, theta, r, J, lo, hi)

    dof = len(y) - len(theta)
    s2 = float(r @ r) / dof if dof > 0 else math.nan
    try:
        # Column scaling keeps pinv from truncating parameters with tiny units.
        scale = np.linalg.norm(J, axis=0)
        scale[scale == 0] = 1.0
        Js = J / scale
        cov = np.linalg.pinv(Js.T @ Js) * s2 / np.outer(scale, scale)
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        err = np.full(len(theta), math.nan)
    rnorm = float(np.linalg.norm(r))
    converged = bool(res.status > 0 and np.all(np.isfinite(theta)) and stationary(theta, r, J))
    params = {k: float(v) for k, v in zip(m.params, theta)}
    if model == "cosine_phase":
        if params["A"] < 0:
            params["A"] = -params["A"]
            params["phi0"] += math.pi
        params["phi0"] = _wrap(params["phi0"])
    stderr = {k: float(v) for k, v in zip(m.params, err)}
    return DecayFit(model, params, stderr, rnorm, converged, dict(fixed))


def _wrap(phi: float) -> float:
    """Map a phase to (-pi, pi]."""
    out = math.remainder(phi, TWO_PI)
    return math.pi if out == -math.pi else out


def _linear_cosine(phases, ys) -> tuple[float, float, float]:
    M = np.column_stack([np.cos(phases), np.sin(phases), np.ones_like(phases)])
    (a, b, c), *_ = np.linalg.lstsq(M, ys, rcond=None)
    return float(math.hypot(a, b)), _wrap(math.atan2(b, a)), float(c)


def extract_phase(phases, up_probs) -> DecayFit:
    """Fit ``A cos(phi - phi0) + c`` and return ``phi0`` in (-pi, pi].

    The sampled phases must cover the full circle: at least eight points
    whose span plus one mean step reaches 2 pi.

    Raises:
        UnreliablePhaseError: if the fitted amplitude is below 0.05.
    """
    x = np.asarray(phases, dtype=float)
    y = np.asarray(up_probs, dtype=float)
    if x.shape != y.shape or x.size < 8:
        raise FitError("extract_phase needs at least 8 matched phase points")
    order = np.argsort(x)
    x, y = x[order], y[order]
    span = x[-1] - x[0]
    if span + span / (x.size - 1) < TWO_PI - 1e-9:
        raise FitError("phase points must cover a full 2 pi period")
    A, phi0, c = _linear_cosine(x, y)
    if A < MIN_PHASE_AMPLITUDE:
        raise UnreliablePhaseError(f"oscillation amplitude {A:.3g} is below {MIN_PHASE_AMPLITUDE}")
    resid = _cosine_phase(x, A, phi0, c) - y
    dof = x.size - 3
    s2 = float(resid @ resid) / dof
    # Linear LS errors on (a, b); phase error is the tangential one.
    M = np.column_stack([np.cos(x), np.sin(x), np.ones_like(x)])
    cov = np.linalg.pinv(M.T @ M) * s2
    a, b = A * math.cos(phi0), A * math.sin(phi0)
    g_phi = np.array([-b, a, 0.0]) / A**2
    g_A = np.array([a, b, 0.0]) / A
    stderr = {
        "A": float(math.sqrt(max(g_A @ cov @ g_A, 0.0))),
        "phi0": float(math.sqrt(max(g_phi @ cov @ g_phi, 0.0))),
        "c": float(math.sqrt(max(cov[2, 2], 0.0))),
    }
    params = {"A": A, "phi0": phi0, "c": c}
    return DecayFit("cosine_phase", params, stderr, float(np.linalg.norm(resid)), True)


# ---------------------------------------------------------------------------
# RB fidelity algebra
# ---------------------------------------------------------------------------


def sequence_fidelity(p_target, p_anti) -> np.ndarray:
    """``P_target - P_anti`` clamped to [-1, 1]."""
    a = np.asarray(p_target, dtype=float)
    b = np.asarray(p_anti, dtype=float)
    if a.shape != b.shape:
        raise FitError(f"length mismatch: {a.shape} vs {b.shape}")
    return np.clip(a - b, -1.0, 1.0)


def clifford_fidelity(p: float, n_qubits: int) -> float:
    if n_qubits == 1:
        return (1.0 + p) / 2.0
    if n_qubits == 2:
        return (1.0 + 3.0 * p) / 4.0
    raise FitError("n_qubits must be 1 or 2")


def depolarizing_from_fidelity(F_C: float, n_qubits: int) -> float:
    if n_qubits == 1:
        return 2.0 * F_C - 1.0
    if n_qubits == 2:
        return (4.0 * F_C - 1.0) / 3.0
    raise FitError("n_qubits must be 1 or 2")


def primitive_fidelity(F_C: float, primitives_per_clifford: float = CLIFFORD_PRIMITIVES_1Q) -> float:
    return 1.0 - (1.0 - F_C) / primitives_per_clifford


def interleaved_fidelity(p_ref: float, p_interleaved: float) -> float:
    """Fidelity of the interleaved two-qubit gate, ``(1 + 3 p_int / p_ref) / 4``."""
    if not p_ref > 0:
        raise FitError("p_ref must be positive")
    ratio = p_interleaved / p_ref
    if ratio > 1.0:
        warnings.warn(
            f"p_interleaved / p_ref = {ratio:.6f} > 1; treating as statistical fluctuation",
            RuntimeWarning,
            stacklevel=2,
        )
    return (1.0 + 3.0 * ratio) / 4.0


# ---------------------------------------------------------------------------
# RB data and bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RbCurve:
    """Per-sequence sequence fidelities, shape ``(len(lengths), n_sequences)``."""

    lengths: np.ndarray
    fidelities: np.ndarray

    def __post_init__(self) -> None:
        L = np.asarray(self.lengths, dtype=float)
        F = np.atleast_2d(np.asarray(self.fidelities, dtype=float))
        if F.shape[0] != L.size:
            raise FitError("fidelities must have one row per length")
        object.__setattr__(self, "lengths", L)
        object.__setattr__(self, "fidelities", F)

    @property
    def n_sequences(self) -> int:
        return self.fidelities.shape[1]

    def mean(self, idx: np.ndarray | None = None) -> np.ndarray:
        F = self.fidelities if idx is None else self.fidelities[:, idx]
        return F.mean(axis=1)

    def fit(self, idx: np.ndarray | None = None) -> DecayFit:
        return fit("rb_exp", self.lengths, self.mean(idx))


def bootstrap_errors(
    curves: RbCurve | Sequence[RbCurve],
    n_resamples: int,
    rng: np.random.Generator,
    statistic: Callable[[list[DecayFit]], Mapping[str, float]] | None = None,
) -> dict[str, float]:
    """Bootstrap standard errors by resampling random sequences with replacement.

    Each curve's sequence indices are resampled jointly across lengths, the
    curves are refitted, and ``statistic`` maps the fits to named scalars
    (default: ``A`` and ``p`` of every curve, suffixed by curve index when
    several are given). The standard error is the width of a Gaussian fitted
    to each scalar's resampled distribution.
    """
    single = isinstance(curves, RbCurve)
    curves = [curves] if single else list(curves)
    if statistic is None:

        def statistic(fits):
            out = {}
            for i, f in enumerate(fits):
                sfx = "" if single else f"_{i}"
                out[f"A{sfx}"] = f.params["A"]
                out[f"p{sfx}"] = f.params["p"]
            return out

    samples: dict[str, list[float]] = {}
    skipped = 0
    for _ in range(n_resamples):
        idxs = [rng.integers(0, c.n_sequences, c.n_sequences) for c in curves]
        if any(c.n_sequences > 1 and np.unique(i).size == 1 for c, i in zip(curves, idxs)):
            skipped += 1
            continue
        fits = [c.fit(i) for c, i in zip(curves, idxs)]
        for k, v in statistic(fits).items():
            samples.setdefault(k, []).append(float(v))
    if skipped:
        log.info("bootstrap skipped %d degenerate resamples", skipped)
    out = {}
    for k, vals in samples.items():
        arr = np.asarray(vals)
        arr = arr[np.isfinite(arr)]
        out[k] = float(stats.norm.fit(arr)[1]) if arr.size > 1 else math.nan
    return out


# ---------------------------------------------------------------------------
# Shuttle population fit
# ---------------------------------------------------------------------------


def fit_shuttle_populations(n, p_up_from_down, p_up_from_up) -> DecayFit:
    """Joint fit of both population curves to the two-state flip chain.

    Measured P(up) = offset + visibility * p_true(n) with ``p_true`` from
    :func:`two_level_survival`. Returns params ``F_u, F_d, visibility, offset``.
    """
    n = np.asarray(n, dtype=float)
    yd = np.asarray(p_up_from_down, dtype=float)
    yu = np.asarray(p_up_from_up, dtype=float)
    if not (n.shape == yd.shape == yu.shape):
        raise FitError("population series must share one shape")
    if n.size < 3:
        raise FitError("need at least 3 cycle counts")

    def model(theta):
        F_u, F_d, vis, off = theta
        d, u = two_level_survival(n, F_u, F_d)
        return np.concatenate([off + vis * d, off + vis * u])

    y = np.concatenate([yd, yu])

    def resid(theta):
        return model(theta) - y

    # Initial guess from the early-n slopes.
    vis0 = max(float(yu[0] - yd[0]), 0.1)
    off0 = float(yd[0])
    span = max(float(n[-1] - n[0]), 1.0)
    a0 = min(max((yd[-1] - yd[0]) / vis0 / span, 1e-9), 0.5)
    b0 = min(max((yu[0] - yu[-1]) / vis0 / span, 1e-9), 0.5)
    theta0 = np.array([1.0 - b0, 1.0 - a0, vis0, off0])
    lo = np.array([0.5, 0.5, 0.0, -1.0])
    hi = np.array([1.0, 1.0, 2.0, 1.0])
    theta0 = np.clip(theta0, lo + 1e-12, hi - 1e-12)
    res = optimize.least_squares(
        resid, theta0, bounds=(lo, hi), method="trf", jac="3-point", diff_step=DIFF_STEP, x_scale="jac",
        xtol=TOLERANCE, ftol=FTOL, gtol=GTOL, max_nfev=MAX_ITERATIONS * 5,
    )
    J, r = res.jac, res.fun
    dof = y.size - 4
    s2 = float(r @ r) / dof if dof > 0 else math.nan
    err = np.sqrt(np.clip(np.diag(np.linalg.pinv(J.T @ J) * s2), 0.0, None))
    names = ("F_u", "F_d", "visibility", "offset")
    return DecayFit(
        "shuttle_populations",
        {k: float(v) for k, v in zip(names, res.x)},
        {k: float(v) for k, v in zip(names, err)},
        float(np.linalg.norm(r)),
        bool(res.status > 0),
    )


# ---------------------------------------------------------------------------
# RB summaries (shared by experiments and CSV re-ingest)
# ---------------------------------------------------------------------------

RB_COLUMNS = ("L", "seq_index", "target", "up_count", "shots", "series")


def rb_curves_from_rows(rows: Iterable[Mapping]) -> dict[str, RbCurve]:
    """Group RB raw rows into per-series curves of sequence fidelities."""
    table: dict[str, dict[tuple[int, int], dict[str, float]]] = {}
    for row in rows:
        series = str(row.get("series", "") or "")
        L = int(float(row["L"]))
        s = int(float(row["seq_index"]))
        tgt = str(row["target"])
        if tgt not in ("up", "down"):
            raise FitError(f"bad target {tgt!r}")
        p = float(row["up_count"]) / float(row["shots"])
        table.setdefault(series, {}).setdefault((L, s), {})[tgt] = p
    curves = {}
    for series, cells in table.items():
        Ls = sorted({k[0] for k in cells})
        seqs = sorted({k[1] for k in cells})
        F = np.empty((len(Ls), len(seqs)))
        for i, L in enumerate(Ls):
            for j, s in enumerate(seqs):
                c = cells.get((L, s))
                if c is None or set(c) != {"up", "down"}:
                    raise FitError(f"series {series!r}: incomplete pair at L={L}, seq={s}")
                F[i, j] = sequence_fidelity(c["up"], c["down"])
        curves[series] = RbCurve(np.array(Ls), F)
    return curves


def summarize_rb(
    curves: Mapping[str, RbCurve],
    mode: str,
    rng: np.random.Generator,
    n_resamples: int = 500,
) -> tuple[list[DecayFit], dict[str, float]]:
    """Fits and summary scalars (with bootstrap errors) for an RB run.

    ``mode`` is ``"1q"`` (series are qubit names, e.g. ``L`` and ``M``) or
    ``"2q"`` (series ``ref`` and optionally ``int``).
    """
    fits: list[DecayFit] = []
    scalars: dict[str, float] = {}
    if mode == "1q":
        for name in sorted(curves):
            c = curves[name]
            f = c.fit()
            f.fixed["series"] = name
            fits.append(f)
            p = f.params["p"]
            F_C = clifford_fidelity(p, 1)
            err = bootstrap_errors(
                c,
                n_resamples,
                rng,
                lambda fs: {
                    "p": fs[0].params["p"],
                    "F_C": clifford_fidelity(fs[0].params["p"], 1),
                    "F_p": primitive_fidelity(clifford_fidelity(fs[0].params["p"], 1)),
                },
            )
            scalars[f"p_{name}"] = p
            scalars[f"p_{name}_err"] = err["p"]
            scalars[f"F_C_{name}"] = F_C
            scalars[f"F_C_{name}_err"] = err["F_C"]
            scalars[f"F_p_{name}"] = primitive_fidelity(F_C)
            scalars[f"F_p_{name}_err"] = err["F_p"]
        return fits, scalars
    if mode != "2q":
        raise FitError("mode must be '1q' or '2q'")
    if "ref" not in curves:
        raise FitError("2q summary needs a 'ref' series")
    ref = curves["ref"]
    f_ref = ref.fit()
    f_ref.fixed["series"] = "ref"
    fits.append(f_ref)
    p_ref = f_ref.params["p"]
    scalars["p_ref"] = p_ref
    scalars["F_C"] = clifford_fidelity(p_ref, 2)
    if "int" not in curves:
        err = bootstrap_errors(
            ref, n_resamples, rng, lambda fs: {"p": fs[0].params["p"], "F_C": clifford_fidelity(fs[0].params["p"], 2)}
        )
        scalars["p_ref_err"] = err["p"]
        scalars["F_C_err"] = err["F_C"]
        return fits, scalars
    inter = curves["int"]
    f_int = inter.fit()
    f_int.fixed["series"] = "int"
    fits.append(f_int)
    p_cz = f_int.params["p"]
    scalars["p_cz"] = p_cz
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        scalars["F_CZ"] = interleaved_fidelity(p_ref, p_cz)

        def stat(fs):
            pr, pc = fs[0].params["p"], fs[1].params["p"]
            return {
                "p_ref": pr,
                "p_cz": pc,
                "F_C": clifford_fidelity(pr, 2),
                "F_CZ": interleaved_fidelity(pr, pc),
            }

        err = bootstrap_errors([ref, inter], n_resamples, rng, stat)
    if p_cz / p_ref > 1.0:
        log.warning("p_cz / p_ref = %.6f > 1 (statistical fluctuation)", p_cz / p_ref)
    for k in ("p_ref", "p_cz", "F_C", "F_CZ"):
        scalars[f"{k}_err"] = err[k]
    return fits, scalars


def read_csv_rows(text_or_path) -> list[dict[str, str]]:
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        handle = io.StringIO(text_or_path)
        return list(csv.DictReader(handle))
    with open(text_or_path, newline="") as handle:
        return list(csv.DictReader(handle))
