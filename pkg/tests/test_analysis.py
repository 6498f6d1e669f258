from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshuttle.analysis import (
    MODELS,
    FitError,
    Model,
    RbCurve,
    UnreliablePhaseError,
    bootstrap_errors,
    clifford_fidelity,
    depolarizing_from_fidelity,
    extract_phase,
    fit,
    fit_shuttle_populations,
    interleaved_fidelity,
    primitive_fidelity,
    rabi_envelope_literal,
    rabi_envelope_quasistatic,
    rb_curves_from_rows,
    register_model,
    relative_gradient,
    sequence_fidelity,
    summarize_rb,
)
from qshuttle.noise import two_level_survival
from qshuttle.rng import stream

PI = math.pi
L_1Q = np.array([1, 5, 10, 20, 50, 100, 200, 300, 500])


def _synthetic_curve(p, n_seq, shots, rng, A=0.95, lengths=L_1Q, seq_spread=0.01):
    """Oracle RB data: per-sequence fidelity with sequence spread plus binomial shot noise."""
    F = np.empty((len(lengths), n_seq))
    for i, L in enumerate(lengths):
        mean = A * p**L
        f_seq = np.clip(mean + rng.normal(0, seq_spread * (1 - p**L), n_seq), -1, 1)
        pu = (1 + f_seq) / 2
        up = rng.binomial(shots, pu) / shots
        down = rng.binomial(shots, 1 - pu) / shots
        F[i] = up - down
    return RbCurve(lengths, F)


class TestFit:
    def test_exact_rb_data(self):
        L = np.arange(1, 101)
        f = fit("rb_exp", L, 0.8 * 0.95**L)
        assert f.converged
        assert f.params["A"] == pytest.approx(0.8, abs=1e-8)
        assert f.params["p"] == pytest.approx(0.95, abs=1e-8)

    def test_gaussian_with_noise(self):
        rng = np.random.default_rng(3)
        t = np.linspace(0, 10e-6, 60)
        y = 0.9 * np.exp(-((t / 3e-6) ** 2)) + rng.normal(0, 0.01, t.size)
        f = fit("gaussian", t, y)
        assert f.params["T"] == pytest.approx(3e-6, rel=0.02)

    def test_stretched_exponent(self):
        rng = np.random.default_rng(4)
        t = np.linspace(0, 80e-6, 50)
        y = 0.9 * np.exp(-((t / 28e-6) ** 1.3)) + rng.normal(0, 0.005, t.size)
        f = fit("stretched_exp", t, y)
        assert f.params["n"] == pytest.approx(1.3, abs=0.1)
        assert f.params["T"] == pytest.approx(28e-6, rel=0.05)

    def test_rabi_model(self):
        t = np.arange(0, 10e-6, 10e-9)
        y = MODELS["rabi"].func(t, 0.45, 2.5e6, 40e-6, 0.0, 0.5, t2_star=3e-6)
        f = fit("rabi", t, y, t2_star=3e-6)
        assert f.params["f_R"] == pytest.approx(2.5e6, rel=1e-6)
        assert f.params["T"] == pytest.approx(40e-6, rel=1e-4)

    def test_linear(self):
        x = np.linspace(0, 1e-4, 11)
        f = fit("linear", x, 2 * PI * 900 * x + 0.1)
        assert f.params["slope"] / (2 * PI) == pytest.approx(900, rel=1e-9)

    def test_converged_fits_have_small_gradient(self):
        rng = np.random.default_rng(5)
        L = L_1Q.astype(float)
        y = 0.9 * 0.99**L + rng.normal(0, 0.01, L.size)
        f = fit("rb_exp", L, y)
        assert f.converged
        m = MODELS["rb_exp"]
        theta = np.array([f.params["A"], f.params["p"]])
        r = m.func(L, *theta) - y
        assert relative_gradient(m.jac(L, *theta), r, theta, *m.bounds) < 1e-8

    @given(st.floats(0.5, 0.999), st.floats(0.1, 10.0))
    def test_y_scaling_absorbed_into_amplitude(self, p, k):
        L = L_1Q.astype(float)
        y = 0.9 * p**L + 0.002 * np.sin(L)
        a = fit("rb_exp", L, y)
        b = fit("rb_exp", L, k * y)
        assert b.params["p"] == pytest.approx(a.params["p"], abs=1e-9)
        assert b.params["A"] == pytest.approx(k * a.params["A"], rel=1e-7)

    def test_preconditions(self):
        with pytest.raises(FitError):
            fit("rb_exp", [1, 2], [1, 0.9])
        with pytest.raises(FitError):
            fit("rb_exp", [3, 2, 1], [0.8, 0.9, 1.0])
        with pytest.raises(FitError):
            fit("nope", [1, 2, 3], [1, 1, 1])

    def test_nonconvergence_is_reported_not_raised(self):
        x = np.linspace(0, 1, 6)
        y = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        f = fit("stretched_exp", x, y)
        assert set(f.params) == {"A", "T", "n"}

    def test_register_alternative_model(self):
        register_model(Model("const", ("c",), lambda x, c: np.full_like(x, c), lambda x, y: [y.mean()], ((-1,), (2,))))
        assert fit("const", [1.0, 2.0, 3.0], [0.5, 0.5, 0.5]).params["c"] == pytest.approx(0.5)
        del MODELS["const"]


class TestRabiEnvelopes:
    def test_literal_grouping(self):
        t, f, T = 4e-6, 2.5e6, 3e-6
        assert rabi_envelope_literal(t, f, T) == pytest.approx((1 + t**2 / (f * T**2) ** 2) ** -0.25)

    def test_quasistatic_matches_monte_carlo(self):
        # Oracle: average the off-resonant Rabi flip over Gaussian detunings.
        f_R, T = 2.5e6, 3e-6
        sigma = 1 / (math.sqrt(2) * PI * T)
        df = np.random.default_rng(0).normal(0, sigma, 400_000)
        for t in (5e-6, 20e-6):
            omega = np.sqrt(f_R**2 + df**2)
            # The slowly varying envelope of the oscillation is the |<cos>| of the detuned phase.
            z = np.mean(np.exp(2j * PI * (omega - f_R) * t))
            assert abs(z) == pytest.approx(rabi_envelope_quasistatic(t, f_R, T), abs=5e-3)


class TestFidelityAlgebra:
    def test_sequence_fidelity(self):
        np.testing.assert_array_equal(sequence_fidelity([0.3, 0.7], [0.3, 0.7]), [0, 0])
        np.testing.assert_array_equal(sequence_fidelity([1, 1], [0, 0]), [1, 1])
        with pytest.raises(FitError):
            sequence_fidelity([1, 1], [0])

    def test_clifford_fidelity_limits(self):
        assert clifford_fidelity(1.0, 1) == clifford_fidelity(1.0, 2) == 1.0
        assert clifford_fidelity(0.0, 1) == 0.5
        assert clifford_fidelity(0.0, 2) == 0.25

    def test_reference_inversions(self):
        assert clifford_fidelity(0.84027, 2) == pytest.approx(0.8802, abs=5e-5)
        assert primitive_fidelity(0.9982375) == pytest.approx(0.99906, abs=5e-6)
        assert primitive_fidelity(0.99533) == pytest.approx(0.99751, abs=5e-6)
        assert interleaved_fidelity(1.0, 0.90293) == pytest.approx(0.9272, abs=5e-5)

    def test_interleaved_limits(self):
        assert interleaved_fidelity(0.9, 0.9) == 1.0
        assert interleaved_fidelity(0.9, 0.0) == 0.25
        with pytest.warns(RuntimeWarning):
            assert interleaved_fidelity(0.9, 0.91) > 1.0
        with pytest.raises(FitError):
            interleaved_fidelity(0.0, 0.5)

    def test_primitive_identity(self):
        assert primitive_fidelity(1.0) == 1.0

    @given(st.floats(0, 1), st.sampled_from([1, 2]))
    def test_round_trip(self, p, n):
        assert depolarizing_from_fidelity(clifford_fidelity(p, n), n) == pytest.approx(p, abs=1e-12)

    @given(st.floats(0.5, 1))
    def test_primitive_round_trip(self, F):
        assert 1 - (1 - primitive_fidelity(F)) * 1.875 == pytest.approx(F, abs=1e-12)


class TestBootstrap:
    def test_zero_noise(self):
        F = np.tile((0.9 * 0.98**L_1Q)[:, None], (1, 24))
        err = bootstrap_errors(RbCurve(L_1Q, F), 50, stream(0, "b"))
        assert err["p"] < 1e-10

    def test_deterministic(self):
        c = _synthetic_curve(0.99, 24, 1000, np.random.default_rng(1))
        a = bootstrap_errors(c, 100, stream(3, "b"))
        b = bootstrap_errors(c, 100, stream(3, "b"))
        assert a == b

    def test_inverse_sqrt_scaling(self):
        ratios = []
        for seed in range(4):
            rng = np.random.default_rng(seed)
            small = bootstrap_errors(_synthetic_curve(0.99, 24, 1000, rng), 200, stream(seed, "s"))["p"]
            big = bootstrap_errors(_synthetic_curve(0.99, 96, 1000, rng), 200, stream(seed, "b"))["p"]
            ratios.append(small / big)
        assert np.mean(ratios) == pytest.approx(2.0, rel=0.2)

    @pytest.mark.slow
    def test_coverage_of_three_stderr(self):
        hits = 0
        trials = 40
        for seed in range(trials):
            rng = np.random.default_rng(100 + seed)
            c = _synthetic_curve(0.99, 24, 1000, rng)
            p = c.fit().params["p"]
            err = bootstrap_errors(c, 100, stream(seed, "cov"))["p"]
            hits += abs(p - 0.99) < 3 * err
        assert hits / trials >= 0.95


class TestExtractPhase:
    phases = np.linspace(0, 2 * PI, 16, endpoint=False)

    def test_zero(self):
        assert extract_phase(self.phases, np.cos(self.phases)).params["phi0"] == pytest.approx(0, abs=1e-12)

    def test_pi_and_controlled_difference(self):
        a = extract_phase(self.phases, 0.5 + 0.5 * np.cos(self.phases)).params["phi0"]
        b = extract_phase(self.phases, 0.5 + 0.5 * np.cos(self.phases - PI)).params["phi0"]
        assert abs(b) == pytest.approx(PI, abs=1e-12)
        assert abs(math.remainder(b - a, 2 * PI)) / PI == pytest.approx(1.0, abs=1e-12)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(7)
        y = 0.5 + 0.5 * np.cos(self.phases - 0.04 * PI)
        y = rng.binomial(1000, y) / 1000
        f = extract_phase(self.phases, y)
        assert f.params["phi0"] == pytest.approx(0.04 * PI, abs=0.005 * PI)
        assert 0 < f.stderr["phi0"] < 0.005 * PI

    @given(st.floats(-10, 10), st.floats(-PI, PI))
    def test_equivariance(self, shift, phi0):
        y = 0.5 + 0.3 * np.cos(self.phases - phi0)
        a = extract_phase(self.phases, y).params["phi0"]
        b = extract_phase(self.phases + shift, y).params["phi0"]
        assert math.remainder(b - a - shift, 2 * PI) == pytest.approx(0.0, abs=1e-9)

    def test_small_amplitude_rejected(self):
        with pytest.raises(UnreliablePhaseError):
            extract_phase(self.phases, 0.5 + 0.01 * np.cos(self.phases))

    def test_coverage_required(self):
        with pytest.raises(FitError):
            extract_phase(np.linspace(0, PI, 16), np.cos(np.linspace(0, PI, 16)))
        with pytest.raises(FitError):
            extract_phase(self.phases[:4], np.cos(self.phases[:4]))


class TestShuttlePopulations:
    def test_exact_recovery(self):
        n = np.arange(0, 1001, 50, dtype=float)
        d, u = two_level_survival(n, 0.99971, 0.99975)
        f = fit_shuttle_populations(n, 0.02 + 0.95 * d, 0.02 + 0.95 * u)
        assert f.params["F_u"] == pytest.approx(0.99971, abs=1e-8)
        assert f.params["F_d"] == pytest.approx(0.99975, abs=1e-8)


class TestRbSummaries:
    def _rows(self, curve: RbCurve, series: str, shots=1000):
        rows = []
        for i, L in enumerate(curve.lengths):
            for s, F in enumerate(curve.fidelities[i]):
                up = round((1 + F) / 2 * shots)
                rows.append({"L": L, "seq_index": s, "target": "up", "up_count": up, "shots": shots, "series": series})
                rows.append({"L": L, "seq_index": s, "target": "down", "up_count": shots - up, "shots": shots, "series": series})
        return rows

    def test_rows_round_trip(self):
        c = _synthetic_curve(0.99, 5, 1000, np.random.default_rng(2))
        back = rb_curves_from_rows(self._rows(c, "L"))["L"]
        np.testing.assert_allclose(back.fidelities, c.fidelities, atol=2e-3)

    def test_incomplete_pair_rejected(self):
        c = _synthetic_curve(0.99, 2, 1000, np.random.default_rng(2))
        with pytest.raises(FitError):
            rb_curves_from_rows(self._rows(c, "L")[:-1])

    def test_2q_summary(self):
        rng = np.random.default_rng(9)
        L = np.array([1, 2, 3, 4, 6, 8, 10, 13, 16, 20])
        ref = _synthetic_curve(0.87, 50, 2000, rng, lengths=L)
        inter = _synthetic_curve(0.87 * 0.94, 50, 2000, rng, lengths=L)
        _, sc = summarize_rb({"ref": ref, "int": inter}, "2q", stream(0, "s"), 100)
        assert sc["F_CZ"] == pytest.approx((1 + 3 * 0.94) / 4, abs=4 * sc["F_CZ_err"])
        assert {"p_ref", "p_cz", "F_C", "F_CZ", "F_CZ_err", "p_ref_err"} <= set(sc)

    def test_1q_summary_keys(self):
        c = _synthetic_curve(0.99, 10, 1000, np.random.default_rng(1))
        _, sc = summarize_rb({"L": c, "M": c}, "1q", stream(0, "s"), 30)
        assert {"F_p_L", "F_p_M", "F_C_L_err", "p_M"} <= set(sc)
