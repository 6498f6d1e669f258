from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshuttle.clifford import (
    N1,
    N2,
    CliffordError,
    compose,
    compose_tokens,
    export_sequences,
    generate_rb_sequences,
    group_unitaries,
    interleave_id,
    phase_key,
    recovery_gate,
    single_qubit_group,
    split_two_qubit_id,
    two_qubit_group,
)
from qshuttle.qops import CZ, I2, X, Y, Z, equal_up_to_phase

PAULIS_1Q = [I2, X, Y, Z]
PAULIS_2Q = [np.kron(a, b) for a in PAULIS_1Q for b in PAULIS_1Q][1:]


def _maps_paulis_to_paulis(u):
    """Oracle: u P u^dagger is +-(a Pauli) for every non-identity Pauli."""
    d = u.shape[0]
    basis = PAULIS_1Q[1:] if d == 2 else PAULIS_2Q
    full = PAULIS_1Q if d == 2 else [np.kron(a, b) for a in PAULIS_1Q for b in PAULIS_1Q]
    for p in basis:
        q = u @ p @ u.conj().T
        if not any(abs(abs(np.trace(r.conj().T @ q)) - d) < 1e-9 for r in full):
            return False
    return True


class TestSingleQubit:
    def test_size_and_uniqueness(self):
        g = single_qubit_group()
        assert len(g) == N1 == 24
        assert len({phase_key(e.unitary) for e in g}) == 24

    def test_mean_primitive_count(self):
        assert np.mean([e.primitive_count for e in single_qubit_group()]) == pytest.approx(1.875)

    def test_identity_first(self):
        assert equal_up_to_phase(single_qubit_group()[0].unitary, I2)

    def test_all_are_cliffords(self):
        assert all(_maps_paulis_to_paulis(e.unitary) for e in single_qubit_group())

    def test_closure(self):
        keys = {phase_key(e.unitary) for e in single_qubit_group()}
        mats = group_unitaries(1)
        for a in mats:
            for b in mats:
                assert phase_key(a @ b) in keys


class TestTwoQubit:
    def test_size_and_uniqueness(self):
        g = two_qubit_group()
        assert len(g) == N2 == 11520
        assert len(g.index) == N2

    def test_mean_cz_count(self):
        assert np.mean([e.cz_count for e in two_qubit_group()]) == pytest.approx(1.5)

    def test_class_sizes(self):
        counts = np.bincount([e.cz_count for e in two_qubit_group()])
        assert list(counts) == [576, 5184, 5184, 576]

    def test_id_layout(self):
        assert split_two_qubit_id(576 + 24 * 3 + 5) == (1, 3, 5)
        with pytest.raises(CliffordError):
            split_two_qubit_id(N2)

    def test_tokens_reproduce_unitary(self):
        g = two_qubit_group()
        for idx in (0, 1, 600, 5000, 11000, N2 - 1):
            assert equal_up_to_phase(compose_tokens(g[idx].primitives), g[idx].unitary)

    def test_cz_and_identity_are_members(self):
        assert interleave_id("I") == 0
        assert equal_up_to_phase(group_unitaries(2)[interleave_id("CZ")], CZ)

    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1))
    def test_closure_random_products(self, seed):
        rng = np.random.default_rng(seed)
        g = two_qubit_group()
        mats = group_unitaries(2)
        for _ in range(50):
            a, b = rng.integers(0, N2, 2)
            assert g.find(mats[a] @ mats[b]) is not None

    @settings(max_examples=20)
    @given(st.integers(0, N2 - 1))
    def test_stabilizer_property(self, idx):
        assert _maps_paulis_to_paulis(group_unitaries(2)[idx])

    def test_non_clifford_not_found(self):
        t = np.diag([1, np.exp(1j * np.pi / 4)])
        assert two_qubit_group().find(np.kron(t, I2)) is None


class TestRecovery:
    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("target", ["up", "down"])
    def test_recovery_reaches_target(self, n, target):
        rng = np.random.default_rng(4)
        size = N1 if n == 1 else N2
        d = 2**n
        for _ in range(20):
            ids = rng.integers(0, size, 7)
            u = compose(ids, n)
            r = recovery_gate(u, target, n)
            psi = group_unitaries(n)[r] @ u[:, 0]
            t = d - 1 if target == "up" else 0
            assert abs(psi[t]) ** 2 == pytest.approx(1.0, abs=1e-9)

    def test_rejects_non_clifford(self):
        ry = np.cos(np.pi / 16) * I2 - 1j * np.sin(np.pi / 16) * Y
        with pytest.raises(CliffordError):
            recovery_gate(ry, "up")


class TestSequences:
    def test_deterministic_and_paired(self):
        a = generate_rb_sequences([1, 3], 4, np.random.default_rng(11))
        b = generate_rb_sequences([1, 3], 4, np.random.default_rng(11))
        assert export_sequences(a) == export_sequences(b)
        assert len(a) == 8
        for up, down in a:
            assert up.elements == down.elements
            assert (up.target, down.target) == ("up", "down")

    def test_interleaved_gate_ids(self):
        pairs = generate_rb_sequences([3], 1, np.random.default_rng(0), interleave="CZ")
        seq = pairs[0][0]
        ids = seq.gate_ids()
        assert len(ids) == 2 * 3 + 1
        assert ids[1::2][:3] == [interleave_id("CZ")] * 3
        total = compose(ids, 2)
        assert abs(total[3, 0]) ** 2 == pytest.approx(1.0, abs=1e-9)

    def test_export_format(self):
        pairs = generate_rb_sequences([2], 1, np.random.default_rng(0), n_qubits=1)
        line = export_sequences(pairs).splitlines()[0]
        parts = line.split(",")
        assert len(parts) == 3 and parts[-1].startswith("R:")

    def test_invalid_arguments(self):
        with pytest.raises(CliffordError):
            generate_rb_sequences([], 1, np.random.default_rng(0))
        with pytest.raises(CliffordError):
            interleave_id("CZ", 1)
