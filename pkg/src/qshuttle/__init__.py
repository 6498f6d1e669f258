"""Simulation and analysis toolkit for shuttling-based two-qubit gates
between electron spin qubits."""

__version__ = "0.1.0"
