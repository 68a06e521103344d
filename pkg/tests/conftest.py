"""Shared fixtures: seeded random circuits and an independent dense oracle."""

from __future__ import annotations

import numpy as np
import pytest

from paulipatch import CliffordGate, Circuit, ObservableSpec, ParamRef, PauliString, Rotation

# dense single-qubit matrices built here on purpose: tests must not reuse the
# package's own matrix table as their oracle
I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
LETTER_MATS = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def dense_pauli(p: PauliString) -> np.ndarray:
    """Kronecker build with qubit 0 on the least-significant basis bit."""
    mat = np.array([[1.0 + 0j]])
    for q in range(p.n):
        mat = np.kron(LETTER_MATS[p.letter(q)], mat)
    return mat


def random_mixed_circuit(rng: np.random.Generator, n: int, n_rot: int,
                         shared: bool = False) -> Circuit:
    """Clifford + rotation circuit with ``n_rot`` rotations, free or one shared angle."""
    gates = []
    cliffords_1q = ("h", "s", "sdg", "x", "y", "z")
    next_param = 0
    for _ in range(n_rot):
        roll = rng.integers(0, 3)
        if roll == 0:
            gates.append(CliffordGate(str(rng.choice(cliffords_1q)),
                                      (int(rng.integers(n)),)))
        elif roll == 1 and n > 1:
            a, b = rng.choice(n, size=2, replace=False)
            gates.append(CliffordGate(str(rng.choice(("cnot", "cz", "swap"))),
                                      (int(a), int(b))))
        size = int(rng.integers(1, min(n, 2) + 1))
        qubits = tuple(int(q) for q in rng.choice(n, size=size, replace=False))
        letters = "".join(rng.choice(list("XYZ")) for _ in range(size))
        if shared:
            ref = ParamRef.shared(0)
        else:
            ref = ParamRef.free(next_param)
            next_param += 1
    # rotations interleave with the Cliffords appended above
        gates.append(Rotation(letters, qubits, ref))
    m = 1 if shared else next_param
    return Circuit(n, m, tuple(gates))


def random_observable(rng: np.random.Generator, n: int, terms: int = 1) -> ObservableSpec:
    chosen: dict[PauliString, float] = {}
    while len(chosen) < terms:
        size = int(rng.integers(1, min(n, 3) + 1))
        qubits = tuple(int(q) for q in rng.choice(n, size=size, replace=False))
        letters = "".join(rng.choice(list("XYZ")) for _ in range(size))
        p = PauliString.from_letters(letters, qubits, n)
        if p not in chosen:
            chosen[p] = float(rng.uniform(0.2, 1.0) * rng.choice((-1, 1)))
    return ObservableSpec(tuple(chosen.items()))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
