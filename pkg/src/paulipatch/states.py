"""Initial states, Pauli overlaps, and the dense statevector reference oracle.

The dense simulator is the ground truth every propagation result is checked
against. States are vectors of complex amplitudes with qubit ``q`` on basis
bit ``q``; Pauli expectations are evaluated by mask-indexed traversal, never
by materializing operator matrices.

Caps: expectation oracles run up to 14 qubits; dense state construction and
overlap evaluation are allowed up to 16 so that a Trotter-prepared 16-qubit
input state can still be compared exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .circuits import Circuit, Rotation
from .errors import DimensionError, OracleCapError, ValidationError
from .pauli import CliffordGate, ObservableSpec, PauliString, gate_matrix

DENSE_EXPECTATION_CAP = 14
DENSE_STATE_CAP = 16


@dataclass(frozen=True)
class AllZero:
    """The computational basis state |0...0>."""

    n: int


@dataclass(frozen=True)
class AllPlus:
    """The product state |+...+>."""

    n: int


class Dense:
    """An explicit amplitude vector, normalized to 1 within 1e-12."""

    def __init__(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        n = int(vector.size).bit_length() - 1
        if 1 << n != vector.size:
            raise ValidationError(f"amplitude count {vector.size} is not a power of 2")
        if n > DENSE_STATE_CAP:
            raise OracleCapError(f"dense states capped at {DENSE_STATE_CAP} qubits, got {n}")
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"state norm {norm} deviates from 1 beyond 1e-12")
        self.n = n
        self.vector = vector

    @classmethod
    def from_binary_file(cls, path) -> "Dense":
        """Load amplitudes stored as little-endian complex64 pairs.

        float32 quantization perturbs the norm by ~1e-7, so the vector is
        renormalized after loading.
        """
        raw = np.fromfile(path, dtype="<c8").astype(complex)
        norm = float(np.linalg.norm(raw))
        if not 0.9 < norm < 1.1:
            raise ValidationError(f"stored state norm {norm} is not close to 1")
        return cls(raw / norm)

    def to_binary_file(self, path) -> None:
        self.vector.astype("<c8").tofile(path)


class TrotterEvolvedZero:
    """|0...0> evolved through a fully bound circuit, built densely on demand."""

    def __init__(self, circuit: Circuit) -> None:
        if circuit.m != 0:
            raise ValidationError("preparation circuit must have all angles fixed")
        if circuit.n > DENSE_STATE_CAP:
            raise OracleCapError(
                f"dense states capped at {DENSE_STATE_CAP} qubits, got {circuit.n}"
            )
        self.n = circuit.n
        self.circuit = circuit

    @cached_property
    def vector(self) -> np.ndarray:
        psi = np.zeros(1 << self.n, dtype=complex)
        psi[0] = 1.0
        return _apply_circuit(psi[np.newaxis, :], self.circuit, np.zeros((1, 0)))[0]


InitialState = AllZero | AllPlus | Dense | TrotterEvolvedZero


def state_vector(state: InitialState) -> np.ndarray:
    """Dense amplitudes of any supported state (subject to the state cap)."""
    if isinstance(state, AllZero):
        if state.n > DENSE_STATE_CAP:
            raise OracleCapError(f"dense form capped at {DENSE_STATE_CAP} qubits")
        psi = np.zeros(1 << state.n, dtype=complex)
        psi[0] = 1.0
        return psi
    if isinstance(state, AllPlus):
        if state.n > DENSE_STATE_CAP:
            raise OracleCapError(f"dense form capped at {DENSE_STATE_CAP} qubits")
        dim = 1 << state.n
        return np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    return state.vector


# --- Pauli action on dense vectors ------------------------------------------------


def _parity_of(values: np.ndarray, mask: int) -> np.ndarray:
    """Bit parity of ``values & mask`` as a +/-1 float array."""
    counts = np.bitwise_count(values & np.int64(mask))
    return 1.0 - 2.0 * (counts & 1).astype(float)


def apply_pauli_dense(batch: np.ndarray, p: PauliString) -> np.ndarray:
    """Apply ``p`` to each row of a (batch, 2**n) amplitude array."""
    dim = batch.shape[-1]
    idx = np.arange(dim, dtype=np.int64)
    phase = (1j ** ((p.x & p.z).bit_count())) * _parity_of(idx, p.z)
    out = np.empty_like(batch)
    out[..., idx ^ np.int64(p.x)] = phase * batch
    return out


def _apply_gate_matrix(batch: np.ndarray, mat: np.ndarray, qubits: tuple[int, ...],
                       n: int) -> np.ndarray:
    """Apply a 2^k x 2^k matrix on ``qubits`` (gate qubit 0 = low matrix bit)."""
    shaped = batch.reshape(batch.shape[0], *([2] * n))
    # numpy axis for qubit q is n-q (axis 0 is the batch); gate's qubit 0 must
    # land on the least-significant flattened bit, hence reversed move order.
    axes = [n - q for q in reversed(qubits)]
    moved = np.moveaxis(shaped, axes, range(1, 1 + len(qubits)))
    head = moved.shape[: 1 + len(qubits)]
    flat = moved.reshape(batch.shape[0], mat.shape[0], -1)
    flat = np.einsum("ij,bjk->bik", mat, flat)
    moved = flat.reshape(head + moved.shape[1 + len(qubits):])
    shaped = np.moveaxis(moved, range(1, 1 + len(qubits)), axes)
    return shaped.reshape(batch.shape[0], -1)


def _apply_circuit(batch: np.ndarray, circuit: Circuit, alphas: np.ndarray) -> np.ndarray:
    """Run ``circuit`` on a batch of states; row b uses parameter row b."""
    n = circuit.n
    for gate in circuit.gates:
        if isinstance(gate, CliffordGate):
            if gate.kind == "seq":
                for sub in gate.sequence:
                    batch = _apply_gate_matrix(batch, gate_matrix(sub.kind), sub.qubits, n)
            else:
                batch = _apply_gate_matrix(batch, gate_matrix(gate.kind), gate.qubits, n)
        else:
            theta = (
                np.full(batch.shape[0], gate.param.value)
                if gate.param.is_fixed
                else alphas[:, gate.param.index]
            )
            rotated = apply_pauli_dense(batch, gate.generator(n))
            cos = np.cos(theta / 2.0)[:, np.newaxis]
            sin = np.sin(theta / 2.0)[:, np.newaxis]
            batch = cos * batch - 1j * sin * rotated
    return batch


# --- Overlaps and expectations -----------------------------------------------------


def overlap(state: InitialState, p: PauliString) -> float:
    """Tr[rho P] for the supported initial states; always in [-1, 1]."""
    if state.n != p.n:
        raise DimensionError(f"state has {state.n} qubits, Pauli has {p.n}")
    if isinstance(state, AllZero):
        return 1.0 if p.x == 0 else 0.0
    if isinstance(state, AllPlus):
        return 1.0 if p.z == 0 else 0.0
    psi = state.vector
    value = np.vdot(psi, apply_pauli_dense(psi[np.newaxis, :], p)[0])
    return float(value.real)


def evolve_state(circuit: Circuit, alphas, state: InitialState) -> Dense:
    """Dense state after running ``circuit`` at parameters ``alphas``."""
    if circuit.n != state.n:
        raise DimensionError(f"circuit has {circuit.n} qubits, state has {state.n}")
    if circuit.n > DENSE_STATE_CAP:
        raise OracleCapError(f"dense evolution capped at {DENSE_STATE_CAP} qubits")
    alphas = np.asarray(alphas, dtype=float).reshape(1, -1)
    if alphas.shape[1] != circuit.m:
        raise DimensionError(f"expected {circuit.m} parameters, got {alphas.shape[1]}")
    psi = _apply_circuit(state_vector(state)[np.newaxis, :], circuit, alphas)[0]
    return Dense(psi)


def exact_expectation(circuit: Circuit, alphas, obs: ObservableSpec,
                      state: InitialState) -> float:
    """Ground-truth Tr[O U(alpha) rho U(alpha)^dagger] via dense evolution."""
    return float(exact_expectation_batch(circuit, np.asarray(alphas, float)[np.newaxis, :],
                                         obs, state)[0])


def exact_expectation_batch(circuit: Circuit, alphas: np.ndarray, obs: ObservableSpec,
                            state: InitialState, chunk: int = 64) -> np.ndarray:
    """Vectorized oracle over many parameter vectors (rows of ``alphas``)."""
    if circuit.n != state.n or obs.n != circuit.n:
        raise DimensionError("circuit, observable, and state qubit counts must match")
    cap = DENSE_STATE_CAP if isinstance(state, TrotterEvolvedZero) else DENSE_EXPECTATION_CAP
    if circuit.n > cap:
        raise OracleCapError(
            f"exact expectations capped at {cap} qubits here, got {circuit.n}"
        )
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 2 or alphas.shape[1] != circuit.m:
        raise DimensionError(f"expected (draws, {circuit.m}) parameters, got {alphas.shape}")
    psi0 = state_vector(state)
    out = np.empty(alphas.shape[0])
    for start in range(0, alphas.shape[0], chunk):
        block = alphas[start:start + chunk]
        batch = np.repeat(psi0[np.newaxis, :], block.shape[0], axis=0)
        batch = _apply_circuit(batch, circuit, block)
        values = np.zeros(block.shape[0], dtype=complex)
        for p, coeff in obs.terms:
            values += coeff * np.einsum("bi,bi->b", batch.conj(), apply_pauli_dense(batch, p))
        out[start:start + chunk] = values.real
    return out
