"""Simulated quantum data acquisition: shot allocation, direct Pauli
measurements, and Pauli classical shadows.

All protocols draw from one counter-based Philox stream per instance, keyed
by an explicit seed, so every record set is bit-reproducible. Records are
"measure first, ask questions later": one record set taken on the initial
state is reweighted for every parameter point of a landscape patch.

Estimators refuse to extrapolate: asking for a Pauli outside the measured
support is an error, never a silently biased value.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, OracleCapError, ValidationError
from .pauli import PauliString
from .propagation import PropagatedObservable
from .states import (
    AllPlus,
    AllZero,
    Dense,
    InitialState,
    TrotterEvolvedZero,
    _apply_gate_matrix,
    overlap,
    state_vector,
)
from .surrogate import (
    BoundReport,
    PatchDistribution,
    pauli_mean_squares,
    worst_case_coeff_bounds,
)

STRATEGIES = ("uniform", "abs-coeff", "eff1norm-avg", "eff1norm-worst")

SHADOW_DENSE_CAP = 14

_BASIS_LETTERS = "XYZ"  # shadow basis codes 0, 1, 2


@dataclass(frozen=True)
class AllocationPlan:
    """Sampling distribution beta over measurable Paulis plus a shot budget."""

    entries: tuple[tuple[PauliString, float], ...]
    strategy: str
    shots: int

    def __post_init__(self) -> None:
        if not self.entries:
            raise ConfigError("allocation needs a nonempty support")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.shots < 1:
            raise ConfigError(f"shot budget must be >= 1, got {self.shots}")
        total = 0.0
        for p, prob in self.entries:
            if prob <= 0.0:
                raise ConfigError(f"probability for {p} must be > 0, got {prob}")
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"probabilities sum to {total}, not 1")

    @property
    def paulis(self) -> tuple[PauliString, ...]:
        return tuple(p for p, _ in self.entries)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([b for _, b in self.entries])

    def index_of(self) -> dict[PauliString, int]:
        return {p: i for i, (p, _) in enumerate(self.entries)}


def make_allocation(
    strategy: str,
    shots: int,
    coeffs: Mapping[PauliString, float] | None = None,
    surrogate: PropagatedObservable | None = None,
    r: float | None = None,
) -> AllocationPlan:
    """Build the sampling distribution for the named strategy.

    ``uniform`` and ``abs-coeff`` weigh a fixed coefficient table; the
    effective-1-norm strategies weigh a symbolic surrogate's patch moments
    (``r`` is the patch half-width).
    """
    if strategy in ("uniform", "abs-coeff"):
        if coeffs is None:
            if surrogate is None:
                raise ConfigError(f"{strategy} needs a coefficient table")
            coeffs = {p: 1.0 for p in surrogate.terms}
        support = [(p, abs(c)) for p, c in coeffs.items() if c != 0.0]
        if not support:
            raise ConfigError("allocation support is empty")
        if strategy == "uniform":
            beta = [(p, 1.0 / len(support)) for p, _ in support]
        else:
            total = sum(w for _, w in support)
            beta = [(p, w / total) for p, w in support]
    elif strategy in ("eff1norm-avg", "eff1norm-worst"):
        if surrogate is None or r is None:
            raise ConfigError(f"{strategy} needs a symbolic surrogate and half-width r")
        if strategy == "eff1norm-avg":
            squares, _ = pauli_mean_squares(
                surrogate, PatchDistribution.centered(surrogate.m, r)
            )
            weights = {p: math.sqrt(v) for p, v in squares.items()}
        else:
            weights = worst_case_coeff_bounds(surrogate, r)
        support = [(p, w) for p, w in weights.items() if w > 0.0]
        if not support:
            raise ConfigError("allocation support is empty")
        total = sum(w for _, w in support)
        beta = [(p, w / total) for p, w in support]
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")
    # exact renormalization guards the sum-to-one invariant against rounding
    norm = sum(b for _, b in beta)
    beta = [(p, b / norm) for p, b in beta]
    return AllocationPlan(tuple(beta), strategy, shots)


# --- direct Pauli measurements -----------------------------------------------------


class ShotRecords:
    """Direct-measurement outcomes as flat arrays; behaves like a record list."""

    def __init__(self, pauli_index: np.ndarray, outcomes: np.ndarray, stream: int) -> None:
        self.pauli_index = np.asarray(pauli_index, dtype=np.uint32)
        self.outcomes = np.asarray(outcomes, dtype=np.int8)
        self.stream = int(stream)
        if self.pauli_index.shape != self.outcomes.shape:
            raise ValidationError("index/outcome length mismatch")
        if not np.all(np.abs(self.outcomes) == 1):
            raise ValidationError("outcomes must be exactly +/-1")

    def __len__(self) -> int:
        return self.pauli_index.shape[0]

    def __getitem__(self, i: int) -> tuple[int, int, int]:
        """(pauli index, outcome, draw index) of one shot."""
        return int(self.pauli_index[i]), int(self.outcomes[i]), i


TruthSource = InitialState | Mapping[PauliString, float] | Callable[[PauliString], float]


def _truth_value(truth: TruthSource, p: PauliString) -> float:
    if isinstance(truth, (AllZero, AllPlus, Dense, TrotterEvolvedZero)):
        return overlap(truth, p)
    if isinstance(truth, Mapping):
        if p not in truth:
            raise ConfigError(f"truth table has no expectation for {p}")
        return float(truth[p])
    return float(truth(p))


def simulate_direct(truth: TruthSource, plan: AllocationPlan, seed: int) -> ShotRecords:
    """Draw plan.shots single-Pauli measurements from the true expectations."""
    expectations = np.array([_truth_value(truth, p) for p in plan.paulis])
    if np.any(np.abs(expectations) > 1 + 1e-9):
        raise ConfigError("true expectations must lie in [-1, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.choice(len(plan.entries), size=plan.shots, p=plan.probabilities)
    p_up = 0.5 * (1.0 + expectations[idx])
    outcomes = np.where(rng.random(plan.shots) < p_up, 1, -1).astype(np.int8)
    return ShotRecords(idx.astype(np.uint32), outcomes, seed)


def estimate(records: ShotRecords, coeffs: Mapping[PauliString, float],
             plan: AllocationPlan) -> float:
    """Reweighted mean estimator of sum_P c_P Tr[rho P] from one record set.

    ``coeffs`` holds the coefficients at the parameter point of interest; a
    nonzero coefficient outside the plan support cannot be estimated and is
    an error.
    """
    if len(records) == 0:
        raise ConfigError("no records to estimate from")
    index = plan.index_of()
    c_arr = np.zeros(len(plan.entries))
    for p, c in coeffs.items():
        slot = index.get(p)
        if slot is None:
            if c != 0.0:
                raise ConfigError(f"coefficient for unmeasured Pauli {p}")
            continue
        c_arr[slot] = c
    weights = c_arr / plan.probabilities
    values = weights[records.pauli_index] * records.outcomes
    return float(values.mean())


# --- Pauli classical shadows --------------------------------------------------------


class ShadowRecords:
    """Randomized-basis measurement records: per-qubit basis codes and bits."""

    def __init__(self, bases: np.ndarray, bits: np.ndarray, stream: int) -> None:
        self.bases = np.asarray(bases, dtype=np.uint8)
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.stream = int(stream)
        if self.bases.shape != self.bits.shape or self.bases.ndim != 2:
            raise ValidationError("bases/bits must be matching (shots, n) arrays")

    @property
    def n(self) -> int:
        return self.bases.shape[1]

    def __len__(self) -> int:
        return self.bases.shape[0]

    def __getitem__(self, i: int) -> tuple[str, np.ndarray]:
        return ("".join(_BASIS_LETTERS[b] for b in self.bases[i]), self.bits[i].copy())


_BASIS_ROTATIONS = {
    0: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),          # X: H
    1: np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2.0),        # Y: H S^dag
    2: np.eye(2, dtype=complex),                                            # Z
}


def simulate_shadows(state: InitialState, shots: int, seed: int) -> ShadowRecords:
    """Measure every qubit in an independent uniformly random Pauli basis.

    Stabilizer inputs sample in closed form; dense states sample each qubit's
    conditional marginal sequentially (capped at 14 qubits).
    """
    if shots < 1:
        raise ConfigError(f"shot count must be >= 1, got {shots}")
    rng = np.random.Generator(np.random.Philox(seed))
    n = state.n
    bases = rng.integers(0, 3, size=(shots, n), dtype=np.uint8)
    if isinstance(state, (AllZero, AllPlus)):
        # the stabilized basis gives a deterministic bit, others a fair coin
        fixed = 2 if isinstance(state, AllZero) else 0
        bits = rng.integers(0, 2, size=(shots, n), dtype=np.uint8)
        bits[bases == fixed] = 0
        return ShadowRecords(bases, bits, seed)

    if n > SHADOW_DENSE_CAP:
        raise OracleCapError(f"dense shadow sampling capped at {SHADOW_DENSE_CAP} qubits")
    psi0 = state_vector(state)
    bits = np.zeros((shots, n), dtype=np.uint8)
    for s in range(shots):
        psi = psi0[np.newaxis, :].copy()
        for q in range(n):
            psi = _apply_gate_matrix(psi, _BASIS_ROTATIONS[int(bases[s, q])], (q,), n)
            amp = psi[0]
            mask = (np.arange(amp.size) >> q) & 1
            p0 = float(np.sum(np.abs(amp[mask == 0]) ** 2))
            bit = int(rng.random() >= p0)
            bits[s, q] = bit
            keep = mask == bit
            amp = np.where(keep, amp, 0.0)
            norm = math.sqrt(float(np.sum(np.abs(amp) ** 2)))
            psi = (amp / norm)[np.newaxis, :]
    return ShadowRecords(bases, bits, seed)


def shadow_estimate(records: ShadowRecords, p: PauliString,
                    median_batches: int | None = None) -> float:
    """Unbiased shadow estimator of Tr[rho P] with inverse-channel factor 3^|P|.

    ``median_batches`` switches to median-of-means over that many batches;
    the default is a plain mean.
    """
    if p.n != records.n:
        raise DimensionError(f"Pauli has {p.n} qubits, records have {records.n}")
    support = p.support()
    if not support:
        return 1.0
    req = np.array([_BASIS_LETTERS.index(p.letter(q)) for q in support], dtype=np.uint8)
    cols = np.array(support)
    match = np.all(records.bases[:, cols] == req, axis=1)
    signs = 1.0 - 2.0 * (records.bits[:, cols].sum(axis=1) % 2)
    values = np.where(match, signs, 0.0) * (3.0 ** len(support))
    if median_batches is None:
        return float(values.mean())
    if median_batches < 1 or median_batches > len(values):
        raise ConfigError(f"bad batch count {median_batches}")
    batches = np.array_split(values, median_batches)
    return float(np.median([b.mean() for b in batches]))


# --- sample-complexity calculators ---------------------------------------------------


def sample_complexity(kind: str, **inputs) -> BoundReport:
    """Shot-budget formulas for the surrogation protocols.

    Kinds: ``pp-avg`` (effective-1-norm allocation, (3 e m / kappa)^kappa),
    ``pp-even`` (even allocation, N_Paulis (e m / kappa)^kappa), ``shadows``
    (min(log n, log(m N_Paulis)) log(1/delta) / epsilon), and ``worst-1norm``
    (2 log(2/delta) Lambda^2 ||c||_{1,worst}^2 / epsilon^2).
    """
    if kind == "pp-avg":
        m, kappa = inputs["m"], inputs["kappa"]
        _check(m >= 0 and kappa >= 0, "m and kappa must be >= 0")
        value = (3.0 * math.e * m / kappa) ** kappa if kappa else 1.0
        return BoundReport("thm-d9-avg-samples", inputs, float(value))
    if kind == "pp-even":
        m, kappa, n_paulis = inputs["m"], inputs["kappa"], inputs["n_paulis"]
        _check(m >= 0 and kappa >= 0 and n_paulis >= 1, "bad inputs")
        value = n_paulis * ((math.e * m / kappa) ** kappa if kappa else 1.0)
        return BoundReport("thm-d11-even-samples", inputs, float(value))
    if kind == "shadows":
        n, m, n_paulis = inputs["n"], inputs["m"], inputs["n_paulis"]
        eps, delta = inputs["epsilon"], inputs["delta"]
        _check(n >= 2 and m >= 1 and n_paulis >= 1, "bad sizes")
        _check(0 < eps and 0 < delta < 1, "epsilon/delta out of range")
        value = min(math.log(n), math.log(m * n_paulis)) * math.log(1.0 / delta) / eps
        return BoundReport("thm-d10-shadow-samples", inputs, float(value))
    if kind == "worst-1norm":
        norm, lam = inputs["norm1_worst"], inputs.get("lam", 1.0)
        eps, delta = inputs["epsilon"], inputs["delta"]
        _check(norm >= 0 and lam > 0, "bad norm inputs")
        _check(0 < eps and 0 < delta < 1, "epsilon/delta out of range")
        value = 2.0 * math.log(2.0 / delta) * (lam * norm / eps) ** 2
        return BoundReport("lem-b6-worst-samples", inputs, float(value))
    raise ConfigError(f"unknown sample-complexity kind {kind!r}")


def _check(cond: bool, message: str) -> None:
    if not cond:
        from .errors import HypothesisViolationError

        raise HypothesisViolationError(message)


# --- binary record logs ---------------------------------------------------------------

_LOG_VERSION = 1


def save_shot_records(records: ShotRecords, plan: AllocationPlan, path) -> None:
    """Compact binary log: one JSON header line, then 5-byte records."""
    header = {
        "format": "shot-records",
        "version": _LOG_VERSION,
        "count": len(records),
        "stream": records.stream,
        "strategy": plan.strategy,
        "shots": plan.shots,
        "paulis": [p.to_text() for p in plan.paulis],
        "beta": [b for _, b in plan.entries],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for i in range(len(records)):
            fh.write(struct.pack("<Ib", int(records.pauli_index[i]),
                                 int(records.outcomes[i])))


def load_shot_records(path) -> tuple[ShotRecords, AllocationPlan]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "shot-records" or header.get("version") != _LOG_VERSION:
            raise ValidationError(f"not a shot-record log: {header.get('format')!r}")
        count = header["count"]
        raw = fh.read(5 * count)
    if len(raw) != 5 * count:
        raise ValidationError("truncated shot-record log")
    idx = np.empty(count, dtype=np.uint32)
    out = np.empty(count, dtype=np.int8)
    for i in range(count):
        idx[i], out[i] = struct.unpack_from("<Ib", raw, 5 * i)
    paulis = [PauliString.from_text(t) for t in header["paulis"]]
    plan = AllocationPlan(
        tuple(zip(paulis, header["beta"])), header["strategy"], header["shots"]
    )
    return ShotRecords(idx, out, header["stream"]), plan


def save_shadow_records(records: ShadowRecords, path) -> None:
    """Compact binary log: JSON header line, then per-record bases and packed bits."""
    header = {
        "format": "shadow-records",
        "version": _LOG_VERSION,
        "count": len(records),
        "n": records.n,
        "stream": records.stream,
    }
    packed = np.packbits(records.bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for i in range(len(records)):
            fh.write(records.bases[i].tobytes())
            fh.write(packed[i].tobytes())


def load_shadow_records(path) -> ShadowRecords:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "shadow-records" or header.get("version") != _LOG_VERSION:
            raise ValidationError(f"not a shadow-record log: {header.get('format')!r}")
        count, n = header["count"], header["n"]
        packed_len = -(-n // 8)
        bases = np.empty((count, n), dtype=np.uint8)
        bits = np.empty((count, n), dtype=np.uint8)
        for i in range(count):
            bases[i] = np.frombuffer(fh.read(n), dtype=np.uint8)
            packed = np.frombuffer(fh.read(packed_len), dtype=np.uint8)
            bits[i] = np.unpackbits(packed)[:n]
    return ShadowRecords(bases, bits, header["stream"])
