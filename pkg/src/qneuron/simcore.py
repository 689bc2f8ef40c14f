"""Dense statevector simulation.

Basis index ``j`` is read as an ``n``-bit string with qubit 0 as the most
significant bit, so ``|q0 q1 ... q_{n-1}>`` has index
``q0 * 2**(n-1) + ... + q_{n-1}``.  Internally a state of ``n`` qubits is
viewed as an ``(2,) * n`` tensor whose axis ``q`` is qubit ``q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

MAX_QUBITS = 24

SINGLE_QUBIT_KINDS = {"H", "X", "Z", "RY", "U3", "P"}
MULTI_QUBIT_KINDS = {"CNOT", "CZ", "MCZ", "MCX"}
GATE_KINDS = SINGLE_QUBIT_KINDS | MULTI_QUBIT_KINDS

_N_PARAMS = {"H": 0, "X": 0, "Z": 0, "RY": 1, "U3": 3, "P": 1,
             "CNOT": 0, "CZ": 0, "MCZ": 0, "MCX": 0}

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class DimensionError(ValueError):
    """Raised when registers, circuits or parameter vectors disagree in size."""


SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class StateVector:
    """Unit-norm amplitudes of an ``n_qubits`` register.

    The amplitude array is made read-only on construction; operations
    return new states.
    """

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != 2 ** self.n_qubits:
            raise DimensionError(
                f"expected {2 ** self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amplitudes, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        n = int(round(np.log2(amps.shape[0]))) if amps.shape[0] else -1
        if n < 1 or 2 ** n != amps.shape[0]:
            raise DimensionError(f"length {amps.shape[0]} is not a power of two >= 2")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def allclose(self, other: "StateVector", atol: float = 1e-10) -> bool:
        return self.n_qubits == other.n_qubits and np.allclose(
            self.amplitudes, other.amplitudes, rtol=0.0, atol=atol
        )


@dataclass(frozen=True)
class Gate:
    """A gate application.

    ``qubits`` ordering: ``CNOT`` is ``(control, target)``; ``MCX`` lists the
    controls then the target last; ``CZ`` and ``MCZ`` are symmetric.
    ``U3`` is the axis-angle rotation ``exp(-i (a, b, c) . sigma / 2)``,
    not the Euler-angle convention.
    """

    kind: str
    qubits: tuple
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.params) != _N_PARAMS[self.kind]:
            raise ValueError(f"{self.kind} takes {_N_PARAMS[self.kind]} parameters, got {len(self.params)}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        k = len(self.qubits)
        if self.kind in SINGLE_QUBIT_KINDS and k != 1:
            raise ValueError(f"{self.kind} acts on exactly one qubit")
        if self.kind in ("CNOT", "CZ") and k != 2:
            raise ValueError(f"{self.kind} acts on exactly two qubits")
        if self.kind == "MCZ" and k < 1:
            raise ValueError("MCZ needs at least one qubit")
        if self.kind == "MCX" and k < 2:
            raise ValueError("MCX needs at least one control and a target")

    def inverse(self) -> "Gate":
        if self.kind == "RY":
            return Gate("RY", self.qubits, (-self.params[0],))
        if self.kind == "P":
            return Gate("P", self.qubits, (-self.params[0],))
        if self.kind == "U3":
            return Gate("U3", self.qubits, tuple(-p for p in self.params))
        return self

    def __str__(self):
        args = ",".join(f"{p:.6g}" for p in self.params)
        head = f"{self.kind}({args})" if args else self.kind
        return f"{head} {list(self.qubits)}"


# Short constructors.
def h(q): return Gate("H", (q,))
def x(q): return Gate("X", (q,))
def z(q): return Gate("Z", (q,))
def ry(theta, q): return Gate("RY", (q,), (theta,))
def phase(theta, q): return Gate("P", (q,), (theta,))
def u3(alpha, beta, gamma, q): return Gate("U3", (q,), (alpha, beta, gamma))
def cnot(control, target): return Gate("CNOT", (control, target))
def cz(a, b): return Gate("CZ", (a, b))
def mcz(qubits): return Gate("MCZ", tuple(qubits))
def mcx(controls, target): return Gate("MCX", tuple(controls) + (target,))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            _check_qubits(g, self.n_qubits)

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise DimensionError("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(g.inverse() for g in reversed(self.gates)))

    def count_ops(self) -> dict:
        counts: dict = {}
        for g in self.gates:
            counts[g.kind] = counts.get(g.kind, 0) + 1
        return counts

    def depth(self) -> int:
        return circuit_depth(self)


def _check_qubits(gate: Gate, n_qubits: int):
    for q in gate.qubits:
        if not 0 <= q < n_qubits:
            raise IndexError(f"qubit {q} out of range for {n_qubits}-qubit register ({gate})")


def single_qubit_matrix(gate: Gate) -> np.ndarray:
    kind = gate.kind
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2
    if kind == "X":
        return _PAULI_X.copy()
    if kind == "Z":
        return _PAULI_Z.copy()
    if kind == "RY":
        return ry_matrix(gate.params[0]).astype(complex)
    if kind == "P":
        return np.array([[1, 0], [0, np.exp(1j * gate.params[0])]], dtype=complex)
    if kind == "U3":
        return axis_rotation_matrix(*gate.params)
    raise ValueError(f"{kind} is not a single-qubit gate")


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def axis_rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``exp(-i (alpha X + beta Y + gamma Z) / 2)`` in closed form."""
    r = np.sqrt(alpha * alpha + beta * beta + gamma * gamma)
    if r < 1e-15:
        return np.eye(2, dtype=complex)
    nx, ny, nz = alpha / r, beta / r, gamma / r
    gen = nx * _PAULI_X + ny * _PAULI_Y + nz * _PAULI_Z
    return np.cos(r / 2) * np.eye(2, dtype=complex) - 1j * np.sin(r / 2) * gen


def zero_state(n_qubits: int) -> StateVector:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise DimensionError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(2 ** n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def basis_state(n_qubits: int, index: int) -> StateVector:
    if not 0 <= index < 2 ** n_qubits:
        raise IndexError(f"basis index {index} out of range")
    amps = np.zeros(2 ** n_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(n_qubits, amps)


def _apply_to_tensor(psi: np.ndarray, gate: Gate) -> np.ndarray:
    """Apply ``gate`` to a ``(2,)*n`` tensor, returning a new tensor."""
    n = psi.ndim
    kind = gate.kind
    if kind in ("Z", "P", "CZ", "MCZ"):
        out = psi.copy()
        idx = [slice(None)] * n
        if kind in ("Z", "P"):
            idx[gate.qubits[0]] = 1
            factor = -1.0 if kind == "Z" else np.exp(1j * gate.params[0])
        else:
            for q in gate.qubits:
                idx[q] = 1
            factor = -1.0
        out[tuple(idx)] *= factor
        return out
    if kind in ("CNOT", "MCX"):
        *controls, target = gate.qubits
        out = psi.copy()
        idx = [slice(None)] * n
        for c in controls:
            idx[c] = 1
        idx = tuple(idx)
        axis = target - sum(1 for c in controls if c < target)
        out[idx] = np.flip(psi[idx], axis=axis)
        return out
    if kind == "X":
        return np.flip(psi, axis=gate.qubits[0]).copy()
    q = gate.qubits[0]
    mat = single_qubit_matrix(gate)
    return np.moveaxis(np.tensordot(mat, psi, axes=([1], [q])), 0, q)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    _check_qubits(gate, state.n_qubits)
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    return StateVector(n, _apply_to_tensor(psi, gate).reshape(-1))


def simulate(circuit: Circuit, state: StateVector) -> StateVector:
    if circuit.n_qubits != state.n_qubits:
        raise DimensionError(
            f"circuit acts on {circuit.n_qubits} qubits, state has {state.n_qubits}"
        )
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    for g in circuit.gates:
        psi = _apply_to_tensor(psi, g)
    return StateVector(n, psi.reshape(-1))


def gate_unitary(gate: Gate, n_qubits: int) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix of ``gate`` embedded in ``n_qubits``."""
    _check_qubits(gate, n_qubits)
    dim = 2 ** n_qubits
    cols = np.eye(dim, dtype=complex).reshape((dim,) + (2,) * n_qubits)
    out = np.empty((dim, dim), dtype=complex)
    for k in range(dim):
        out[:, k] = _apply_to_tensor(cols[k], gate).reshape(-1)
    return out


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    dim = 2 ** n
    # Columns are pushed through the circuit in one batch: axis 0 enumerates
    # input basis states, so gate axes are shifted by one.
    batch = np.eye(dim, dtype=complex).reshape((dim,) + (2,) * n)
    for g in circuit.gates:
        shifted = Gate(g.kind, tuple(q + 1 for q in g.qubits), g.params)
        batch = _apply_to_tensor(batch, shifted)
    return batch.reshape(dim, dim).T


def inner_product(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``, conjugating the first argument."""
    if a.n_qubits != b.n_qubits:
        raise DimensionError(f"{a.n_qubits}-qubit vs {b.n_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def basis_probability(state: StateVector, index: int) -> float:
    if not 0 <= index < state.dim:
        raise IndexError(f"basis index {index} out of range for {state.n_qubits} qubits")
    return float(abs(state.amplitudes[index]) ** 2)


def qubit_bits(n_qubits: int, qubit: int) -> np.ndarray:
    """Value of ``qubit`` in every basis index (MSB-first convention)."""
    return (np.arange(2 ** n_qubits) >> (n_qubits - 1 - qubit)) & 1


def marginal_one_probability(state: StateVector, qubit: int) -> float:
    """Reduced-density-matrix element ``<1|rho_qubit|1>``."""
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    psi = state.amplitudes.reshape((2,) * state.n_qubits)
    return float(np.sum(np.abs(np.take(psi, 1, axis=qubit)) ** 2))


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator; an existing Generator is passed through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample_counts(state: StateVector, shots: int, seed: SeedLike = None) -> dict:
    """Multinomial measurement histogram ``{basis index: count}``.

    With an integer seed the result is reproducible across platforms
    (PCG64 bit generator, numpy's multinomial sampler).
    """
    if isinstance(shots, bool) or int(shots) != shots or shots < 1:
        raise ValueError(f"shots must be a positive integer, got {shots!r}")
    rng = make_rng(seed)
    p = state.probabilities()
    p = p / p.sum()
    counts = rng.multinomial(int(shots), p)
    return {int(j): int(c) for j, c in enumerate(counts) if c}


def circuit_depth(circuit: Circuit) -> int:
    """Greedy as-soon-as-possible layer count.

    Each gate lands one layer after the latest earlier gate that shares a
    qubit with it; gates on disjoint qubits share layers.
    """
    level = [0] * circuit.n_qubits
    depth = 0
    for g in circuit.gates:
        layer = 1 + max(level[q] for q in g.qubits)
        for q in g.qubits:
            level[q] = layer
        depth = max(depth, layer)
    return depth


def random_state(n_qubits: int, seed: SeedLike = None) -> StateVector:
    rng = make_rng(seed)
    v = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
    return StateVector(n_qubits, v / np.linalg.norm(v))


def tensor_product(states: Iterable[StateVector]) -> StateVector:
    states = list(states)
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.kron(amps, s.amplitudes)
    return StateVector(sum(s.n_qubits for s in states), amps)


def apply_gates(state: StateVector, gates: Sequence[Gate]) -> StateVector:
    return simulate(Circuit(state.n_qubits, tuple(gates)), state)
