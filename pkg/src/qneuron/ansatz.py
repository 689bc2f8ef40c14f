"""Hardware-efficient ansatz circuits for approximating ``U_w``.

Parameter layouts (all angles in radians):

* global: ``N * (n + 1)`` values, rotation layer ``c`` occupying
  ``params[c*N:(c+1)*N]``; layer 0 acts first on the state.
* local: for ``j = 1 .. N-1`` the block of layer ``j`` (acting on the last
  ``N - j + 1`` qubits) holds ``(n'_j + 1) * (N - j + 1)`` values, laid out
  like a global block; the three angles of the final axis-angle rotation
  on the last qubit close the vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .simcore import (
    Circuit,
    DimensionError,
    Gate,
    _apply_to_tensor,
    axis_rotation_matrix,
    cnot,
    ry,
    ry_matrix,
    u3,
)

ENTANGLERS = ("all_to_all", "nearest_neighbour")
MODES = ("global", "local")
_ENTANGLER_ALIASES = {"a2a": "all_to_all", "all_to_all": "all_to_all",
                      "nn": "nearest_neighbour", "nearest_neighbour": "nearest_neighbour",
                      "nearest_neighbor": "nearest_neighbour"}


def normalize_entangler(name: str) -> str:
    try:
        return _ENTANGLER_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown entangler {name!r}; use a2a or nn") from None


def parse_structure(text: str) -> Tuple[int, ...]:
    """``'321'`` or ``'3,2,1'`` -> ``(3, 2, 1)``; first entry is the widest layer."""
    text = text.strip()
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
    else:
        parts = list(text)
    if not parts or any(not p.isdigit() for p in parts):
        raise ValueError(f"malformed structure string {text!r}")
    return tuple(int(p) for p in parts)


def format_structure(structure: Sequence[int]) -> str:
    if all(s < 10 for s in structure):
        return "".join(str(s) for s in structure)
    return ",".join(str(s) for s in structure)


def stepwise_structure(n_qubits: int) -> Tuple[int, ...]:
    """Decreasing cycles ``(N-1, N-2, ..., 1)``."""
    return tuple(range(n_qubits - 1, 0, -1))


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    mode: str = "global"
    entangler: str = "all_to_all"
    cycles: int = 0
    structure: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entangler", normalize_entangler(self.entangler))
        if isinstance(self.structure, str):
            object.__setattr__(self, "structure", parse_structure(self.structure))
        object.__setattr__(self, "structure", tuple(int(s) for s in self.structure))
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "global":
            if self.cycles < 0:
                raise ValueError("cycles must be >= 0")
            if self.cycles > 0 and self.n_qubits < 2:
                raise ValueError("entangling cycles need at least two qubits")
        else:
            if self.n_qubits < 2:
                raise ValueError("the local ansatz needs at least two qubits")
            if len(self.structure) != self.n_qubits - 1:
                raise ValueError(
                    f"structure needs {self.n_qubits - 1} entries for {self.n_qubits} qubits, "
                    f"got {len(self.structure)}"
                )
            if any(s < 0 for s in self.structure):
                raise ValueError("structure entries must be >= 0")

    @classmethod
    def global_(cls, n_qubits, cycles, entangler="all_to_all"):
        return cls(n_qubits, "global", entangler, cycles=cycles)

    @classmethod
    def local(cls, n_qubits, structure, entangler="all_to_all"):
        if isinstance(structure, str):
            structure = parse_structure(structure)
        return cls(n_qubits, "local", entangler, structure=tuple(structure))

    def layer_qubits(self, j: int) -> List[int]:
        """0-based qubits touched by local layer ``j`` (1-based, as in ``V_j``)."""
        self._check_layer(j)
        return list(range(j - 1, self.n_qubits))

    def layer_cycles(self, j: int) -> int:
        self._check_layer(j)
        return self.structure[j - 1]

    def layer_size(self, j: int) -> int:
        return (self.n_qubits - j + 1) * (self.layer_cycles(j) + 1)

    def _check_layer(self, j: int):
        if self.mode != "local":
            raise ValueError("layers exist only for local ansatzes")
        if not 1 <= j <= self.n_qubits - 1:
            raise ValueError(f"layer index must be in [1, {self.n_qubits - 1}], got {j}")

    def describe(self) -> str:
        ent = "a2a" if self.entangler == "all_to_all" else "nn"
        if self.mode == "global":
            return f"global/{ent}/N={self.n_qubits}/n={self.cycles}"
        return f"local/{ent}/N={self.n_qubits}/s={format_structure(self.structure)}"


def parameter_count(spec: AnsatzSpec) -> int:
    n = spec.n_qubits
    if spec.mode == "global":
        return n * (1 + spec.cycles)
    return sum(q + q * spec.structure[n - q] for q in range(2, n + 1)) + 3


def split_local_params(spec: AnsatzSpec, params) -> Tuple[List[np.ndarray], np.ndarray]:
    params = _as_params(params, parameter_count(spec))
    blocks, pos = [], 0
    for j in range(1, spec.n_qubits):
        size = spec.layer_size(j)
        blocks.append(params[pos:pos + size])
        pos += size
    return blocks, params[pos:pos + 3]


def join_local_params(blocks: Sequence[np.ndarray], final) -> np.ndarray:
    return np.concatenate([np.ravel(b) for b in blocks] + [np.ravel(final)])


def _as_params(params, expected: int) -> np.ndarray:
    arr = np.asarray(params, dtype=float).ravel()
    if arr.size != expected:
        raise DimensionError(f"expected {expected} parameters, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameters must be finite")
    return arr


def rotation_cycle(angles, qubits: Sequence[int]) -> List[Gate]:
    angles = np.asarray(angles, dtype=float).ravel()
    if angles.size != len(qubits):
        raise DimensionError(f"{angles.size} angles for {len(qubits)} qubits")
    return [ry(t, q) for t, q in zip(angles, qubits)]


def entangler(scheme: str, qubits: Sequence[int]) -> List[Gate]:
    scheme = normalize_entangler(scheme)
    qubits = list(qubits)
    if len(qubits) < 2:
        raise ValueError("an entangler needs at least two qubits")
    if scheme == "all_to_all":
        return [cnot(a, b) for i, a in enumerate(qubits) for b in qubits[i + 1:]]
    return [cnot(a, b) for a, b in zip(qubits, qubits[1:])]


def _block_gates(scheme: str, qubits: Sequence[int], cycles: int, params: np.ndarray) -> List[Gate]:
    k = len(qubits)
    gates = rotation_cycle(params[:k], qubits)
    for c in range(1, cycles + 1):
        gates += entangler(scheme, qubits)
        gates += rotation_cycle(params[c * k:(c + 1) * k], qubits)
    return gates


def build_global(spec: AnsatzSpec, params) -> Circuit:
    if spec.mode != "global":
        raise ValueError("build_global needs a global spec")
    params = _as_params(params, parameter_count(spec))
    qubits = list(range(spec.n_qubits))
    return Circuit(spec.n_qubits, tuple(_block_gates(spec.entangler, qubits, spec.cycles, params)))


def build_local_layer(j: int, spec: AnsatzSpec, params_j) -> Circuit:
    params_j = _as_params(params_j, spec.layer_size(j))
    gates = _block_gates(spec.entangler, spec.layer_qubits(j), spec.layer_cycles(j), params_j)
    return Circuit(spec.n_qubits, tuple(gates))


def build_final_rotation(alpha: float, beta: float, gamma: float, qubit: int = 0) -> Gate:
    return u3(alpha, beta, gamma, qubit)


def build_local(spec: AnsatzSpec, params) -> Circuit:
    blocks, final = split_local_params(spec, params)
    circ = Circuit(spec.n_qubits)
    for j, block in enumerate(blocks, 1):
        circ = circ + build_local_layer(j, spec, block)
    last = Circuit(spec.n_qubits, (build_final_rotation(*final, qubit=spec.n_qubits - 1),))
    return circ + last


def build_ansatz(spec: AnsatzSpec, params) -> Circuit:
    return build_global(spec, params) if spec.mode == "global" else build_local(spec, params)


def ansatz_depth(spec: AnsatzSpec) -> int:
    """Depth of the built circuit; independent of the angle values."""
    return build_ansatz(spec, np.zeros(parameter_count(spec))).depth()


# -- compiled evaluation -----------------------------------------------------

def entangler_permutation(scheme: str, k: int) -> np.ndarray:
    """Gather indices ``perm`` with ``(E psi)[i] = psi[perm[i]]`` on ``k`` qubits."""
    idx = np.arange(2 ** k, dtype=float).reshape((2,) * k)
    for g in entangler(scheme, range(k)):
        idx = _apply_to_tensor(idx, g)
    return idx.reshape(-1).astype(np.intp)


def ry_layer_matrix(angles) -> np.ndarray:
    """``RY(a_0) x RY(a_1) x ...`` with the first angle on the most significant qubit."""
    return reduce(np.kron, [ry_matrix(t) for t in angles])


class BlockProgram:
    """Fast evaluation of a rotation/entangler block on the trailing qubits.

    Equivalent to simulating :func:`build_global` (``first == 0``) or
    :func:`build_local_layer` but uses one gather per entangler and one
    small tensor contraction per rotation.  Real input amplitudes stay
    real.
    """

    def __init__(self, n_qubits: int, first: int, cycles: int, scheme: str):
        self.n_qubits = n_qubits
        self.first = first
        self.k = n_qubits - first
        self.cycles = cycles
        self.n_params = self.k * (cycles + 1)
        self.perm = entangler_permutation(scheme, self.k) if cycles else None

    def apply(self, psi: np.ndarray, params: np.ndarray) -> np.ndarray:
        k = self.k
        v = psi.reshape(2 ** self.first, 2 ** k)
        v = self._rotate(v, params[:k])
        for c in range(1, self.cycles + 1):
            v = v[:, self.perm]
            v = self._rotate(v, params[c * k:(c + 1) * k])
        return v.reshape(-1)

    def _rotate(self, v: np.ndarray, angles) -> np.ndarray:
        # Contract one 2x2 rotation per qubit, always on the last tensor axis:
        # each contracted axis moves to the front, so after k steps the qubit
        # axes are back in order with the row axis last.
        k = self.k
        rows = v.shape[0]
        cos, sin = np.cos(np.multiply(angles, 0.5)), np.sin(np.multiply(angles, 0.5))
        w = v.reshape((rows,) + (2,) * k)
        for i in range(k - 1, -1, -1):
            r = np.array([[cos[i], -sin[i]], [sin[i], cos[i]]])
            w = np.tensordot(r, w, axes=([1], [k]))
        return np.moveaxis(w, -1, 0).reshape(rows, -1)


def global_program(spec: AnsatzSpec) -> BlockProgram:
    return BlockProgram(spec.n_qubits, 0, spec.cycles, spec.entangler)


def layer_program(spec: AnsatzSpec, j: int) -> BlockProgram:
    return BlockProgram(spec.n_qubits, j - 1, spec.layer_cycles(j), spec.entangler)


def apply_final_rotation(psi: np.ndarray, angles) -> np.ndarray:
    u = axis_rotation_matrix(*angles)
    return (psi.reshape(-1, 2) @ u.T).reshape(-1)


def evaluate_ansatz(spec: AnsatzSpec, params, psi: np.ndarray) -> np.ndarray:
    """Output amplitudes of the full ansatz on input amplitudes ``psi``."""
    if spec.mode == "global":
        return global_program(spec).apply(psi, _as_params(params, parameter_count(spec)))
    blocks, final = split_local_params(spec, params)
    for j, block in enumerate(blocks, 1):
        psi = layer_program(spec, j).apply(psi, block)
    return apply_final_rotation(psi, final)


def zero_params(spec: AnsatzSpec) -> np.ndarray:
    return np.zeros(parameter_count(spec))


def random_params(spec: AnsatzSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng or np.random.default_rng()
    return rng.uniform(0.0, 2 * np.pi, parameter_count(spec))
