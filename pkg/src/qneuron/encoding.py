"""Binary patterns and their hypergraph-state circuits.

A pattern of ``m = 2**N`` entries in {-1, +1} is stored in the signs of an
equal-weight superposition.  Labels follow ``b_j = (-1)**bit_j(k)`` with
bit 0 the most significant of an ``m``-bit string, so ``k = 0`` is the
all-white (+1) pattern.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .simcore import (
    Circuit,
    DimensionError,
    Gate,
    StateVector,
    cnot,
    h,
    mcz,
    phase,
    x,
    z,
)

MAX_ENCODING_QUBITS = 7

# Cross on the north-west corner of a 4x4 image.
CROSS_LABEL = 20032


class PatternError(ValueError):
    """Raised for malformed patterns or pattern files."""


@dataclass(frozen=True)
class BinaryPattern:
    entries: tuple

    def __post_init__(self):
        entries = tuple(int(e) for e in np.asarray(self.entries).ravel())
        if any(e not in (-1, 1) for e in entries):
            raise PatternError("pattern entries must be -1 or +1")
        m = len(entries)
        if m < 2 or m & (m - 1):
            raise PatternError(f"pattern length must be a power of two >= 2, got {m}")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def n_qubits(self) -> int:
        return self.m.bit_length() - 1

    @property
    def label(self) -> int:
        return pattern_to_label(self)

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)

    def dot(self, other: "BinaryPattern") -> int:
        if self.m != other.m:
            raise DimensionError(f"pattern lengths differ: {self.m} vs {other.m}")
        return int(sum(a * b for a, b in zip(self.entries, other.entries)))

    def negated(self) -> "BinaryPattern":
        return BinaryPattern(tuple(-e for e in self.entries))

    def flipped(self, positions: Iterable[int]) -> "BinaryPattern":
        e = list(self.entries)
        for j in positions:
            e[j] = -e[j]
        return BinaryPattern(tuple(e))

    def to_string(self) -> str:
        return "".join("+" if e > 0 else "-" for e in self.entries)

    def image(self) -> np.ndarray:
        """Square (or 2:1) pixel grid view of the entries, row-major."""
        m = self.m
        rows = 2 ** (self.n_qubits // 2)
        return self.as_array().reshape(rows, m // rows).astype(int)


def label_to_pattern(k: int, m: int) -> BinaryPattern:
    if m < 2 or m & (m - 1):
        raise PatternError(f"m must be a power of two >= 2, got {m}")
    if not 0 <= k < 2 ** m:
        raise ValueError(f"label {k} out of range for m={m}")
    bits = [(k >> (m - 1 - j)) & 1 for j in range(m)]
    return BinaryPattern(tuple(1 - 2 * b for b in bits))


def pattern_to_label(p: BinaryPattern) -> int:
    k = 0
    for e in p.entries:
        k = (k << 1) | (1 if e < 0 else 0)
    return k


def encode_state(p: BinaryPattern) -> StateVector:
    """Direct amplitude encoding ``sum_j p_j |j> / sqrt(m)``."""
    return StateVector(p.n_qubits, p.as_array() / np.sqrt(p.m))


def cross_weights(n_qubits: int, label: int = CROSS_LABEL) -> BinaryPattern:
    """The 16-pixel cross resized to ``2**n_qubits`` entries.

    Larger registers prepend zero bits to the label, so the cross occupies
    the last 16 entries.  Smaller registers keep the leading ``m`` bits of
    the 16-bit string, i.e. the first rows of the image.
    """
    m = 2 ** n_qubits
    if m >= 16:
        return label_to_pattern(label, m)
    return label_to_pattern(label >> (16 - m), m)


@dataclass(frozen=True)
class HypergraphCircuitPlan:
    hyperedges: tuple
    includes_initial_hadamards: bool = False
    includes_final_h_and_x: bool = False

    def __post_init__(self):
        edges = tuple(tuple(e) for e in self.hyperedges)
        if len({frozenset(e) for e in edges}) != len(edges):
            raise PatternError("duplicate hyperedge")
        object.__setattr__(self, "hyperedges", edges)


def hypergraph_edges(p: BinaryPattern) -> List[tuple]:
    """Hyperedges selected by the iterative sign-flip routine.

    Sweeps P = 1..N and j = 0..m-1; whenever ``|j>`` has exactly P ones and
    the (partially corrected) sign at j is negative, the ones of ``j`` form a
    hyperedge and every index containing those ones has its sign flipped.
    A negative first entry is the constant term of the phase polynomial and
    shows up as the empty edge ``()``, listed first.
    """
    n, m = p.n_qubits, p.m
    signs = np.array(p.entries)
    idx = np.arange(m)
    weight = np.array([bin(j).count("1") for j in range(m)])
    edges = []
    for ones in range(0, n + 1):
        for j in range(m):
            if weight[j] == ones and signs[j] == -1:
                edges.append(tuple(q for q in range(n) if (j >> (n - 1 - q)) & 1))
                signs[(idx & j) == j] *= -1
    if np.any(signs != 1):
        raise AssertionError("sign-flip routine left uncorrected entries")
    return edges


def plan_for(p: BinaryPattern, mode: str) -> HypergraphCircuitPlan:
    edges = tuple(hypergraph_edges(p))
    if mode == "ui":
        return HypergraphCircuitPlan(edges, includes_initial_hadamards=True)
    if mode == "uw":
        return HypergraphCircuitPlan(edges, includes_final_h_and_x=True)
    raise ValueError(f"mode must be 'ui' or 'uw', got {mode!r}")


def edge_gates(edge: Sequence[int]) -> List[Gate]:
    """Gates flipping the sign of every basis state containing ``edge``.

    The empty edge flips every sign, i.e. multiplies by ``-1``; it is
    realized as ``Z X Z X = -I`` on qubit 0 so the circuit stays exact.
    """
    if len(edge) == 0:
        return [x(0), z(0), x(0), z(0)]
    if len(edge) == 1:
        return [z(edge[0])]
    return [mcz(edge)]


def plan_to_circuit(plan: HypergraphCircuitPlan, n_qubits: int) -> Circuit:
    gates = []
    if plan.includes_initial_hadamards:
        gates += [h(q) for q in range(n_qubits)]
    for e in plan.hyperedges:
        gates += edge_gates(e)
    if plan.includes_final_h_and_x:
        gates += [h(q) for q in range(n_qubits)]
        gates += [x(q) for q in range(n_qubits)]
    return Circuit(n_qubits, tuple(gates))


def _check_size(p: BinaryPattern):
    if p.n_qubits > MAX_ENCODING_QUBITS:
        raise PatternError(f"at most {MAX_ENCODING_QUBITS} qubits supported, got {p.n_qubits}")


def build_ui_circuit(p: BinaryPattern) -> Circuit:
    """Exact preparation circuit taking ``|0...0>`` to the encoded state."""
    _check_size(p)
    return plan_to_circuit(plan_for(p, "ui"), p.n_qubits)


def build_uw_circuit(w: BinaryPattern) -> Circuit:
    """Exact weight unitary taking the encoded ``w`` state to ``|1...1>``."""
    _check_size(w)
    return plan_to_circuit(plan_for(w, "uw"), w.n_qubits)


# -- multi-controlled Z without ancillas -------------------------------------

MAX_MCZ_SIZE = 7


def _gray_code(bits: int) -> List[int]:
    return [g ^ (g >> 1) for g in range(2 ** bits)]


def decompose_mcz(size: int, qubits: Optional[Sequence[int]] = None) -> List[Gate]:
    """CNOT + single-qubit expansion of a Z controlled on ``size - 1`` qubits.

    The diagonal ``exp(i pi x_0 x_1 ... x_{s-1})`` is written as a sum of
    parity phases ``pi (-1)**(|S|+1) / 2**(s-1)`` over non-empty subsets S.
    For each target ``t`` (last qubit first) a Gray-code walk over the
    qubits before ``t`` accumulates every parity ending at ``t`` on the
    target with one CNOT per step; a phase gate is applied at each stop and
    the walk returns the target to its original value.  Uses
    ``2**s - 2`` CNOTs and ``2**s - 1`` phase gates for ``s >= 3``; the
    two-qubit case is H-CNOT-H on the second qubit.  No global phase.
    """
    if not 1 <= size <= MAX_MCZ_SIZE:
        raise ValueError(f"MCZ size must be in [1, {MAX_MCZ_SIZE}], got {size}")
    qs = list(range(size)) if qubits is None else list(qubits)
    if len(qs) != size:
        raise DimensionError(f"expected {size} qubits, got {len(qs)}")
    if size == 1:
        return [z(qs[0])]
    if size == 2:
        return [h(qs[1]), cnot(qs[0], qs[1]), h(qs[1])]
    unit = np.pi / 2 ** (size - 1)
    gates: List[Gate] = []
    for t in range(size - 1, -1, -1):
        code = _gray_code(t)
        for step, g in enumerate(code):
            members = bin(g).count("1") + 1
            gates.append(phase(unit if members % 2 else -unit, qs[t]))
            nxt = code[(step + 1) % len(code)]
            if nxt != g:
                changed = (g ^ nxt).bit_length() - 1
                gates.append(cnot(qs[changed], qs[t]))
    return gates


def expand_gate(g: Gate) -> List[Gate]:
    if g.kind == "MCZ":
        return decompose_mcz(len(g.qubits), g.qubits)
    if g.kind == "CZ":
        return decompose_mcz(2, g.qubits)
    if g.kind == "MCX":
        *controls, target = g.qubits
        if not controls:
            return [x(target)]
        if len(controls) == 1:
            return [cnot(controls[0], target)]
        body = decompose_mcz(len(g.qubits), tuple(controls) + (target,))
        return [h(target)] + body + [h(target)]
    return [g]


def expand_to_decomposed(circuit: Circuit) -> Circuit:
    """Replace multi-controlled gates by CNOT + single-qubit sequences."""
    gates: List[Gate] = []
    for g in circuit.gates:
        gates.extend(expand_gate(g))
    return Circuit(circuit.n_qubits, tuple(gates))


def exact_uw_depth(w: BinaryPattern) -> int:
    return expand_to_decomposed(build_uw_circuit(w)).depth()


# -- pattern files ------------------------------------------------------------

_LABEL_RE = re.compile(r"^k:(\d+)$")
_SIGNS_RE = re.compile(r"^[+-]+$")


def parse_pattern(token: str, m: Optional[int] = None) -> BinaryPattern:
    """Parse ``k:<int>`` (needs ``m``) or an explicit ``+``/``-`` string."""
    token = token.strip()
    match = _LABEL_RE.match(token)
    if match:
        if m is None:
            raise PatternError("a decimal label needs the pattern length m")
        return label_to_pattern(int(match.group(1)), m)
    if _SIGNS_RE.match(token):
        if m is not None and len(token) != m:
            raise PatternError(f"expected {m} characters, got {len(token)}")
        return BinaryPattern(tuple(1 if c == "+" else -1 for c in token))
    raise PatternError(f"cannot parse pattern {token!r}")


def read_patterns(path, m: int) -> List[BinaryPattern]:
    """One pattern per non-blank line; ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_pattern(line, m))
        except (PatternError, ValueError) as exc:
            raise PatternError(f"{path}:{lineno}: {exc}") from None
    return out


def write_patterns(path, patterns: Iterable[BinaryPattern], as_labels: bool = False):
    lines = [f"k:{p.label}" if as_labels else p.to_string() for p in patterns]
    Path(path).write_text("\n".join(lines) + "\n")


def all_patterns(m: int) -> List[BinaryPattern]:
    return [label_to_pattern(k, m) for k in range(2 ** m)]


def subsets(n: int):
    for r in range(1, n + 1):
        yield from combinations(range(n), r)
