"""Quantum McCulloch-Pitts neuron.

The activation probability of input ``i`` against weights ``w`` is the
population of ``|1...1>`` after ``U_w`` acts on the encoded input, which
equals ``(i . w / m)**2`` when ``U_w`` is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ansatz as az
from .encoding import BinaryPattern, build_ui_circuit, build_uw_circuit, encode_state
from .simcore import (
    Circuit,
    DimensionError,
    SeedLike,
    basis_probability,
    mcx,
    sample_counts,
    simulate,
    zero_state,
)

UW_IMPLS = ("exact_hypergraph", "variational_global", "variational_local")


class ConfigurationError(ValueError):
    pass


@dataclass
class NeuronConfig:
    """Weights plus the choice of ``U_w`` realization.

    Variational realizations need ``ansatz`` and ``trained_params``; for the
    local mode ``trained_params`` is the flat concatenation of the layer
    parameters followed by the three final-rotation angles.
    """

    weights: BinaryPattern
    uw_impl: str = "exact_hypergraph"
    ansatz: Optional[az.AnsatzSpec] = None
    trained_params: Optional[np.ndarray] = field(default=None, repr=False)
    ancilla_mode: bool = False

    def __post_init__(self):
        if self.uw_impl not in UW_IMPLS:
            raise ConfigurationError(f"uw_impl must be one of {UW_IMPLS}, got {self.uw_impl!r}")
        if self.uw_impl == "exact_hypergraph":
            return
        if self.ansatz is None or self.trained_params is None:
            raise ConfigurationError(f"{self.uw_impl} needs an ansatz spec and trained parameters")
        expected = "global" if self.uw_impl == "variational_global" else "local"
        if self.ansatz.mode != expected:
            raise ConfigurationError(f"{self.uw_impl} needs a {expected} ansatz")
        if self.ansatz.n_qubits != self.weights.n_qubits:
            raise ConfigurationError("ansatz width differs from the weight register")
        self.trained_params = np.asarray(self.trained_params, dtype=float).ravel()
        n = az.parameter_count(self.ansatz)
        if self.trained_params.size != n:
            raise ConfigurationError(f"expected {n} trained parameters, got {self.trained_params.size}")


def uw_circuit(cfg: NeuronConfig) -> Circuit:
    if cfg.uw_impl == "exact_hypergraph":
        return build_uw_circuit(cfg.weights)
    return az.build_ansatz(cfg.ansatz, cfg.trained_params)


def classical_activation_probability(i: BinaryPattern, w: BinaryPattern) -> float:
    return (i.dot(w) / i.m) ** 2


def classical_output(i: BinaryPattern, w: BinaryPattern, threshold: float) -> int:
    """Integrate-and-fire output: +1 iff ``sum_j w_j i_j >= threshold``."""
    return 1 if i.dot(w) >= threshold else -1


def thresholded_activation(probability: float, threshold: float) -> int:
    """1 iff the activation probability reaches a caller-chosen threshold."""
    return 1 if probability >= threshold else 0


def _check(i: BinaryPattern, cfg: NeuronConfig):
    if i.m != cfg.weights.m:
        raise DimensionError(f"input has {i.m} entries, weights have {cfg.weights.m}")


def circuit_activation_probability(i: BinaryPattern, cfg: NeuronConfig) -> float:
    _check(i, cfg)
    out = simulate(uw_circuit(cfg), encode_state(i))
    return basis_probability(out, i.m - 1)


def ancilla_circuit(i: BinaryPattern, cfg: NeuronConfig) -> Circuit:
    """``U_i``, ``U_w`` on the data qubits, then an N-controlled NOT onto the ancilla."""
    _check(i, cfg)
    n = i.n_qubits
    data = build_ui_circuit(i) + uw_circuit(cfg)
    return Circuit(n + 1, data.gates + (mcx(range(n), n),))


def ancilla_probability(i: BinaryPattern, cfg: NeuronConfig) -> float:
    """Exact probability of reading the ancilla in ``|1>``."""
    n = i.n_qubits
    out = simulate(ancilla_circuit(i, cfg), zero_state(n + 1))
    return float(np.sum(out.probabilities()[1::2]))


def ancilla_activation(i: BinaryPattern, cfg: NeuronConfig, shots: int, seed: SeedLike = None) -> float:
    if not cfg.ancilla_mode:
        raise ConfigurationError("ancilla_activation needs ancilla_mode=True")
    n = i.n_qubits
    out = simulate(ancilla_circuit(i, cfg), zero_state(n + 1))
    counts = sample_counts(out, shots, seed)
    # The ancilla is the last (least significant) qubit.
    ones = sum(c for j, c in counts.items() if j & 1)
    return ones / shots
