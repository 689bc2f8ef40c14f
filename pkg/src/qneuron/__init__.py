"""Simulation and variational training of quantum McCulloch-Pitts neurons."""

__version__ = "0.1.0"

from .encoding import BinaryPattern, build_ui_circuit, build_uw_circuit, cross_weights, label_to_pattern
from .neuron import NeuronConfig, circuit_activation_probability, classical_activation_probability
from .simcore import Circuit, Gate, StateVector, simulate, zero_state

__all__ = [
    "BinaryPattern",
    "Circuit",
    "Gate",
    "NeuronConfig",
    "StateVector",
    "build_ui_circuit",
    "build_uw_circuit",
    "circuit_activation_probability",
    "classical_activation_probability",
    "cross_weights",
    "label_to_pattern",
    "simulate",
    "zero_state",
]
