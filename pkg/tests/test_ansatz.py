import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qneuron import ansatz as az
from qneuron.simcore import Circuit, DimensionError, StateVector, basis_state, circuit_unitary, cnot, random_state, simulate, zero_state


@st.composite
def specs(draw, max_qubits=5, max_cycles=3):
    n = draw(st.integers(2, max_qubits))
    ent = draw(st.sampled_from(["a2a", "nn"]))
    if draw(st.booleans()):
        return az.AnsatzSpec.global_(n, draw(st.integers(0, max_cycles)), ent)
    structure = tuple(draw(st.integers(0, max_cycles)) for _ in range(n - 1))
    return az.AnsatzSpec.local(n, structure, ent)


def test_entangler_orderings():
    assert [g.qubits for g in az.entangler("nn", range(4))] == [(0, 1), (1, 2), (2, 3)]
    assert [g.qubits for g in az.entangler("a2a", range(4))] == [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert Circuit(4, tuple(az.entangler("nn", range(4)))).depth() == 3
    assert len(az.entangler("nn", [2, 3])) == 1
    with pytest.raises(ValueError):
        az.entangler("nn", [0])
    with pytest.raises(ValueError):
        az.entangler("ring", [0, 1])


def test_rotation_cycle_actions():
    out = simulate(Circuit(1, tuple(az.rotation_cycle([np.pi], [0]))), zero_state(1))
    assert np.allclose(out.amplitudes, [0, 1])
    out = simulate(Circuit(1, tuple(az.rotation_cycle([np.pi / 2], [0]))), zero_state(1))
    assert np.allclose(out.amplitudes, [2 ** -0.5, 2 ** -0.5])
    psi = random_state(3, seed=0)
    assert simulate(Circuit(3, tuple(az.rotation_cycle(np.zeros(3), range(3)))), psi).allclose(psi, 1e-12)
    with pytest.raises(DimensionError):
        az.rotation_cycle([0.1], [0, 1])


def test_final_rotation():
    assert np.allclose(circuit_unitary(Circuit(1, (az.build_final_rotation(0, 0, 0),))), np.eye(2))
    out = simulate(Circuit(1, (az.build_final_rotation(0, np.pi, 0),)), zero_state(1))
    assert np.allclose(out.amplitudes, [0, 1])


def test_global_layout():
    spec = az.AnsatzSpec.global_(4, 3)
    assert az.parameter_count(spec) == 16
    circ = az.build_global(spec, np.arange(16) * 0.1)
    ops = circ.count_ops()
    assert ops == {"RY": 16, "CNOT": 18}
    # first rotation layer acts first and uses params[0:4]
    assert [g.params[0] for g in circ.gates[:4]] == pytest.approx([0.0, 0.1, 0.2, 0.3])
    with pytest.raises(DimensionError):
        az.build_global(spec, np.zeros(15))


def test_global_zero_cycles_has_no_entangler():
    circ = az.build_global(az.AnsatzSpec.global_(3, 0), np.zeros(3))
    assert circ.count_ops() == {"RY": 3}


def test_zero_angle_global_is_cnot_cascade():
    spec = az.AnsatzSpec.global_(3, 2, "nn")
    u = circuit_unitary(az.build_global(spec, np.zeros(9)))
    cascade = Circuit(3, tuple(az.entangler("nn", range(3))) * 2)
    assert np.allclose(u, circuit_unitary(cascade))


def test_local_layer_sizes():
    spec = az.AnsatzSpec.local(4, "211")
    assert spec.layer_qubits(1) == [0, 1, 2, 3]
    assert spec.layer_qubits(3) == [2, 3]
    assert spec.layer_size(1) == 12
    assert spec.layer_size(3) == 4
    with pytest.raises(ValueError):
        spec.layer_qubits(4)


def test_local_zero_cycles_is_rotations_only():
    spec = az.AnsatzSpec.local(3, "00")
    circ = az.build_local(spec, np.zeros(az.parameter_count(spec)))
    assert set(circ.count_ops()) == {"RY", "U3"}
    assert np.allclose(circuit_unitary(circ), np.eye(8))


def test_parameter_count_examples():
    assert az.parameter_count(az.AnsatzSpec.local(4, "321")) == 32
    assert az.parameter_count(az.AnsatzSpec.local(4, "000")) == 12
    assert az.parameter_count(az.AnsatzSpec.global_(4, 3)) == 16


def closed_form_local(n, structure):
    # layer acting on q qubits carries n'_q cycles; structure[0] is the widest layer
    cycles_on = {n - j: c for j, c in enumerate(structure)}
    return sum(q + q * cycles_on[q] for q in range(2, n + 1)) + 3


def test_parameter_counts_exhaustive_small():
    for n in range(2, 8):
        for c in range(7):
            assert az.parameter_count(az.AnsatzSpec.global_(n, c)) == n * (1 + c)
    for n in range(2, 6):
        for structure in itertools.product(range(4), repeat=n - 1):
            assert az.parameter_count(az.AnsatzSpec.local(n, structure)) == closed_form_local(n, structure)


def test_stepwise_counts_and_growth():
    for n in range(2, 8):
        spec = az.AnsatzSpec.local(n, az.stepwise_structure(n))
        assert az.parameter_count(spec) == sum(q * q for q in range(2, n + 1)) + 3
    local = [az.parameter_count(az.AnsatzSpec.local(n, az.stepwise_structure(n))) for n in range(4, 8)]
    glob = [az.parameter_count(az.AnsatzSpec.global_(n, n - 1)) for n in range(4, 8)]
    assert glob == [n * n for n in range(4, 8)]
    # cubic leading term N^3/3 with a quadratic remainder
    for n, count in zip(range(4, 8), local):
        assert abs(count - n ** 3 / 3) <= n ** 2


@given(specs(max_qubits=6, max_cycles=6))
def test_builders_consume_parameter_count(spec):
    n = az.parameter_count(spec)
    circ = az.build_ansatz(spec, np.zeros(n))
    rotations = circ.count_ops().get("RY", 0) + 3 * circ.count_ops().get("U3", 0)
    assert rotations == n
    with pytest.raises(DimensionError):
        az.build_ansatz(spec, np.zeros(n + 1))


@given(specs(), st.integers(0, 2 ** 32 - 1))
def test_fast_evaluator_matches_simulation(spec, seed):
    rng = np.random.default_rng(seed)
    params = az.random_params(spec, rng)
    psi = random_state(spec.n_qubits, seed=rng)
    slow = simulate(az.build_ansatz(spec, params), psi)
    fast = az.evaluate_ansatz(spec, params, psi.amplitudes)
    assert np.allclose(slow.amplitudes, fast, atol=1e-10)


@given(specs(), st.integers(0, 2 ** 32 - 1))
def test_ansatz_preserves_norm(spec, seed):
    rng = np.random.default_rng(seed)
    out = simulate(az.build_ansatz(spec, az.random_params(spec, rng)), random_state(spec.n_qubits, seed=rng))
    assert out.norm() == pytest.approx(1.0, abs=1e-10)


def test_split_join_roundtrip():
    spec = az.AnsatzSpec.local(4, "321")
    params = np.arange(32.0)
    blocks, final = az.split_local_params(spec, params)
    assert [b.size for b in blocks] == [16, 9, 4]
    assert np.array_equal(az.join_local_params(blocks, final), params)


def test_entangler_permutation_matches_gates():
    for scheme, k in itertools.product(["a2a", "nn"], range(2, 6)):
        perm = az.entangler_permutation(scheme, k)
        u = circuit_unitary(Circuit(k, tuple(az.entangler(scheme, range(k)))))
        for j in range(2 ** k):
            assert np.allclose(u @ basis_state(k, perm[j]).amplitudes, basis_state(k, j).amplitudes)


def test_structure_parsing():
    assert az.parse_structure("321") == (3, 2, 1)
    assert az.parse_structure("12,3,1") == (12, 3, 1)
    assert az.format_structure((12, 3, 1)) == "12,3,1"
    assert az.format_structure((3, 2, 1)) == "321"
    for bad in ("", "3a1", "3,,1"):
        with pytest.raises(ValueError):
            az.parse_structure(bad)


def test_spec_validation():
    with pytest.raises(ValueError):
        az.AnsatzSpec.local(4, "32")
    with pytest.raises(ValueError):
        az.AnsatzSpec(4, "mixed")
    with pytest.raises(ValueError):
        az.AnsatzSpec.global_(4, -1)
    with pytest.raises(ValueError):
        az.AnsatzSpec.local(1, ())
    assert az.AnsatzSpec.local(4, "321", "nn").describe() == "local/nn/N=4/s=321"


def test_depths_of_reference_circuits():
    assert az.ansatz_depth(az.AnsatzSpec.global_(4, 3, "a2a")) == 17
    assert az.ansatz_depth(az.AnsatzSpec.global_(4, 3, "nn")) == 11
    assert az.ansatz_depth(az.AnsatzSpec.local(4, "222", "a2a")) == 27
    assert az.ansatz_depth(az.AnsatzSpec.local(4, "321", "nn")) == 22
