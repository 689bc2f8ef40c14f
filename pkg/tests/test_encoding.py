import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qneuron.encoding import (
    BinaryPattern,
    HypergraphCircuitPlan,
    PatternError,
    all_patterns,
    build_ui_circuit,
    build_uw_circuit,
    cross_weights,
    decompose_mcz,
    encode_state,
    exact_uw_depth,
    expand_to_decomposed,
    hypergraph_edges,
    label_to_pattern,
    parse_pattern,
    pattern_to_label,
    plan_for,
    read_patterns,
    write_patterns,
)
from qneuron.simcore import Circuit, basis_probability, circuit_unitary, gate_unitary, mcx, mcz, simulate, zero_state


@st.composite
def patterns(draw, min_qubits=1, max_qubits=5):
    n = draw(st.integers(min_qubits, max_qubits))
    k = draw(st.integers(0, 2 ** (2 ** n) - 1))
    return label_to_pattern(k, 2 ** n)


def test_label_zero_is_all_plus():
    assert label_to_pattern(0, 4).entries == (1, 1, 1, 1)
    assert label_to_pattern(15, 4).entries == (-1, -1, -1, -1)


def test_label_bit_zero_is_first_entry():
    assert label_to_pattern(8, 4).entries == (-1, 1, 1, 1)
    assert label_to_pattern(1, 4).entries == (1, 1, 1, -1)


def test_cross_pattern():
    w = label_to_pattern(20032, 16)
    assert w.to_string() == "+-++---++-++++++"
    assert [j for j, e in enumerate(w.entries) if e < 0] == [1, 4, 5, 6, 9]
    assert w.image().tolist() == [[1, -1, 1, 1], [-1, -1, -1, 1], [1, -1, 1, 1], [1, 1, 1, 1]]


def test_cross_hyperedges():
    assert hypergraph_edges(label_to_pattern(20032, 16)) == [(3,), (1,), (2, 3), (1, 3), (0, 1), (0, 1, 2, 3)]


def test_cross_weights_resizing():
    assert cross_weights(4).label == 20032
    # larger registers prepend zero bits: the cross sits in the last 16 entries
    w5 = cross_weights(5)
    assert w5.entries[:16] == (1,) * 16
    assert w5.entries[16:] == cross_weights(4).entries
    # smaller registers keep the first rows
    assert cross_weights(3).entries == cross_weights(4).entries[:8]
    assert cross_weights(2).entries == cross_weights(4).entries[:4]


@given(patterns())
def test_label_roundtrip(p):
    assert label_to_pattern(pattern_to_label(p), p.m) == p


@given(patterns())
def test_ui_prepares_encoded_state(p):
    out = simulate(build_ui_circuit(p), zero_state(p.n_qubits))
    assert out.allclose(encode_state(p), atol=1e-10)


@given(patterns())
def test_uw_maps_weights_to_all_ones(p):
    out = simulate(build_uw_circuit(p), encode_state(p))
    assert basis_probability(out, p.m - 1) >= 1 - 1e-10


@given(patterns())
def test_hyperedges_reproduce_signs(p):
    # sign of |j> is (-1)^(number of edges contained in the support of j)
    n = p.n_qubits
    edges = hypergraph_edges(p)
    for j in range(p.m):
        ones = {q for q in range(n) if (j >> (n - 1 - q)) & 1}
        parity = sum(set(e) <= ones for e in edges) % 2
        assert (-1) ** parity == p.entries[j]


def test_negative_first_entry_uses_empty_edge():
    p = label_to_pattern(20032, 16).negated()
    edges = hypergraph_edges(p)
    assert edges[0] == ()
    assert edges[1:] == hypergraph_edges(p.negated())
    out = simulate(build_ui_circuit(p), zero_state(4))
    assert np.allclose(out.amplitudes, encode_state(p).amplitudes, atol=1e-12)


def test_all_plus_has_no_edges():
    p = label_to_pattern(0, 8)
    assert hypergraph_edges(p) == []
    assert [g.kind for g in build_ui_circuit(p).gates] == ["H"] * 3
    assert [g.kind for g in build_uw_circuit(p).gates] == ["H"] * 3 + ["X"] * 3


def test_single_flip_at_end_is_one_full_mcz():
    assert hypergraph_edges(label_to_pattern(1, 16)) == [(0, 1, 2, 3)]


def test_plan_flags():
    p = cross_weights(4)
    assert plan_for(p, "ui").includes_initial_hadamards
    assert plan_for(p, "uw").includes_final_h_and_x
    with pytest.raises(ValueError):
        plan_for(p, "bad")
    with pytest.raises(PatternError):
        HypergraphCircuitPlan(((0,), (0,)))


@pytest.mark.parametrize("size", range(1, 8))
def test_decomposed_mcz_exact(size):
    gates = decompose_mcz(size)
    assert all(g.kind in ("H", "Z", "P", "CNOT") for g in gates)
    u = circuit_unitary(Circuit(size, tuple(gates)))
    assert np.allclose(u, gate_unitary(mcz(range(size)), size), atol=1e-12)


@pytest.mark.parametrize("size", range(3, 8))
def test_decomposed_mcz_gate_counts(size):
    ops = Circuit(size, tuple(decompose_mcz(size))).count_ops()
    assert ops["CNOT"] == 2 ** size - 2
    assert ops["P"] == 2 ** size - 1
    assert Circuit(size, tuple(decompose_mcz(size))).depth() == 2 ** (size + 1) - 3


def test_decomposed_mcx_exact():
    c = Circuit(4, (mcx((0, 1, 2), 3),))
    assert np.allclose(circuit_unitary(expand_to_decomposed(c)), circuit_unitary(c), atol=1e-12)


def test_exact_depth_values():
    assert [exact_uw_depth(cross_weights(n)) for n in range(2, 8)] == [6, 9, 38, 102, 235, 491]


def test_exact_uw_decomposition_preserves_action():
    w = cross_weights(4)
    a = circuit_unitary(build_uw_circuit(w))
    b = circuit_unitary(expand_to_decomposed(build_uw_circuit(w)))
    assert np.allclose(a, b, atol=1e-12)


def test_pattern_validation():
    with pytest.raises(PatternError):
        BinaryPattern((1, 0))
    with pytest.raises(PatternError):
        BinaryPattern((1, 1, 1))
    with pytest.raises(ValueError):
        label_to_pattern(16, 4)
    with pytest.raises(PatternError):
        build_uw_circuit(label_to_pattern(0, 256))


def test_parse_pattern_forms():
    assert parse_pattern("k:20032", 16) == cross_weights(4)
    assert parse_pattern("+-++---++-++++++") == cross_weights(4)
    with pytest.raises(PatternError):
        parse_pattern("k:3")
    with pytest.raises(PatternError):
        parse_pattern("+-x+")
    with pytest.raises(PatternError):
        parse_pattern("+-", 4)


def test_pattern_file_roundtrip(tmp_path):
    pats = all_patterns(4)
    path = tmp_path / "p.txt"
    write_patterns(path, pats)
    assert read_patterns(path, 4) == pats
    write_patterns(path, pats, as_labels=True)
    assert read_patterns(path, 4) == pats


def test_pattern_file_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# comment\n++--\n+?\n")
    with pytest.raises(PatternError, match="bad.txt:3"):
        read_patterns(path, 4)


def test_dot_and_flips():
    w = cross_weights(4)
    for f in range(17):
        assert w.flipped(range(f)).dot(w) == 16 - 2 * f
    assert w.dot(w.negated()) == -16


def test_every_n2_pattern_prepared_exactly():
    for p in all_patterns(4):
        out = simulate(build_ui_circuit(p), zero_state(2))
        assert np.allclose(out.amplitudes, encode_state(p).amplitudes, atol=1e-12)
        assert np.allclose(out.amplitudes.imag, 0)
