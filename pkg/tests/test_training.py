import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qneuron import ansatz as az
from qneuron.encoding import cross_weights, encode_state
from qneuron.simcore import StateVector, random_state
from qneuron.training import (
    EXACT,
    CostEstimator,
    EstimatorError,
    OptimizerConfig,
    best_result,
    exact_fidelity,
    global_cost,
    iterations_to_fidelity,
    iterations_to_target,
    local_cost,
    run_seed,
    run_streams,
    train,
    train_global,
    train_local,
    train_restarts,
)

PSI4 = encode_state(cross_weights(4))


def test_global_cost_zero_for_exact_inverse():
    # N=1: RY(pi/2) takes |+> to |1>
    psi = StateVector(1, np.array([1, 1]) / np.sqrt(2))
    spec = az.AnsatzSpec.global_(1, 0)
    assert global_cost([np.pi / 2], spec, psi) == pytest.approx(0.0, abs=1e-12)


def test_local_cost_final_rotation():
    spec = az.AnsatzSpec.local(2, "0")
    psi = np.array([1, 0, 0, 0], dtype=complex)
    # the closing rotation and its cost live on the last qubit
    assert local_cost(2, [0, 0, 0], spec, psi) == pytest.approx(1.0)
    assert local_cost(2, [0, np.pi, 0], spec, psi) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["global", "local"]))
def test_costs_in_unit_interval(seed, mode):
    rng = np.random.default_rng(seed)
    spec = az.AnsatzSpec.global_(3, 1) if mode == "global" else az.AnsatzSpec.local(3, "11")
    psi = random_state(3, seed=rng)
    params = az.random_params(spec, rng)
    if mode == "global":
        c = global_cost(params, spec, psi)
    else:
        c = local_cost(1, params[:spec.layer_size(1)], spec, psi)
    assert -1e-12 <= c <= 1 + 1e-12


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1))
def test_shot_estimator_unbiased(seed):
    rng = np.random.default_rng(seed)
    psi = random_state(3, seed=rng).amplitudes
    shots, reps = 256, 200
    est = CostEstimator("shots", shots, seed=seed)
    for fn, exact in ((lambda: est.prob_all_ones(psi), EXACT.prob_all_ones(psi)),
                      (lambda: est.prob_qubit_one(psi, 1), EXACT.prob_qubit_one(psi, 1))):
        samples = np.array([fn() for _ in range(reps)])
        sigma = np.sqrt(exact * (1 - exact) / (shots * reps))
        assert abs(samples.mean() - exact) <= 4 * sigma + 1e-12


def test_shot_estimator_variance():
    psi = random_state(2, seed=3).amplitudes
    p = EXACT.prob_all_ones(psi)
    est = CostEstimator("shots", 100, seed=0)
    samples = np.array([est.prob_all_ones(psi) for _ in range(2000)])
    assert samples.var() == pytest.approx(p * (1 - p) / 100, rel=0.15)


def test_estimator_validation():
    with pytest.raises(EstimatorError):
        CostEstimator("noisy")
    with pytest.raises(EstimatorError):
        CostEstimator("shots", 0)


def test_exact_marginal_matches_definition():
    psi = random_state(3, seed=4).amplitudes
    for q in range(3):
        ref = sum(abs(psi[j]) ** 2 for j in range(8) if (j >> (2 - q)) & 1)
        assert EXACT.prob_qubit_one(psi, q) == pytest.approx(ref)


def test_run_streams_independent_and_stable():
    a = [g.random() for g in run_streams(5, EXACT)]
    b = [g.random() for g in run_streams(5, EXACT)]
    assert a == b and len(set(a)) == 3
    assert run_seed(0, 1) == run_seed(0, 1) != run_seed(0, 2)


def test_global_training_small():
    spec = az.AnsatzSpec.global_(2, 1)
    res = train_global(spec, encode_state(cross_weights(2)), OptimizerConfig(max_iter=2000, tol=1e-12), seed=1)
    assert res.final_fidelity > 0.999
    assert res.final_fidelity == pytest.approx(exact_fidelity(spec, res.params, encode_state(cross_weights(2))))
    assert res.layer_boundaries == [len(res.cost_trace)]


def test_local_training_records_segments():
    spec = az.AnsatzSpec.local(3, "21", "nn")
    res = train_local(spec, encode_state(cross_weights(3)), OptimizerConfig(max_iter=3000, tol=1e-12), seed=2)
    assert len(res.layer_boundaries) == 3
    assert [len(s) for s in res.segments()] == np.diff([0] + res.layer_boundaries).tolist()
    assert len(res.stage_fidelities) == 3
    assert np.prod(res.stage_fidelities) >= res.final_fidelity - 1e-6
    assert res.params.size == az.parameter_count(spec)
    assert res.final_fidelity > 0.99
    assert exact_fidelity(spec, res.params, encode_state(cross_weights(3))) == pytest.approx(res.final_fidelity)


def test_local_later_layers_start_from_zero(monkeypatch):
    starts = []
    import qneuron.training as tr
    original = tr.train_stage

    def spy(spec, j, psi, x0, *a, **k):
        starts.append((j, np.array(x0)))
        return original(spec, j, psi, x0, *a, **k)

    monkeypatch.setattr(tr, "train_stage", spy)
    tr.train_local(az.AnsatzSpec.local(3, "11"), encode_state(cross_weights(3)), OptimizerConfig(max_iter=50), seed=0)
    assert [j for j, _ in starts] == [1, 2, 3]
    assert np.any(starts[0][1] != 0)
    assert all(np.all(x == 0) for _, x in starts[1:])


def test_training_deterministic():
    spec = az.AnsatzSpec.global_(3, 1)
    psi = encode_state(cross_weights(3))
    a = train(spec, psi, OptimizerConfig(max_iter=200), seed=4)
    b = train(spec, psi, OptimizerConfig(max_iter=200), seed=4)
    assert a.cost_trace == b.cost_trace
    assert np.array_equal(a.params, b.params)


def test_shot_training_deterministic():
    spec = az.AnsatzSpec.local(3, "11")
    psi = encode_state(cross_weights(3))
    est = CostEstimator("shots", 128, seed=1)
    opt = OptimizerConfig("spsa", max_iter=30)
    a = train(spec, psi, opt, est, seed=4)
    b = train(spec, psi, opt, est, seed=4)
    assert a.cost_trace == b.cost_trace


def test_mode_mismatch():
    with pytest.raises(ValueError):
        train_global(az.AnsatzSpec.local(3, "11"), PSI4)
    with pytest.raises(ValueError):
        train_local(az.AnsatzSpec.global_(3, 1), PSI4)
    with pytest.raises(ValueError):
        OptimizerConfig("adam")


def test_restarts_stop_early():
    spec = az.AnsatzSpec.global_(2, 1)
    runs = train_restarts(spec, encode_state(cross_weights(2)), 5, OptimizerConfig(tol=1e-12), stop_at=0.99)
    assert len(runs) == 1
    assert best_result(runs).final_fidelity >= 0.99


def test_iterations_to_target_small():
    spec = az.AnsatzSpec.global_(3, 2)
    its, fid = iterations_to_target(spec, encode_state(cross_weights(3)), 0.95, OptimizerConfig(max_iter=5000), seed=0,
                                    attempts=3)
    assert its is not None and its > 0 and fid >= 0.95


def test_iteration_stats_deterministic():
    kwargs = dict(make_spec=lambda n: az.AnsatzSpec.local(n, az.stepwise_structure(n)), n_values=[3],
                  weights_for=lambda n: encode_state(cross_weights(n)), repeats=3, seed_base=2,
                  optimizer=OptimizerConfig(max_iter=5000))
    a = iterations_to_fidelity(**kwargs)
    b = iterations_to_fidelity(**kwargs)
    assert a[0].counts == b[0].counts
    assert a[0].censored == 0
    with pytest.raises(ValueError):
        iterations_to_fidelity(**{**kwargs, "target_fidelity": 1.5})
