"""Variational unsampling of ``|psi_w>`` onto ``|1...1>``.

Two cost functions: the global infidelity of the whole register, and the
local per-layer infidelity of a single qubit (trained layer by layer with
earlier layers frozen).  Both can be estimated exactly from the
statevector or from a finite number of measurement shots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import ansatz as az
from .optimizers import OptimizeResult, SPSAGains, nelder_mead, spsa
from .simcore import SeedLike, StateVector, make_rng, sample_counts

log = logging.getLogger(__name__)

_ESTIMATOR_MODES = {"exact": "exact_statevector", "exact_statevector": "exact_statevector",
                    "shots": "shot_sampled", "shot_sampled": "shot_sampled"}


class EstimatorError(ValueError):
    pass


class CostEstimator:
    """Turns output amplitudes into probabilities, exactly or by sampling.

    In shot mode each call draws a fresh histogram from the estimator's
    PCG64 stream, so repeated evaluations at the same angles differ.
    """

    def __init__(self, mode: str = "exact_statevector", shots: int = 1024, seed: SeedLike = 0):
        if mode not in _ESTIMATOR_MODES:
            raise EstimatorError(f"unknown estimator mode {mode!r}")
        self.mode = _ESTIMATOR_MODES[mode]
        if self.mode == "shot_sampled" and (int(shots) != shots or shots < 1):
            raise EstimatorError(f"shot estimator needs shots >= 1, got {shots!r}")
        self.shots = int(shots)
        self.seed = seed
        self.rng = make_rng(seed)

    @property
    def exact(self) -> bool:
        return self.mode == "exact_statevector"

    def reseeded(self, seed: SeedLike) -> "CostEstimator":
        return CostEstimator(self.mode, self.shots, seed)

    def _counts(self, psi: np.ndarray) -> dict:
        n = int(np.log2(psi.size))
        return sample_counts(StateVector(n, psi), self.shots, self.rng)

    def prob_all_ones(self, psi: np.ndarray) -> float:
        if self.exact:
            return float(abs(psi[-1]) ** 2)
        return self._counts(psi).get(psi.size - 1, 0) / self.shots

    def prob_qubit_one(self, psi: np.ndarray, qubit: int) -> float:
        n = int(np.log2(psi.size))
        if self.exact:
            probs = np.abs(psi.reshape(2 ** qubit, 2, -1)) ** 2
            return float(probs[:, 1, :].sum())
        shift = n - 1 - qubit
        ones = sum(c for j, c in self._counts(psi).items() if (j >> shift) & 1)
        return ones / self.shots

    def __repr__(self):
        if self.exact:
            return "CostEstimator('exact_statevector')"
        return f"CostEstimator('shot_sampled', shots={self.shots}, seed={self.seed!r})"


EXACT = CostEstimator()


def _amplitudes(psi) -> np.ndarray:
    """Amplitude array of ``psi``; real-valued states come back as float arrays.

    The ansatz gates are real, so keeping real inputs real halves the cost
    of every evaluation.
    """
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    if np.iscomplexobj(amps) and not np.any(amps.imag):
        return np.ascontiguousarray(amps.real)
    return np.asarray(amps, dtype=complex) if np.iscomplexobj(amps) else np.asarray(amps, dtype=float)


def global_cost(params, spec: az.AnsatzSpec, psi_w, est: CostEstimator = EXACT) -> float:
    """``1 - |<1...1| V(theta) |psi_w>|**2``."""
    out = az.evaluate_ansatz(spec, params, _amplitudes(psi_w))
    return 1.0 - est.prob_all_ones(out)


def local_cost(j: int, params_j, spec: az.AnsatzSpec, rho_input, est: CostEstimator = EXACT) -> float:
    """``1 - <1| rho_(qubit j) |1>`` after layer ``j`` acts on ``rho_input``.

    ``j`` runs over ``1 .. N-1`` for the rotation/entangler layers and
    ``N`` for the final three-angle rotation on the last qubit.
    """
    psi = _amplitudes(rho_input)
    n = spec.n_qubits
    if j == n:
        out = az.apply_final_rotation(psi, np.asarray(params_j, dtype=float))
    else:
        prog = az.layer_program(spec, j)
        out = prog.apply(psi, az._as_params(params_j, prog.n_params))
    return 1.0 - est.prob_qubit_one(out, j - 1)


def exact_fidelity(spec: az.AnsatzSpec, params, psi_w) -> float:
    out = az.evaluate_ansatz(spec, params, _amplitudes(psi_w))
    return float(abs(out[-1]) ** 2)


@dataclass
class OptimizerConfig:
    """``name`` is ``'nm'`` (Nelder-Mead) or ``'spsa'``."""

    name: str = "nm"
    max_iter: int = 5000
    tol: float = 1e-6
    step: float = 0.5
    gains: SPSAGains = field(default_factory=SPSAGains)

    def __post_init__(self):
        aliases = {"nm": "nm", "nelder-mead": "nm", "nelder_mead": "nm", "spsa": "spsa"}
        if self.name not in aliases:
            raise ValueError(f"unknown optimizer {self.name!r}")
        self.name = aliases[self.name]
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def run(self, fun, x0, seed: SeedLike = None, target: Optional[float] = None) -> OptimizeResult:
        if self.name == "nm":
            return nelder_mead(fun, x0, step=self.step, tol=self.tol, max_iter=self.max_iter, target=target)
        stop = None
        if target is not None:
            stop = lambda k, x, f: f <= target  # noqa: E731
        return spsa(fun, x0, max_iter=self.max_iter, gains=self.gains, seed=seed, callback=stop)


@dataclass
class TrainingResult:
    spec: az.AnsatzSpec
    theta_opt: object
    cost_trace: List[float]
    final_fidelity: float
    iterations: int
    seed: int
    converged: bool
    layer_boundaries: List[int] = field(default_factory=list)
    stage_fidelities: List[float] = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        """Flat parameter vector usable with :func:`ansatz.build_ansatz`."""
        if self.spec.mode == "global":
            return np.asarray(self.theta_opt)
        return az.join_local_params(self.theta_opt[:-1], self.theta_opt[-1])

    @property
    def best_trace(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.cost_trace)) if self.cost_trace else np.array([])

    def segments(self) -> List[np.ndarray]:
        bounds = [0] + list(self.layer_boundaries)
        if not bounds or bounds[-1] != len(self.cost_trace):
            bounds.append(len(self.cost_trace))
        trace = np.asarray(self.cost_trace)
        return [trace[a:b] for a, b in zip(bounds, bounds[1:])]


def run_streams(seed: int, est: CostEstimator):
    """Independent generators for initial angles, shot noise and SPSA perturbations."""
    entropy = [int(seed)] + ([int(est.seed)] if isinstance(est.seed, (int, np.integer)) else [])
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(entropy).spawn(3)]


def train_global(
    spec: az.AnsatzSpec,
    psi_w,
    optimizer: OptimizerConfig = OptimizerConfig(),
    est: CostEstimator = EXACT,
    seed: int = 0,
    target_fidelity: Optional[float] = None,
) -> TrainingResult:
    """Minimize the global cost from angles drawn uniformly in ``[0, 2 pi)``.

    With ``target_fidelity`` the optimizer stops as soon as its cost
    estimate reaches ``1 - target_fidelity``.
    """
    if spec.mode != "global":
        raise ValueError("train_global needs a global ansatz spec")
    init_rng, noise_rng, spsa_rng = run_streams(seed, est)
    est = est.reseeded(noise_rng)
    psi = _amplitudes(psi_w)
    prog = az.global_program(spec)

    def cost(theta):
        return 1.0 - est.prob_all_ones(prog.apply(psi, theta))

    x0 = init_rng.uniform(0.0, 2 * np.pi, az.parameter_count(spec))
    target = None if target_fidelity is None else 1.0 - target_fidelity
    res = optimizer.run(cost, x0, seed=spsa_rng, target=target)
    fid = exact_fidelity(spec, res.x, psi)
    return TrainingResult(spec, res.x, list(res.trace), fid, res.nit, seed, res.converged,
                          layer_boundaries=[len(res.trace)], stage_fidelities=[fid])


def stage_map(spec: az.AnsatzSpec, j: int):
    """Callable ``(psi, theta) -> psi`` for local stage ``j`` (``N`` = final rotation)."""
    if j == spec.n_qubits:
        return az.apply_final_rotation
    return az.layer_program(spec, j).apply


def train_stage(spec: az.AnsatzSpec, j: int, psi: np.ndarray, x0, optimizer: OptimizerConfig,
                est: CostEstimator = EXACT, seed: SeedLike = None, target: Optional[float] = None):
    """Optimize one local stage on input amplitudes ``psi``.

    Returns the optimizer result, the output amplitudes at the optimum and
    the exact probability of qubit ``j`` being ``|1>`` there.
    """
    apply = stage_map(spec, j)
    qubit = j - 1

    def cost(theta):
        return 1.0 - est.prob_qubit_one(apply(psi, theta), qubit)

    res = optimizer.run(cost, x0, seed=seed, target=target)
    out = apply(psi, res.x)
    return res, out, EXACT.prob_qubit_one(out, qubit)


def train_local(
    spec: az.AnsatzSpec,
    psi_w,
    optimizer: OptimizerConfig = OptimizerConfig(),
    est: CostEstimator = EXACT,
    seed: int = 0,
    stage_target: Optional[float] = None,
    final_optimizer: Optional[OptimizerConfig] = None,
) -> TrainingResult:
    """Train layers ``1 .. N-1`` then the final rotation, each on its own qubit.

    Layer 1 starts from uniform random angles, later layers and the final
    rotation from zeros.  Each layer is frozen at its optimum and the state
    it produces feeds the next one.  ``stage_target`` stops a stage once its
    local cost estimate is at most that value.
    """
    if spec.mode != "local":
        raise ValueError("train_local needs a local ansatz spec")
    init_rng, noise_rng, spsa_rng = run_streams(seed, est)
    est = est.reseeded(noise_rng)
    n = spec.n_qubits
    psi = _amplitudes(psi_w)
    blocks: List[np.ndarray] = []
    trace: List[float] = []
    bounds: List[int] = []
    stage_fids: List[float] = []
    iterations = 0
    converged = True
    for j in range(1, n + 1):
        size = 3 if j == n else spec.layer_size(j)
        opt = (final_optimizer or optimizer) if j == n else optimizer
        x0 = init_rng.uniform(0.0, 2 * np.pi, size) if j == 1 else np.zeros(size)
        res, psi, stage_fid = train_stage(spec, j, psi, x0, opt, est, spsa_rng, stage_target)
        blocks.append(res.x)
        stage_fids.append(stage_fid)
        trace.extend(res.trace)
        bounds.append(len(trace))
        iterations += res.nit
        converged &= res.converged
    fid = float(abs(psi[-1]) ** 2)
    return TrainingResult(spec, blocks, trace, fid, iterations, seed, converged,
                          layer_boundaries=bounds, stage_fidelities=stage_fids)


def train(spec: az.AnsatzSpec, psi_w, optimizer: OptimizerConfig = OptimizerConfig(),
          est: CostEstimator = EXACT, seed: int = 0, **kwargs) -> TrainingResult:
    fn = train_global if spec.mode == "global" else train_local
    return fn(spec, psi_w, optimizer, est, seed, **kwargs)


def run_seed(seed_base: int, index: int) -> int:
    """Per-run seed derived from ``(seed_base, index)``; stable across processes."""
    return int(np.random.SeedSequence([int(seed_base), int(index)]).generate_state(1)[0])


def train_restarts(spec: az.AnsatzSpec, psi_w, restarts: int, optimizer: OptimizerConfig = OptimizerConfig(),
                   est: CostEstimator = EXACT, seed_base: int = 0, stop_at: Optional[float] = None,
                   **kwargs) -> List[TrainingResult]:
    """Independent runs with seeds ``run_seed(seed_base, r)``.

    With ``stop_at`` the loop ends after the first run whose exact fidelity
    reaches it.
    """
    results = []
    for r in range(restarts):
        res = train(spec, psi_w, optimizer, est, run_seed(seed_base, r), **kwargs)
        results.append(res)
        if stop_at is not None and res.final_fidelity >= stop_at:
            break
    return results


def best_result(results: Sequence[TrainingResult]) -> TrainingResult:
    return max(results, key=lambda r: r.final_fidelity)


@dataclass
class IterationStats:
    n_qubits: int
    mode: str
    counts: List[int]
    censored: int
    fidelities: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts)) if self.counts else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.counts)) if self.counts else float("nan")


def iterations_to_target(spec: az.AnsatzSpec, psi_w, target_fidelity: float,
                         optimizer: OptimizerConfig, seed: int, attempts: int = 1):
    """Optimizer iterations until the exact fidelity reaches the target, or None.

    Global runs stop at cost ``1 - target``.  Local runs stop each of their
    ``N`` stages at single-qubit cost ``1 - target**(1/N)`` and count the
    iterations summed over stages; the run counts only if the composed
    circuit then reaches the target.  A failed attempt is retried from a
    fresh random start up to ``attempts`` times in total and the iterations
    of every attempt are added up.  Returns ``(iterations, fidelity)``.
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    total = 0
    for a in range(attempts):
        run = seed if a == 0 else run_seed(seed, a)
        if spec.mode == "global":
            res = train_global(spec, psi_w, optimizer, EXACT, run, target_fidelity=target_fidelity)
        else:
            stage = 1.0 - target_fidelity ** (1.0 / spec.n_qubits)
            res = train_local(spec, psi_w, optimizer, EXACT, run, stage_target=stage)
        total += res.iterations
        if res.final_fidelity >= target_fidelity:
            return total, res.final_fidelity
    return None, res.final_fidelity


def iterations_to_fidelity(make_spec: Callable[[int], az.AnsatzSpec], n_values: Sequence[int],
                           weights_for: Callable[[int], StateVector], target_fidelity: float = 0.95,
                           repeats: int = 10, seed_base: int = 0,
                           optimizer: OptimizerConfig = OptimizerConfig(max_iter=20000),
                           runner=None, attempts: int = 1) -> List[IterationStats]:
    """Mean and spread of iterations-to-target per register size.

    ``runner(fn, arglist)`` maps jobs (defaults to sequential ``map``);
    runs missing the target after ``attempts`` starts are counted as
    censored and left out of the statistics.
    """
    if not 0 < target_fidelity < 1:
        raise ValueError("target fidelity must lie in (0, 1)")
    runner = runner or (lambda fn, args: [fn(*a) for a in args])
    out = []
    for n in n_values:
        spec = make_spec(n)
        psi = weights_for(n)
        jobs = [(spec, psi, target_fidelity, optimizer, run_seed(seed_base * 1000 + n, r), attempts)
                for r in range(repeats)]
        results = runner(iterations_to_target, jobs)
        counts = [c for c, _ in results if c is not None]
        censored = sum(1 for c, _ in results if c is None)
        if censored:
            log.warning("%s: %d of %d runs missed fidelity %.3f", spec.describe(), censored, repeats,
                        target_fidelity)
        out.append(IterationStats(n, spec.mode, counts, censored, [f for _, f in results]))
    return out
