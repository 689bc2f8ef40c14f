"""Experiment runners producing plot-ready CSV tables and JSON metadata.

Every runner takes an :class:`ExperimentConfig`, returns an
:class:`ExperimentResult` (rows, named pass/fail checks and metadata) and
is deterministic given the config: all randomness is derived from
``cfg.seed`` through ``SeedSequence``.  Output files contain no
timestamps, so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import ansatz as az
from .encoding import BinaryPattern, cross_weights, encode_state, exact_uw_depth, label_to_pattern
from .neuron import NeuronConfig, circuit_activation_probability, classical_activation_probability
from .optimizers import SPSAGains
from .training import (
    EXACT,
    CostEstimator,
    OptimizerConfig,
    TrainingResult,
    best_result,
    iterations_to_fidelity,
    run_seed,
    run_streams,
    train_global,
    train_local,
    train_restarts,
    train_stage,
    _amplitudes,
)

log = logging.getLogger(__name__)

EXPERIMENT_IDS = (
    "activation_compare",
    "global_depth_sweep",
    "structure_bars",
    "iteration_scaling",
    "noisy_training",
    "depth_scaling",
)
SCHEMA_VERSION = 1
WORKERS_ENV = "QNEURON_WORKERS"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


# -- configuration ------------------------------------------------------------

_DEFAULTS: Dict[str, dict] = {
    "activation_compare": dict(
        n_values=(4,), entangler="a2a", cycles=(3,), structures=("222",), repeats=10,
        optimizer="nm", max_iter=20000, tol=1e-12, fidelity_floor=0.9999, tolerance=2e-3,
    ),
    "global_depth_sweep": dict(
        n_values=(4,), entangler="nn", mode="global", cycles=(1, 2, 3), repeats=10,
        optimizer="nm", max_iter=20000, tol=1e-10, fidelity_floor=0.99,
    ),
    "structure_bars": dict(
        n_values=(4, 5), entangler="both", mode="local",
        structures=("111", "211", "221", "222", "311", "321", "322", "331", "332", "333",
                    "1111", "2111", "2211", "2221", "3211", "3221", "3321", "4321", "4322", "4432"),
        repeats=10, optimizer="nm", max_iter=20000, tol=1e-10, fidelity_floor=0.99,
    ),
    "iteration_scaling": dict(
        n_values=(3, 4, 5, 6), entangler="nn", mode="both", repeats=10, optimizer="nm",
        max_iter=20000, tol=1e-10, target_fidelity=0.95, attempts=3,
    ),
    "noisy_training": dict(
        n_values=(5,), entangler="nn", mode="both", cycles=(4,), structures=("4321",),
        shots=1024, repeats=5, optimizer="spsa", max_iter=1000, stage_iter=200, spsa_a=1.0,
        spsa_c=0.1, fidelity_range=(0.80, 0.95),
    ),
    "depth_scaling": dict(
        n_values=(2, 3, 4, 5, 6, 7), entangler="both", mode="both", repeats=5, optimizer="nm",
        max_iter=20000, tol=1e-10, fidelity_floor=0.98, max_cycles=10,
    ),
}

# Fields that must be set (not None) for each experiment id.
_REQUIRED = {
    "activation_compare": ("k_w", "n_values", "entangler", "cycles", "structures", "repeats",
                           "fidelity_floor", "tolerance"),
    "global_depth_sweep": ("k_w", "n_values", "entangler", "cycles", "repeats", "fidelity_floor"),
    "structure_bars": ("k_w", "n_values", "entangler", "structures", "repeats", "fidelity_floor"),
    "iteration_scaling": ("k_w", "n_values", "entangler", "mode", "repeats", "target_fidelity",
                          "attempts"),
    "noisy_training": ("k_w", "n_values", "entangler", "mode", "cycles", "structures", "shots",
                       "repeats", "stage_iter", "spsa_a", "spsa_c", "fidelity_range"),
    "depth_scaling": ("k_w", "n_values", "entangler", "mode", "repeats", "fidelity_floor",
                      "max_cycles"),
}


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; ``None`` means "not set".

    :meth:`for_id` fills in the defaults of an experiment id.  Constructing
    a config directly validates that every field needed by ``id`` is set.
    """

    id: str
    k_w: Optional[int] = 20032
    n_values: Optional[Tuple[int, ...]] = None
    entangler: Optional[str] = None
    mode: Optional[str] = None
    cycles: Optional[Tuple[int, ...]] = None
    structures: Optional[Tuple[str, ...]] = None
    shots: Optional[int] = None
    repeats: Optional[int] = None
    seed: int = 0
    out: Optional[str] = None
    optimizer: str = "nm"
    max_iter: int = 20000
    tol: float = 1e-10
    stage_iter: Optional[int] = None
    spsa_a: Optional[float] = None
    spsa_c: Optional[float] = None
    target_fidelity: Optional[float] = None
    attempts: Optional[int] = None
    fidelity_floor: Optional[float] = None
    fidelity_range: Optional[Tuple[float, float]] = None
    tolerance: Optional[float] = None
    max_cycles: Optional[int] = None

    def __post_init__(self):
        for name in ("n_values", "cycles", "structures", "fidelity_range"):
            value = getattr(self, name)
            if isinstance(value, (list, tuple)):
                setattr(self, name, tuple(value))
        self.validate()

    @classmethod
    def for_id(cls, experiment_id: str, **overrides) -> "ExperimentConfig":
        if experiment_id not in _DEFAULTS:
            raise ConfigError(f"unknown experiment id {experiment_id!r}; choose from {EXPERIMENT_IDS}")
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        values = dict(_DEFAULTS[experiment_id])
        values.update(overrides)
        return cls(id=experiment_id, **values)

    @classmethod
    def from_dict(cls, data: dict, experiment_id: Optional[str] = None) -> "ExperimentConfig":
        data = dict(data)
        eid = experiment_id or data.pop("id", None)
        data.pop("id", None)
        if eid is None:
            raise ConfigError("config needs an experiment id")
        return cls.for_id(eid, **data)

    @classmethod
    def from_json(cls, path, experiment_id: Optional[str] = None) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data, experiment_id)

    def validate(self):
        if self.id not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment id {self.id!r}; choose from {EXPERIMENT_IDS}")
        missing = [name for name in _REQUIRED[self.id] if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"{self.id} config is missing {', '.join(missing)}")
        if self.entangler is not None and self.entangler != "both":
            try:
                az.normalize_entangler(self.entangler)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.mode is not None and self.mode not in ("global", "local", "both"):
            raise ConfigError(f"mode must be global, local or both, got {self.mode!r}")
        if self.n_values is not None and any(n < 2 or n > 7 for n in self.n_values):
            raise ConfigError("register sizes must lie in [2, 7]")
        if self.k_w is not None and self.k_w < 0:
            raise ConfigError("k_w must be non-negative")
        for name in ("repeats", "shots", "attempts", "stage_iter", "max_cycles"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.optimizer not in ("nm", "spsa"):
            raise ConfigError(f"optimizer must be nm or spsa, got {self.optimizer!r}")
        if self.structures is not None:
            for s in self.structures:
                try:
                    az.parse_structure(str(s))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        if self.id == "structure_bars" and self.repeats < 10:
            raise ConfigError("structure_bars needs at least 10 repeats per structure")
        if self.id == "noisy_training" and self.optimizer != "spsa":
            raise ConfigError("noisy_training runs with the spsa optimizer")

    def entanglers(self) -> List[str]:
        if self.entangler == "both":
            return list(az.ENTANGLERS)
        return [az.normalize_entangler(self.entangler)]

    def modes(self) -> List[str]:
        return ["global", "local"] if self.mode in (None, "both") else [self.mode]

    def weights(self, n_qubits: int) -> BinaryPattern:
        """Weight pattern on ``n_qubits``; the cross label is resized like :func:`cross_weights`."""
        return cross_weights(n_qubits, self.k_w)

    def nm(self, max_iter: Optional[int] = None) -> OptimizerConfig:
        return OptimizerConfig("nm", max_iter=max_iter or self.max_iter, tol=self.tol)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


# -- results and output ---------------------------------------------------------

@dataclass
class ExperimentResult:
    experiment: str
    columns: List[str]
    rows: List[dict]
    checks: Dict[str, bool] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    if value is None:
        return ""
    return str(value)


def schema_id(experiment_id: str) -> str:
    return f"qneuron.{experiment_id}/{SCHEMA_VERSION}"


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    buf.write(f"#schema={schema_id(result.experiment)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_fmt(row.get(c)) for c in result.columns])
    return buf.getvalue()


def read_csv(path) -> Tuple[str, List[dict]]:
    """Inverse of :func:`write_result` for the table: ``(schema, rows)`` with string values."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#schema="):
        raise ValueError(f"{path}: missing schema header")
    schema = lines[0][len("#schema="):]
    reader = csv.DictReader(lines[1:])
    return schema, list(reader)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_result(result: ExperimentResult, cfg: ExperimentConfig, out_dir) -> Tuple[Path, Path]:
    """Write ``<id>.csv`` and ``<id>.json`` under ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{result.experiment}.csv"
    json_path = out / f"{result.experiment}.json"
    csv_path.write_text(to_csv(result))
    meta = {
        "schema": schema_id(result.experiment),
        "config": cfg.to_dict(),
        "checks": result.checks,
        "passed": result.passed,
        "versions": {"qneuron": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "metadata": result.metadata,
    }
    json_path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


# -- parallel execution ----------------------------------------------------------

def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def parallel_map(fn, arglist: Sequence[tuple], workers: Optional[int] = None) -> list:
    """``[fn(*args) for args in arglist]``, spread over a process pool when ``workers > 1``.

    Results keep the order of ``arglist`` so the output does not depend on
    scheduling.
    """
    workers = worker_count() if workers is None else workers
    arglist = list(arglist)
    if workers <= 1 or len(arglist) <= 1:
        return [fn(*a) for a in arglist]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *a) for a in arglist]
        return [f.result() for f in futures]


# -- helpers -----------------------------------------------------------------------

def flip_series(w: BinaryPattern) -> List[BinaryPattern]:
    """Inputs with ``i . w = m - 2f`` for ``f = 0 .. m``: flip the first ``f`` entries of ``w``."""
    return [w.flipped(range(f)) for f in range(w.m + 1)]


def plateau_iteration(trace, tol: float, window: Optional[int] = None, tail: float = 0.1) -> int:
    """First iteration at which a cost trace has settled onto its final level.

    The trace is smoothed with a trailing moving average (``window``
    defaults to 5% of its length); the final level is the mean of the last
    ``tail`` fraction.  Returns the 1-based index of the first smoothed
    value within ``tol`` of that level.
    """
    y = np.asarray(trace, dtype=float)
    if y.size == 0:
        raise ValueError("empty trace")
    window = window or max(1, int(round(0.05 * y.size)))
    csum = np.cumsum(np.concatenate([[0.0], y]))
    idx = np.arange(1, y.size + 1)
    lo = np.maximum(0, idx - window)
    smooth = (csum[idx] - csum[lo]) / (idx - lo)
    final = float(y[-max(1, int(round(tail * y.size))):].mean())
    hits = np.nonzero(np.abs(smooth - final) <= tol)[0]
    return int(hits[0]) + 1 if hits.size else int(y.size)


def _train_job(spec: az.AnsatzSpec, psi, optimizer: OptimizerConfig, est: CostEstimator,
               seed: int, kwargs: dict) -> TrainingResult:
    fn = train_global if spec.mode == "global" else train_local
    return fn(spec, psi, optimizer, est, seed, **kwargs)


def _repeat(spec, psi, optimizer, repeats, seed_base, est=EXACT, **kwargs) -> List[TrainingResult]:
    jobs = [(spec, psi, optimizer, est, run_seed(seed_base, r), kwargs) for r in range(repeats)]
    return parallel_map(_train_job, jobs)


def _ent_short(entangler: str) -> str:
    return "a2a" if az.normalize_entangler(entangler) == "all_to_all" else "nn"


def _spec_seed(cfg: ExperimentConfig, *parts) -> int:
    """Seed base for one sub-task; stable and distinct per ``parts``."""
    words = [cfg.seed] + [abs(hash_str(p)) if isinstance(p, str) else int(p) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def hash_str(text: str) -> int:
    """Process-independent string hash (Python's ``hash`` is salted)."""
    return int.from_bytes(text.encode(), "little") % (2 ** 63)


# -- activation comparison -----------------------------------------------------------

def run_activation_compare(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.n_values[0]
    w = cfg.weights(n)
    psi = encode_state(w)
    specs = {
        "global": az.AnsatzSpec.global_(n, cfg.cycles[0], cfg.entangler),
        "local": az.AnsatzSpec.local(n, cfg.structures[0], cfg.entangler),
    }
    trained = {}
    for mode, spec in specs.items():
        runs = train_restarts(spec, psi, cfg.repeats, cfg.nm(), seed_base=_spec_seed(cfg, mode),
                              stop_at=cfg.fidelity_floor)
        trained[mode] = best_result(runs)
    neurons = {mode: NeuronConfig(w, f"variational_{mode}", specs[mode], trained[mode].params)
               for mode in specs}
    exact = NeuronConfig(w)
    floors = {mode: trained[mode].final_fidelity >= cfg.fidelity_floor for mode in specs}
    rows, max_err, oracle_ok = [], {m: 0.0 for m in specs}, True
    for i in flip_series(w):
        p_exact = circuit_activation_probability(i, exact)
        p_classical = classical_activation_probability(i, w)
        row = {"k_i": i.label, "dot": i.dot(w), "p_classical": p_classical, "p_exact": p_exact}
        flagged = False
        for mode in specs:
            p = circuit_activation_probability(i, neurons[mode])
            row[f"p_{mode}"] = p
            max_err[mode] = max(max_err[mode], abs(p - p_exact))
            flagged |= not floors[mode]
        row["flagged"] = flagged
        oracle_ok &= abs(p_exact - p_classical) <= 1e-10
        rows.append(row)
    checks = {
        "p_exact_matches_classical": oracle_ok,
        "identical_input_activates": abs(rows[0]["p_exact"] - 1.0) <= 1e-10,
    }
    for mode in specs:
        checks[f"{mode}_fidelity_floor"] = floors[mode]
        checks[f"{mode}_within_tolerance"] = floors[mode] and max_err[mode] <= cfg.tolerance
    meta = {
        "weights_label": w.label,
        "fidelity": {m: trained[m].final_fidelity for m in specs},
        "depth": {m: az.ansatz_depth(specs[m]) for m in specs},
        "exact_depth": exact_uw_depth(w),
        "max_abs_error": max_err,
        "seeds": {m: trained[m].seed for m in specs},
    }
    cols = ["k_i", "dot", "p_classical", "p_exact", "p_global", "p_local", "flagged"]
    return ExperimentResult(cfg.id, cols, rows, checks, meta)


# -- global depth sweep ---------------------------------------------------------------

def run_global_depth_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.n_values[0]
    psi = encode_state(cfg.weights(n))
    rows, finals, depths = [], {}, {}
    for cycles in cfg.cycles:
        spec = az.AnsatzSpec.global_(n, cycles, cfg.entangler)
        best = best_result(_repeat(spec, psi, cfg.nm(), cfg.repeats, _spec_seed(cfg, cycles)))
        finals[cycles] = best.final_fidelity
        depths[cycles] = az.ansatz_depth(spec)
        for it, (c, b) in enumerate(zip(best.cost_trace, best.best_trace), 1):
            rows.append({"n": cycles, "iteration": it, "cost": c, "best_cost": b})
    checks = {}
    floor = cfg.fidelity_floor
    if cfg.cycles:
        top, bottom = max(cfg.cycles), min(cfg.cycles)
        checks[f"n{top}_reaches_floor"] = finals[top] > floor
        if bottom != top:
            checks[f"n{bottom}_below_floor"] = finals[bottom] < floor
    traces_ok = all(np.all(np.diff([r["best_cost"] for r in rows if r["n"] == c]) <= 0) for c in cfg.cycles)
    checks["best_so_far_non_increasing"] = bool(traces_ok)
    meta = {"final_fidelity": finals, "depth": depths, "n_qubits": n}
    return ExperimentResult(cfg.id, ["n", "iteration", "cost", "best_cost"], rows, checks, meta)


# -- structure bars ----------------------------------------------------------------------

def run_structure_bars(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for n in cfg.n_values:
        psi = encode_state(cfg.weights(n))
        structures = [s for s in cfg.structures if len(az.parse_structure(s)) == n - 1]
        # at N=5 the sweep uses nearest-neighbour only unless one entangler is forced
        ents = cfg.entanglers() if (n == 4 or cfg.entangler != "both") else ["nearest_neighbour"]
        for ent in ents:
            for s in structures:
                spec = az.AnsatzSpec.local(n, s, ent)
                runs = _repeat(spec, psi, cfg.nm(), cfg.repeats, _spec_seed(cfg, n, ent, s))
                fids = np.array([r.final_fidelity for r in runs])
                rows.append({
                    "n_qubits": n, "entangler": _ent_short(ent), "structure": az.format_structure(spec.structure),
                    "mean_fidelity": float(fids.mean()), "std_fidelity": float(fids.std()),
                    "depth": az.ansatz_depth(spec), "n_params": az.parameter_count(spec),
                })
    checks, meta = {}, {"tradeoff": {}}
    lookup = {(r["n_qubits"], r["entangler"], r["structure"]): r for r in rows}
    if (4, "nn", "321") in lookup:
        checks["nn_321_above_floor"] = lookup[(4, "nn", "321")]["mean_fidelity"] > cfg.fidelity_floor
    pairs = [(lookup[(4, "a2a", s)], lookup[(4, "nn", s)]) for (n, e, s) in lookup
             if n == 4 and e == "a2a" and (4, "nn", s) in lookup]
    if pairs:
        meta["a2a_vs_nn"] = {a["structure"]: {"a2a": a["mean_fidelity"], "nn": b["mean_fidelity"],
                                              "depth_a2a": a["depth"], "depth_nn": b["depth"]}
                             for a, b in pairs}
        meta["a2a_at_least_nn_fraction"] = float(np.mean([a["mean_fidelity"] >= b["mean_fidelity"] - 1e-3
                                                          for a, b in pairs]))
        meta["a2a_deeper"] = all(a["depth"] >= b["depth"] for a, b in pairs)
    # best tradeoff: shallowest structure whose mean fidelity clears the floor
    for key in sorted({(r["n_qubits"], r["entangler"]) for r in rows}):
        ok = [r for r in rows if (r["n_qubits"], r["entangler"]) == key
              and r["mean_fidelity"] > cfg.fidelity_floor]
        if ok:
            pick = min(ok, key=lambda r: (r["depth"], -r["mean_fidelity"]))
            meta["tradeoff"][f"N{key[0]}_{key[1]}"] = pick["structure"]
    cols = ["n_qubits", "entangler", "structure", "mean_fidelity", "std_fidelity", "depth", "n_params"]
    return ExperimentResult(cfg.id, cols, rows, checks, meta)


# -- iteration scaling ------------------------------------------------------------------

def run_iteration_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    stats_by_mode = {}
    for mode in cfg.modes():
        if mode == "global":
            def make_spec(n, ent=cfg.entangler):
                return az.AnsatzSpec.global_(n, n - 1, ent)
        else:
            def make_spec(n, ent=cfg.entangler):
                return az.AnsatzSpec.local(n, az.stepwise_structure(n), ent)
        stats = iterations_to_fidelity(
            make_spec, cfg.n_values, lambda n: encode_state(cfg.weights(n)), cfg.target_fidelity,
            cfg.repeats, _spec_seed(cfg, mode) % (2 ** 31), cfg.nm(), runner=parallel_map,
            attempts=cfg.attempts,
        )
        stats_by_mode[mode] = {s.n_qubits: s for s in stats}
        for s in stats:
            rows.append({"n_qubits": s.n_qubits, "mode": mode, "mean_iterations": s.mean,
                         "std_iterations": s.std, "converged": len(s.counts), "censored": s.censored,
                         "n_params": az.parameter_count(make_spec(s.n_qubits))})
    checks = {}
    meta = {"counts": {m: {n: s.counts for n, s in d.items()} for m, d in stats_by_mode.items()}}
    if set(stats_by_mode) == {"global", "local"}:
        g, loc = stats_by_mode["global"], stats_by_mode["local"]
        full = [n for n in cfg.n_values if g[n].censored == 0 and loc[n].censored == 0]
        if 3 in cfg.n_values:
            checks["all_converge_at_3"] = 3 in full
        largest = max((n for n in full if n >= 5), default=None)
        meta["compared_at"] = largest
        checks["local_at_least_global_at_largest_n"] = (
            largest is not None and loc[largest].mean >= g[largest].mean
        )
    cols = ["n_qubits", "mode", "mean_iterations", "std_iterations", "converged", "censored", "n_params"]
    return ExperimentResult(cfg.id, cols, rows, checks, meta)


# -- noisy training ----------------------------------------------------------------------

def noisy_run(spec: az.AnsatzSpec, psi, cfg: ExperimentConfig, index: int) -> TrainingResult:
    """One shot-sampled SPSA run; estimator noise, init and perturbations use separate streams."""
    gains = SPSAGains(a=cfg.spsa_a, c=cfg.spsa_c)
    est = CostEstimator("shot_sampled", cfg.shots, seed=_spec_seed(cfg, "shots", index) % (2 ** 31))
    seed = run_seed(_spec_seed(cfg, spec.mode), index)
    if spec.mode == "global":
        return train_global(spec, psi, OptimizerConfig("spsa", cfg.max_iter, gains=gains), est, seed)
    return train_local(spec, psi, OptimizerConfig("spsa", cfg.stage_iter, gains=gains), est, seed)


def run_noisy_training(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.n_values[0]
    psi = encode_state(cfg.weights(n))
    specs = {"global": az.AnsatzSpec.global_(n, cfg.cycles[0], cfg.entangler),
             "local": az.AnsatzSpec.local(n, cfg.structures[0], cfg.entangler)}
    tol = 1.0 / np.sqrt(cfg.shots)
    rows, meta, checks = [], {"fidelity": {}, "plateau": {}, "boundaries": {}}, {}
    lo, hi = cfg.fidelity_range
    for mode in cfg.modes():
        spec = specs[mode]
        runs = parallel_map(noisy_run, [(spec, psi, cfg, r) for r in range(cfg.repeats)])
        traces = np.array([r.cost_trace for r in runs])
        mean, std = traces.mean(axis=0), traces.std(axis=0)
        bounds = [0] + list(runs[0].layer_boundaries)
        for seg, (a, b) in enumerate(zip(bounds, bounds[1:]), 1):
            for it in range(a, b):
                rows.append({"mode": mode, "segment": seg, "iteration": it + 1,
                             "mean_cost": mean[it], "std_cost": std[it]})
        plateau = sum(plateau_iteration(mean[a:b], tol) for a, b in zip(bounds, bounds[1:]))
        fids = np.array([r.final_fidelity for r in runs])
        meta["fidelity"][mode] = {"mean": float(fids.mean()), "std": float(fids.std()),
                                  "runs": fids.tolist()}
        meta["plateau"][mode] = int(plateau)
        meta["boundaries"][mode] = bounds[1:]
        checks[f"{mode}_fidelity_in_range"] = bool(lo <= fids.mean() <= hi)
    if {"global", "local"} <= set(meta["plateau"]):
        checks["local_plateaus_first"] = meta["plateau"]["local"] < meta["plateau"]["global"]
    meta["plateau_tolerance"] = tol
    cols = ["mode", "segment", "iteration", "mean_cost", "std_cost"]
    return ExperimentResult(cfg.id, cols, rows, checks, meta)


# -- depth scaling -----------------------------------------------------------------------

def minimal_global_cycles(n: int, psi, entangler: str, floor: float, restarts: int,
                          optimizer: OptimizerConfig, seed_base: int, max_cycles: int):
    """Smallest ``n_cycles`` whose best-of-``restarts`` exact fidelity reaches ``floor``.

    Returns ``(cycles, fidelity)``; ``cycles`` is None if ``max_cycles`` is not enough.
    """
    fid = 0.0
    for cycles in range(max_cycles + 1):
        spec = az.AnsatzSpec.global_(n, cycles, entangler)
        runs = train_restarts(spec, psi, restarts, optimizer, seed_base=seed_base + cycles,
                              stop_at=floor, target_fidelity=floor)
        fid = best_result(runs).final_fidelity
        if fid >= floor:
            return cycles, fid
    return None, fid


def settled_probability(psi: np.ndarray, j: int) -> float:
    """Probability that qubits ``0 .. j-1`` are all ``|1>``.

    Later local stages act only on the remaining qubits, so this value is
    carried unchanged to the end and bounds the final fidelity.
    """
    block = np.asarray(psi).reshape(2 ** j, -1)[-1]
    return float(np.vdot(block, block).real)


def greedy_local_structure(n: int, psi, entangler: str, floor: float, restarts: int,
                           optimizer: OptimizerConfig, seed_base: int, max_cycles: int):
    """Layer-by-layer search for a shallow local structure reaching ``floor``.

    The probability that the first ``j`` qubits are settled in ``|1>``
    (:func:`settled_probability`) cannot grow in later stages, so stage
    ``j`` must keep the loss within ``j/N`` of the budget: that probability
    must reach ``1 - (1 - floor) * j / N``.  Layer ``j`` takes the fewest
    cycles that do so (layer 1 from up to ``restarts`` random starts, later
    layers from zeros), is frozen, and feeds the next layer.
    Returns ``(structure, fidelity)``; ``structure`` is None if some layer
    fails within ``max_cycles`` or the composed circuit stays below ``floor``.
    """
    probe = az.AnsatzSpec.local(n, (0,) * (n - 1), entangler)
    state = _amplitudes(psi)
    structure: List[int] = []
    for j in range(1, n):
        stage_floor = 1.0 - (1.0 - floor) * j / n
        chosen = None
        for cycles in range(max_cycles + 1):
            trial = list(structure) + [cycles] + [0] * (n - 1 - j)
            spec = az.AnsatzSpec.local(n, trial, entangler)
            tries = restarts if j == 1 else 1
            best = None
            for r in range(tries):
                rng = np.random.default_rng(np.random.SeedSequence([seed_base, j, cycles, r]))
                size = spec.layer_size(j)
                x0 = rng.uniform(0.0, 2 * np.pi, size) if j == 1 else np.zeros(size)
                _, out, _ = train_stage(spec, j, state, x0, optimizer, target=1e-8)
                fid = settled_probability(out, j)
                if best is None or fid > best[1]:
                    best = (out, fid)
                if fid >= stage_floor:
                    break
            if best[1] >= stage_floor:
                chosen = (cycles, best[0])
                break
        if chosen is None:
            return None, 0.0
        structure.append(chosen[0])
        state = chosen[1]
    _, state, _ = train_stage(probe, n, state, np.zeros(3), optimizer, target=1e-8)
    fid = float(abs(state[-1]) ** 2)
    return (tuple(structure) if fid >= floor else None), fid


def local_structure_reaches(n: int, psi, structure, entangler: str, floor: float, restarts: int,
                            optimizer: OptimizerConfig, seed_base: int, cache: Optional[dict] = None) -> float:
    """Best fidelity of the full local pipeline for ``structure`` over up to ``restarts`` runs.

    Qubits already rotated to ``|1>`` are left alone by later stages, so
    the final fidelity never exceeds :func:`settled_probability` after any
    stage; a run that falls below ``floor`` there is abandoned.  Stage
    ``j`` of run ``r`` depends only on the first ``j`` layer sizes, so
    ``cache`` keyed on that prefix lets related structures share their
    common stages.
    """
    spec = az.AnsatzSpec.local(n, structure, entangler)
    cache = {} if cache is None else cache
    start = _amplitudes(psi)
    best = 0.0
    for r in range(restarts):
        state, fid = start, 1.0
        for j in range(1, n + 1):
            key = (r, j, tuple(structure[:j]))
            if key not in cache:
                size = 3 if j == n else spec.layer_size(j)
                if j == 1:
                    x0 = run_streams(run_seed(seed_base, r), EXACT)[0].uniform(0.0, 2 * np.pi, size)
                else:
                    x0 = np.zeros(size)
                _, out, _ = train_stage(spec, j, state, x0, optimizer, target=1e-8)
                cache[key] = (out, settled_probability(out, j))
            state, fid = cache[key]
            if fid < floor:
                break
        if fid >= floor:
            best = max(best, float(abs(state[-1]) ** 2))
        if best >= floor:
            break
    return best


def refine_local_structure(n: int, psi, structure, entangler: str, floor: float, restarts: int,
                           optimizer: OptimizerConfig, seed_base: int):
    """Descend from a structure that reaches ``floor`` by removing single cycles.

    Each round tries every structure with one layer lowered by one cycle,
    shallowest built depth first, and moves to the first one whose full
    local training still reaches ``floor``.  Stops when no single removal
    works.  Returns ``(structure, fidelity)``.
    """
    current = tuple(structure)
    cache: dict = {}
    fid = local_structure_reaches(n, psi, current, entangler, floor, restarts, optimizer, seed_base, cache)
    while True:
        moves = [current[:i] + (c - 1,) + current[i + 1:] for i, c in enumerate(current) if c > 0]
        moves.sort(key=lambda s: (az.ansatz_depth(az.AnsatzSpec.local(n, s, entangler)), s))
        for cand in moves:
            f = local_structure_reaches(n, psi, cand, entangler, floor, restarts, optimizer, seed_base, cache)
            if f >= floor:
                current, fid = cand, f
                break
        else:
            return current, fid


def _depth_job(kind: str, n: int, psi, entangler: str, cfg_values: dict):
    opt = OptimizerConfig("nm", max_iter=cfg_values["max_iter"], tol=cfg_values["tol"])
    args = (n, psi, entangler, cfg_values["floor"], cfg_values["restarts"], opt,
            cfg_values["seed_base"], cfg_values["max_cycles"])
    if kind == "global":
        cycles, fid = minimal_global_cycles(*args)
        if cycles is None:
            return None, fid, None
        return az.ansatz_depth(az.AnsatzSpec.global_(n, cycles, entangler)), fid, str(cycles)
    structure, fid = greedy_local_structure(*args)
    if structure is None:
        return None, fid, None
    refined, rfid = refine_local_structure(n, psi, structure, entangler, cfg_values["floor"],
                                           cfg_values["restarts"], opt, cfg_values["seed_base"])
    # the descent retrains with its own seeds; keep the greedy result if it found nothing better
    if rfid >= cfg_values["floor"]:
        structure, fid = refined, rfid
    spec = az.AnsatzSpec.local(n, structure, entangler)
    return az.ansatz_depth(spec), fid, az.format_structure(structure)


def loglog_slope(ns: Sequence[int], depths: Sequence[float]) -> float:
    """Least-squares exponent ``k`` of ``depth ~ N**k``."""
    return float(np.polyfit(np.log(ns), np.log(depths), 1)[0])


def run_depth_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    jobs, keys = [], []
    for n in cfg.n_values:
        w = cfg.weights(n)
        psi = encode_state(w)
        rows.append({"n_qubits": n, "method": "exact", "depth": exact_uw_depth(w), "fidelity": 1.0,
                     "setting": ""})
        for mode in cfg.modes():
            for ent in cfg.entanglers():
                values = dict(floor=cfg.fidelity_floor, restarts=cfg.repeats, max_iter=cfg.max_iter,
                              tol=cfg.tol, max_cycles=cfg.max_cycles,
                              seed_base=_spec_seed(cfg, n, mode, ent) % (2 ** 31))
                jobs.append((mode, n, psi, ent, values))
                keys.append((n, f"{mode}_{_ent_short(ent)}"))
    for (n, method), (depth, fid, setting) in zip(keys, parallel_map(_depth_job, jobs)):
        rows.append({"n_qubits": n, "method": method, "depth": depth, "fidelity": fid, "setting": setting})
    rows.sort(key=lambda r: (r["n_qubits"], r["method"] != "exact", r["method"]))

    table: Dict[str, Dict[int, Optional[int]]] = {}
    for r in rows:
        table.setdefault(r["method"], {})[r["n_qubits"]] = r["depth"]
    checks, meta = {}, {"slopes": {}, "exact_ratios": {}}
    exact = table["exact"]
    ratio_ns = [n for n in sorted(exact) if n >= 3 and n + 1 in exact]
    ratios = [exact[n + 1] / exact[n] for n in ratio_ns]
    meta["exact_ratios"] = {f"{n + 1}/{n}": r for n, r in zip(ratio_ns, ratios)}
    if len(ratios) >= 2:
        checks["exact_ratios_increase"] = bool(np.all(np.diff(ratios) > 0))
    variational = [m for m in table if m != "exact"]
    meta["all_variational_found"] = all(d is not None for m in variational for d in table[m].values())
    checks["variational_reach_floor"] = meta["all_variational_found"]
    if len(exact) >= 2:
        ns = sorted(exact)
        meta["slopes"]["exact"] = loglog_slope(ns, [exact[n] for n in ns])
    poly_ok = True
    for m in variational:
        pts = sorted((n, d) for n, d in table[m].items() if d is not None)
        if len(pts) >= 2:
            slope = loglog_slope([p[0] for p in pts], [p[1] for p in pts])
            meta["slopes"][m] = slope
            poly_ok &= slope <= POLY_EXPONENT_BOUND
    checks["variational_polynomial"] = bool(poly_ok and meta["all_variational_found"])
    if 4 in exact:
        at4 = [table[m].get(4) for m in variational]
        checks["exact_at_least_twice_variational_n4"] = bool(
            all(d is not None and exact[4] >= 2 * d for d in at4))
    pairs = [(f"global_{e}", f"local_{e}") for e in ("a2a", "nn")]
    shallower = True
    for g, loc in pairs:
        if g in table and loc in table:
            for n in table[g]:
                if table[g][n] is not None and table[loc].get(n) is not None:
                    shallower &= table[g][n] <= table[loc][n]
    meta["global_not_deeper_than_local"] = bool(shallower)
    meta["reference_depths_n4"] = {"exact": 49, "global_a2a": 19, "local_a2a": 29}
    cols = ["n_qubits", "method", "depth", "fidelity", "setting"]
    return ExperimentResult(cfg.id, cols, rows, checks, meta)


# Largest fitted exponent accepted as "polynomial" depth growth; the local
# ansatz has O(N**3) parameters, so its depth should not exceed N**3 growth.
POLY_EXPONENT_BOUND = 3.0

RUNNERS = {
    "activation_compare": run_activation_compare,
    "global_depth_sweep": run_global_depth_sweep,
    "structure_bars": run_structure_bars,
    "iteration_scaling": run_iteration_scaling,
    "noisy_training": run_noisy_training,
    "depth_scaling": run_depth_scaling,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    result = RUNNERS[cfg.id](cfg)
    target = out_dir or cfg.out
    if target is not None:
        write_result(result, cfg, target)
    for name, ok in result.checks.items():
        log.info("%s: %s %s", cfg.id, name, "ok" if ok else "FAILED")
    return result
