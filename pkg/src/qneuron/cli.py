"""Command-line entry point ``qneuron``.

Exit status: 0 on success, 1 for invalid arguments or configuration,
2 when a run completes but misses one of its pass/fail thresholds.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from . import ansatz as az
from .encoding import PatternError, build_ui_circuit, build_uw_circuit, encode_state, label_to_pattern, parse_pattern
from .experiments import EXPERIMENT_IDS, ConfigError, ExperimentConfig, run_experiment
from .neuron import NeuronConfig, circuit_activation_probability, classical_activation_probability
from .optimizers import SPSAGains
from .simcore import DimensionError
from .training import CostEstimator, EstimatorError, OptimizerConfig, best_result, train_restarts

EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qneuron", description="Quantum perceptron simulator and variational trainer")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    enc = sub.add_parser("encode", help="show a pattern and the hyperedges of its preparation circuit")
    enc.add_argument("--k", type=int, required=True, help="decimal pattern label")
    enc.add_argument("--m", type=int, default=16, help="pattern length (power of two)")

    ex = sub.add_parser("exact", help="activation of an input against weights with the exact U_w")
    ex.add_argument("--weights", required=True, help="k:<int> or a +/- string")
    ex.add_argument("--input", required=True, help="k:<int> or a +/- string")
    ex.add_argument("--m", type=int, default=16)

    tr = sub.add_parser("train", help="train a variational U_w for the cross weights")
    tr.add_argument("--mode", choices=("global", "local"), required=True)
    tr.add_argument("--entangler", choices=("a2a", "nn"), default="a2a")
    shape = tr.add_mutually_exclusive_group()
    shape.add_argument("--n", type=int, help="entangling cycles (global mode)")
    shape.add_argument("--structure", help="per-layer cycles such as 321 (local mode)")
    tr.add_argument("--weights", default="k:20032")
    tr.add_argument("--m", type=int, default=16)
    tr.add_argument("--estimator", choices=("exact", "shots"), default="exact")
    tr.add_argument("--shots", type=int, default=1024)
    tr.add_argument("--optimizer", choices=("nm", "spsa"), default="nm")
    tr.add_argument("--max-iter", type=int, default=None)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--restarts", type=int, default=1)
    tr.add_argument("--min-fidelity", type=float, default=None,
                    help="exit with status 2 if the best fidelity stays below this")

    exp = sub.add_parser("experiment", help="run one of the figure-level experiments")
    exp.add_argument("id", choices=EXPERIMENT_IDS)
    exp.add_argument("--config", help="JSON file with ExperimentConfig fields")
    exp.add_argument("--out", help="output directory for the CSV and JSON files")
    exp.add_argument("--seed", type=int, default=None)
    return p


def _encode(args) -> int:
    w = label_to_pattern(args.k, args.m)
    circ = build_ui_circuit(w)
    print(f"label     {w.label}")
    print(f"pattern   {w.to_string()}")
    for row in w.image():
        print("          " + " ".join("+" if v > 0 else "-" for v in row))
    edges = [g.qubits for g in circ.gates if g.kind in ("Z", "MCZ")]
    print(f"edges     {edges}")
    print(f"depth     U_i={circ.depth()} U_w={build_uw_circuit(w).depth()} (undecomposed)")
    return EXIT_OK


def _exact(args) -> int:
    w = parse_pattern(args.weights, args.m)
    i = parse_pattern(args.input, w.m)
    p = circuit_activation_probability(i, NeuronConfig(w))
    print(json.dumps({"k_w": w.label, "k_i": i.label, "dot": i.dot(w), "p_out": p,
                      "p_classical": classical_activation_probability(i, w)}))
    return EXIT_OK


def _train(args) -> int:
    w = parse_pattern(args.weights, args.m)
    n = w.n_qubits
    if args.mode == "global":
        if args.structure is not None:
            raise ConfigError("--structure applies to the local mode")
        spec = az.AnsatzSpec.global_(n, 3 if args.n is None else args.n, args.entangler)
    else:
        if args.n is not None:
            raise ConfigError("--n applies to the global mode")
        structure = args.structure or az.format_structure(az.stepwise_structure(n))
        spec = az.AnsatzSpec.local(n, structure, args.entangler)
    if args.restarts < 1:
        raise ConfigError("--restarts must be >= 1")
    default_iter = 20000 if args.optimizer == "nm" else (1000 if args.mode == "global" else 200)
    opt = OptimizerConfig(args.optimizer, max_iter=args.max_iter or default_iter, tol=1e-10,
                          gains=SPSAGains(a=1.0))
    est = CostEstimator("exact" if args.estimator == "exact" else "shots", args.shots, seed=args.seed)
    runs = train_restarts(spec, encode_state(w), args.restarts, opt, est, seed_base=args.seed)
    best = best_result(runs)
    print(json.dumps({
        "ansatz": spec.describe(),
        "n_params": az.parameter_count(spec),
        "depth": az.ansatz_depth(spec),
        "fidelity": best.final_fidelity,
        "fidelities": [r.final_fidelity for r in runs],
        "iterations": best.iterations,
        "seed": best.seed,
        "theta": np.round(best.params, 10).tolist(),
    }))
    if args.min_fidelity is not None and best.final_fidelity < args.min_fidelity:
        return EXIT_THRESHOLD
    return EXIT_OK


def _experiment(args) -> int:
    data = {}
    if args.config:
        data = ExperimentConfig.from_json(args.config, args.id).to_dict()
        data.pop("id")
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ExperimentConfig.for_id(args.id, **data)
    result = run_experiment(cfg, args.out)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.id}.{name}")
    return EXIT_OK if result.passed else EXIT_THRESHOLD


_COMMANDS = {"encode": _encode, "exact": _exact, "train": _train, "experiment": _experiment}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PatternError, EstimatorError, DimensionError, ValueError, OSError) as exc:
        print(f"qneuron: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
