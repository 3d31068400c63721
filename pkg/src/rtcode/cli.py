"""Command-line front end: ``rtcode {validate,optimize,sweep,verify,simulate}``.

Exit status: 0 success, 1 a verification check failed, 2 bad arguments or an
invalid spec/policy file, 3 an enumeration budget was exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, mdp, search
from .errors import BudgetExceeded, SpecError
from .model import COMPARE_TOL, ProblemSpec, load_spec, spec_to_dict
from .montecarlo import simulate
from .system import (
    DecoderPolicy,
    decoder_from_dict,
    decoder_to_dict,
    default_decoder,
    encoder_from_dict,
    encoder_to_dict,
    evaluate_cost,
    evaluate_cost_si,
    prefix_tree,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
SOLVERS = ("tracking", "system", "window", "mdp")
CHECKS = ("theorem1", "theorem2", "theorem3", "theorem6", "theorem7", "concavity")


@dataclass
class RunConfig:
    command: str
    spec_path: str
    output_path: Optional[str] = None
    solver: Optional[str] = None
    zy_size: Optional[int] = None
    window: int = 1
    lambda_grid: list = field(default_factory=list)
    trials: int = 1000
    seed: int = 0
    budget: int = search.DEFAULT_BUDGET
    threads: int = 0
    decoder_path: Optional[str] = None
    encoder_path: Optional[str] = None
    checks: list = field(default_factory=list)

    def __post_init__(self):
        if not self.spec_path:
            raise SpecError("--spec", "path must be nonempty")
        if self.output_path == "":
            raise SpecError("--out", "path must be nonempty")
        grid = self.lambda_grid
        if any(v < 0 for v in grid):
            raise SpecError("--lambda-grid", "values must be >= 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise SpecError("--lambda-grid", "values must be strictly increasing")
        if self.solver is not None and self.solver not in SOLVERS:
            raise SpecError("--solver", f"must be one of {SOLVERS}")
        for name in ("window", "trials", "budget"):
            if getattr(self, name) < 1:
                raise SpecError(f"--{name}", "must be >= 1")
        if self.zy_size is not None and self.zy_size < 1:
            raise SpecError("--zy-size", "must be >= 1")
        unknown = [c for c in self.checks if c not in CHECKS]
        if unknown:
            raise SpecError("--checks", f"unknown checks {unknown}; choose from {CHECKS}")


# -- output helpers ----------------------------------------------------------------


def _header(config):
    return {"version": __version__, "config": asdict(config), "seed": config.seed}


def _dump_json(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _side_path(out, suffix):
    if out is None:
        return None
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(what, str(exc)) from None


def _load_decoder(config, spec):
    if config.decoder_path is None:
        return None
    doc = _load_json(config.decoder_path, "--decoder")
    try:
        return decoder_from_dict(doc.get("decoder", doc))
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError("--decoder", f"malformed decoder file: {exc}") from None


def _load_encoder(config):
    doc = _load_json(config.encoder_path, "--encoder")
    try:
        return encoder_from_dict(doc.get("encoder", doc))
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError("--encoder", f"malformed encoder file: {exc}") from None


# -- solvers -------------------------------------------------------------------------


@dataclass
class Solution:
    solver: str
    cost: float
    avg_distortion: float
    avg_length: float
    spec: ProblemSpec
    encoder: object
    decoder: DecoderPolicy
    candidates: Optional[int] = None
    extra: dict = field(default_factory=dict)


def _evaluate(spec, encoder, decoder):
    return (evaluate_cost_si if spec.has_si else evaluate_cost)(spec, encoder, decoder)


def _default_solver(spec):
    return "mdp" if spec.has_si else "system"


def solve(spec: ProblemSpec, config: RunConfig) -> Solution:
    solver = config.solver or _default_solver(spec)
    if spec.has_si and solver != "mdp":
        raise SpecError("--solver", f"{solver!r} needs a spec without side information")
    decoder = _load_decoder(config, spec)
    if solver == "mdp":
        rw = decoder.si_next_state if decoder is not None else None
        if spec.has_si:
            table, cost = mdp.solve_backward_si(spec, rw, budget=config.budget)
        else:
            table, cost = mdp.solve_backward(spec, budget=config.budget)
        ext, enc, dec = mdp.policy_system(spec, table, rw)
        rep = _evaluate(ext, enc, dec)
        return Solution(solver, cost, rep.avg_distortion, rep.avg_length, ext, enc, dec,
                        extra={"values": mdp.value_table_to_dict(table)})
    if solver == "tracking":
        if decoder is None:
            res = search.optimize_infinite_memory(spec, budget=config.budget)
        else:
            res = search.optimize_tracking(spec, decoder, budget=config.budget)
    elif solver == "system":
        res = search.optimize_system(spec, config.zy_size or spec.zy_size, budget=config.budget)
    else:
        res = search.optimize_sliding_window(spec, config.window, budget=config.budget)
    rep = evaluate_cost(res.spec, res.best_encoder, res.best_decoder)
    return Solution(solver, res.best_cost, rep.avg_distortion, rep.avg_length, res.spec,
                    res.best_encoder, res.best_decoder, res.candidates_evaluated)


# -- commands ------------------------------------------------------------------------


def cmd_validate(spec, config):
    doc = _header(config)
    doc["valid"] = True
    doc["spec"] = spec_to_dict(spec)
    _dump_json(doc, config.output_path)
    return EXIT_OK


def _solution_doc(sol):
    return {
        "solver": sol.solver,
        "cost": sol.cost,
        "avg_distortion": sol.avg_distortion,
        "avg_length": sol.avg_length,
        "candidates_evaluated": sol.candidates,
        "zy_size": sol.spec.zy_size,
    }


def cmd_optimize(spec, config):
    sol = solve(spec, config)
    doc = _header(config)
    doc["result"] = _solution_doc(sol)
    files = {"encoder": _side_path(config.output_path, ".encoder.json"),
             "decoder": _side_path(config.output_path, ".decoder.json")}
    if "values" in sol.extra:
        files["values"] = _side_path(config.output_path, ".values.json")
    doc["policy_files"] = files
    _dump_json(doc, config.output_path)
    if config.output_path is not None:
        _dump_json({**_header(config), "encoder": encoder_to_dict(sol.encoder),
                    "zy_size": sol.spec.zy_size}, files["encoder"])
        _dump_json({**_header(config), "decoder": decoder_to_dict(sol.decoder),
                    "zy_size": sol.spec.zy_size}, files["decoder"])
        if "values" in sol.extra:
            _dump_json({**_header(config), **sol.extra["values"]}, files["values"])
    return EXIT_OK


def cmd_sweep(spec, config):
    if not config.lambda_grid:
        raise SpecError("--lambda-grid", "required for sweep")
    buf = io.StringIO()
    buf.write(f"# rtcode {__version__}\n")
    buf.write(f"# config {json.dumps(asdict(config), sort_keys=True)}\n")
    buf.write(f"# seed {config.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda", "avg_distortion", "avg_length", "cost", "solver"])
    for lam in config.lambda_grid:
        sol = solve(spec.replace(lam=lam), config)
        writer.writerow([repr(float(lam)), repr(sol.avg_distortion), repr(sol.avg_length),
                         repr(sol.cost), sol.solver])
    if config.output_path is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(config.output_path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


def _default_checks(spec):
    return ["theorem6", "theorem7"] if spec.has_si else \
        ["theorem1", "theorem2", "theorem3", "concavity"]


def _equal_report(name, lhs, rhs, details=None):
    return search.TheoremReport(name, float(lhs), float(rhs),
                                bool(abs(lhs - rhs) <= COMPARE_TOL), {}, details or {})


def run_checks(spec: ProblemSpec, config: RunConfig) -> list:
    decoder = _load_decoder(config, spec) or default_decoder(spec)
    reports = []
    for name in config.checks or _default_checks(spec):
        needs_si = name in ("theorem6", "theorem7")
        if needs_si != spec.has_si:
            raise SpecError("--checks", f"{name} does not apply to this spec")
        if name == "theorem1":
            reports.append(search.check_theorem1(spec, decoder, samples=config.trials,
                                                 seed=config.seed, budget=config.budget))
        elif name == "theorem2":
            _, cost = mdp.solve_backward(spec, budget=config.budget)
            brute = search.optimize_infinite_memory(spec, budget=config.budget)
            reports.append(_equal_report(name, cost, brute.best_cost))
        elif name == "theorem3":
            if spec.horizon % config.window:
                raise SpecError("--window", f"{config.window} does not divide {spec.horizon}")
            reports.append(search.check_theorem3(spec, config.zy_size or spec.zy_size,
                                                 config.window, budget=config.budget))
        elif name == "theorem6":
            reports.append(search.check_theorem6(spec, decoder, budget=config.budget))
        elif name == "theorem7":
            _, cost = mdp.solve_backward_si(spec, decoder.si_next_state, budget=config.budget)
            ext, r = prefix_tree(spec)
            g = [np.zeros((spec.w_size, spec.y_size, spec.zw_size, ext.zy_size), dtype=int)
                 ] * spec.horizon
            brute = search.optimize_full_history(
                ext, DecoderPolicy(r, g, decoder.si_next_state), reproduction="bayes",
                budget=config.budget)
            reports.append(_equal_report(name, cost, brute.best_cost))
        else:
            rep = search.sample_concavity(spec, decoder, config.trials, config.seed)
            worst = min(rep.worst_stage_gap, rep.worst_downstream_gap)
            reports.append(search.TheoremReport(name, worst, 0.0, rep.holds, {}, rep.as_dict()))
    return reports


def cmd_verify(spec, config):
    reports = run_checks(spec, config)
    doc = _header(config)
    doc["reports"] = [r.as_dict() for r in reports]
    doc["all_hold"] = all(r.holds for r in reports)
    _dump_json(doc, config.output_path)
    return EXIT_OK if doc["all_hold"] else EXIT_CHECK_FAILED


def cmd_simulate(spec, config):
    if config.encoder_path is not None:
        decoder = _load_decoder(config, spec)
        if decoder is None:
            raise SpecError("--decoder", "required together with --encoder")
        sim_spec, encoder, label = spec, _load_encoder(config), "given"
        doc_zy = json.loads(Path(config.encoder_path).read_text()).get("zy_size")
        if doc_zy and doc_zy != spec.zy_size:
            sim_spec = spec.replace(zy_size=doc_zy)
    else:
        sol = solve(spec, config)
        sim_spec, encoder, decoder, label = sol.spec, sol.encoder, sol.decoder, sol.solver
    exact = _evaluate(sim_spec, encoder, decoder).total
    res = simulate(sim_spec, encoder, decoder, config.trials, config.seed)
    doc = _header(config)
    doc["policies"] = label
    doc["exact_cost"] = exact
    doc["result"] = res.as_dict()
    _dump_json(doc, config.output_path)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
}


def run(config: RunConfig) -> int:
    """Execute one command; returns the exit status."""
    print(json.dumps({"version": __version__, "config": asdict(config), "seed": config.seed},
                     sort_keys=True), file=sys.stderr)
    try:
        spec = load_spec(config.spec_path)
        return COMMANDS[config.command](spec, config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtcode",
                                     description="Real-time variable-rate source coding toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--spec", required=True, help="problem spec JSON file")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--lambda-grid", type=_float_list, default=[],
                        help="comma-separated, strictly increasing lambda values")
    parser.add_argument("--solver", choices=SOLVERS,
                        help="default: system without SI, mdp with SI")
    parser.add_argument("--window", type=int, default=1, help="sliding-window length l")
    parser.add_argument("--zy-size", type=int, help="decoder state count (default: from spec)")
    parser.add_argument("--trials", type=int, default=1000,
                        help="Monte-Carlo trajectories or sampled-check trials")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--budget", type=int, default=search.DEFAULT_BUDGET,
                        help="max candidates for any enumeration")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="recorded for reproducibility; searches run vectorized in-process")
    parser.add_argument("--decoder", help="fixed decoder JSON (tracking solver, checks)")
    parser.add_argument("--encoder", help="encoder JSON to simulate instead of optimizing")
    parser.add_argument("--checks", type=lambda s: [c for c in s.split(",") if c], default=[],
                        help=f"comma-separated subset of {','.join(CHECKS)}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            command=args.command, spec_path=args.spec, output_path=args.out,
            solver=args.solver, zy_size=args.zy_size, window=args.window,
            lambda_grid=args.lambda_grid, trials=args.trials, seed=args.seed,
            budget=args.budget, threads=args.threads, decoder_path=args.decoder,
            encoder_path=args.encoder, checks=args.checks,
        )
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
