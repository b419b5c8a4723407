"""Experiment command line.

Subcommands: ``sample``, ``contraction``, ``lowerbound``, ``w2``,
``gradscaling``, ``odecheck``. Each writes CSV files under ``--out`` and
prints a JSON summary on stdout.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 criterion violated.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .chain import (
    COLLOCATION,
    DISCRETIZED,
    EXACT,
    IDEAL,
    MODES,
    SOLVERS,
    ChainConfig,
    default_config,
    run_chain,
)
from .errors import ConvergenceError, InputError
from .potentials import KINDS, make_potential

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CRITERION = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    potential: str = "quadratic"
    dim: int = 2
    mu: float = 1.0
    L: Optional[float] = None
    kappa: Optional[float] = None
    eigenvalues: Optional[list] = None
    center: Optional[list] = None
    eps: float = 0.1
    epsilons: Optional[list] = None
    steps: Optional[int] = None
    chains: int = 1
    seed: int = 0
    c: Optional[float] = None
    mode: str = DISCRETIZED
    solver: Optional[str] = None
    degree: int = 0
    out: str = "out"
    threads: Optional[int] = None
    pairs: int = 1000
    t_points: int = 64
    t_max: Optional[float] = None
    replicas: int = 20000
    C_N: float = 2.0
    kappas: Optional[list] = None
    samples: int = 10**6
    burn_in: Optional[int] = None
    delta: float = 1e-8
    trials: int = 50

    @property
    def lipschitz(self) -> float:
        if self.L is not None:
            return float(self.L)
        if self.kappa is not None:
            return float(self.kappa) * self.mu
        return self.mu

    def build_potential(self):
        return make_potential(self.potential, self.dim, self.mu, self.lipschitz, self.eigenvalues, self.center)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise InputError("config file must hold a flat JSON object")
        return cls.from_dict(data)


SUBCOMMAND_DEFAULTS = {
    "sample": dict(steps=1000),
    "contraction": dict(potential="logcosh", dim=10, kappa=100.0),
    "lowerbound": dict(L=100.0, c=2.0, dim=2),
    "w2": dict(dim=10, kappa=10.0, solver=EXACT),
    "gradscaling": dict(dim=1000, kappas=[16.0, 64.0], steps=200),
    "odecheck": dict(dim=10, kappa=10.0),
}


def _float_list(text: str) -> list:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _eps_value(text: str):
    vals = _float_list(text)
    return vals[0] if len(vals) == 1 else vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat JSON object keyed by flag names")
    common.add_argument("--potential", choices=KINDS)
    common.add_argument("--dim", type=int)
    common.add_argument("--mu", type=float)
    common.add_argument("--L", type=float, dest="L")
    common.add_argument("--kappa", type=float)
    common.add_argument("--eigenvalues", type=_float_list)
    common.add_argument("--center", type=_float_list)
    common.add_argument("--eps", type=_eps_value, help="accuracy; gradscaling takes a comma list")
    common.add_argument("--steps", type=int, help="number of HMC steps N (overrides the schedule)")
    common.add_argument("--chains", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--c", type=float, help="step-size constant, T = 1/(c sqrt(L))")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--solver", choices=SOLVERS)
    common.add_argument("--degree", type=int)
    common.add_argument("--out")
    common.add_argument("--threads", type=int)

    parser = argparse.ArgumentParser(prog="hmc-experiments", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], argument_default=argparse.SUPPRESS, help="run HMC chains")
    p = sub.add_parser("contraction", parents=[common], argument_default=argparse.SUPPRESS, help="coupled-flow contraction and crude bounds")
    p.add_argument("--pairs", type=int)
    p.add_argument("--t-points", type=int, dest="t_points")
    p.add_argument("--t-max", type=float, dest="t_max")
    p = sub.add_parser("lowerbound", parents=[common], argument_default=argparse.SUPPRESS, help="relaxation time of HMC on diag(mu, L)")
    p.add_argument("--samples", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p = sub.add_parser("w2", parents=[common], argument_default=argparse.SUPPRESS, help="W2 distance of the HMC output to a Gaussian target")
    p.add_argument("--replicas", type=int)
    p.add_argument("--C-N", type=float, dest="C_N")
    p = sub.add_parser("gradscaling", parents=[common], argument_default=argparse.SUPPRESS, help="gradient evaluations per step vs kappa and eps")
    p.add_argument("--kappas", type=_float_list)
    p = sub.add_parser("odecheck", parents=[common], argument_default=argparse.SUPPRESS, help="collocation solver against an oracle")
    p.add_argument("--delta", type=float)
    p.add_argument("--trials", type=int)
    return parser


def resolve_config(command: str, flags: dict) -> ExperimentConfig:
    """Merge defaults < JSON config file < command-line flags."""
    values = dict(SUBCOMMAND_DEFAULTS.get(command, {}))
    flags = dict(flags)
    path = flags.pop("config", None)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}") from exc
        try:
            ExperimentConfig.from_json(text)
            file_values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config file is not valid JSON: {exc}") from exc
        _drop_conflicting_curvature(values, file_values)
        values.update(file_values)
    if isinstance(flags.get("eps"), list):
        flags["epsilons"] = flags.pop("eps")
    _drop_conflicting_curvature(values, flags)
    values.update(flags)
    if values.get("threads") is None:
        values["threads"] = int(os.environ.get("HMC_THREADS", "1"))
    return ExperimentConfig.from_dict(values)


def _drop_conflicting_curvature(values: dict, new: dict):
    # L and kappa are alternative spellings of the same knob; the later layer wins
    if new.get("L") is not None:
        values.pop("kappa", None)
    if new.get("kappa") is not None:
        values.pop("L", None)


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _chain_config(cfg: ExperimentConfig) -> ChainConfig:
    p = cfg.build_potential()
    if not 0 < cfg.eps < math.sqrt(p.dim):
        raise InputError(f"eps must lie in (0, sqrt(d)) = (0, {math.sqrt(p.dim):.4g})")
    if cfg.mode == IDEAL:
        c = 2.0 if cfg.c is None else cfg.c
        solver = cfg.solver or (EXACT if p.kind == "quadratic" else "adaptive")
        T = 1.0 / (c * math.sqrt(p.lipschitz))
        return ChainConfig(p, T, cfg.steps, 0.0, cfg.eps, IDEAL, c, cfg.seed, solver, cfg.degree)
    base = default_config(p, cfg.eps, cfg.seed, C_N=cfg.C_N, solver=cfg.solver or COLLOCATION, degree=cfg.degree)
    T, delta = base.T, base.delta
    if cfg.c is not None:
        T = 1.0 / (cfg.c * math.sqrt(p.lipschitz))
        delta = math.sqrt(p.mu) * T * T * cfg.eps / 16.0
    N = base.N if cfg.steps is None else cfg.steps
    return ChainConfig(p, T, N, delta, cfg.eps, DISCRETIZED, cfg.c or base.c, cfg.seed, base.solver, cfg.degree)


def cmd_sample(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    if cfg.chains < 1:
        raise InputError("chains must be >= 1")
    chain_cfg = _chain_config(cfg)
    p = chain_cfg.potential
    theory_N = None
    if cfg.mode == DISCRETIZED:
        theory_N = default_config(p, cfg.eps, cfg.seed, C_N=cfg.C_N).N
    trajs = (analysis.parallel_map(lambda i: run_chain(chain_cfg, chain_index=i), range(cfg.chains), cfg.threads))
    rows = []
    for tr in trajs:
        grads = [0] + list(tr.ledger.per_step)
        for k, x in enumerate(tr.points):
            rows.append([tr.chain_index, k, *x.tolist(), grads[k]])
    header = ["chain", "step", *[f"x{i}" for i in range(p.dim)], "grads"]
    write_csv(out / "trajectory.csv", header, rows)
    stats = [analysis.amortized_gradient_stats(tr.ledger) if len(tr.ledger) else (0.0, 0.0) for tr in trajs]
    summary = dict(
        T=chain_cfg.T, N=chain_cfg.N, N_schedule=theory_N, delta=chain_cfg.delta,
        endpoints=[tr.points[-1] for tr in trajs],
        mean_grads_per_step=[s[0] for s in stats], mean_grad_norm_sq=[s[1] for s in stats],
    )
    return summary, EXIT_OK


def cmd_contraction(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    if cfg.pairs < 1:
        raise InputError("pairs must be >= 1")
    if cfg.t_points < 2:
        raise InputError("t-points must be >= 2")
    p = cfg.build_potential()
    contraction, crude = analysis.coupling_sweeps(p, cfg.pairs, cfg.seed, cfg.t_points, cfg.t_max)
    write_csv(out / "contraction.csv", ["t", "worst_ratio", "bound"],
              zip(contraction.t_grid, contraction.worst_ratio, contraction.bound))
    ok = contraction.passed and crude.passed
    summary = dict(
        pairs=cfg.pairs, contraction_max_excess=contraction.max_excess, contraction_passed=contraction.passed,
        bound_at_t_max=float(contraction.bound[-1]), crude_min_ratio=float(crude.min_ratio.min()),
        crude_max_ratio=float(crude.max_ratio.max()), crude_passed=crude.passed,
    )
    return summary, EXIT_OK if ok else EXIT_CRITERION


def cmd_lowerbound(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    c = 2.0 if cfg.c is None else cfg.c
    mu, L = cfg.mu, cfg.lipschitz
    gap_slow, gap_fast, lower = analysis.gaussian_chain_exact_gap(mu, L, c)
    ests = [analysis.gaussian_chain_lag1(mu, L, c, cfg.samples, cfg.seed, cfg.burn_in, coord=i) for i in (0, 1)]
    T = 1.0 / (c * math.sqrt(L))
    exact = [math.cos(T * math.sqrt(mu)), math.cos(T * math.sqrt(L))]
    write_csv(out / "autocorr.csv", ["coord", "lag1", "std_err", "exact"],
              [[i, e.lag1, e.std_err, exact[i]] for i, e in enumerate(ests)])
    slow = ests[0]
    threshold = (1 - 3 * slow.relaxation_rel_err) * lower
    ok = slow.relaxation >= threshold
    summary = dict(
        lag1=slow.lag1, std_err=slow.std_err, exact_lag1=exact[0],
        z_score=(slow.lag1 - exact[0]) / slow.std_err, relaxation_estimate=slow.relaxation,
        relaxation_exact=1 / gap_slow, relaxation_lower_bound=lower, threshold=threshold,
        burn_in=slow.burn_in, samples=slow.n_samples,
    )
    return summary, EXIT_OK if ok else EXIT_CRITERION


def cmd_w2(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    p = cfg.build_potential()
    constants = (cfg.C_N, 2 * cfg.C_N)
    reports = analysis.w2_with_fallback(
        p, cfg.eps, cfg.replicas, cfg.seed, constants=constants,
        solver=cfg.solver or EXACT, steps=cfg.steps, threads=cfg.threads,
    )
    write_csv(out / "w2.csv", ["replicas", "N", "w2", "bound"],
              [[r.replicas, r.N, r.w2, r.target_bound] for r in reports])
    passed = [r.C_N for r in reports if r.passed]
    summary = dict(
        runs=[dict(C_N=r.C_N, N=r.N, w2=r.w2, bound=r.target_bound, passed=r.passed) for r in reports],
        passing_C_N=passed[0] if passed else None,
    )
    return summary, EXIT_OK if passed else EXIT_CRITERION


def cmd_gradscaling(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    kappas = cfg.kappas or [16.0, 64.0]
    epsilons = cfg.epsilons or [cfg.eps]
    steps = 200 if cfg.steps is None else cfg.steps
    table = {}
    for kappa in kappas:
        for eps in epsilons:
            table[kappa, eps] = analysis.gradient_cost(kappa, eps, cfg.dim, steps, cfg.seed, cfg.potential, cfg.mu)
    write_csv(out / "gradscaling.csv", ["kappa", "eps", "mean_grads_per_step"],
              [[r.kappa, r.epsilon, r.mean_grads_per_step] for r in table.values()])
    checks = []
    for eps in epsilons:
        for k1, k2 in zip(kappas, kappas[1:]):
            checks.append(("kappa", k1, k2, eps, *analysis.gradient_ratio_ok(table[k1, eps], table[k2, eps])))
    for kappa in kappas:
        for e1, e2 in zip(epsilons, epsilons[1:]):
            checks.append(("eps", e1, e2, kappa, *analysis.gradient_ratio_ok(table[kappa, e1], table[kappa, e2])))
    summary = dict(
        rows=[asdict(r) for r in table.values()],
        checks=[dict(vary=c[0], a=c[1], b=c[2], fixed=c[3], measured=c[4], predicted=c[5], ok=c[6]) for c in checks],
    )
    return summary, EXIT_OK if all(c[6] for c in checks) else EXIT_CRITERION


def cmd_odecheck(cfg: ExperimentConfig, out: Path) -> tuple[dict, int]:
    p = cfg.build_potential()
    rows = analysis.ode_solver_check(p, cfg.delta, cfg.trials, cfg.seed, cfg.degree)
    write_csv(out / "odecheck.csv", ["trial", "delta", "error", "grads"],
              [[r.trial, r.delta, r.error, r.grads] for r in rows])
    max_err = max(r.error for r in rows)
    summary = dict(max_error=max_err, tolerance=10 * cfg.delta,
                   grad_constant=max(r.grad_constant for r in rows), max_pieces=max(r.pieces for r in rows))
    return summary, EXIT_OK if max_err <= 10 * cfg.delta else EXIT_CRITERION


COMMANDS = {
    "sample": cmd_sample,
    "contraction": cmd_contraction,
    "lowerbound": cmd_lowerbound,
    "w2": cmd_w2,
    "gradscaling": cmd_gradscaling,
    "odecheck": cmd_odecheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    start = time.perf_counter()
    try:
        cfg = resolve_config(command, args)
        summary, code = COMMANDS[command](cfg, Path(cfg.out))
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = dict(
        command=command, config=asdict(cfg), git=git_describe(),
        duration_s=time.perf_counter() - start, exit_code=code, results=summary,
    )
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
