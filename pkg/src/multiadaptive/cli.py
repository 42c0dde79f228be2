"""Command-line front end: ``solve``, ``dual`` and ``benchmark``.

Settings come from an optional ``key = value`` config file, overridden by
command-line flags.  Exit status: 0 accepted (or success), 2 solved but not
accepted, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import benchmarks
from .controller import REGULATORS, adaptive_solve
from .dual import (
    dual_data_presets,
    solve_dual,
    stability_growth,
    stability_weights,
    write_stability_growth,
    write_weights,
)
from .io import OUT_ENV, write_csv, write_step_sizes, write_text
from .iteration import IterationConfig, canonical_scheme
from .problems import PROBLEMS, make_problem
from .solver import MethodConfig, SolverError, canonical_family
from .system import TrajectoryError, read_trajectory, write_trajectory
from .timeslab import STRATEGIES

log = logging.getLogger("multiadaptive")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_ACCEPTED = 2

PARAM_PREFIX = "param."


class ConfigError(ValueError):
    """Invalid configuration; the message names the file line or key."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _order(text: str):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValueError("empty order")
    values = [int(p) for p in parts]
    return values[0] if len(values) == 1 else values


def _optional_float(text: str) -> Optional[float]:
    return None if str(text).strip().lower() in ("", "none", "auto") else float(text)


@dataclass
class RunConfig:
    """Everything one command needs.  Field names double as config keys."""

    problem: str = "scalar_linear"
    params: dict = field(default_factory=dict)
    method: str = "mcg"
    order: object = 1
    tol: float = 1e-4
    strategy: str = "dyadic"
    regulator: str = "geomean"
    scheme: str = "fixpoint"
    kmin: Optional[float] = None
    kmax: Optional[float] = None
    rounds_max: int = 10
    out: str = "out"
    seed: int = 0
    # size of the seeded random perturbation of the initial value
    perturb: float = 0.0
    # report flags
    write_trajectory: bool = True
    write_steps: bool = True
    write_stability: bool = True
    slab_trace: bool = False
    # dual command
    trajectory_file: Optional[str] = None
    dual_data: str = "endpoint-uniform"
    k_dual: Optional[float] = None
    t_samples: int = 21
    # benchmark command
    suite: str = "convergence"

    def validate(self) -> "RunConfig":
        if not (isinstance(self.tol, float) and self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError(f"tol must be a positive number, got {self.tol!r}")
        try:
            self.method = "m" + canonical_family(self.method).lower()
        except ValueError as exc:
            raise ConfigError(f"method: {exc}") from None
        orders = self.order if isinstance(self.order, list) else [self.order]
        if any(q < 0 for q in orders) or (self.method == "mcg" and any(q < 1 for q in orders)):
            raise ConfigError(f"order out of range: {self.order!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {', '.join(STRATEGIES)}")
        if self.regulator not in REGULATORS:
            raise ConfigError(f"regulator must be one of {', '.join(REGULATORS)}")
        try:
            self.scheme = canonical_scheme(self.scheme)
        except ValueError as exc:
            raise ConfigError(f"scheme: {exc}") from None
        for key in ("kmin", "kmax", "k_dual"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key} must be positive, got {v!r}")
        if self.kmin is not None and self.kmax is not None and self.kmin > self.kmax:
            raise ConfigError("kmin must not exceed kmax")
        if self.rounds_max < 1:
            raise ConfigError("rounds_max must be at least 1")
        if self.perturb < 0:
            raise ConfigError("perturb must be nonnegative")
        if self.t_samples < 2:
            raise ConfigError("t_samples must be at least 2")
        if self.problem.replace("-", "_") not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; available: {', '.join(sorted(PROBLEMS))}")
        if self.trajectory_file is not None and not Path(self.trajectory_file).is_file():
            raise ConfigError(f"trajectory_file does not exist: {self.trajectory_file}")
        return self


_CONVERTERS = {
    "problem": str,
    "method": str,
    "order": _order,
    "tol": float,
    "strategy": str,
    "regulator": str,
    "scheme": str,
    "kmin": _optional_float,
    "kmax": _optional_float,
    "rounds_max": int,
    "out": str,
    "seed": int,
    "perturb": float,
    "write_trajectory": _bool,
    "write_steps": _bool,
    "write_stability": _bool,
    "slab_trace": _bool,
    "trajectory_file": str,
    "dual_data": str,
    "k_dual": _optional_float,
    "t_samples": int,
    "suite": str,
}
assert set(_CONVERTERS) == {f.name for f in fields(RunConfig)} - {"params"}


def _set_key(values: dict, key: str, text: str, where: str) -> None:
    if key.startswith(PARAM_PREFIX) and len(key) > len(PARAM_PREFIX):
        values.setdefault("params", {})[key[len(PARAM_PREFIX):]] = text
        return
    if key not in _CONVERTERS:
        raise ConfigError(f"{where}unknown key {key!r}")
    try:
        values[key] = _CONVERTERS[key](text)
    except ValueError as exc:
        raise ConfigError(f"{where}bad value for {key!r}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}: "
        if "=" not in line:
            raise ConfigError(f"{where}expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}missing key")
        _set_key(values, key, value, where)
    return values


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiadaptive", description="Multi-adaptive Galerkin ODE solvers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--problem")
    common.add_argument("--tol", type=float)
    common.add_argument("--method", help="mcg or mdg")
    common.add_argument("--order", help="order, or comma-separated per-component orders")
    common.add_argument("--strategy", choices=STRATEGIES)
    common.add_argument("--scheme", help="fixpoint or newton")
    common.add_argument("--regulator", choices=REGULATORS)
    common.add_argument("--kmin", type=float)
    common.add_argument("--kmax", type=float)
    common.add_argument("--rounds-max", dest="rounds_max", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="problem parameter, repeatable")
    sub.add_parser("solve", parents=[common], help="adaptive solve with dual certification")
    dual = sub.add_parser("dual", parents=[common], help="stability factors along a stored trajectory")
    dual.add_argument("--trajectory", dest="trajectory_file", help="trajectory CSV written by solve")
    dual.add_argument("--dual-data", dest="dual_data",
                      help="endpoint-uniform, endpoint-l2, endpoint-component:N or average-component:N")
    dual.add_argument("--k-dual", dest="k_dual", type=float)
    dual.add_argument("--t-samples", dest="t_samples", type=int)
    bench = sub.add_parser("benchmark", parents=[common], help="benchmark suites")
    bench.add_argument("--suite", help=f"one of: {', '.join(benchmarks.SUITES)}")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        if f.name == "params":
            continue
        v = getattr(args, f.name, None)
        if v is None:
            continue
        values[f.name] = _CONVERTERS[f.name](v) if f.name == "order" else v
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        values.setdefault("params", {})[k] = v
    env_out = os.environ.get(OUT_ENV)
    if env_out and args.out is None:
        values["out"] = env_out
    if "tol" in values:
        values["tol"] = float(values["tol"])
    return RunConfig(**values).validate()


def _make_spec(cfg: RunConfig):
    spec = make_problem(cfg.problem, **cfg.params)
    if cfg.perturb > 0:
        rng = np.random.default_rng(cfg.seed)
        spec.system.u0 = spec.system.u0 + cfg.perturb * rng.standard_normal(spec.N)
    return spec


def _method(cfg: RunConfig) -> MethodConfig:
    kmax = math.inf if cfg.kmax is None else cfg.kmax
    return MethodConfig(cfg.method, cfg.order, cfg.strategy, kmax)


def cmd_solve(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    spec = _make_spec(cfg)
    result = adaptive_solve(
        spec.system, _method(cfg), cfg.tol,
        regulator=cfg.regulator, k_min=cfg.kmin, k_max=cfg.kmax,
        scheme=cfg.scheme, rounds_max=cfg.rounds_max, keep_trace=cfg.slab_trace,
    )
    sol = result.solution
    if cfg.write_trajectory:
        write_trajectory(sol, out / "trajectory.csv")
    if cfg.write_steps:
        write_step_sizes(sol, out / "steps.csv")
    if cfg.write_stability:
        write_weights(out / "weights.csv", result.report)
        write_csv(out / "stability_factors.csv", ["component", "S"], list(enumerate(result.report.S)))
    if cfg.slab_trace and result.stats is not None:
        write_text(out / "slab_trace.log", result.stats.trace)
    lines = [
        f"problem={spec.name} N={spec.N} T={spec.system.T!r}",
        f"method={cfg.method} order={cfg.order} strategy={cfg.strategy} scheme={cfg.scheme}",
        f"tol={cfg.tol!r}",
        f"E={result.E!r}",
        f"accepted={str(result.accepted).lower()}",
        f"rounds={result.rounds}",
        f"elements={sol.num_elements()}",
        f"E_C={result.report.E_C!r}",
    ]
    if result.stats is not None:
        lines.append(f"f_evals={result.stats.nevals} sweeps={result.stats.sweeps} retries={result.stats.retries}")
    lines += [f"round {r}: E={E!r} elements={n}" for r, E, n in result.history]
    write_text(out / "run.log", lines)
    print(f"E={result.E:.6g} accepted={str(result.accepted).lower()} rounds={result.rounds} out={out}")
    return EXIT_OK if result.accepted else EXIT_NOT_ACCEPTED


def _parse_dual_data(text: str, N: int):
    kind, _, arg = text.partition(":")
    return dual_data_presets(kind.strip(), N=N, n=int(arg) if arg else None)


def cmd_dual(cfg: RunConfig) -> int:
    if cfg.trajectory_file is None:
        raise ConfigError("dual needs a trajectory (--trajectory or key trajectory_file)")
    out = Path(cfg.out)
    spec = _make_spec(cfg)
    sys_ = spec.system
    primal = read_trajectory(cfg.trajectory_file)
    if primal.N != sys_.N:
        raise ConfigError(f"trajectory has {primal.N} components, problem {spec.name} has {sys_.N}")
    T = sys_.T
    if min(primal.frontiers) < T * (1.0 - 1e-12):
        raise TrajectoryError(f"trajectory ends at {min(primal.frontiers)!r}, before T = {T!r}")
    data = _parse_dual_data(cfg.dual_data, sys_.N)
    report = stability_weights(solve_dual(primal, sys_, data, k_dual=cfg.k_dual), primal)
    Ts = np.linspace(T / cfg.t_samples, T, cfg.t_samples)
    rows = stability_growth(primal, sys_, Ts, k_dual=cfg.k_dual)
    write_stability_growth(out / "stability_growth.csv", rows)
    write_weights(out / "weights.csv", report)
    write_csv(out / "stability_factors.csv", ["component", "S"], list(enumerate(report.S)))
    _, S0, S1, S2 = rows[-1]
    lines = [
        f"problem={spec.name} N={sys_.N} T={T!r} dual_data={cfg.dual_data}",
        f"S0_bar={S0!r}",
        f"S1_bar={S1!r}",
        f"S2_bar={S2!r}",
        f"E_C={report.E_C!r}",
    ] + [f"S[{i}]={s!r}" for i, s in enumerate(report.S)]
    write_text(out / "dual.log", lines)
    print(f"S0_bar={S0:.6g} S1_bar={S1:.6g} S2_bar={S2:.6g} out={out}")
    return EXIT_OK


def cmd_benchmark(cfg: RunConfig) -> int:
    if cfg.suite not in benchmarks.SUITES:
        print(f"error: unknown suite {cfg.suite!r}; available suites: {', '.join(benchmarks.SUITES)}",
              file=sys.stderr)
        return EXIT_ERROR
    out = Path(cfg.out)
    result = benchmarks.SUITES[cfg.suite]()
    rows, summary = result if isinstance(result, tuple) else (result, {})
    name = cfg.suite.replace("-", "_")
    write_csv(out / f"benchmark_{name}.csv", benchmarks.BenchmarkRow.HEADER, [r.as_tuple() for r in rows])
    label = {"convergence": "slope", "front": "time_ratio_mono_over_multi"}.get(cfg.suite, "value")
    if summary:
        write_csv(out / f"benchmark_{name}_summary.csv", ["case", label], sorted(summary.items()))
    for r in rows:
        print(f"{r.case:>22} {r.method:>8} N={r.N:<4} error={r.error:.3e} steps={r.steps_total} "
              f"f_evals={r.f_evals} time={r.wall_time:.2f}s")
    for k, v in sorted(summary.items()):
        print(f"{label} {k}: {v:.3f}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "dual": cmd_dual, "benchmark": cmd_benchmark}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TrajectoryError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
