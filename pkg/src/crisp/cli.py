"""Command line front end: single solves, benchmark sweeps and model checks.

    crisp solve --problem transport --scenario middle --guess zero --out runs/t1
    crisp bench --suite cartpole --jobs 2 --out runs/bench
    crisp check --problem push_box --verbose
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CrispError, NotConvexError
from .nlp import assert_psd, check_derivatives, constraint_violation
from .problems import REGISTRY, build_problem, decode_trajectory, initial_guess, problem_names
from .problems.common import GuessMode, load_spec
from .solver import SolverConfig, SolveStatus, solve

OUTPUT_ENV = "CRISP_OUTPUT_DIR"
TRACE_SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


# ---------------------------------------------------------------------------
# success metrics


@dataclass(frozen=True)
class SuccessCriteria:
    max_violation: float = 1e-5
    translation: float = 0.1
    velocity: float = 0.5
    angle: float = math.pi / 6
    angular_velocity: float = 0.1 * math.pi

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"threshold {name} must be positive")


def _wrap(angle):
    return (angle + math.pi) % (2 * math.pi) - math.pi


def evaluate_success(traj, target, criteria=None, violation=0.0, groups=None, angle_names=()):
    """Apply the terminal tracking thresholds to a decoded trajectory.

    ``groups`` maps metric names (``translation``, ``velocity``, ``angle``,
    ``angular_velocity``) to variable names; each metric is the Euclidean
    norm of the terminal error over its group. Angles listed in
    ``angle_names`` are compared modulo a full turn. Groups absent from
    ``groups`` are not checked.
    """
    criteria = criteria or SuccessCriteria()
    groups = groups or {}
    final = traj.terminal
    errors = {}
    for name in {n for names in groups.values() for n in names}:
        diff = final[name] - target.get(name, 0.0)
        errors[name] = _wrap(diff) if name in angle_names else diff
    metrics = {"max_violation": float(violation)}
    ok = violation < criteria.max_violation
    for group, names in groups.items():
        value = float(np.linalg.norm([errors[n] for n in names]))
        metrics[group] = value
        ok = ok and value < getattr(criteria, group)
    metrics["tracking_error"] = float(np.linalg.norm(list(errors.values()))) if errors else 0.0
    return bool(ok), metrics


# ---------------------------------------------------------------------------
# output helpers


def default_output_dir():
    return Path(os.environ.get(OUTPUT_ENV, "crisp-out"))


def _fmt(value):
    return repr(float(value)) if not np.isfinite(value) else f"{value:.17g}"


def write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("time",) + tuple(traj.names))
        for t, row in zip(traj.time, traj.values):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in row])


def write_trace_jsonl(path, trace):
    with open(path, "w") as fh:
        for record in trace:
            fh.write(json.dumps({"schema_version": TRACE_SCHEMA_VERSION, **record.as_dict()},
                                sort_keys=True) + "\n")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------------------
# a single run


@dataclass
class RunConfig:
    problem: str
    params: str | None = None
    scenario: str = "default"
    guess: str = "zero"
    seed: int = 0
    sigma: float = 0.1
    x0: list | None = None
    horizon: int | None = None
    overrides: list = field(default_factory=list)
    out: str | None = None
    emit_trajectory: bool = True
    emit_trace: bool = True

    def validate(self):
        if self.problem not in REGISTRY:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {', '.join(problem_names())}")
        if self.params is not None and not Path(self.params).is_file():
            raise ValueError(f"parameter file not found: {self.params}")
        GuessMode(self.guess)
        return self


def _starting_point(problem, run):
    if run.x0 is not None:
        x0 = np.asarray(run.x0, dtype=float)
        if x0.shape != (problem.n_vars,):
            raise ValueError(f"x0 must have {problem.n_vars} entries")
        return x0
    return initial_guess(problem, run.guess, seed=run.seed, sigma=run.sigma)


def execute_run(run, criteria=None):
    """Solve one configured problem; returns ``(record, report, problem)``."""
    run.validate()
    config = SolverConfig().with_overrides(run.overrides)
    problem = build_problem(run.problem, run.params, run.scenario, config.complementarity_mode,
                            run.horizon)
    x0 = _starting_point(problem, run)
    report = solve(problem, x0, config)
    traj = decode_trajectory(problem, report.x_star)
    spec = problem.meta.get("spec")
    if spec is not None:
        target = {n: spec.target.get(n, 0.0) for n in spec.terminal_weights}
        groups = problem.meta.get("success", {})
    else:
        target, groups = {n: 0.0 for n in traj.names}, {"translation": traj.names}
    ok, metrics = evaluate_success(traj, target, criteria, report.max_violation, groups,
                                   problem.meta.get("angle_names", ()))
    solved = report.status is SolveStatus.SUCCESS
    cert = report.certificates
    record = {
        "problem": run.problem,
        "scenario": run.scenario,
        "guess": "x0" if run.x0 is not None else run.guess,
        "seed": run.seed,
        "status": report.status.value,
        "success": bool(ok and solved),
        "iterations": report.iterations,
        "objective": report.objective,
        "max_violation": report.max_violation,
        "mu_max_entry": report.mu.max_entry() if report.mu is not None else None,
        "certificate_min_derivative": cert.min_directional_derivative if cert else None,
        "message": report.message,
        **{k: v for k, v in metrics.items() if k != "max_violation"},
    }
    return record, report, problem, traj


def cmd_solve(args):
    try:
        run = RunConfig(problem=args.problem, params=args.params, scenario=args.scenario,
                        guess=args.guess, seed=args.seed, sigma=args.sigma, horizon=args.horizon,
                        overrides=args.set or [], out=args.out).validate()
        SolverConfig().with_overrides(run.overrides)
    except (ValueError, CrispError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(run.out) if run.out else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    try:
        record, report, problem, traj = execute_run(run)
    except (ValueError, KeyError, CrispError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_trajectory_csv(out / "trajectory.csv", traj)
    write_trace_jsonl(out / "trace.jsonl", report.trace)
    _write_json(out / "summary.json", {"run": asdict(run) | {"out": str(out)}, "result": record})
    _write_json(out / "timing.json", {"wall_time": report.wall_time})
    print(f"{run.problem}/{run.scenario}: {record['status']} after {record['iterations']} iterations, "
          f"violation {record['max_violation']:.2e}, objective {record['objective']:.6g}, "
          f"tracking error {record['tracking_error']:.3e}")
    return EXIT_OK if report.status is SolveStatus.SUCCESS else EXIT_FAILED


# ---------------------------------------------------------------------------
# benchmark suites


def _grid(problem, scenarios, guesses, **extra):
    return [dict(problem=problem, scenario=s, guess=g, **extra) for s in scenarios for g in guesses]


CARTPOLE_ICS = ("tilt_right", "tilt_left", "into_wall", "offset", "spin")
TRANSPORT_SCENARIOS = ("middle", "left_to_right", "right_to_left", "rolling")
PUSH_BOX_GOALS = tuple(f"goal_{45 * k:03d}" for k in range(8))

SUITES = {
    "toys": [dict(problem="toy_mpcc", x0=x0) for x0 in ([1.0, 1.0], [2.0, 0.5], [-1.0, 3.0])]
            + [dict(problem="cq_fail_toy", x0=[0.5, 0.2])],
    "cartpole": _grid("cartpole_softwalls", CARTPOLE_ICS, ("rollout", "noisy")),
    "transport": _grid("transport", TRANSPORT_SCENARIOS, ("zero",)),
    "push_box": _grid("push_box", PUSH_BOX_GOALS, ("zero",)),
    "push_t": _grid("push_t", ("default", "shift", "turn"), ("zero",)),
    "hopper": _grid("hopper", ("default",), ("rollout",)),
    "waiter": _grid("waiter", ("default",), ("zero",)),
}


def load_suite(name):
    """A built-in suite name or a TOML file with ``[[run]]`` tables."""
    if name in SUITES:
        return [dict(r) for r in SUITES[name]]
    path = Path(name)
    if not path.is_file():
        raise ValueError(f"unknown suite {name!r}; built-in suites: {', '.join(sorted(SUITES))}")
    from .problems.common import tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return [dict(r) for r in raw.get("run", [])]


def _bench_one(payload):
    run_kwargs, overrides = payload
    run_kwargs = dict(run_kwargs)
    # suite-level overrides first, command-line ones win
    merged = list(run_kwargs.pop("overrides", [])) + list(overrides)
    run = RunConfig(**run_kwargs, overrides=merged)
    record, report, _, _ = execute_run(run)
    return record, report.wall_time


def summarize(records, times):
    rows = {}
    for rec, wall in zip(records, times):
        rows.setdefault(rec["problem"], []).append((rec, wall))
    table = []
    for problem, items in rows.items():
        recs = [r for r, _ in items]
        table.append({
            "problem": problem,
            "runs": len(recs),
            "successes": sum(r["success"] for r in recs),
            "success_rate": 100.0 * sum(r["success"] for r in recs) / len(recs),
            "median_tracking_error": statistics.median(r["tracking_error"] for r in recs),
            "median_max_violation": statistics.median(r["max_violation"] for r in recs),
            "mean_iterations": statistics.fmean(r["iterations"] for r in recs),
            "mean_objective": statistics.fmean(r["objective"] for r in recs),
            "mean_wall_time": statistics.fmean(w for _, w in items),
        })
    return table


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})


def cmd_bench(args):
    try:
        runs = load_suite(args.suite)
        overrides = args.set or []
        SolverConfig().with_overrides(overrides)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not runs:
        print(f"error: suite {args.suite!r} has no runs", file=sys.stderr)
        return EXIT_USAGE
    for i, run in enumerate(runs):
        run.setdefault("seed", args.seed + i)
    out = Path(args.out) if args.out else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(run, overrides) for run in runs]
    try:
        if args.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_bench_one, payloads))
        else:
            results = [_bench_one(p) for p in payloads]
    except (ValueError, KeyError, TypeError, CrispError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    records = [r for r, _ in results]
    times = [t for _, t in results]
    run_cols = list(records[0])
    _write_csv(out / "runs.csv", records, run_cols)
    table = summarize(records, times)
    det_cols = [c for c in table[0] if c != "mean_wall_time"]
    _write_csv(out / "summary.csv", table, det_cols)
    _write_json(out / "summary.json", {"suite": args.suite, "runs": records,
                                       "summary": [{k: row[k] for k in det_cols} for row in table]})
    _write_json(out / "timing.json", {"runs": times,
                                      "mean_wall_time": {r["problem"]: r["mean_wall_time"] for r in table}})
    header = f"{'problem':<20}{'runs':>6}{'success %':>11}{'med. track err':>16}{'mean iters':>12}{'mean time [s]':>15}"
    print(header)
    print("-" * len(header))
    for row in table:
        print(f"{row['problem']:<20}{row['runs']:>6}{row['success_rate']:>11.1f}"
              f"{row['median_tracking_error']:>16.3e}{row['mean_iterations']:>12.1f}{row['mean_wall_time']:>15.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# model checks


def cmd_check(args):
    try:
        entry = REGISTRY[args.problem]
    except KeyError:
        print(f"error: unknown problem {args.problem!r}; choose from {', '.join(problem_names())}",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        problem = build_problem(args.problem, args.params, args.scenario, horizon=None)
        small = (build_problem(args.problem, args.params, args.scenario, horizon=args.horizon)
                 if entry.trajectory else problem)
    except (ValueError, KeyError, CrispError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    failures = []
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.points):
        report = check_derivatives(small, rng.normal(size=small.n_vars))
        worst = max(worst, report.max_rel_error)
        if args.verbose:
            for block, res in report.blocks.items():
                print(f"  point {i} {block:<14} max rel err {res.max_rel_error:.2e}"
                      f"{'' if res.passed else '  FAIL ' + ', '.join(map(str, res.bad_rows[:5]))}")
        if not report.passed:
            failures.append(f"derivatives at point {i}")
    print(f"derivatives: max relative error {worst:.2e} over {args.points} points")

    try:
        assert_psd(problem.objective.hessian(np.zeros(problem.n_vars)))
        print("objective hessian: PSD")
    except NotConvexError as exc:
        failures.append(f"hessian: {exc}")

    if "rollout" in problem.meta:
        x0 = initial_guess(problem, GuessMode.PASSIVE_ROLLOUT)
        viol = constraint_violation(problem, x0)
        labels = problem.labels
        dyn = [i for i, lab in enumerate(labels) if lab.startswith(("dynamics", "initial"))]
        residual = float(viol.per_row[dyn].max()) if dyn else 0.0
        print(f"passive rollout: dynamics residual {residual:.2e}")
        if residual > 1e-10:
            failures.append(f"rollout residual {residual:.2e}")

    for failure in failures:
        print(f"FAIL: {failure}")
    return EXIT_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="crisp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem instance")
    p.add_argument("--problem", required=True)
    p.add_argument("--params", help="TOML parameter file (default: packaged parameters)")
    p.add_argument("--scenario", default="default")
    p.add_argument("--guess", default="zero", choices=[m.value for m in GuessMode])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.1, help="noise level for --guess noisy")
    p.add_argument("--horizon", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="solver option override")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./crisp-out)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True, help=f"one of {', '.join(sorted(SUITES))} or a TOML file")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="master seed; run i uses seed + i")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="derivative, convexity and rollout checks")
    p.add_argument("--problem", required=True)
    p.add_argument("--params")
    p.add_argument("--scenario", default="default")
    p.add_argument("--horizon", type=int, default=8, help="horizon used for derivative checks")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
