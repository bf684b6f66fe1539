"""Scenario-driven command line: simulation, verification checks, comparisons.

Exit codes: 0 all requested work passed, 1 a check failed its tolerance,
2 the configuration or arguments were invalid (the message names the field).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .errors import ConfigError, JumplabError
from .checks import run_check
from .grids import GridDensity
from .kolmogorov import compare_densities
from .paths import simulate_ensemble, simulate_path
from .report import (
    output_dir,
    render_paths,
    write_compare_summary,
    write_rows_csv,
    write_run_report,
)
from .scenarios import ResolvedRun, load_config

_CHECK_FOR_COMMAND = {
    "verify-iw": "iw-ladder",
    "check-fi": "conservation",
    "evolve-density": "density-pushforward",
    "kolmogorov-forward": "forward-oracle",
    "kolmogorov-backward": "backward-duality",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumplab",
        description="numerical laboratory for jump-diffusion flows, densities, and conservation laws",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="scenario configuration file (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output root directory")
        p.add_argument("--threads", type=int, default=None, help="worker cap for path ensembles")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="stable output directory names; reruns reproduce data files byte for byte",
        )

    add_common(sub.add_parser("simulate", help="simulate an ensemble and write trajectories"))
    add_common(sub.add_parser("verify-iw", help="chain-rule residual ladder for a test field"))
    add_common(sub.add_parser("check-fi", help="first-integral conservation over an ensemble"))
    add_common(sub.add_parser("evolve-density", help="per-noise density field vs closed form"))
    add_common(sub.add_parser("kolmogorov-forward", help="forward equation vs its oracle"))
    add_common(sub.add_parser("kolmogorov-backward", help="backward/forward pairing consistency"))
    add_common(sub.add_parser("run", help="run every check the scenario declares"))

    cmp_p = sub.add_parser("compare", help="compare two density CSV files on one grid")
    cmp_p.add_argument("file_a")
    cmp_p.add_argument("file_b")
    cmp_p.add_argument("--tol-l1", type=float, default=None)
    cmp_p.add_argument("--tol-linf", type=float, default=None)
    cmp_p.add_argument("--tol-mass-err", type=float, default=None)
    cmp_p.add_argument("--out", default="out", help="output root directory")
    return parser


def _load_run(args) -> ResolvedRun:
    run = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("flag '--seed' must be non-negative")
        run.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("flag '--threads' must be positive")
        run.threads = args.threads
    return run


def _meta(run: ResolvedRun, args) -> dict:
    return {
        "scenario": run.scenario,
        "seed": run.seed,
        "deterministic": bool(args.deterministic),
        "threads": run.threads,
        "t_final": run.t_final,
        "dt": run.dt,
        "n_paths": run.n_paths,
    }


def _cmd_simulate(args) -> int:
    run = _load_run(args)
    out = output_dir(args.out, f"{run.scenario}-simulate", args.deterministic)
    ens = simulate_ensemble(
        run.coeffs,
        run.measure,
        run.x0,
        run.t_final,
        run.dt,
        run.seed,
        run.n_paths,
        keep_paths=False,
        threads=run.threads,
    )
    rows = [
        (p, *[float(v) for v in ens.finals[p]], int(ens.jump_counts[p]))
        for p in range(ens.n_paths)
    ]
    header = ["path_index"] + [f"x_{i + 1}" for i in range(run.coeffs.n)] + ["n_jumps"]
    write_rows_csv(out / "finals.csv", header, rows)

    samples = []
    for p in range(min(5, run.n_paths)):
        path = simulate_path(run.coeffs, run.measure, run.x0, run.t_final, run.dt, run.seed, path_index=p)
        path.to_csv(out / f"path_{p:03d}.csv")
        samples.append((path.times, path.states[:, 0]))
    render_paths(out / "paths.png", samples)

    write_run_report(out / "summary.json", _meta(run, args), [])
    print(f"wrote {ens.n_paths} endpoints and {len(samples)} full paths to {out}")
    return 0


def _cmd_check(args, check_name: str) -> int:
    run = _load_run(args)
    spec = next((s for s in run.checks if s.name == check_name), None)
    if spec is None:
        spec = run.definition.check_spec(check_name)
    out = output_dir(args.out, f"{run.scenario}-{check_name}", args.deterministic)
    result = run_check(run, spec, out)
    print(result.summary_line())
    write_run_report(out / "summary.json", _meta(run, args), [result])
    return 0 if result.passed else 1


def _cmd_run(args) -> int:
    run = _load_run(args)
    out = output_dir(args.out, run.scenario, args.deterministic)
    results = []
    for spec in run.checks:
        result = run_check(run, spec, out / spec.name)
        print(result.summary_line())
        results.append(result)
    write_run_report(out / "summary.json", _meta(run, args), results)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed; report in {out / 'summary.json'}")
    return 0 if n_pass == len(results) else 1


def _cmd_compare(args) -> int:
    t0 = time.perf_counter()
    try:
        a = GridDensity.from_csv(args.file_a)
        b = GridDensity.from_csv(args.file_b)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read density file: {exc}") from exc
    metrics = compare_densities(a, b).as_dict()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = write_compare_summary(out / "compare.json", metrics, time.perf_counter() - t0)
    print(json.dumps(payload))
    failed = (
        (args.tol_l1 is not None and metrics["l1"] > args.tol_l1)
        or (args.tol_linf is not None and metrics["linf"] > args.tol_linf)
        or (args.tol_mass_err is not None and metrics["mass_err"] > args.tol_mass_err)
    )
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_check(args, _CHECK_FOR_COMMAND[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except JumplabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
