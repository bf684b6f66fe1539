"""Named verification checks shared by the CLI subcommands and full runs.

Each check takes a resolved run and a check spec, writes its data files (and
best-effort figures) into the output directory, and returns a CheckResult
with metrics, tolerances, and a pass flag.  Checks never raise on a metric
violation; infrastructure failures are caught by the dispatcher and reported
as failed checks with the error message attached.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .density import (
    check_density_invariant,
    evolve_density_field,
    mean_density_over_noises,
)
from .errors import ConfigError, JumplabError
from .first_integral import check_conservation, determinant_identity_error, sfi_triple
from .grids import GridDensity, lattice_masses, rebin_density
from .ito_wentzell import DifferentialTriple, RandomScalarField, residual_ladder
from .jacobian import evolve_jacobian
from .kolmogorov import check_duality, compare_densities, mc_density, solve_forward
from .paths import simulate_ensemble, simulate_path
from .rng import PROBE_CHANNEL, substream
from .scenarios import CheckSpec, ResolvedRun


@dataclass
class CheckResult:
    """Outcome of one named check."""

    name: str
    passed: bool
    metrics: dict[str, float]
    tolerances: dict[str, float]
    runtime_s: float
    artifacts: list[str] = field(default_factory=list)
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "tolerances": {k: float(v) for k, v in self.tolerances.items()},
            "runtime_s": float(self.runtime_s),
            "artifacts": list(self.artifacts),
            "note": self.note,
        }

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={v:.3g}" for k, v in self.metrics.items())
        # min_* tolerances are lower bounds; everything else is an upper bound
        tols = ", ".join(
            f"{k}>={v:.3g}" if k.startswith("min_") else f"{k}<={v:.3g}"
            for k, v in self.tolerances.items()
        )
        tail = f" ({self.note})" if self.note else ""
        return f"[{status}] {self.name}: {shown} vs {tols}{tail}"


def _check_conservation(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    defn = run.definition
    if defn.make_sfi is None:
        raise ConfigError(f"scenario '{run.scenario}' defines no first integral")
    u = defn.make_sfi(run.params)
    triple = sfi_triple(u, run.coeffs, run.measure)
    ens = simulate_ensemble(
        run.coeffs,
        run.measure,
        run.x0,
        run.t_final,
        run.dt,
        run.seed,
        run.n_paths,
        keep_paths=True,
        threads=run.threads,
    )
    rep = check_conservation(u, triple, run.coeffs, run.measure, ens)
    artifacts = []
    csv_path = outdir / "conservation_residuals.csv"
    rep.to_csv(csv_path)
    artifacts.append(str(csv_path))
    fig = report.render_residuals(outdir / "conservation_residuals.png", rep.max_residuals)
    if fig:
        artifacts.append(fig)
    tol = spec.tolerances["max_residual"]
    return CheckResult(
        name=spec.name,
        passed=rep.worst <= tol,
        metrics={"max_residual": rep.worst},
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"candidate '{getattr(u, 'name', '')}' over {run.n_paths} paths",
    )


def _square_field() -> RandomScalarField:
    return RandomScalarField(
        value=lambda t, x, ctx=None: float(x[0]) ** 2,
        grad=lambda t, x, ctx=None: 2.0 * x,
        hess=lambda t, x, ctx=None: np.array([[2.0]]),
    )


def _check_iw_ladder(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    F = _square_field()
    triple = DifferentialTriple.zero(run.coeffs.m)
    ladder = residual_ladder(
        F,
        triple,
        run.coeffs,
        run.measure,
        run.x0,
        run.t_final,
        spec.settings["dts"],
        spec.settings["n_paths"],
        run.seed,
    )
    artifacts = []
    csv_path = outdir / "iw_ladder.csv"
    report.write_ladder_csv(csv_path, ladder)
    artifacts.append(str(csv_path))
    fig = report.render_ladder(outdir / "iw_ladder.png", ladder.dts, ladder.mean_sq, ladder.order)
    if fig:
        artifacts.append(fig)
    tol = spec.tolerances["min_order"]
    return CheckResult(
        name=spec.name,
        passed=ladder.order >= tol,
        metrics={"order": ladder.order},
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"mean-square residual slope over {len(ladder.dts)} rungs",
    )


def _check_determinant(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    if run.measure.n_atoms == 0:
        raise ConfigError(f"scenario '{run.scenario}' has no jumps to test")
    gen = substream(run.seed, 0, PROBE_CHANNEL)
    n_samples = int(spec.settings["n_samples"])
    x_lo, x_hi = float(spec.settings["x_lo"]), float(spec.settings["x_hi"])
    worst = 0.0
    for i in range(n_samples):
        t = float(gen.uniform(0.0, run.t_final))
        x = gen.uniform(x_lo, x_hi, size=run.coeffs.n)
        gamma = run.measure.gammas[i % run.measure.n_atoms]
        worst = max(worst, determinant_identity_error(run.coeffs, t, x, gamma))
    tol = spec.tolerances["max_dev"]
    return CheckResult(
        name=spec.name,
        passed=worst <= tol,
        metrics={"max_dev": worst},
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=[],
        note=f"{n_samples} random (t, x, mark) probes, difference-quotient route",
    )


def _check_jacobian_oracle(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    defn = run.definition
    if defn.jacobian_expected is None:
        raise ConfigError(f"scenario '{run.scenario}' defines no flow-volume oracle")
    expected_fn = defn.jacobian_expected(run.params)
    n_paths = int(spec.settings.get("n_paths", 20))
    dt = float(spec.settings.get("dt", run.dt))
    rows = []
    worst = 0.0
    for p in range(n_paths):
        path = simulate_path(run.coeffs, run.measure, run.x0, run.t_final, dt, run.seed, path_index=p)
        jac = evolve_jacobian(run.coeffs, run.measure, path)
        expected = float(expected_fn(path))
        rel = abs(jac.final - expected) / max(abs(expected), 1e-300)
        worst = max(worst, rel)
        rows.append((p, jac.final, expected, rel))
    artifacts = []
    csv_path = outdir / "jacobian_oracle.csv"
    report.write_rows_csv(csv_path, ["path_index", "jacobian", "expected", "rel_err"], rows)
    artifacts.append(str(csv_path))
    tol = spec.tolerances["rel_err"]
    return CheckResult(
        name=spec.name,
        passed=worst <= tol,
        metrics={"rel_err": worst},
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"{n_paths} paths at dt={dt:g}",
    )


def _check_density_pushforward(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    s = spec.settings
    lo, hi, dx = float(s["lo"]), float(s["hi"]), float(s["dx"])
    dt, t_final, sigma0 = float(s["dt"]), float(s["t_final"]), float(s["sigma0"])
    path = simulate_path(run.coeffs, run.measure, run.x0, t_final, dt, run.seed, path_index=0)
    rho0 = GridDensity.gaussian(lo, hi, dx, center=float(run.x0[0]), sigma=sigma0)
    dens = evolve_density_field(run.coeffs, run.measure, path, rho0)

    # for dx = b0 dw the field is the initial profile dragged by b0 w(t)
    b0 = float(run.params["b0"])
    shift = b0 * float(path.w()[-1, 0])
    nodes = rho0.x
    oracle = np.exp(-0.5 * ((nodes - float(run.x0[0]) - shift) / sigma0) ** 2) / (
        sigma0 * np.sqrt(2.0 * np.pi)
    )
    linf = float(np.max(np.abs(dens.final.values - oracle)))

    jac = evolve_jacobian(run.coeffs, run.measure, path)
    inv = check_density_invariant(jac, dens)

    artifacts = []
    dens_path = outdir / "density_final.csv"
    dens.final.to_csv(dens_path)
    artifacts.append(str(dens_path))
    inv_path = outdir / "density_invariant.csv"
    inv.to_csv(inv_path)
    artifacts.append(str(inv_path))
    fig = report.render_overlay(
        outdir / "density_final.png",
        nodes,
        [("evolved field", dens.final.values), ("dragged profile", oracle)],
        "per-noise density vs closed form",
    )
    if fig:
        artifacts.append(fig)
    fig = report.render_series(
        outdir / "density_invariant.png",
        inv.times,
        {"J * rho(t, x(t))": inv.product},
        "conservation product along the path",
        hline=inv.reference,
    )
    if fig:
        artifacts.append(fig)

    passed = linf <= spec.tolerances["linf"] and inv.max_rel_deviation <= spec.tolerances["invariant_rel"]
    return CheckResult(
        name=spec.name,
        passed=passed,
        metrics={
            "linf": linf,
            "invariant_rel": inv.max_rel_deviation,
            "mass_err": float(abs(dens.mass[-1] - 1.0)),
        },
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"one realization, {path.n_steps} steps, |shift|={abs(shift):.3g}",
    )


def _check_forward_oracle(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    defn = run.definition
    s = spec.settings
    lo, hi, dx, dt = float(s["lo"]), float(s["hi"]), float(s["dx"]), float(s["dt"])
    x0 = float(run.x0[0])
    p0 = GridDensity.mollified_delta(lo, hi, dx, center=x0)
    sol = solve_forward(run.coeffs, run.measure, p0, 0.0, run.t_final, dt)
    artifacts = []
    dens_path = outdir / "forward_final.csv"
    sol.final.to_csv(dens_path)
    artifacts.append(str(dens_path))

    metrics: dict[str, float] = {"mass_err": float(abs(sol.mass[-1] - 1.0))}
    if defn.gaussian_law is not None:
        mean, var = defn.gaussian_law(run.params, x0, run.t_final)
        nodes = sol.final.x
        oracle = np.exp(-0.5 * (nodes - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
        metrics["linf"] = float(np.max(np.abs(sol.final.values - oracle)))
        passed = metrics["linf"] <= spec.tolerances["linf"]
        fig = report.render_overlay(
            outdir / "forward_final.png",
            nodes,
            [("solved law", sol.final.values), ("closed-form law", oracle)],
            "forward equation vs closed form",
        )
        if fig:
            artifacts.append(fig)
        note = f"Gaussian oracle N({mean:.3g}, {var:.3g})"
    elif defn.lattice_law is not None:
        origin, spacing, pmf = defn.lattice_law(run.params, x0, run.t_final)
        k_max = min(int(s["k_max"]), len(pmf) - 1)
        masses = lattice_masses(sol.final, origin, spacing, k_max)
        sup = float(np.max(np.abs(masses - pmf[: k_max + 1])))
        metrics["sup_pmf"] = sup
        passed = sup <= spec.tolerances["sup_pmf"]
        rows = [(k, masses[k], pmf[k], abs(masses[k] - pmf[k])) for k in range(k_max + 1)]
        pmf_path = outdir / "lattice_masses.csv"
        report.write_rows_csv(pmf_path, ["k", "mass", "pmf", "abs_diff"], rows)
        artifacts.append(str(pmf_path))
        fig = report.render_overlay(
            outdir / "forward_final.png",
            sol.final.x,
            [("solved law", sol.final.values)],
            "forward equation, lattice case",
        )
        if fig:
            artifacts.append(fig)
        note = f"counting-law masses up to k={k_max}"
    else:
        raise ConfigError(f"scenario '{run.scenario}' defines no forward oracle")

    return CheckResult(
        name=spec.name,
        passed=passed,
        metrics=metrics,
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=note,
    )


def _check_backward_duality(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    s = spec.settings
    lo, hi, dx, dt = float(s["lo"]), float(s["hi"]), float(s["dx"]), float(s["dt"])
    t_s, t_t = float(s["s"]), float(s["t"])
    x0 = float(run.x0[0])
    p0 = GridDensity.mollified_delta(lo, hi, dx, center=x0)
    p_s = solve_forward(run.coeffs, run.measure, p0, 0.0, t_s, dt).final
    xs = np.arange(float(s["probe_lo"]), float(s["probe_hi"]) + 1e-12, float(s["probe_step"]))
    rep = check_duality(run.coeffs, run.measure, p_s, t_s, t_t, dt, dt, xs)
    artifacts = []
    csv_path = outdir / "duality.csv"
    report.write_rows_csv(
        csv_path,
        ["x", "backward_pairing", "forward_pairing", "abs_diff"],
        list(zip(rep.xs, rep.lhs, rep.rhs, rep.abs_diff)),
    )
    artifacts.append(str(csv_path))
    fig = report.render_overlay(
        outdir / "duality.png",
        rep.xs,
        [("<p(s), u(s)>", rep.lhs), ("smeared p(t)", rep.rhs)],
        "two-sided transition pairing",
        xlabel="probe point",
        ylabel="pairing value",
    )
    if fig:
        artifacts.append(fig)
    tol = spec.tolerances["l1"]
    return CheckResult(
        name=spec.name,
        passed=rep.l1 <= tol,
        metrics={"l1": rep.l1, "max_abs": rep.max_abs},
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"{len(xs)} probes, s={t_s:g}, t={t_t:g}",
    )


def _check_mean_field(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    s = spec.settings
    lo, hi, dx = float(s["lo"]), float(s["hi"]), float(s["dx"])
    dt, dt_forward = float(s["dt"]), float(s["dt_forward"])
    n_real = int(s["n_realizations"])
    t_final = float(s["t_final"])
    rho0 = GridDensity.gaussian(lo, hi, dx, center=float(run.x0[0]), sigma=float(s["sigma0"]))
    mean = mean_density_over_noises(run.coeffs, run.measure, rho0, t_final, dt, n_real, run.seed)
    fwd = solve_forward(run.coeffs, run.measure, rho0, 0.0, t_final, dt_forward)
    metrics = compare_densities(mean, fwd.final).as_dict()
    artifacts = []
    mean_path = outdir / "mean_density.csv"
    mean.to_csv(mean_path)
    artifacts.append(str(mean_path))
    fwd_path = outdir / "forward_density.csv"
    fwd.final.to_csv(fwd_path)
    artifacts.append(str(fwd_path))
    fig = report.render_overlay(
        outdir / "mean_field.png",
        mean.x,
        [("noise-averaged field", mean.values), ("forward equation", fwd.final.values)],
        "averaged per-noise densities vs forward law",
    )
    if fig:
        artifacts.append(fig)
    tol = spec.tolerances["l1"]
    return CheckResult(
        name=spec.name,
        passed=metrics["l1"] <= tol,
        metrics=metrics,
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"{n_real} realizations at dt={dt:g}",
    )


def _check_mc_vs_pde(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    s = spec.settings
    lo, hi, dx = float(s["lo"]), float(s["hi"]), float(s["dx"])
    rebin_dx = float(s["rebin_dx"])
    x0 = float(run.x0[0])
    p0 = GridDensity.mollified_delta(lo, hi, dx, center=x0)
    sol = solve_forward(run.coeffs, run.measure, p0, 0.0, run.t_final, float(s["dt_forward"]))
    pde = rebin_density(sol.final, lo, hi, rebin_dx)
    mc = mc_density(
        run.coeffs,
        run.measure,
        run.x0,
        run.t_final,
        float(s["dt_mc"]),
        int(s["n_mc"]),
        run.seed,
        lo,
        hi,
        rebin_dx,
        threads=run.threads,
    )
    metrics = compare_densities(mc.density, pde).as_dict()
    metrics["overflow_fraction"] = mc.overflow_mass_fraction
    artifacts = []
    mc_path = outdir / "mc_density.csv"
    mc.density.to_csv(mc_path)
    artifacts.append(str(mc_path))
    pde_path = outdir / "pde_density.csv"
    pde.to_csv(pde_path)
    artifacts.append(str(pde_path))
    fig = report.render_overlay(
        outdir / "mc_vs_pde.png",
        pde.x,
        [("simulated histogram", mc.density.values), ("forward equation", pde.values)],
        "endpoint histogram vs forward law",
    )
    if fig:
        artifacts.append(fig)
    tol = spec.tolerances["l1"]
    return CheckResult(
        name=spec.name,
        passed=metrics["l1"] <= tol,
        metrics=metrics,
        tolerances=spec.tolerances,
        runtime_s=0.0,
        artifacts=artifacts,
        note=f"{int(s['n_mc'])} endpoints binned at {rebin_dx:g}",
    )


CHECKS = {
    "conservation": _check_conservation,
    "iw-ladder": _check_iw_ladder,
    "determinant": _check_determinant,
    "jacobian-oracle": _check_jacobian_oracle,
    "density-pushforward": _check_density_pushforward,
    "forward-oracle": _check_forward_oracle,
    "backward-duality": _check_backward_duality,
    "mean-field": _check_mean_field,
    "mc-vs-pde": _check_mc_vs_pde,
}


def run_check(run: ResolvedRun, spec: CheckSpec, outdir: Path) -> CheckResult:
    """Execute one check, timing it and converting infrastructure errors to failures."""
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result = CHECKS[spec.name](run, spec, outdir)
    except ConfigError:
        raise
    except JumplabError as exc:
        result = CheckResult(
            name=spec.name,
            passed=False,
            metrics={},
            tolerances=spec.tolerances,
            runtime_s=0.0,
            note=f"{type(exc).__name__}: {exc}",
        )
    result.runtime_s = time.perf_counter() - t0
    return result
