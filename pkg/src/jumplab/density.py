"""Per-realization evolution of a density field driven by one noise path.

Between jumps the field follows the stochastic transport/diffusion equation

    d rho = [-d(rho a)/dx + 1/2 d2(rho b b)/dx2] dt - d(rho b_k)/dx dw_k

with the SAME Wiener increments as the driving path; at each of the path's
jumps the field is pushed forward through the state map:

    rho(x) <- rho(y(x)) * Dbar(y(x)),   y the pre-jump state, Dbar = 1/det(I + dg/dy).

Composing the flow Jacobian with the field along the driving path then
reproduces the initial value: J(t) rho(t, x(t)) = rho(0, x0).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientField, MarkMeasure
from .errors import ContextMismatch, InvalidGrid, NumericalBlowup, StabilityBoundViolated, SupportOverflow
from .first_integral import inverse_jump_map
from .grids import GridDensity, TestFunctionSet, d1, d2
from .jacobian import JacobianPath
from .paths import PathEnsemble, SamplePath
from .rng import WIENER_CHANNEL, substream

Array = np.ndarray


def _require_1d(coeffs: CoefficientField) -> None:
    if coeffs.n != 1:
        raise InvalidGrid("grid solvers are one-dimensional (n = 1)")


def eval_coeffs_on_grid(coeffs: CoefficientField, t: float, nodes: Array) -> tuple[Array, Array]:
    """Drift (nx,) and diffusion (nx, m) sampled at the grid nodes."""
    if coeffs.elementwise:
        X = nodes[:, None]
        a = np.asarray(coeffs.drift(t, X), dtype=float)[:, 0]
        b = np.asarray(coeffs.diffusion(t, X), dtype=float)[:, 0, :]
        return a, b
    a = np.empty(len(nodes))
    b = np.empty((len(nodes), coeffs.m))
    for j, xv in enumerate(nodes):
        xj = np.array([xv])
        a[j] = coeffs.a(t, xj)[0]
        b[j] = coeffs.b(t, xj)[0]
    return a, b


def check_grid_stability(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    nodes: Array,
    dx: float,
    dt: float,
    t_final: float,
) -> None:
    """Explicit-scheme step-size guards: diffusive, advective, and jump-rate bounds."""
    ts = (0.0, 0.5 * t_final, t_final) if coeffs.time_dependent else (0.0,)
    amax = 0.0
    bmax = 0.0
    for t in ts:
        a, b = eval_coeffs_on_grid(coeffs, t, nodes)
        amax = max(amax, float(np.max(np.abs(a))))
        bmax = max(bmax, float(np.max(np.sum(b**2, axis=1))))
    if bmax > 0.0 and dt > dx**2 / (2.0 * bmax):
        raise StabilityBoundViolated(
            f"dt={dt:g} exceeds diffusive bound {dx**2 / (2.0 * bmax):g} (dx={dx:g}, max b^2={bmax:g})"
        )
    if amax > 0.0 and dt > dx / (2.0 * amax):
        raise StabilityBoundViolated(
            f"dt={dt:g} exceeds advective bound {dx / (2.0 * amax):g} (dx={dx:g}, max |a|={amax:g})"
        )
    lam = measure.total_rate
    if lam > 0.0 and dt * lam > 1.0:
        raise StabilityBoundViolated(f"dt * total jump rate = {dt * lam:g} > 1")


def jump_stencil(
    coeffs: CoefficientField, measure: MarkMeasure, t: float, nodes: Array, mark: int
) -> tuple[Array, Array]:
    """Pre-jump source points y(x_j) and inverse-map determinants Dbar(y(x_j))."""
    gamma = measure.gammas[mark]
    if not coeffs.jump_state_dependent:
        shift = coeffs.g(t, np.array([0.0]), gamma)[0]
        return nodes - shift, np.ones_like(nodes)
    y = np.empty_like(nodes)
    dbar = np.empty_like(nodes)
    for j, xv in enumerate(nodes):
        solve = inverse_jump_map(coeffs, t, np.array([xv]), gamma)
        y[j] = solve.y[0]
        dbar[j] = solve.inverse_det
    return y, dbar


def apply_density_jump(rho: Array, nodes: Array, y: Array, dbar: Array) -> Array:
    """Push the field through one jump: interpolate at source points, weight by Dbar."""
    return np.interp(y, nodes, rho, left=0.0, right=0.0) * dbar


def spde_step(
    rho: Array,
    h: float,
    dw: Array,
    a_grid: Array,
    b_grid: Array,
    bb_grid: Array,
    dx: float,
) -> Array:
    """One explicit step of the density transport/diffusion update.

    Works on a single field (nx,) or a batch (..., nx) with dw of matching
    leading shape (..., m).
    """
    out = rho + h * (-d1(rho * a_grid, dx) + 0.5 * d2(rho * bb_grid, dx))
    dw = np.asarray(dw, dtype=float)
    for k in range(b_grid.shape[1]):
        out = out - d1(rho * b_grid[:, k], dx) * dw[..., k, None]
    return out


@dataclass
class DensityFieldPath:
    """A density field evolved under one driving noise realization."""

    lo: float
    hi: float
    dx: float
    times: Array
    rho_at_path: Array
    mass: Array
    final: GridDensity
    snapshots: list[tuple[float, Array]]
    clipped_mass: float
    jump_mass_errors: list[float]
    driving: SamplePath
    rho0: GridDensity

    def snapshot_at(self, t: float) -> GridDensity:
        for ts, vals in self.snapshots:
            if abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return GridDensity(self.lo, self.hi, self.dx, vals.copy())
        raise KeyError(f"no snapshot stored at t = {t}")


def evolve_density_field(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    path: SamplePath,
    rho0: GridDensity,
    snapshot_times: tuple[float, ...] = (),
    support_tol: float = 1e-6,
    clip_negative: bool = True,
) -> DensityFieldPath:
    """March the field along the driving path's grid, firing its jumps in order."""
    _require_1d(coeffs)
    nodes = rho0.x
    dx = rho0.dx
    dt_max = float(np.max(np.diff(path.times)))
    check_grid_stability(coeffs, measure, nodes, dx, dt_max, path.t_final)

    peak0 = float(np.max(np.abs(rho0.values)))
    if max(abs(rho0.values[0]), abs(rho0.values[-1])) > support_tol * peak0:
        raise SupportOverflow("initial density does not vanish at the box boundary")

    a_grid, b_grid = eval_coeffs_on_grid(coeffs, 0.0, nodes)
    bb_grid = np.sum(b_grid**2, axis=1)
    stencils: dict[int, tuple[Array, Array]] = {}
    if not coeffs.jump_time_dependent:
        for mark in {ev.mark for ev in path.events}:
            stencils[mark] = jump_stencil(coeffs, measure, 0.0, nodes, mark)

    events_by_node = {ev.node: ev for ev in path.events}
    n_steps = path.n_steps
    rho = rho0.values.copy()
    rho_at_path = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    rho_at_path[0] = float(np.interp(path.states[0][0], nodes, rho, left=0.0, right=0.0))
    mass[0] = float(dx * rho.sum())
    clipped = 0.0
    jump_mass_errors: list[float] = []
    snaps: list[tuple[float, Array]] = []
    want = sorted(snapshot_times)
    next_snap = 0
    while next_snap < len(want) and want[next_snap] <= 1e-12:
        snaps.append((want[next_snap], rho.copy()))
        next_snap += 1

    for i in range(n_steps):
        t_i = float(path.times[i])
        h = float(path.times[i + 1] - path.times[i])
        if coeffs.time_dependent:
            a_grid, b_grid = eval_coeffs_on_grid(coeffs, t_i, nodes)
            bb_grid = np.sum(b_grid**2, axis=1)
        rho = spde_step(rho, h, path.dw[i], a_grid, b_grid, bb_grid, dx)

        ev = events_by_node.get(i + 1)
        if ev is not None:
            before = float(dx * rho.sum())
            if ev.mark in stencils:
                y, dbar = stencils[ev.mark]
            else:
                y, dbar = jump_stencil(coeffs, measure, ev.time, nodes, ev.mark)
            rho = apply_density_jump(rho, nodes, y, dbar)
            jump_mass_errors.append(abs(float(dx * rho.sum()) - before))

        if clip_negative:
            neg = rho < 0.0
            if np.any(neg):
                clipped += float(-dx * rho[neg].sum())
                rho[neg] = 0.0

        peak = float(np.max(rho))
        if not np.isfinite(peak):
            raise NumericalBlowup("density field became non-finite", t=float(path.times[i + 1]))
        if max(abs(rho[0]), abs(rho[-1])) > support_tol * max(peak, 1e-300):
            raise SupportOverflow(f"density support reached the box boundary at t = {path.times[i + 1]:g}")

        t_next = float(path.times[i + 1])
        rho_at_path[i + 1] = float(np.interp(path.states[i + 1][0], nodes, rho, left=0.0, right=0.0))
        mass[i + 1] = float(dx * rho.sum())
        while next_snap < len(want) and t_next >= want[next_snap] - 1e-12:
            snaps.append((want[next_snap], rho.copy()))
            next_snap += 1

    return DensityFieldPath(
        lo=rho0.lo,
        hi=rho0.hi,
        dx=dx,
        times=path.times,
        rho_at_path=rho_at_path,
        mass=mass,
        final=GridDensity(rho0.lo, rho0.hi, dx, rho),
        snapshots=snaps,
        clipped_mass=clipped,
        jump_mass_errors=jump_mass_errors,
        driving=path,
        rho0=rho0,
    )


@dataclass
class InvariantReport:
    """J(t) * rho(t, x(t)) compared with rho0(x0) along one realization."""

    times: Array
    jacobian: Array
    density_at_path: Array
    product: Array
    reference: float
    rel_deviation: Array
    max_rel_deviation: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "jacobian", "density_at_path", "product", "rel_deviation"])
            for i in range(len(self.times)):
                writer.writerow(
                    [
                        repr(float(self.times[i])),
                        repr(float(self.jacobian[i])),
                        repr(float(self.density_at_path[i])),
                        repr(float(self.product[i])),
                        repr(float(self.rel_deviation[i])),
                    ]
                )


def check_density_invariant(jac: JacobianPath, dens: DensityFieldPath) -> InvariantReport:
    """Relative deviation of J(t) rho(t, x(t)) from rho0(x0) over the whole path."""
    if len(jac.times) != len(dens.times) or not np.allclose(jac.times, dens.times, rtol=0.0, atol=1e-12):
        raise ContextMismatch("Jacobian and density were not evolved along the same path grid")
    x0 = float(dens.driving.x0[0])
    ref = float(dens.rho0.interp(x0))
    if ref <= 0.0:
        raise ValueError("rho0(x0) must be positive for the invariant check")
    product = jac.values * dens.rho_at_path
    rel = np.abs(product - ref) / ref
    return InvariantReport(
        times=dens.times,
        jacobian=jac.values,
        density_at_path=dens.rho_at_path,
        product=product,
        reference=ref,
        rel_deviation=rel,
        max_rel_deviation=float(np.max(rel)),
    )


def flow_ensemble_from_path(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    driving: SamplePath,
    y0s: Array,
) -> PathEnsemble:
    """Evolve many initial points through ONE noise realization (the driving path's).

    All trajectories see the same Wiener increments and the same jump events;
    only the initial state differs.  The result is the flow map sampled at the
    initial points.
    """
    y0s = np.asarray(y0s, dtype=float)
    if y0s.ndim == 1:
        y0s = y0s[:, None]
    n_pts, n = y0s.shape
    if n != coeffs.n:
        raise ValueError(f"initial points have dimension {n}, coefficients expect {coeffs.n}")
    events_by_node = {ev.node: ev for ev in driving.events}

    if coeffs.elementwise:
        X = y0s.copy()
        for i in range(driving.n_steps):
            t_i = float(driving.times[i])
            h = float(driving.times[i + 1] - driving.times[i])
            A = np.asarray(coeffs.drift(t_i, X), dtype=float)
            B = np.asarray(coeffs.diffusion(t_i, X), dtype=float)
            X = X + A * h + np.einsum("pnm,m->pn", B, driving.dw[i])
            ev = events_by_node.get(i + 1)
            if ev is not None:
                gamma = measure.gammas[ev.mark]
                X = X + np.asarray(coeffs.jump(ev.time, X, gamma), dtype=float)
        finals = X
    else:
        finals = np.empty_like(y0s)
        for p in range(n_pts):
            x = y0s[p]
            for i in range(driving.n_steps):
                t_i = float(driving.times[i])
                h = float(driving.times[i + 1] - driving.times[i])
                x = x + coeffs.a(t_i, x) * h + coeffs.b(t_i, x) @ driving.dw[i]
                ev = events_by_node.get(i + 1)
                if ev is not None:
                    x = x + coeffs.g(ev.time, x, measure.gammas[ev.mark])
            finals[p] = x

    if not np.all(np.isfinite(finals)):
        raise NumericalBlowup("flow ensemble became non-finite")
    counts = np.full(n_pts, len(driving.events), dtype=np.int64)
    return PathEnsemble(
        finals=finals,
        jump_counts=counts,
        seed=driving.seed,
        t_final=driving.t_final,
        paths=None,
        driving=driving,
    )


@dataclass
class WeakCheckReport:
    """Mass and observable agreement between a density field and its flow."""

    mass_error: float
    mass_tol: float
    rows: list[dict]
    passed: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["function", "field_integral", "flow_mean", "abs_diff", "tolerance", "passed"])
            for row in self.rows:
                writer.writerow(
                    [
                        row["name"],
                        repr(row["field_integral"]),
                        repr(row["flow_mean"]),
                        repr(row["abs_diff"]),
                        repr(row["tolerance"]),
                        str(int(row["passed"])),
                    ]
                )


def check_normalization(
    dens: DensityFieldPath,
    fs: TestFunctionSet,
    ensemble: PathEnsemble,
    mass_tol: float = 1e-3,
    extra_tol: float = 0.0,
) -> WeakCheckReport:
    """Check mass = 1 and int f rho dx against the common-noise flow average.

    The ensemble must be a flow ensemble over the density's own driving path
    (see :func:`flow_ensemble_from_path`); the identity holds realization by
    realization, not only on average.
    """
    if ensemble.driving is None:
        raise ContextMismatch("normalization checks need a common-noise flow ensemble")
    drv = ensemble.driving
    if drv is not dens.driving and not (
        np.array_equal(drv.dw, dens.driving.dw)
        and len(drv.events) == len(dens.driving.events)
        and all(
            a.node == b.node and a.mark == b.mark for a, b in zip(drv.events, dens.driving.events)
        )
    ):
        raise ContextMismatch("flow ensemble noise differs from the density's driving noise")

    mass_err = abs(dens.mass[-1] - 1.0)
    nodes = dens.final.x
    rho_final = dens.final.values
    finals = ensemble.finals[:, 0]
    n_pts = len(finals)
    rows = []
    ok = mass_err <= mass_tol
    for name, f in fs:
        lhs = float(dens.dx * np.sum(np.asarray(f(nodes)) * rho_final))
        samples = np.asarray(f(finals), dtype=float)
        rhs = float(np.mean(samples))
        sigma = float(np.std(samples)) / np.sqrt(n_pts)
        # mass_tol floor covers quadrature bias when sigma vanishes (constant f)
        tol = 4.0 * sigma + mass_tol + extra_tol
        good = abs(lhs - rhs) <= tol
        ok = ok and good
        rows.append(
            {
                "name": name,
                "field_integral": lhs,
                "flow_mean": rhs,
                "abs_diff": abs(lhs - rhs),
                "tolerance": tol,
                "passed": good,
            }
        )
    return WeakCheckReport(mass_error=mass_err, mass_tol=mass_tol, rows=rows, passed=ok)


def mean_density_over_noises(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    rho0: GridDensity,
    T: float,
    dt: float,
    n_realizations: int,
    seed: int,
    support_tol: float = 1e-6,
    chunk: int = 256,
) -> GridDensity:
    """Average the per-noise density field over independent realizations.

    Realization r draws its Wiener increments from substream (seed, r), so the
    result is independent of chunking and reproducible bitwise.  Jump-free
    elementwise autonomous fields advance in vectorized batches; otherwise each
    realization runs through :func:`evolve_density_field`.
    """
    _require_1d(coeffs)
    nodes = rho0.x
    dx = rho0.dx
    check_grid_stability(coeffs, measure, nodes, dx, dt, T)

    n_base = int(round(T / dt))
    if not (dt > 0.0) or T < dt:
        raise InvalidGrid(f"need 0 < dt <= T, got dt={dt}, T={T}")
    # step widths from the shared time grid so both routes see identical bits
    h_steps = np.diff(np.linspace(0.0, T, n_base + 1))

    fast = (
        measure.total_rate == 0.0
        and coeffs.elementwise
        and coeffs.m == 1
        and not coeffs.time_dependent
    )
    if fast:
        a_grid, b_grid = eval_coeffs_on_grid(coeffs, 0.0, nodes)
        bb_grid = np.sum(b_grid**2, axis=1)
        total = np.zeros(len(nodes))
        for start in range(0, n_realizations, chunk):
            stop = min(start + chunk, n_realizations)
            r_count = stop - start
            dw = np.empty((r_count, n_base, 1))
            for r in range(r_count):
                z = substream(seed, start + r, WIENER_CHANNEL).standard_normal((n_base, 1))
                dw[r] = z
            dw *= np.sqrt(h_steps)[None, :, None]
            rho = np.broadcast_to(rho0.values, (r_count, len(nodes))).copy()
            for i in range(n_base):
                rho = spde_step(rho, h_steps[i], dw[:, i], a_grid, b_grid, bb_grid, dx)
                np.clip(rho, 0.0, None, out=rho)
            peaks = np.max(rho, axis=1)
            edge = np.maximum(np.abs(rho[:, 0]), np.abs(rho[:, -1]))
            if np.any(edge > support_tol * np.maximum(peaks, 1e-300)):
                raise SupportOverflow("a realization's support reached the box boundary")
            if not np.all(np.isfinite(rho)):
                raise NumericalBlowup("a density realization became non-finite")
            # row-by-row keeps the accumulation order fixed for any chunk size
            for row in rho:
                total += row
        return GridDensity(rho0.lo, rho0.hi, dx, total / n_realizations)

    from .paths import simulate_path

    total = np.zeros(len(nodes))
    for r in range(n_realizations):
        path = simulate_path(coeffs, measure, np.zeros(1), T, dt, seed, path_index=r)
        dens = evolve_density_field(coeffs, measure, path, rho0, support_tol=support_tol)
        total += dens.final.values
    return GridDensity(rho0.lo, rho0.hi, dx, total / n_realizations)
