"""Forward and backward evolution equations for jump-diffusion transition laws.

The forward equation advances an initial law p(s, .):

    dp/dt = -d(p a)/dx + 1/2 d2(p b b)/dx2
            + sum_j lam_j [ p(y_j(x)) Dbar_j(x) - p(x) ]

where y_j is the pre-jump point mapped onto x by mark j.  The backward
equation acts on observables and runs from a terminal slice at time t down
to s:

    du/ds + a du/dy + 1/2 b b d2u/dy2 + sum_j lam_j [ u(y + g(s,y,gamma_j)) - u(y) ] = 0.

Pairing the two through expectations gives a duality identity used as a
cross-check between the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, MarkMeasure
from .density import check_grid_stability, eval_coeffs_on_grid, jump_stencil
from .errors import InvalidGrid, NumericalBlowup, SupportOverflow
from .grids import GridDensity, d1, d2, require_same_grid
from .paths import simulate_ensemble

Array = np.ndarray


@dataclass
class ForwardSolution:
    """Deterministic forward-equation run with optional intermediate snapshots."""

    final: GridDensity
    snapshots: list[tuple[float, GridDensity]]
    mass: Array
    clipped_mass: float
    dt: float
    n_steps: int

    def snapshot_at(self, t: float) -> GridDensity:
        for ts, dens in self.snapshots:
            if abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return dens
        raise KeyError(f"no snapshot stored at t = {t}")


def solve_forward(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    p0: GridDensity,
    t0: float,
    t1: float,
    dt: float,
    snapshot_times: tuple[float, ...] = (),
    support_tol: float = 1e-6,
    clip_negative: bool = True,
) -> ForwardSolution:
    """Advance the law from t0 to t1 with an explicit scheme on p0's grid."""
    if coeffs.n != 1:
        raise InvalidGrid("grid solvers are one-dimensional (n = 1)")
    if not t1 > t0:
        raise InvalidGrid(f"need t1 > t0, got t0={t0}, t1={t1}")
    nodes = p0.x
    dx = p0.dx
    n_steps = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / n_steps
    check_grid_stability(coeffs, measure, nodes, dx, h, t1)

    lam = measure.rates
    a_grid, b_grid = eval_coeffs_on_grid(coeffs, t0, nodes)
    bb_grid = np.sum(b_grid**2, axis=1)
    stencils = None
    if not coeffs.jump_time_dependent:
        stencils = [jump_stencil(coeffs, measure, t0, nodes, j) for j in range(measure.n_atoms)]

    p = p0.values.copy()
    mass = np.empty(n_steps + 1)
    mass[0] = float(dx * p.sum())
    clipped = 0.0
    snaps: list[tuple[float, GridDensity]] = []
    want = sorted(snapshot_times)
    next_snap = 0

    for i in range(n_steps):
        t = t0 + i * h
        if coeffs.time_dependent:
            a_grid, b_grid = eval_coeffs_on_grid(coeffs, t, nodes)
            bb_grid = np.sum(b_grid**2, axis=1)
        rhs = -d1(p * a_grid, dx) + 0.5 * d2(p * bb_grid, dx)
        for j in range(measure.n_atoms):
            if stencils is not None:
                y, dbar = stencils[j]
            else:
                y, dbar = jump_stencil(coeffs, measure, t, nodes, j)
            mapped = np.interp(y, nodes, p, left=0.0, right=0.0) * dbar
            rhs = rhs + lam[j] * (mapped - p)
        p = p + h * rhs
        if clip_negative:
            neg = p < 0.0
            if np.any(neg):
                clipped += float(-dx * p[neg].sum())
                p[neg] = 0.0
        peak = float(np.max(p))
        if not np.isfinite(peak):
            raise NumericalBlowup("forward solution became non-finite", t=t0 + (i + 1) * h)
        if max(abs(p[0]), abs(p[-1])) > support_tol * max(peak, 1e-300):
            raise SupportOverflow(f"forward solution reached the box boundary at t = {t0 + (i + 1) * h:g}")
        mass[i + 1] = float(dx * p.sum())
        t_next = t0 + (i + 1) * h
        while next_snap < len(want) and t_next >= want[next_snap] - 1e-12:
            snaps.append((want[next_snap], GridDensity(p0.lo, p0.hi, dx, p.copy())))
            next_snap += 1

    return ForwardSolution(
        final=GridDensity(p0.lo, p0.hi, dx, p),
        snapshots=snaps,
        mass=mass,
        clipped_mass=clipped,
        dt=h,
        n_steps=n_steps,
    )


@dataclass
class BackwardSolution:
    """Observable slices marched from the terminal time down to s0."""

    lo: float
    hi: float
    dx: float
    values: Array
    s0: float
    t_terminal: float
    dt: float
    n_steps: int

    @property
    def x(self) -> Array:
        return np.linspace(self.lo, self.hi, self.values.shape[-1])


def solve_backward(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    terminal: GridDensity | Array,
    lo: float,
    hi: float,
    dx: float,
    s0: float,
    t_terminal: float,
    dt: float,
) -> BackwardSolution:
    """March terminal observable(s) backward; leading axes of `terminal` batch."""
    if coeffs.n != 1:
        raise InvalidGrid("grid solvers are one-dimensional (n = 1)")
    if not t_terminal > s0:
        raise InvalidGrid(f"need t_terminal > s0, got s0={s0}, t_terminal={t_terminal}")
    if isinstance(terminal, GridDensity):
        lo, hi, dx = terminal.lo, terminal.hi, terminal.dx
        values = terminal.values.copy()
    else:
        values = np.array(terminal, dtype=float)
    nodes = np.linspace(lo, hi, values.shape[-1])
    n_steps = max(1, int(round((t_terminal - s0) / dt)))
    h = (t_terminal - s0) / n_steps
    check_grid_stability(coeffs, measure, nodes, dx, h, t_terminal)

    lam = measure.rates
    a_grid, b_grid = eval_coeffs_on_grid(coeffs, t_terminal, nodes)
    bb_grid = np.sum(b_grid**2, axis=1)
    shift_nodes = None
    if not (coeffs.time_dependent or coeffs.jump_time_dependent):
        shift_nodes = _forward_shift_nodes(coeffs, measure, t_terminal, nodes)

    u = values
    for i in range(n_steps):
        s = t_terminal - i * h
        if coeffs.time_dependent:
            a_grid, b_grid = eval_coeffs_on_grid(coeffs, s, nodes)
            bb_grid = np.sum(b_grid**2, axis=1)
        rhs = a_grid * d1(u, dx) + 0.5 * bb_grid * d2(u, dx)
        znodes = shift_nodes if shift_nodes is not None else _forward_shift_nodes(coeffs, measure, s, nodes)
        for j in range(measure.n_atoms):
            shifted = _interp_rows(znodes[j], nodes, u)
            rhs = rhs + lam[j] * (shifted - u)
        u = u + h * rhs
        if not np.all(np.isfinite(u)):
            raise NumericalBlowup("backward solution became non-finite", t=s - h)

    return BackwardSolution(
        lo=lo, hi=hi, dx=dx, values=u, s0=s0, t_terminal=t_terminal, dt=h, n_steps=n_steps
    )


def _forward_shift_nodes(
    coeffs: CoefficientField, measure: MarkMeasure, t: float, nodes: Array
) -> list[Array]:
    """Post-jump images y + g(t, y, gamma_j) of the grid nodes, one array per mark."""
    out = []
    for j in range(measure.n_atoms):
        gamma = measure.gammas[j]
        if coeffs.elementwise:
            g = np.asarray(coeffs.jump(t, nodes[:, None], gamma), dtype=float)[:, 0]
        else:
            g = np.array([coeffs.g(t, np.array([xv]), gamma)[0] for xv in nodes])
        out.append(nodes + g)
    return out


def _interp_rows(z: Array, nodes: Array, u: Array) -> Array:
    """np.interp along the last axis for a possibly batched field."""
    if u.ndim == 1:
        return np.interp(z, nodes, u, left=0.0, right=0.0)
    flat = u.reshape(-1, u.shape[-1])
    out = np.empty((flat.shape[0], len(z)))
    for r in range(flat.shape[0]):
        out[r] = np.interp(z, nodes, flat[r], left=0.0, right=0.0)
    return out.reshape(u.shape[:-1] + (len(z),))


@dataclass
class MCDensityResult:
    """Histogram estimate of the time-T law from simulated trajectories."""

    density: GridDensity
    n_paths: int
    n_overflow: int
    overflow_mass_fraction: float


def mc_density(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    x0: Array,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    lo: float,
    hi: float,
    dx: float,
    threads: int = 1,
) -> MCDensityResult:
    """Bin simulated endpoints into node-centered cells of width dx."""
    dens = GridDensity.zeros(lo, hi, dx)
    nodes = dens.x
    edges = np.concatenate([nodes - 0.5 * dx, [nodes[-1] + 0.5 * dx]])
    ens = simulate_ensemble(
        coeffs, measure, np.asarray(x0, dtype=float), T, dt, seed, n_paths, keep_paths=False, threads=threads
    )
    finals = ens.finals[:, 0]
    inside = (finals >= edges[0]) & (finals <= edges[-1])
    counts, _ = np.histogram(finals[inside], bins=edges)
    n_overflow = int(n_paths - inside.sum())
    dens.values[:] = counts / (n_paths * dx)
    return MCDensityResult(
        density=dens,
        n_paths=n_paths,
        n_overflow=n_overflow,
        overflow_mass_fraction=n_overflow / n_paths,
    )


@dataclass
class DensityMetrics:
    """Grid-quadrature distances between two densities on one grid."""

    l1: float
    linf: float
    mass_err: float

    def as_dict(self) -> dict:
        return {"l1": self.l1, "linf": self.linf, "mass_err": self.mass_err}


def compare_densities(p: GridDensity, q: GridDensity) -> DensityMetrics:
    require_same_grid(p, q)
    diff = p.values - q.values
    return DensityMetrics(
        l1=float(p.dx * np.sum(np.abs(diff))),
        linf=float(np.max(np.abs(diff))),
        mass_err=float(abs(p.mass() - q.mass())),
    )


@dataclass
class DualityReport:
    """Pairing <p(s), u(s)> against the smeared forward law at probe points."""

    xs: Array
    lhs: Array
    rhs: Array
    abs_diff: Array
    l1: float
    max_abs: float


def check_duality(
    coeffs: CoefficientField,
    measure: MarkMeasure,
    p_s: GridDensity,
    s: float,
    t: float,
    dt_forward: float,
    dt_backward: float,
    xs: Array,
    width: float | None = None,
) -> DualityReport:
    """Cross-check the two solvers through the expectation identity.

    For each probe x_j, the terminal observable is a mollified spike at x_j.
    Marching it backward and pairing with p(s) must match pairing the spike
    with the forward-evolved law p(t); both sides smear the spike identically,
    so they agree up to scheme error.
    """
    xs = np.asarray(xs, dtype=float)
    nodes = p_s.x
    dx = p_s.dx
    if width is None:
        width = 2.0 * dx

    fwd = solve_forward(coeffs, measure, p_s, s, t, dt_forward)
    p_t = fwd.final.values

    spikes = np.exp(-0.5 * ((nodes[None, :] - xs[:, None]) / width) ** 2)
    spikes /= spikes.sum(axis=1, keepdims=True) * dx
    bwd = solve_backward(coeffs, measure, spikes, p_s.lo, p_s.hi, dx, s, t, dt_backward)

    lhs = dx * np.sum(bwd.values * p_s.values[None, :], axis=1)
    rhs = dx * np.sum(spikes * p_t[None, :], axis=1)
    diff = np.abs(lhs - rhs)
    if len(xs) > 1:
        dsub = float(np.mean(np.diff(np.sort(xs))))
    else:
        dsub = 1.0
    return DualityReport(
        xs=xs,
        lhs=lhs,
        rhs=rhs,
        abs_diff=diff,
        l1=float(np.sum(diff) * dsub),
        max_abs=float(np.max(diff)),
    )
