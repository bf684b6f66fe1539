"""Uniform 1D grids, grid densities, central-difference stencils, and quadrature.

All grid solvers in this package work on a truncated box [lo, hi] with zero
values beyond the boundary.  Densities live on nodes x_j = lo + j dx; the mass
of a density is the Riemann sum dx * sum(values), which is the quantity the
conservative stencils preserve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContextMismatch, InvalidGrid

Array = np.ndarray


def _n_nodes(lo: float, hi: float, dx: float) -> int:
    if not (dx > 0.0) or hi <= lo:
        raise InvalidGrid(f"need lo < hi and dx > 0, got [{lo}, {hi}], dx={dx}")
    n_cells = (hi - lo) / dx
    n = int(round(n_cells))
    if n < 2 or abs(n_cells - n) > 1e-9 * max(1.0, n):
        raise InvalidGrid(f"dx={dx} does not evenly divide [{lo}, {hi}]")
    return n + 1


@dataclass
class GridDensity:
    """A scalar density sampled on the nodes of a uniform grid."""

    lo: float
    hi: float
    dx: float
    values: Array

    def __post_init__(self):
        n = _n_nodes(self.lo, self.hi, self.dx)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (n,):
            raise InvalidGrid(f"values shape {self.values.shape} does not match {n} grid nodes")

    @property
    def x(self) -> Array:
        return np.linspace(self.lo, self.hi, len(self.values))

    @property
    def n_nodes(self) -> int:
        return len(self.values)

    def mass(self) -> float:
        return float(self.dx * self.values.sum())

    def interp(self, xq) -> Array | float:
        """Linear interpolation, zero outside the box."""
        return np.interp(xq, self.x, self.values, left=0.0, right=0.0)

    def copy(self) -> "GridDensity":
        return GridDensity(self.lo, self.hi, self.dx, self.values.copy())

    def normalized(self) -> "GridDensity":
        m = self.mass()
        if m <= 0.0:
            raise ValueError("cannot normalize a density with non-positive mass")
        return GridDensity(self.lo, self.hi, self.dx, self.values / m)

    @classmethod
    def zeros(cls, lo: float, hi: float, dx: float) -> "GridDensity":
        return cls(lo, hi, dx, np.zeros(_n_nodes(lo, hi, dx)))

    @classmethod
    def from_function(cls, lo: float, hi: float, dx: float, f, normalize: bool = False) -> "GridDensity":
        x = np.linspace(lo, hi, _n_nodes(lo, hi, dx))
        dens = cls(lo, hi, dx, np.asarray(f(x), dtype=float))
        return dens.normalized() if normalize else dens

    @classmethod
    def gaussian(cls, lo: float, hi: float, dx: float, center: float, sigma: float) -> "GridDensity":
        # normalized on the grid so the discrete mass is exactly 1
        return cls.from_function(
            lo, hi, dx, lambda x: np.exp(-0.5 * ((x - center) / sigma) ** 2), normalize=True
        )

    @classmethod
    def mollified_delta(cls, lo: float, hi: float, dx: float, center: float, width: float | None = None) -> "GridDensity":
        """Point mass smoothed to a Gaussian of width 2 dx (the solver-facing delta)."""
        return cls.gaussian(lo, hi, dx, center, 2.0 * dx if width is None else width)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "p"])
            for xv, pv in zip(self.x, self.values):
                writer.writerow([repr(float(xv)), repr(float(pv))])

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        import csv

        xs: list[float] = []
        ps: list[float] = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["x", "p"]:
                raise InvalidGrid(f"density CSV must start with columns x,p, got {header}")
            for row in reader:
                xs.append(float(row[0]))
                ps.append(float(row[1]))
        x = np.asarray(xs)
        if len(x) < 2:
            raise InvalidGrid("density CSV holds fewer than two nodes")
        # full-span quotient avoids the rounding of a single node difference
        dx = float((x[-1] - x[0]) / (len(x) - 1))
        if not np.allclose(np.diff(x), dx, rtol=0.0, atol=1e-9 * max(1.0, abs(dx))):
            raise InvalidGrid("density CSV nodes are not uniformly spaced")
        return cls(float(x[0]), float(x[-1]), dx, np.asarray(ps))


def same_grid(a: GridDensity, b: GridDensity) -> bool:
    return (
        a.n_nodes == b.n_nodes
        and abs(a.lo - b.lo) <= 1e-12 * max(1.0, abs(a.lo))
        and abs(a.hi - b.hi) <= 1e-12 * max(1.0, abs(a.hi))
    )


def require_same_grid(a: GridDensity, b: GridDensity) -> None:
    if not same_grid(a, b):
        raise ContextMismatch(
            f"grids differ: [{a.lo}, {a.hi}] dx={a.dx} n={a.n_nodes} vs [{b.lo}, {b.hi}] dx={b.dx} n={b.n_nodes}"
        )


def d1(f: Array, dx: float) -> Array:
    """Central first derivative along the last axis, zero beyond the boundary."""
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * dx)
    out[..., 0] = f[..., 1] / (2.0 * dx)
    out[..., -1] = -f[..., -2] / (2.0 * dx)
    return out


def d2(f: Array, dx: float) -> Array:
    """Central second derivative along the last axis, zero beyond the boundary."""
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / dx**2
    out[..., 0] = (f[..., 1] - 2.0 * f[..., 0]) / dx**2
    out[..., -1] = (f[..., -2] - 2.0 * f[..., -1]) / dx**2
    return out


def rebin_density(dens: GridDensity, lo: float, hi: float, dx: float) -> GridDensity:
    """Aggregate node masses onto a coarser grid, preserving total mass.

    Fine-node mass dens.dx * value is histogrammed into coarse cells centered
    on the coarse nodes; mass landing outside [lo, hi] is dropped.
    """
    n = _n_nodes(lo, hi, dx)
    edges = np.linspace(lo - 0.5 * dx, hi + 0.5 * dx, n + 1)
    masses, _ = np.histogram(dens.x, bins=edges, weights=dens.values * dens.dx)
    return GridDensity(lo, hi, dx, masses / dx)


def lattice_masses(dens: GridDensity, origin: float, h: float, k_max: int) -> Array:
    """Mass within h-wide windows centered at origin + k h, k = 0..k_max."""
    out = np.empty(k_max + 1)
    node_mass = dens.values * dens.dx
    x = dens.x
    for k in range(k_max + 1):
        c = origin + k * h
        sel = (x >= c - 0.5 * h) & (x < c + 0.5 * h)
        out[k] = node_mass[sel].sum()
    return out


def sample_from_density(dens: GridDensity, n: int, gen: np.random.Generator) -> Array:
    """Draw n points from a grid density by piecewise-linear inverse CDF."""
    pdf = np.clip(dens.values, 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(pdf * dens.dx)])
    if cdf[-1] <= 0.0:
        raise ValueError("cannot sample from a density with non-positive mass")
    cdf /= cdf[-1]
    # flat CDF runs (zero-mass cells) are harmless: they carry no probability
    edges = np.linspace(dens.lo - 0.5 * dens.dx, dens.hi + 0.5 * dens.dx, dens.n_nodes + 1)
    u = gen.uniform(size=n)
    return np.interp(u, cdf, edges)


@dataclass
class TestFunctionSet:
    """Named scalar observables with vectorized evaluation."""

    __test__ = False  # not a test case despite the name

    functions: list[tuple[str, object]] = field(default_factory=list)

    @classmethod
    def moments(cls) -> "TestFunctionSet":
        return cls(
            functions=[
                ("one", lambda x: np.ones_like(x)),
                ("x", lambda x: x),
                ("x_squared", lambda x: x**2),
            ]
        )

    def __iter__(self):
        return iter(self.functions)
