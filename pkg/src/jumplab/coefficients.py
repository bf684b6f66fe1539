"""Coefficient fields and jump mark measures for generalized jump-diffusion systems.

A system

    dx_i = a_i(t, x) dt + b_ik(t, x) dw_k + integral g_i(t, x, gamma) nu(dt; dgamma)

is described by a :class:`CoefficientField` (drift ``a``, diffusion ``b``, jump
amplitude ``g``) together with a :class:`MarkMeasure` holding the finite atomic
intensity measure of the Poisson random measure ``nu``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DerivativeUnavailable

Array = np.ndarray


def _fd_step(x: Array) -> Array:
    # central-difference step, relative above |x| = 1
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def fd_jacobian(f: Callable[[Array], Array], x: Array) -> Array:
    """Central finite-difference Jacobian of ``f`` at ``x``.

    Returns J with J[..., j] = d f / d x_j, appended as the trailing axis of
    f's output shape.
    """
    x = np.asarray(x, dtype=float)
    h = _fd_step(x)
    f0 = np.asarray(f(x), dtype=float)
    out = np.empty(f0.shape + (x.size,), dtype=float)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        out[..., j] = (np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2.0 * h[j])
    return out


class MarkMeasure:
    """Finite atomic mark measure: atoms ``gammas[j]`` with rates ``rates[j] > 0``.

    The expected number of events with mark ``gammas[j]`` per unit time is
    ``rates[j]``; the total event rate is :attr:`total_rate`.
    """

    def __init__(self, atoms: Sequence[tuple[float | Array, float]] = ()):
        self.gammas = [np.atleast_1d(np.asarray(g, dtype=float)) for g, _ in atoms]
        self.rates = np.asarray([r for _, r in atoms], dtype=float)
        if np.any(self.rates <= 0.0):
            raise ValueError("mark measure rates must be positive")
        if self.gammas and len({g.shape for g in self.gammas}) != 1:
            raise ValueError("all marks must share one shape")

    @property
    def n_atoms(self) -> int:
        return len(self.gammas)

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def sample_mark(self, gen: np.random.Generator) -> int:
        """Draw an atom index with probability rate_j / total_rate."""
        u = gen.uniform() * self.total_rate
        return int(np.searchsorted(np.cumsum(self.rates), u))


@dataclass
class CoefficientField:
    """Drift, diffusion, and jump-amplitude functions with optional analytic derivatives.

    Parameters
    ----------
    n, m
        State and Wiener dimensions.
    drift
        ``a(t, x) -> (n,)``.
    diffusion
        ``b(t, x) -> (n, m)``.
    jump
        ``g(t, x, gamma) -> (n,)``; None for systems without jumps.
    drift_jac, diffusion_jac, diffusion_hess, jump_jac
        Analytic spatial derivatives: ``da[i, j] = d a_i / d x_j`` (n, n),
        ``db[i, k, j] = d b_ik / d x_j`` (n, m, n),
        ``d2b[i, k, j, l] = d2 b_ik / d x_j d x_l`` (n, m, n, n),
        ``dg[i, j] = d g_i / d x_j`` (n, n).
        Missing derivatives fall back to central finite differences with step
        max(1e-6, 1e-6 |x_j|) unless ``allow_fd`` is off.
    jump_state_dependent
        Whether g varies with x.  Constant-in-x jumps admit the cheaper
        translation form of inverse maps and generator terms.
    time_dependent
        Whether drift/diffusion vary with t.  Autonomous fields let grid
        solvers evaluate coefficients once instead of every step.
    elementwise
        Declares that drift/diffusion broadcast over leading state axes
        (x of shape (..., n)), enabling batched ensemble simulation.
    jump_only
        Declares drift and diffusion identically zero, so the state moves
        only at events and simulation can fill the quiet stretches directly.
    """

    n: int
    m: int
    drift: Callable[[float, Array], Array]
    diffusion: Callable[[float, Array], Array]
    jump: Callable[[float, Array, Array], Array] | None = None
    drift_jac: Callable[[float, Array], Array] | None = None
    diffusion_jac: Callable[[float, Array], Array] | None = None
    diffusion_hess: Callable[[float, Array], Array] | None = None
    jump_jac: Callable[[float, Array, Array], Array] | None = None
    jump_state_dependent: bool = True
    jump_time_dependent: bool = False
    time_dependent: bool = False
    elementwise: bool = False
    jump_only: bool = False
    allow_fd: bool = True

    def a(self, t: float, x: Array) -> Array:
        return np.asarray(self.drift(t, x), dtype=float)

    def b(self, t: float, x: Array) -> Array:
        return np.asarray(self.diffusion(t, x), dtype=float)

    def g(self, t: float, x: Array, gamma: Array) -> Array:
        if self.jump is None:
            raise ValueError("coefficient field has no jump amplitude")
        return np.asarray(self.jump(t, x, gamma), dtype=float)

    def _fd_or_raise(self, name: str, f: Callable[[Array], Array], x: Array) -> Array:
        if not self.allow_fd:
            raise DerivativeUnavailable(f"no analytic {name} and finite differences are disabled")
        return fd_jacobian(f, x)

    def da_dx(self, t: float, x: Array) -> Array:
        """(n, n) with entries d a_i / d x_j."""
        if self.drift_jac is not None:
            return np.asarray(self.drift_jac(t, x), dtype=float)
        return self._fd_or_raise("drift Jacobian", lambda y: self.a(t, y), x)

    def db_dx(self, t: float, x: Array) -> Array:
        """(n, m, n) with entries d b_ik / d x_j."""
        if self.diffusion_jac is not None:
            return np.asarray(self.diffusion_jac(t, x), dtype=float)
        return self._fd_or_raise("diffusion Jacobian", lambda y: self.b(t, y), x)

    def d2b_dx2(self, t: float, x: Array) -> Array:
        """(n, m, n, n) with entries d2 b_ik / d x_j d x_l."""
        if self.diffusion_hess is not None:
            return np.asarray(self.diffusion_hess(t, x), dtype=float)
        return self._fd_or_raise(
            "diffusion Hessian", lambda y: self.db_dx(t, y), x
        )

    def dg_dx(self, t: float, x: Array, gamma: Array) -> Array:
        """(n, n) with entries d g_i / d x_j."""
        if self.jump_jac is not None:
            return np.asarray(self.jump_jac(t, x, gamma), dtype=float)
        if not self.jump_state_dependent:
            return np.zeros((self.n, self.n))
        return self._fd_or_raise("jump Jacobian", lambda y: self.g(t, y, gamma), x)

    def validate_shapes(self, t: float, x: Array, gamma: Array | None = None) -> None:
        """Raise ValueError if any function returns the wrong shape at a probe point."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"probe state has shape {x.shape}, expected ({self.n},)")
        if self.a(t, x).shape != (self.n,):
            raise ValueError("drift must return shape (n,)")
        if self.b(t, x).shape != (self.n, self.m):
            raise ValueError("diffusion must return shape (n, m)")
        if self.jump is not None:
            if gamma is None:
                raise ValueError("jump fields need a probe mark")
            if self.g(t, x, gamma).shape != (self.n,):
                raise ValueError("jump amplitude must return shape (n,)")


def check_derivatives(
    coeffs: CoefficientField,
    points: Sequence[tuple[float, Array]],
    gamma: Array | None = None,
    rtol: float = 1e-5,
) -> float:
    """Compare analytic derivative callbacks against central finite differences.

    Returns the worst relative error over the probe points and raises
    ValueError if it exceeds ``rtol``.  Only callbacks that are actually
    present are checked.
    """
    worst = 0.0

    def _cmp(analytic: Array, numeric: Array) -> float:
        scale = max(1.0, float(np.max(np.abs(numeric))))
        return float(np.max(np.abs(analytic - numeric))) / scale

    for t, x in points:
        x = np.asarray(x, dtype=float)
        if coeffs.drift_jac is not None:
            worst = max(worst, _cmp(coeffs.da_dx(t, x), fd_jacobian(lambda y: coeffs.a(t, y), x)))
        if coeffs.diffusion_jac is not None:
            worst = max(worst, _cmp(coeffs.db_dx(t, x), fd_jacobian(lambda y: coeffs.b(t, y), x)))
        if coeffs.jump_jac is not None and gamma is not None:
            worst = max(
                worst, _cmp(coeffs.dg_dx(t, x, gamma), fd_jacobian(lambda y: coeffs.g(t, y, gamma), x))
            )
    if worst > rtol:
        raise ValueError(f"analytic derivatives disagree with finite differences: {worst:.3e} > {rtol:.3e}")
    return worst


def centered_drift(coeffs: CoefficientField, measure: MarkMeasure) -> CoefficientField:
    """Drift with the mean jump displacement removed.

    Returns a field whose drift is a_j(t, x) - sum_i rates_i * g_j(t, x, gamma_i),
    so that the jump part contributes no systematic drift on average.  The
    diffusion and jump functions are shared with the input field.
    """
    if measure.n_atoms == 0 or coeffs.jump is None:
        return coeffs

    gammas = list(measure.gammas)
    rates = measure.rates.copy()

    def drift(t: float, x: Array) -> Array:
        out = np.asarray(coeffs.drift(t, x), dtype=float).copy()
        for lam, gam in zip(rates, gammas):
            out -= lam * np.asarray(coeffs.jump(t, x, gam), dtype=float)
        return out

    drift_jac = None
    if coeffs.drift_jac is not None and (coeffs.jump_jac is not None or not coeffs.jump_state_dependent):

        def drift_jac(t: float, x: Array) -> Array:
            out = np.asarray(coeffs.drift_jac(t, x), dtype=float).copy()
            for lam, gam in zip(rates, gammas):
                out -= lam * coeffs.dg_dx(t, x, gam)
            return out

    return CoefficientField(
        n=coeffs.n,
        m=coeffs.m,
        drift=drift,
        diffusion=coeffs.diffusion,
        jump=coeffs.jump,
        drift_jac=drift_jac,
        diffusion_jac=coeffs.diffusion_jac,
        diffusion_hess=coeffs.diffusion_hess,
        jump_jac=coeffs.jump_jac,
        jump_state_dependent=coeffs.jump_state_dependent,
        jump_time_dependent=coeffs.jump_time_dependent,
        time_dependent=coeffs.time_dependent or coeffs.jump_time_dependent,
        elementwise=False,
        allow_fd=coeffs.allow_fd,
    )
