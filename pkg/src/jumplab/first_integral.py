"""Stochastic first integrals: conserved random fields along jump-diffusion paths.

A candidate u is a stochastic first integral when u(t, x(t; x0)) stays at
u(0, x0) with probability one.  ``sfi_triple`` builds the coefficients (Q, D, G)
of u's own differential that make the composed increment vanish identically:

    Q   = -[a_i du/dx_i + 1/2 b_ik b_jk d2u/dx_i dx_j - b_ik d/dx_i(b_jk du/dx_j)]
    D_k = -b_ik du/dx_i
    G   = u(t, y) - u(t, x)   with y the pre-jump state x^{-1}(t; x; gamma)

``inverse_jump_map`` solves y + g(t, y, gamma) = x for that pre-jump state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import CoefficientField, MarkMeasure
from .errors import (
    InverseMapDiverged,
    NonInvertibleJumpFlow,
    UniquenessDomainViolated,
)
from .ito_wentzell import DifferentialTriple, RandomScalarField, verify_along_path
from .paths import NoiseContext, PathEnsemble

Array = np.ndarray


@dataclass
class SFICandidate(RandomScalarField):
    """A named scalar field proposed as a conserved quantity.

    ``series``, when given, evaluates the candidate along a whole path in one
    vectorized call (SamplePath -> (N+1,) values); conservation checks over
    large ensembles use it instead of node-by-node evaluation.
    """

    name: str = ""
    series: Callable | None = None


@dataclass
class InverseJumpSolve:
    """Solution of y + g(t, y, gamma) = x.

    ``forward_det`` is det(I + dg/dy) at y; ``inverse_det`` its reciprocal,
    the Jacobian determinant of x -> y.
    """

    y: Array
    forward_det: float
    inverse_det: float
    n_iter: int
    residual: float


def inverse_jump_map(
    coeffs: CoefficientField,
    t: float,
    x: Array,
    gamma: Array,
    tol: float = 1e-12,
    max_iter: int = 50,
    contraction_check: bool = True,
) -> InverseJumpSolve:
    """Newton solve for the pre-jump state, starting from y0 = x - g(t, x, gamma).

    The iteration is guarded by the contraction bound ||dg/dx||_inf < 1 sampled
    at x and at the running iterate; violation raises UniquenessDomainViolated
    since the pre-jump state may then fail to be unique.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    eye = np.eye(coeffs.n)

    def _kappa(z: Array) -> float:
        dg = coeffs.dg_dx(t, z, gamma)
        return float(np.max(np.sum(np.abs(dg), axis=1)))

    if contraction_check and coeffs.jump_state_dependent and _kappa(x) >= 1.0:
        raise UniquenessDomainViolated(f"||dg/dx||_inf = {_kappa(x):.3f} >= 1 at the target point")

    y = x - coeffs.g(t, x, gamma)
    n_iter = 0
    res = float(np.max(np.abs(y + coeffs.g(t, y, gamma) - x)))
    while res >= tol and n_iter < max_iter:
        if contraction_check and coeffs.jump_state_dependent:
            kap = _kappa(y)
            if kap >= 1.0:
                raise UniquenessDomainViolated(f"||dg/dx||_inf = {kap:.3f} >= 1 on the search region")
        jac = eye + coeffs.dg_dx(t, y, gamma)
        r = y + coeffs.g(t, y, gamma) - x
        try:
            y = y - np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise NonInvertibleJumpFlow("I + dg/dy is singular during the Newton solve") from exc
        n_iter += 1
        res = float(np.max(np.abs(y + coeffs.g(t, y, gamma) - x)))
    if res >= tol:
        raise InverseMapDiverged(f"residual {res:.3e} after {n_iter} iterations (target {tol:.1e})")

    fwd = float(np.linalg.det(eye + coeffs.dg_dx(t, y, gamma)))
    if fwd <= 0.0:
        raise NonInvertibleJumpFlow(f"det(I + dg/dy) = {fwd:.3e} <= 0 at the pre-jump state")
    return InverseJumpSolve(y=y, forward_det=fwd, inverse_det=1.0 / fwd, n_iter=n_iter, residual=res)


def inverse_map_determinant_fd(
    coeffs: CoefficientField, t: float, x: Array, gamma: Array
) -> float:
    """Jacobian determinant of the inverse map by differentiating the solved map itself.

    Central finite differences of x -> y(x), each probe an independent Newton
    solve.  This is the route that makes the product test against the forward
    determinant non-trivial.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    cols = np.empty((n, n))
    for j in range(n):
        h = max(1e-6, 1e-6 * abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        yp = inverse_jump_map(coeffs, t, xp, gamma).y
        ym = inverse_jump_map(coeffs, t, xm, gamma).y
        cols[:, j] = (yp - ym) / (2.0 * h)
    return float(np.linalg.det(cols))


def determinant_identity_error(coeffs: CoefficientField, t: float, x: Array, gamma: Array) -> float:
    """|D_fd * A_forward - 1| with the two determinants computed on separate routes."""
    solve = inverse_jump_map(coeffs, t, x, gamma)
    d_fd = inverse_map_determinant_fd(coeffs, t, x, gamma)
    return abs(d_fd * solve.forward_det - 1.0)


def sfi_triple(
    u: RandomScalarField,
    coeffs: CoefficientField,
    measure: MarkMeasure,
) -> DifferentialTriple:
    """Differential coefficients that make u a candidate first integral.

    For state-dependent jump amplitudes G uses the pre-jump state from
    ``inverse_jump_map``; for state-independent amplitudes the translation
    x - g suffices.
    """

    def q(t: float, x: Array, ctx: NoiseContext | None) -> float:
        a = coeffs.a(t, x)
        b = coeffs.b(t, x)
        db = coeffs.db_dx(t, x)
        gu = u.gradient(t, x, ctx)
        hu = u.hessian(t, x, ctx)
        bbt = b @ b.T
        # b_ik d/dx_i(b_jk du/dx_j) = b_ik db_jk/dx_i du/dx_j + (b b^T)_ij d2u/dx_i dx_j,
        # so the bracket collapses to a du/dx - 1/2 bb:H - b db du/dx
        mixed = float(np.einsum("ik,jki,j->", b, db, gu))
        return -(float(a @ gu) - 0.5 * float(np.sum(bbt * hu)) - mixed)

    def d(t: float, x: Array, ctx: NoiseContext | None) -> Array:
        return -(coeffs.b(t, x).T @ u.gradient(t, x, ctx))

    big_g = None
    if coeffs.jump is not None and measure.n_atoms > 0:

        def big_g(t: float, x: Array, gamma: Array, ctx: NoiseContext | None) -> float:
            if coeffs.jump_state_dependent:
                y = inverse_jump_map(coeffs, t, x, gamma).y
            else:
                y = x - coeffs.g(t, x, gamma)
            return float(u.value(t, y, ctx)) - float(u.value(t, x, ctx))

    return DifferentialTriple(
        q=q,
        d=d,
        big_g=big_g,
        d_jac=None,
        uses_noise=u.uses_noise,
        allow_fd=u.allow_fd,
    )


@dataclass
class ConservationReport:
    """Per-path deviation of a candidate from its initial value."""

    max_residuals: Array
    final_residuals: Array
    chain_rule_residuals: Array | None
    worst: float
    n_paths: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path_index", "max_residual", "final_residual"])
            for p in range(self.n_paths):
                writer.writerow(
                    [str(p), repr(float(self.max_residuals[p])), repr(float(self.final_residuals[p]))]
                )


def check_conservation(
    u: RandomScalarField,
    triple: DifferentialTriple,
    coeffs: CoefficientField,
    measure: MarkMeasure,
    ensemble: PathEnsemble,
    include_chain_rule: bool = False,
) -> ConservationReport:
    """Evaluate max_t |u(t, x(t)) - u(0, x0)| on every path of the ensemble.

    The direct evaluation uses the candidate's own value function with the
    path's accumulated noise.  With ``include_chain_rule`` the report also
    carries the accumulated-increment residual of the chain rule, which for a
    true first integral cancels step by step.
    """
    if ensemble.paths is None:
        raise ValueError("conservation checks need full paths (keep_paths=True)")
    n_paths = ensemble.n_paths
    max_res = np.empty(n_paths)
    fin_res = np.empty(n_paths)
    chain = np.empty(n_paths) if include_chain_rule else None

    series = getattr(u, "series", None)
    needs_ctx = u.uses_noise
    for p, path in enumerate(ensemble.paths):
        if series is not None:
            vals = np.asarray(series(path), dtype=float)
            dev = np.abs(vals - vals[0])
            max_res[p] = float(dev.max())
            fin_res[p] = float(dev[-1])
        else:
            r0 = None
            worst = 0.0
            last = 0.0
            for i in range(path.n_steps + 1):
                ctx = path.noise_context(i) if needs_ctx else None
                ri = float(u.value(float(path.times[i]), path.states[i], ctx))
                if r0 is None:
                    r0 = ri
                last = abs(ri - r0)
                worst = max(worst, last)
            max_res[p] = worst
            fin_res[p] = last
        if include_chain_rule:
            chain[p] = verify_along_path(u, triple, coeffs, path, measure).residual

    return ConservationReport(
        max_residuals=max_res,
        final_residuals=fin_res,
        chain_rule_residuals=chain,
        worst=float(max_res.max()) if n_paths else 0.0,
        n_paths=n_paths,
    )
