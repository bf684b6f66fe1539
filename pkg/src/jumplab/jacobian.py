"""Determinant of the state-flow Jacobian along a simulated path.

The log-determinant accumulates per step

    d log J = [tr(da/dx) - 1/2 sum_k tr((grad b_k)^2)] dt + sum_k tr(grad b_k) dw_k

and, at each jump, log det(I + dg/dx) evaluated at the pre-jump state.  The
stored values are exp of the running sum, so J stays positive by construction;
a jump with det(I + dg/dx) <= 0 is rejected as a non-invertible flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, MarkMeasure
from .errors import NonInvertibleJumpFlow, NumericalBlowup
from .paths import SamplePath

Array = np.ndarray


@dataclass
class JacobianPath:
    """det(dx(t)/dx0) sampled on the driving path's grid."""

    times: Array
    values: Array
    log_increments: Array

    @property
    def final(self) -> float:
        return float(self.values[-1])


def evolve_jacobian(coeffs: CoefficientField, measure: MarkMeasure, path: SamplePath) -> JacobianPath:
    """Accumulate the flow-determinant along a stored path."""
    n_steps = path.n_steps
    log_inc = np.zeros(n_steps)
    events_by_node = {ev.node: ev for ev in path.events}

    for i in range(n_steps):
        t_i = float(path.times[i])
        h = float(path.times[i + 1] - path.times[i])
        x = path.states[i]
        da = coeffs.da_dx(t_i, x)
        db = coeffs.db_dx(t_i, x)
        # db[i, k, j] = d b_ik / d x_j
        div_b = np.einsum("iki->k", db)
        tr_sq = np.einsum("ikj,jki->", db, db)
        drift = float(np.trace(da)) - 0.5 * float(tr_sq)
        log_inc[i] = drift * h + float(div_b @ path.dw[i])

        ev = events_by_node.get(i + 1)
        if ev is not None:
            gamma = measure.gammas[ev.mark]
            det = float(np.linalg.det(np.eye(coeffs.n) + coeffs.dg_dx(ev.time, ev.x_pre, gamma)))
            if det <= 0.0:
                raise NonInvertibleJumpFlow(f"det(I + dg/dx) = {det:.3e} <= 0 at t = {ev.time}")
            log_inc[i] += np.log(det)

    log_path = np.concatenate([[0.0], np.cumsum(log_inc)])
    values = np.exp(log_path)
    if not np.all(np.isfinite(values)):
        raise NumericalBlowup("flow Jacobian became non-finite")
    return JacobianPath(times=path.times, values=values, log_increments=log_inc)
