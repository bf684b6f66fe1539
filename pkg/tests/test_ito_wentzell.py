import numpy as np
import pytest

from jumplab import (
    CoefficientField,
    DifferentialTriple,
    MarkMeasure,
    RandomScalarField,
    compose_increment,
    residual_ladder,
    simulate_path,
    verify_along_path,
)


def square_field():
    return RandomScalarField(
        value=lambda t, x, ctx: float(x[0] ** 2),
        grad=lambda t, x, ctx: np.array([2.0 * x[0]]),
        hess=lambda t, x, ctx: np.array([[2.0]]),
    )


def linear_field():
    # F = 2x + 3t, dF = 3 dt deterministically
    return RandomScalarField(
        value=lambda t, x, ctx: float(2.0 * x[0] + 3.0 * t),
        grad=lambda t, x, ctx: np.array([2.0]),
        hess=lambda t, x, ctx: np.zeros((1, 1)),
    )


def test_linear_field_composition_is_exact(drifted_field, empty_measure):
    F = linear_field()
    triple = DifferentialTriple(
        q=lambda t, x, ctx: 3.0,
        d=lambda t, x, ctx: np.zeros(1),
        d_jac=lambda t, x, ctx: np.zeros((1, 1)),
    )
    path = simulate_path(drifted_field, empty_measure, np.zeros(1), 1.0, 0.01, seed=6)
    rep = verify_along_path(F, triple, drifted_field, path)
    # Euler increments of a linear observable match the chain rule identically
    assert rep.residual < 1e-12
    assert rep.n_steps == 100


def test_square_field_residual_is_bracket_mismatch(heat_field, empty_measure):
    F = square_field()
    triple = DifferentialTriple.zero(1)
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 1.0, 0.01, seed=12)
    rep = verify_along_path(F, triple, heat_field, path)
    # for F = x^2, dx = dw the uncompensated part telescopes to sum(dw^2 - h)
    expected = float(np.sum(path.dw[:, 0] ** 2 - np.diff(path.times)))
    np.testing.assert_almost_equal(rep.residual, abs(expected), decimal=12)


def test_compose_increment_jump_bracket():
    mm = MarkMeasure([(0.5, 1.0)])
    field = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros_like(x),
        diffusion=lambda t, x: np.zeros(np.shape(x) + (1,)),
        jump=lambda t, x, gamma: gamma[0] * x,
        jump_jac=lambda t, x, gamma: np.array([[gamma[0]]]),
        elementwise=True,
        jump_only=True,
    )
    path = simulate_path(field, mm, np.ones(1), 2.0, 0.1, seed=1)
    assert path.events, "needs at least one event to exercise the bracket"
    ev = path.events[0]
    F = square_field()
    inc = compose_increment(
        F,
        DifferentialTriple.zero(1),
        field,
        ev.time,
        ev.x_pre,
        0.0,
        np.zeros(1),
        events=[ev],
        measure=mm,
    )
    x_pre = ev.x_pre[0]
    np.testing.assert_almost_equal(inc, (1.5 * x_pre) ** 2 - x_pre**2, decimal=12)


def test_compose_increment_requires_measure_for_events():
    field = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros(1),
        diffusion=lambda t, x: np.zeros((1, 1)),
        jump=lambda t, x, gamma: gamma,
    )
    from jumplab import JumpEvent

    ev = JumpEvent(node=1, time=0.5, mark=0, x_pre=np.zeros(1))
    with pytest.raises(ValueError):
        compose_increment(
            square_field(),
            DifferentialTriple.zero(1),
            field,
            0.5,
            np.zeros(1),
            0.1,
            np.zeros(1),
            events=[ev],
        )


def test_residual_ladder_order_near_one(heat_field, empty_measure):
    F = square_field()
    rep = residual_ladder(
        F,
        DifferentialTriple.zero(1),
        heat_field,
        empty_measure,
        np.zeros(1),
        1.0,
        [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7],
        150,
        seed=7,
    )
    # mean-square residual of sum(dw^2 - h) scales linearly in dt
    assert 0.85 <= rep.order <= 1.15
    assert rep.mean_sq.shape == (4,)
    assert np.all(np.diff(rep.mean_sq) < 0)


def test_ladder_mean_square_close_to_theory(heat_field, empty_measure):
    # E[ (sum dw^2 - h)^2 ] = 2 T dt exactly for dx = dw
    rep = residual_ladder(
        square_field(),
        DifferentialTriple.zero(1),
        heat_field,
        empty_measure,
        np.zeros(1),
        1.0,
        [2.0**-5],
        400,
        seed=3,
    )
    theory = 2.0 * 1.0 * 2.0**-5
    assert abs(rep.mean_sq[0] - theory) / theory < 0.25
