import numpy as np
import pytest

from jumplab import (
    CoefficientField,
    MarkMeasure,
    SFICandidate,
    check_conservation,
    determinant_identity_error,
    inverse_jump_map,
    inverse_map_determinant_fd,
    sfi_triple,
    simulate_ensemble,
)
from jumplab.errors import NonInvertibleJumpFlow, UniquenessDomainViolated


def multiplicative_field(c=0.5):
    return CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros_like(x),
        diffusion=lambda t, x: np.zeros(np.shape(x) + (1,)),
        jump=lambda t, x, gamma: gamma[0] * x,
        jump_jac=lambda t, x, gamma: np.array([[gamma[0]]]),
        elementwise=True,
        jump_only=True,
    )


def linear_candidate(a0, b0):
    return SFICandidate(
        name="linear",
        value=lambda t, x, ctx: float(x[0] - a0 * t - b0 * ctx.w[0]),
        grad=lambda t, x, ctx: np.array([1.0]),
        hess=lambda t, x, ctx: np.zeros((1, 1)),
        uses_noise=True,
        series=lambda path: path.states[:, 0] - a0 * path.times - b0 * path.w()[:, 0],
    )


def test_inverse_jump_map_multiplicative():
    field = multiplicative_field()
    solve = inverse_jump_map(field, 0.0, np.array([3.0]), np.array([0.5]))
    np.testing.assert_almost_equal(solve.y[0], 2.0, decimal=12)
    np.testing.assert_almost_equal(solve.forward_det, 1.5, decimal=12)
    np.testing.assert_almost_equal(solve.inverse_det, 1.0 / 1.5, decimal=12)
    assert solve.residual < 1e-12


def test_inverse_jump_map_nonlinear_newton():
    # g = tanh(x) / 4, state-dependent with contraction constant 1/4
    field = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros(1),
        diffusion=lambda t, x: np.zeros((1, 1)),
        jump=lambda t, x, gamma: np.tanh(x) / 4.0,
        jump_jac=lambda t, x, gamma: np.array([[1.0 / (4.0 * np.cosh(x[0]) ** 2)]]),
    )
    x = np.array([0.8])
    solve = inverse_jump_map(field, 0.0, x, np.array([0.0]))
    np.testing.assert_almost_equal(
        solve.y[0] + np.tanh(solve.y[0]) / 4.0, 0.8, decimal=12
    )
    assert solve.n_iter >= 1


def test_inverse_jump_map_contraction_guard():
    # dg/dx = 2 violates the uniqueness bound
    field = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros(1),
        diffusion=lambda t, x: np.zeros((1, 1)),
        jump=lambda t, x, gamma: 2.0 * x,
        jump_jac=lambda t, x, gamma: np.array([[2.0]]),
    )
    with pytest.raises(UniquenessDomainViolated):
        inverse_jump_map(field, 0.0, np.array([1.0]), np.array([0.0]))


def test_inverse_jump_map_degenerate_determinant():
    # g = -x collapses the flow: det(I + dg/dx) = 0
    field = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.zeros(1),
        diffusion=lambda t, x: np.zeros((1, 1)),
        jump=lambda t, x, gamma: -x,
        jump_jac=lambda t, x, gamma: np.array([[-1.0]]),
    )
    with pytest.raises((NonInvertibleJumpFlow, UniquenessDomainViolated)):
        inverse_jump_map(field, 0.0, np.array([1.0]), np.array([0.0]))


def test_determinant_identity_linear_1d():
    field = multiplicative_field()
    err = determinant_identity_error(field, 0.3, np.array([1.7]), np.array([0.5]))
    assert err < 1e-8


def test_determinant_identity_linear_2d():
    M = np.array([[0.2, 0.1], [-0.05, 0.3]])
    shift = np.array([0.4, -0.2])
    field = CoefficientField(
        n=2,
        m=1,
        drift=lambda t, x: np.zeros(2),
        diffusion=lambda t, x: np.zeros((2, 1)),
        jump=lambda t, x, gamma: M @ x + shift,
        jump_jac=lambda t, x, gamma: M,
    )
    err = determinant_identity_error(field, 0.0, np.array([0.9, -0.4]), np.array([0.0]))
    assert err < 1e-8
    fd = inverse_map_determinant_fd(field, 0.0, np.array([0.9, -0.4]), np.array([0.0]))
    np.testing.assert_allclose(fd, 1.0 / np.linalg.det(np.eye(2) + M), rtol=1e-7)


def test_linear_candidate_conserved(drifted_field, empty_measure):
    u = linear_candidate(0.5, 0.3)
    triple = sfi_triple(u, drifted_field, empty_measure)
    ens = simulate_ensemble(drifted_field, empty_measure, np.zeros(1), 1.0, 0.01, 2, 50)
    rep = check_conservation(u, triple, drifted_field, empty_measure, ens)
    assert rep.worst < 1e-12
    assert rep.n_paths == 50


def test_scalar_route_agrees_with_series_route(drifted_field, empty_measure):
    u = linear_candidate(0.5, 0.3)
    bare = SFICandidate(
        name="linear-scalar",
        value=u.value,
        grad=u.grad,
        hess=u.hess,
        uses_noise=True,
    )
    triple = sfi_triple(u, drifted_field, empty_measure)
    ens = simulate_ensemble(drifted_field, empty_measure, np.zeros(1), 0.5, 0.05, 2, 10)
    fast = check_conservation(u, triple, drifted_field, empty_measure, ens)
    slow = check_conservation(bare, triple, drifted_field, empty_measure, ens)
    np.testing.assert_array_equal(fast.max_residuals, slow.max_residuals)


def test_non_integral_is_flagged(drifted_field, empty_measure):
    # plain x drifts away at rate a0 = 0.5, nothing cancels it
    not_conserved = SFICandidate(
        name="state",
        value=lambda t, x, ctx: float(x[0]),
        grad=lambda t, x, ctx: np.array([1.0]),
        hess=lambda t, x, ctx: np.zeros((1, 1)),
    )
    triple = sfi_triple(not_conserved, drifted_field, empty_measure)
    ens = simulate_ensemble(drifted_field, empty_measure, np.zeros(1), 1.0, 0.01, 2, 20)
    rep = check_conservation(not_conserved, triple, drifted_field, empty_measure, ens)
    assert rep.worst > 0.1


def test_count_scaled_candidate_with_jumps():
    c = 0.5
    field = multiplicative_field(c)
    mm = MarkMeasure([(c, 1.0)])
    u = SFICandidate(
        name="scaled-by-count",
        value=lambda t, x, ctx: float(x[0]) * (1.0 + c) ** (-ctx.total_count),
        uses_noise=True,
        series=lambda path: path.states[:, 0]
        * (1.0 + c) ** (-path.event_counts().sum(axis=1).astype(float)),
    )
    triple = sfi_triple(u, field, mm)
    ens = simulate_ensemble(field, mm, np.ones(1), 1.0, 0.01, 3, 100)
    rep = check_conservation(u, triple, field, mm, ens)
    assert rep.worst == 0.0
    assert ens.jump_counts.sum() > 0


def test_chain_rule_residual_included(drifted_field, empty_measure):
    u = linear_candidate(0.5, 0.3)
    triple = sfi_triple(u, drifted_field, empty_measure)
    ens = simulate_ensemble(drifted_field, empty_measure, np.zeros(1), 0.5, 0.05, 2, 5)
    rep = check_conservation(u, triple, drifted_field, empty_measure, ens, include_chain_rule=True)
    assert rep.chain_rule_residuals is not None
    # the triple cancels the composed increment step by step
    assert np.max(rep.chain_rule_residuals) < 1e-12


def test_conservation_requires_full_paths(drifted_field, empty_measure):
    u = linear_candidate(0.5, 0.3)
    triple = sfi_triple(u, drifted_field, empty_measure)
    ens = simulate_ensemble(
        drifted_field, empty_measure, np.zeros(1), 0.5, 0.05, 2, 5, keep_paths=False
    )
    with pytest.raises(ValueError):
        check_conservation(u, triple, drifted_field, empty_measure, ens)
