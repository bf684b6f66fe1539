import numpy as np
import pytest

from jumplab import (
    CoefficientField,
    GridDensity,
    MarkMeasure,
    PROBE_CHANNEL,
    TestFunctionSet,
    check_density_invariant,
    check_normalization,
    evolve_density_field,
    evolve_jacobian,
    flow_ensemble_from_path,
    mean_density_over_noises,
    sample_from_density,
    simulate_path,
    substream,
)
from jumplab.density import apply_density_jump, check_grid_stability, spde_step
from jumplab.errors import ContextMismatch, StabilityBoundViolated, SupportOverflow


def multiplicative_jump_field(c=0.5):
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


def test_stability_guard_diffusive(heat_field, empty_measure):
    nodes = np.linspace(-1.0, 1.0, 21)
    with pytest.raises(StabilityBoundViolated):
        check_grid_stability(heat_field, empty_measure, nodes, 0.1, dt=0.1, t_final=1.0)
    # dt below dx^2 / (2 b^2) passes
    check_grid_stability(heat_field, empty_measure, nodes, 0.1, dt=0.004, t_final=1.0)


def test_stability_guard_jump_rate(heat_field):
    # dt * rate = 1.2 trips the jump bound while dt = 0.004 < dx^2/2 keeps diffusion legal
    mm = MarkMeasure([(0.5, 300.0)])
    nodes = np.linspace(-1.0, 1.0, 21)
    with pytest.raises(StabilityBoundViolated):
        check_grid_stability(heat_field, mm, nodes, 0.1, dt=0.004, t_final=1.0)


def test_spde_step_batch_matches_rows(heat_field):
    gen = np.random.default_rng(1)
    nx = 40
    rho = gen.uniform(size=(3, nx))
    a = np.zeros(nx)
    b = np.ones((nx, 1))
    bb = np.ones(nx)
    dw = gen.normal(size=(3, 1)) * 0.01
    batch = spde_step(rho, 1e-4, dw, a, b, bb, 0.05)
    for r in range(3):
        single = spde_step(rho[r], 1e-4, dw[r], a, b, bb, 0.05)
        np.testing.assert_array_equal(batch[r], single)


def test_apply_density_jump_translation():
    nodes = np.linspace(0.0, 10.0, 101)
    rho = np.exp(-0.5 * (nodes - 3.0) ** 2)
    shifted = apply_density_jump(rho, nodes, nodes - 2.0, np.ones_like(nodes))
    # lattice-aligned shift is exact
    np.testing.assert_allclose(shifted[20:], rho[:81], atol=1e-14)
    np.testing.assert_allclose(shifted[:20], 0.0, atol=1e-14)


def test_heat_pushforward_tracks_shifted_profile(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, seed=4)
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.5)
    dens = evolve_density_field(heat_field, empty_measure, path, rho0)
    w = path.w()[-1, 0]
    oracle = np.exp(-0.5 * ((dens.final.x - w) / 0.5) ** 2) / (0.5 * np.sqrt(2 * np.pi))
    assert np.abs(dens.final.values - oracle).max() < 0.01
    assert np.abs(dens.mass - 1.0).max() < 1e-6


def test_pushforward_support_overflow(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.5, 1e-3, seed=4)
    wide = GridDensity.gaussian(-1.0, 1.0, 0.05, center=0.0, sigma=0.4)
    with pytest.raises(SupportOverflow):
        evolve_density_field(heat_field, empty_measure, path, wide)


def test_snapshots_and_rho_at_path(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, seed=4)
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.5)
    dens = evolve_density_field(
        heat_field, empty_measure, path, rho0, snapshot_times=(0.0, 0.025)
    )
    snap0 = dens.snapshot_at(0.0)
    np.testing.assert_array_equal(snap0.values, rho0.values)
    with pytest.raises(KeyError):
        dens.snapshot_at(0.017)
    assert dens.rho_at_path.shape == (len(path.times),)
    np.testing.assert_almost_equal(dens.rho_at_path[0], rho0.interp(0.0), decimal=12)


def test_invariant_along_jump_path():
    field = multiplicative_jump_field()
    mm = MarkMeasure([(0.5, 1.0)])
    path = simulate_path(field, mm, np.ones(1), 2.0, 0.1, seed=1)
    assert len(path.events) == 3
    rho0 = GridDensity.gaussian(-4.0, 12.0, 0.01, center=1.0, sigma=0.2)
    dens = evolve_density_field(field, mm, path, rho0)
    jac = evolve_jacobian(field, mm, path)
    np.testing.assert_almost_equal(jac.final, 1.5**3, decimal=12)
    inv = check_density_invariant(jac, dens)
    assert inv.max_rel_deviation < 1e-3
    np.testing.assert_almost_equal(inv.reference, rho0.interp(1.0), decimal=12)
    # the raw density at the path decays with each jump while the product holds
    assert dens.rho_at_path[-1] < dens.rho_at_path[0]


def test_invariant_rejects_foreign_grid(heat_field, empty_measure):
    p1 = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, seed=4)
    p2 = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 2e-3, seed=4)
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.5)
    dens = evolve_density_field(heat_field, empty_measure, p1, rho0)
    jac_other = evolve_jacobian(heat_field, empty_measure, p2)
    with pytest.raises(ContextMismatch):
        check_density_invariant(jac_other, dens)


def test_weak_check_against_common_noise_flow(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, seed=4)
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.5)
    dens = evolve_density_field(heat_field, empty_measure, path, rho0)
    gen = substream(4, 0, PROBE_CHANNEL)
    y0s = sample_from_density(rho0, 3000, gen)
    ens = flow_ensemble_from_path(heat_field, empty_measure, path, y0s)
    rep = check_normalization(dens, TestFunctionSet.moments(), ens)
    assert rep.passed
    assert rep.mass_error < 1e-6
    names = [row["name"] for row in rep.rows]
    assert names == ["one", "x", "x_squared"]


def test_weak_check_rejects_independent_ensemble(heat_field, empty_measure):
    from jumplab import simulate_ensemble

    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, seed=4)
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.5)
    dens = evolve_density_field(heat_field, empty_measure, path, rho0)
    foreign = simulate_ensemble(heat_field, empty_measure, np.zeros(1), 0.05, 1e-3, 4, 10)
    with pytest.raises(ContextMismatch):
        check_normalization(dens, TestFunctionSet.moments(), foreign)


def test_flow_ensemble_shares_driving_noise(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.1, 1e-2, seed=2)
    y0s = np.array([-0.5, 0.0, 0.5])
    ens = flow_ensemble_from_path(heat_field, empty_measure, path, y0s)
    assert ens.driving is path
    # b = 1, a = 0: every point translates by the same accumulated noise
    w = path.w()[-1, 0]
    np.testing.assert_allclose(ens.finals[:, 0], y0s + w, atol=1e-12)


def test_mean_density_routes_agree(heat_field, empty_measure):
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.6)
    fast = mean_density_over_noises(heat_field, empty_measure, rho0, 0.05, 1e-3, 6, seed=3)
    scalar_field = CoefficientField(
        n=1,
        m=1,
        drift=heat_field.drift,
        diffusion=heat_field.diffusion,
        drift_jac=heat_field.drift_jac,
        diffusion_jac=heat_field.diffusion_jac,
        diffusion_hess=heat_field.diffusion_hess,
        elementwise=False,
    )
    slow = mean_density_over_noises(scalar_field, empty_measure, rho0, 0.05, 1e-3, 6, seed=3)
    np.testing.assert_array_equal(fast.values, slow.values)


def test_mean_density_chunk_independent(heat_field, empty_measure):
    rho0 = GridDensity.gaussian(-4.0, 4.0, 0.05, center=0.0, sigma=0.6)
    a = mean_density_over_noises(heat_field, empty_measure, rho0, 0.05, 1e-3, 7, seed=3, chunk=256)
    b = mean_density_over_noises(heat_field, empty_measure, rho0, 0.05, 1e-3, 7, seed=3, chunk=2)
    np.testing.assert_array_equal(a.values, b.values)


def test_mean_density_approaches_heat_kernel(heat_field, empty_measure):
    # averaging over noises recovers plain diffusion of the initial profile
    rho0 = GridDensity.gaussian(-6.0, 6.0, 0.05, center=0.0, sigma=0.8)
    mean = mean_density_over_noises(heat_field, empty_measure, rho0, 0.2, 1e-3, 400, seed=5)
    var = 0.8**2 + 0.2
    oracle = np.exp(-0.5 * mean.x**2 / var) / np.sqrt(2 * np.pi * var)
    l1 = np.sum(np.abs(mean.values - oracle)) * mean.dx
    assert l1 < 0.08
