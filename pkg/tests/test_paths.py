import numpy as np
import pytest

from jumplab import (
    CoefficientField,
    MarkMeasure,
    simulate_ensemble,
    simulate_path,
)
from jumplab.errors import InvalidGrid, NumericalBlowup


def proportional_jump_field(c=0.5):
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


def test_grid_rounding_hits_t_final(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 1.0, 0.3, seed=0)
    # dt is rounded so the base grid divides T exactly
    assert path.n_steps == 3
    assert path.times[-1] == 1.0


def test_invalid_grid_rejected(heat_field, empty_measure):
    with pytest.raises(InvalidGrid):
        simulate_path(heat_field, empty_measure, np.zeros(1), 1.0, 0.0, seed=0)
    with pytest.raises(InvalidGrid):
        simulate_path(heat_field, empty_measure, np.zeros(1), 0.5, 0.7, seed=0)


def test_heat_endpoint_frozen(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 1.0, 0.01, seed=42)
    # pinned against the recorded substream draw for (42, 0)
    np.testing.assert_almost_equal(path.states[-1, 0], -1.0801730890931858, decimal=12)
    np.testing.assert_almost_equal(path.states[-1, 0], path.w()[-1, 0], decimal=15)


def test_wiener_increments_match_grid(heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.5, 0.05, seed=1)
    assert path.dw.shape == (10, 1)
    # b = 1, a = 0: the state is exactly the accumulated noise
    np.testing.assert_array_equal(path.states[1:, 0], np.cumsum(path.dw[:, 0]))


def test_same_path_index_independent_of_ensemble_size(heat_field, empty_measure):
    small = simulate_ensemble(heat_field, empty_measure, np.zeros(1), 0.5, 0.01, 9, 3)
    large = simulate_ensemble(heat_field, empty_measure, np.zeros(1), 0.5, 0.01, 9, 8)
    np.testing.assert_array_equal(small.finals, large.finals[:3])


def test_batch_route_matches_scalar_route(heat_field, empty_measure):
    ens = simulate_ensemble(heat_field, empty_measure, np.zeros(1), 0.5, 0.01, 9, 4)
    for p in range(4):
        path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.5, 0.01, 9, path_index=p)
        np.testing.assert_array_equal(ens.finals[p], path.states[-1])


def test_thread_count_does_not_change_results():
    field = proportional_jump_field()
    mm = MarkMeasure([(0.5, 1.0)])
    one = simulate_ensemble(field, mm, np.ones(1), 1.0, 0.1, 5, 6, threads=1)
    four = simulate_ensemble(field, mm, np.ones(1), 1.0, 0.1, 5, 6, threads=4)
    np.testing.assert_array_equal(one.finals, four.finals)
    np.testing.assert_array_equal(one.jump_counts, four.jump_counts)


def test_jump_times_become_grid_nodes():
    field = proportional_jump_field()
    mm = MarkMeasure([(0.5, 3.0)])
    path = simulate_path(field, mm, np.ones(1), 1.0, 0.25, seed=2)
    assert len(path.events) > 0
    for ev in path.events:
        assert path.times[ev.node] == ev.time
        # base node spacing is 0.25; event times are generic reals
        assert ev.time not in (0.0, 0.25, 0.5, 0.75, 1.0)


def test_jump_only_route_matches_generic_stepping():
    mm = MarkMeasure([(0.5, 2.0)])
    fast = proportional_jump_field()
    slow = CoefficientField(
        n=1,
        m=1,
        drift=fast.drift,
        diffusion=fast.diffusion,
        jump=fast.jump,
        jump_jac=fast.jump_jac,
        elementwise=True,
    )
    for p in range(5):
        pf = simulate_path(fast, mm, np.ones(1), 1.0, 0.1, 11, path_index=p)
        ps = simulate_path(slow, mm, np.ones(1), 1.0, 0.1, 11, path_index=p)
        np.testing.assert_array_equal(pf.states, ps.states)
        assert len(pf.events) == len(ps.events)


def test_jump_only_rejects_nonzero_drift():
    bad = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: np.ones_like(x),
        diffusion=lambda t, x: np.zeros(np.shape(x) + (1,)),
        jump=lambda t, x, gamma: gamma[0] * x,
        jump_only=True,
    )
    mm = MarkMeasure([(0.5, 1.0)])
    with pytest.raises(ValueError):
        simulate_path(bad, mm, np.ones(1), 1.0, 0.1, seed=0)


def test_multiplicative_jump_state_product():
    field = proportional_jump_field(c=0.5)
    mm = MarkMeasure([(0.5, 2.0)])
    path = simulate_path(field, mm, np.ones(1), 1.0, 0.05, seed=8)
    n_events = len(path.events)
    np.testing.assert_almost_equal(path.states[-1, 0], 1.5**n_events, decimal=12)


def test_event_counts_and_context():
    field = proportional_jump_field()
    mm = MarkMeasure([(0.5, 2.0), (0.25, 1.0)])
    path = simulate_path(field, mm, np.ones(1), 1.0, 0.1, seed=4)
    counts = path.event_counts()
    assert counts.shape == (len(path.times), 2)
    assert counts[-1].sum() == len(path.events)
    ctx = path.noise_context(len(path.times) - 1)
    assert ctx.total_count == len(path.events)
    if path.events:
        ev = path.events[0]
        pre = path.noise_context(ev.node, pre_jump=True)
        post = path.noise_context(ev.node)
        assert post.total_count - pre.total_count == 1


@pytest.mark.filterwarnings("ignore:overflow")
def test_nonfinite_state_raises():
    explosive = CoefficientField(
        n=1,
        m=1,
        drift=lambda t, x: x**3,
        diffusion=lambda t, x: np.zeros(np.shape(x) + (1,)),
        elementwise=True,
    )
    with pytest.raises(NumericalBlowup):
        simulate_path(explosive, MarkMeasure(), np.full(1, 10.0), 2.0, 0.05, seed=0)


def test_path_csv_roundtrip(tmp_path, heat_field, empty_measure):
    path = simulate_path(heat_field, empty_measure, np.zeros(1), 0.2, 0.05, seed=3)
    f = tmp_path / "p.csv"
    path.to_csv(f)
    rows = f.read_text().strip().splitlines()
    assert rows[0] == "t,x_1,jump_flag,mark_index"
    assert len(rows) == len(path.times) + 1
    back = np.array([float(r.split(",")[1]) for r in rows[1:]])
    np.testing.assert_array_equal(back, path.states[:, 0])
