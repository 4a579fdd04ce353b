import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noma_v2x.scenario import (KMH, LITERAL, Scenario, ScenarioConfig, ScenarioError, _lane_gaps,
                               generate_urban_grid)

from conftest import line_scenario


def test_single_vehicle_has_no_neighbors():
    scen = generate_urban_grid(ScenarioConfig(n_users=1, pedestrian_fraction=0.0), np.random.default_rng(0))
    assert scen.n_users == 1
    for r in (1.0, 150.0, 1e6):
        assert scen.neighbors(0, 1, r) == set()


def test_mean_gap_follows_spacing_rule():
    cfg = ScenarioConfig(speed=15.0)
    assert cfg.mean_gap == pytest.approx(37.5)
    gaps = _lane_gaps(np.random.default_rng(1), 200_000, cfg.mean_gap, cfg.min_gap)
    assert gaps.min() >= cfg.min_gap
    assert gaps.mean() == pytest.approx(37.5, rel=0.01)


def test_same_seed_gives_identical_snapshot():
    cfg = ScenarioConfig(n_users=40, seed=7)
    a = generate_urban_grid(cfg)
    b = generate_urban_grid(cfg)
    assert a.to_csv() == b.to_csv()
    assert generate_urban_grid(cfg.replace(seed=8)).to_csv() != a.to_csv()


def test_static_pair_distance_modes():
    scen = line_scenario([0.0, 50.0], [3.0, 3.0])
    for i in range(1, 5):
        assert scen.predict_distance(0, 1, i) == pytest.approx(50.0)
        assert scen.predict_distance(0, 1, i, mode=LITERAL) == 0.0


def test_head_on_closing():
    scen = line_scenario([0.0, 100.0], [5.0, -5.0], n_slots=40)
    assert scen.predict_distance(0, 1, 40) == pytest.approx(99.6, abs=1e-9)


def test_literal_mode_rejects_coincident_users():
    scen = line_scenario([10.0, 10.0])
    with pytest.raises(ZeroDivisionError):
        scen.predict_distance(0, 1, 1, mode=LITERAL)


def test_range_boundary_is_inclusive():
    scen = line_scenario([0.0, 150.0])
    assert scen.neighbors(0, 1) == {1}
    assert scen.neighbors(1, 1) == {0}


@pytest.mark.parametrize("xs, counts", [
    ([0.0, 100.0, 240.0], [1, 2, 1]),
    ([0.0, 100.0, 260.0], [1, 1, 0]),   # 160 m between the last two exceeds r
])
def test_collinear_neighbor_counts(xs, counts):
    scen = line_scenario(xs)
    assert [len(scen.neighbors(m, 1)) for m in range(3)] == counts


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 60))
def test_neighbors_symmetric_and_distances_kinematic(seed, n):
    scen = generate_urban_grid(ScenarioConfig(n_users=n, n_slots=5), np.random.default_rng(seed))
    for i in range(1, 6):
        adj = scen.neighbor_matrix(i)
        assert (adj == adj.T).all()
        pos = scen.positions_at(i)
        for j, m in [(0, n - 1), (n // 2, 0)]:
            if j != m:
                direct = float(np.linalg.norm(pos[m] - pos[j]))
                assert abs(scen.predict_distance(j, m, i) - direct) < 1e-9
                assert abs(scen.distances(i)[j, m] - direct) < 1e-9


def test_roles_and_speeds():
    scen = generate_urban_grid(ScenarioConfig(n_users=50, speed=45 * KMH), np.random.default_rng(3))
    speed = np.linalg.norm(scen.velocities, axis=1)
    assert scen.is_pedestrian.sum() == 5
    assert (speed[scen.is_pedestrian] <= 3.0).all()
    assert np.allclose(speed[~scen.is_pedestrian], 45 * KMH)


def test_overcrowded_grid_names_the_binding_constraint():
    with pytest.raises(ScenarioError, match="lane length"):
        generate_urban_grid(ScenarioConfig(n_users=400, speed=60 * KMH), np.random.default_rng(0))


def test_snapshot_table_round_trip():
    scen = generate_urban_grid(ScenarioConfig(n_users=30), np.random.default_rng(5))
    back = Scenario.from_csv(scen.config, scen.to_csv())
    assert np.array_equal(back.positions, scen.positions)
    assert np.array_equal(back.velocities, scen.velocities)
    assert np.array_equal(back.is_pedestrian, scen.is_pedestrian)


@pytest.mark.parametrize("bad", [dict(n_users=0), dict(n_slots=0), dict(comm_range=0.0), dict(spacing_time=0.0)])
def test_config_invariants(bad):
    with pytest.raises(ScenarioError):
        ScenarioConfig(**bad)
