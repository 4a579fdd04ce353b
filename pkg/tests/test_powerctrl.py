import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noma_v2x.channel import ChannelState, RadioConfig
from noma_v2x.powerctrl import (FeedbackRow, PowerConfig, closed_form_power, decode_eligibility, required_count,
                                run_control_portion, satisfied_count, solve_power, threshold_powers)
from noma_v2x.verification import random_feedback

from conftest import line_scenario


def rows_with_thresholds(*powers, R=1.0):
    # gain chosen so the threshold power of each row is exactly the given value
    return [FeedbackRow(m, 0, 1, 0.0, (2 ** R - 1) / p) for m, p in enumerate(powers)]


def test_single_receiver_inversion():
    rows = [FeedbackRow(0, 0, 1, 0.0, 1.0)]
    p, ok = solve_power(rows, 1.0, 1.0, 10.0, 1e-9)
    assert ok and p == pytest.approx(1.0, abs=1e-8)
    p_small_w, _ = solve_power(rows, 1e-6, 1.0, 10.0, 1e-9)
    assert p_small_w == pytest.approx(1.0, abs=1e-8)
    assert required_count(1e-6, 1) == 1


def test_order_statistic_examples():
    rows = rows_with_thresholds(0.5, 2.0)
    assert threshold_powers(rows, 1.0) == pytest.approx([0.5, 2.0])
    assert solve_power(rows, 0.5, 1.0, 10.0, 1e-9)[0] == pytest.approx(0.5, abs=1e-8)
    assert solve_power(rows, 1.0, 1.0, 10.0, 1e-9)[0] == pytest.approx(2.0, abs=1e-8)


def test_infeasible_returns_full_power_flagged():
    rows = rows_with_thresholds(5.0)
    assert solve_power(rows, 1.0, 1.0, 1.0) == (1.0, False)
    assert closed_form_power(rows, 1.0, 1.0, 1.0) == (1.0, False)


def test_empty_feedback_rejected():
    with pytest.raises(ValueError):
        solve_power([], 0.9, 2.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0), st.floats(0.2, 3.0))
def test_bisection_matches_closed_form_and_is_minimal(seed, w, R):
    P = 0.2
    rows = random_feedback(np.random.default_rng(seed), P)
    p, ok = solve_power(rows, w, R, P, 1e-6)
    pc, okc = closed_form_power(rows, w, R, P)
    assert ok == okc
    assert abs(p - pc) <= 1e-6 * P
    assert 0.0 <= p <= P
    need = required_count(w, len(rows))
    if ok:
        assert satisfied_count(p, rows, R) >= need
        if p > 0:
            assert satisfied_count(p - 1e-5 * P, rows, R) < need


def test_decode_eligibility_branches():
    assert decode_eligibility(0, {0: 10.0}, {0: 1.0}, 2.0)
    # stronger Tx 0 fails, so the weaker Tx 1 gets no row
    assert not decode_eligibility(1, {0: 1.0, 1: 1.0}, {0: 2.0, 1: 1.0}, 2.0)
    # strong decodes, weak is marginal: row added through the second branch
    powers, rho = {0: 1.0, 1: 1.0}, {0: 20.0, 1: 2.0}
    assert decode_eligibility(0, powers, rho, 2.0)
    assert decode_eligibility(1, powers, rho, 2.0)


def _state(scen, n_channels=2, radio=RadioConfig()):
    return ChannelState.draw(scen, radio, n_channels, np.random.default_rng(0))


def test_single_tx_settles_after_one_round():
    scen = line_scenario([0.0, 60.0, 120.0, 140.0], n_slots=2)
    radio = RadioConfig()
    res = run_control_portion(1, {0: [1]}, _state(scen), scen, radio, PowerConfig(t_c=4, w=1.0))
    traj = [t[(0, 1)] for t in res.trajectory]
    assert traj[0] == pytest.approx(radio.max_power / 2)
    assert traj[1] <= traj[0]
    assert traj[1] == traj[2] == traj[3]
    assert not res.unsatisfied


def test_one_block_keeps_initial_power():
    scen = line_scenario([0.0, 60.0, 100.0, 160.0], n_slots=2)
    radio = RadioConfig()
    res = run_control_portion(1, {0: [1], 3: [1]}, _state(scen), scen, radio, PowerConfig(t_c=1))
    assert res.powers == {(0, 1): radio.max_power / 2, (3, 1): radio.max_power / 2}


def test_symmetric_pair_gets_symmetric_powers():
    scen = line_scenario([-200.0, 0.0, 200.0], n_slots=1)
    radio = RadioConfig()
    st_ = _state(scen)
    flat = ChannelState(st_.gain, np.ones_like(st_.fading), st_.noise_power)
    res = run_control_portion(1, {0: [1], 2: [1]}, flat, scen, radio, PowerConfig())
    assert res.powers[(0, 1)] == pytest.approx(res.powers[(2, 1)], rel=1e-12)


def test_tx_without_receivers_keeps_p0():
    scen = line_scenario([0.0, 1000.0], n_slots=1)
    radio = RadioConfig()
    res = run_control_portion(1, {0: [1]}, _state(scen), scen, radio, PowerConfig())
    assert res.powers[(0, 1)] == radio.max_power / 2


@pytest.mark.parametrize("bad", [dict(w=0.0), dict(w=1.5), dict(p0_fraction=0.0), dict(t_c=0)])
def test_config_invariants(bad):
    with pytest.raises(ValueError):
        PowerConfig(**bad)
