import numpy as np
import pytest

from noma_v2x import scheduler as S
from noma_v2x.channel import RadioConfig
from noma_v2x.scenario import ScenarioConfig, generate_urban_grid
from noma_v2x.schedule import Schedule, ScheduleFormatError, check_constraints

CFG = S.SchedulerConfig()


@pytest.fixture(scope="module")
def exported():
    scen = generate_urban_grid(ScenarioConfig(n_users=30), np.random.default_rng(4))
    res = S.noma_mcd(scen, RadioConfig(), CFG, np.random.default_rng(1))
    return scen, res.schedule


def check(schedule, scen, **kw):
    args = dict(k_max=CFG.k_max, t_max=CFG.t_max, k_u=CFG.k_u) | kw
    return check_constraints(schedule, scen, **args)


def test_export_round_trip_is_clean(exported):
    scen, s = exported
    back = Schedule.from_csv(s.to_csv(), scen.n_users, scen.n_slots, CFG.n_channels)
    assert back.tx_slots == s.tx_slots and back.channels == s.channels
    assert check(back, scen).ok


def test_co_slot_forbidden_pair_is_reported(exported):
    scen, s = exported
    i = next(iter(s.tx_slots.values()))[0]
    j = s.transmitters(i)[0]
    partner = next(m for m in sorted(scen.neighbors(j, i)) if not scen.is_pedestrian[m])
    text = s.to_csv()
    old = f"{i},{partner},rx,,"
    assert old in text
    edited = text.replace(old, f"{i},{partner},tx,1,")
    back = Schedule.from_csv(edited, scen.n_users, scen.n_slots, CFG.n_channels)
    rep = check(back, scen)
    assert not rep.satisfied("half_duplex")
    a, b = sorted((j, partner))
    assert any(f"users {a} and {b}" in w for w in rep.violations["half_duplex"])
    assert not rep.satisfied("tx_slots")      # the partner now holds two slots


def test_over_capacity_edits(exported):
    scen, s = exported
    (i, j), _ = next(iter(s.channels.items()))
    wide = Schedule(s.scheme, s.n_users, s.n_slots, s.n_channels, s.tx_slots,
                    {**s.channels, (i, j): (1, 2, 3)})
    assert not check(wide, scen).satisfied("channel_cap")
    assert not check(s, scen, k_max=1).satisfied("channel_cap") or all(len(c) <= 1 for c in s.channels.values())


def test_overlap_cap_violation_witness():
    from conftest import line_scenario

    scen = line_scenario([100.0, 400.0, 250.0], n_slots=1)
    s = Schedule("t", 3, 1, 1, {0: (1,), 1: (1,)}, {(1, 0): (1,), (1, 1): (1,)})
    rep = check_constraints(s, scen, k_max=1, t_max=1, k_u=1)
    assert rep.violations["rx_overlap"] == ["slot 1 channel 1: rx 2 covered by [0, 1] > 1"]
    assert check_constraints(s, scen, k_max=1, t_max=1, k_u=2).satisfied("rx_overlap")


def test_index_errors_stop_the_check():
    from conftest import line_scenario

    scen = line_scenario([0.0, 500.0], n_slots=2)
    s = Schedule("t", 2, 2, 2, {0: (3,)}, {(3, 0): (1,)})
    rep = check_constraints(s, scen, 1, 1, 1)
    assert not rep.satisfied("indices")
    assert rep.satisfied("half_duplex") and rep.satisfied("tx_slots")


def test_pedestrians_never_transmit():
    from conftest import line_scenario

    scen = line_scenario([0.0, 500.0], n_slots=1, pedestrians=[1])
    s = Schedule("t", 2, 1, 1, {0: (1,), 1: (1,)}, {(1, 0): (1,), (1, 1): (1,)})
    assert not check_constraints(s, scen, 1, 1, 2).satisfied("tx_slots")
    silent_vehicle = Schedule("t", 2, 1, 1, {}, {})
    assert any("user 0" in w for w in check_constraints(silent_vehicle, scen, 1, 1, 2).violations["tx_slots"])


@pytest.mark.parametrize("text, line", [
    ("slot,user,role\n1,0,tx\n", 1),
    ("slot,user,role,channels\n1,0,tx,1\n1,x,tx,1\n", 3),
    ("slot,user,role,channels\n1,0,boss,1\n", 2),
    ("slot,user,role,channels,powers\n1,0,tx,1;2,0.1\n", 2),
])
def test_malformed_tables_name_the_line(text, line):
    with pytest.raises(ScheduleFormatError) as err:
        Schedule.from_csv(text, 2, 2, 2)
    assert err.value.line == line
