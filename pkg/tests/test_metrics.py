import math

import numpy as np
import pytest

from noma_v2x import scheduler as S
from noma_v2x.channel import ChannelState, RadioConfig, count_decoded, decode_success
from noma_v2x.config import preset
from noma_v2x.metrics import (latency_required_rate, latency_satisfaction_ratio, mean_ci,
                              packet_reception_probability, rotation_count_cdf, simulate_period)
from noma_v2x.scenario import ScenarioConfig, generate_urban_grid
from noma_v2x.schedule import Schedule

from conftest import line_scenario


def test_latency_rates():
    assert latency_required_rate(2400, 1e-3, 2e6, 0.15) == pytest.approx(1.41176, rel=1e-5)
    assert f"{latency_required_rate(2400, 1e-3, 2e6, 0.15):.3g}" == "1.41"
    assert latency_required_rate(2400, 1e-3, 1e6) == pytest.approx(2.4)
    assert latency_required_rate(2400, 1e-3, 2e6, 0.0) == pytest.approx(1.2)
    cfg = preset("standard")
    assert cfg.required_rate(S.MCD) == pytest.approx(2400 / (0.85 * 1e-3 * 2e6))
    assert cfg.required_rate(S.OMA) == pytest.approx(2.4)
    with pytest.raises(ValueError):
        latency_required_rate(2400, 1e-3, 2e6, 1.0)


def _lone_tx(power):
    scen = line_scenario([0.0, 100.0, 140.0, 400.0], n_slots=1)
    radio = RadioConfig()
    state = ChannelState.draw(scen, radio, 1, np.random.default_rng(0))
    flat = ChannelState(state.gain, np.ones_like(state.fading), state.noise_power)
    s = Schedule("t", 4, 1, 1, {0: (1,)}, {(1, 0): (1,)}, {(1, 0, 1): power})
    return scen, flat, s


def test_all_deliveries_succeed():
    scen, state, s = _lone_tx(0.2)
    out = simulate_period(s, scen, state, 2.0, 1.41)
    assert out.intended == 2                # users 1 and 2 in range, 3 is not
    assert packet_reception_probability(out) == 1.0
    assert latency_satisfaction_ratio(out) == 1.0
    assert count_decoded(out) == 2


def test_empty_schedule_is_absent():
    scen, state, _ = _lone_tx(0.2)
    out = simulate_period(Schedule("t", 4, 1, 1, {}, {}), scen, state, 2.0, 1.41)
    assert packet_reception_probability(out) is None
    assert latency_satisfaction_ratio(out) is None
    assert count_decoded(out) == 0


def test_threshold_dominance_and_low_threshold():
    scen, state, s = _lone_tx(1e-9)          # far too weak for 1.41
    rho = state.rho(1, 1)
    rates = [math.log2(1 + 1e-9 * rho[0, m]) for m in (1, 2)]
    R = min(rates) / 2
    out = simulate_period(s, scen, state, R, 1.41)
    assert out.decoded_deliveries() == 2
    assert latency_satisfaction_ratio(out) == sum(r >= 1.41 for r in rates) / 2
    out2 = simulate_period(s, scen, state, 1.5, 1.41)
    assert latency_satisfaction_ratio(out2) in (None, 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_prp_equals_per_link_recount(seed):
    rng = np.random.default_rng(seed)
    scen = generate_urban_grid(ScenarioConfig(n_users=25, n_slots=10), rng)
    radio = RadioConfig()
    cfg = S.SchedulerConfig()
    sched = S.noma_gga(scen, radio, cfg).schedule
    powers = {(i, j, k): float(rng.uniform(0.01, radio.max_power))
              for (i, j), ks in sched.channels.items() for k in ks}
    sched = sched.with_powers(powers)
    state = ChannelState.draw(scen, radio, cfg.n_channels, rng)
    R, need = 2.0, 1.41
    out = simulate_period(sched, scen, state, R, need)
    intended = timely = decoded_links = 0
    for i in range(1, scen.n_slots + 1):
        txs = sched.transmitters(i)
        d = scen.distances(i)
        for j in txs:
            for m in range(scen.n_users):
                if m == j or m in txs or d[j, m] > 150.0:
                    continue
                intended += 1
                best = None
                for k in sched.channels_of(j, i):
                    co = [t for t in sched.co_channel(i, k) if d[t, m] <= 150.0]
                    p = {t: powers[(i, t, k)] for t in co}
                    g = {t: state.rho(i, k)[t, m] for t in co}
                    if decode_success(j, p, g, R):
                        decoded_links += 1
                        weaker = [t for t in co if (g[t], -t) < (g[j], -j)]
                        rate = math.log2(1 + p[j] * g[j] / (1 + sum(p[t] * g[t] for t in weaker)))
                        best = rate if best is None else max(best, rate)
                timely += best is not None and best >= need
    assert out.intended == intended
    assert packet_reception_probability(out) == pytest.approx(timely / intended)
    assert count_decoded(out) == decoded_links


def test_rotation_cdf():
    values, cdf = rotation_count_cdf([3])
    assert list(values) == [3] and list(cdf) == [1.0]
    values, cdf = rotation_count_cdf([5, 1, 5, 2])
    assert list(values) == [1, 2, 5] and list(cdf) == [0.25, 0.5, 1.0]
    with pytest.raises(ValueError):
        rotation_count_cdf([])


def test_mean_ci():
    mean, half, n = mean_ci([1.0, 2.0, 3.0])
    assert (mean, n) == (2.0, 3)
    assert half == pytest.approx(4.302652729911275 * 1.0 / math.sqrt(3))
    assert mean_ci([None, 0.5])[:1] == (0.5,) and math.isnan(mean_ci([0.5])[1])
