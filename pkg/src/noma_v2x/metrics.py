"""Truth-layer simulation of a period and the reported metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .channel import sic_rates


@dataclass(frozen=True)
class Link:
    slot: int
    channel: int
    rx: int
    tx: int
    rate: float
    decoded: bool


@dataclass
class PeriodOutcome:
    """Hard-decoding outcome of one period.

    ``deliveries`` maps every intended ``(slot, tx, rx)`` triple to the best
    rate among the Tx's channels that decoded at that Rx (``None`` if none did).
    """

    rate_threshold: float
    required_rate: float
    links: list[Link] = field(default_factory=list)
    deliveries: dict[tuple[int, int, int], float | None] = field(default_factory=dict)
    rotations_utsa: int | None = None
    rotations_rmsa: int | None = None
    unsatisfied: int | None = None

    @property
    def intended(self) -> int:
        return len(self.deliveries)

    def decoded_deliveries(self) -> int:
        return sum(1 for v in self.deliveries.values() if v is not None)

    def timely_deliveries(self) -> int:
        need = max(self.rate_threshold, self.required_rate)
        return sum(1 for v in self.deliveries.values() if v is not None and v >= need)


def simulate_period(schedule, scenario, state, rate_threshold: float, required_rate: float,
                    sic: bool = True, r: float | None = None) -> PeriodOutcome:
    """Decode every scheduled transmission under full CSI and the schedule's powers.

    Only co-channel Txs within range of a receiver reach it. With ``sic``
    off, every other co-channel signal is treated as noise.
    """
    r = scenario.config.comm_range if r is None else r
    out = PeriodOutcome(rate_threshold, required_rate)
    for i in range(1, schedule.n_slots + 1):
        txs = schedule.transmitters(i)
        if not txs:
            continue
        d = scenario.distances(i)
        tx_set = set(txs)
        for j in txs:
            for m in np.flatnonzero(d[j] <= r):
                if m != j and m not in tx_set:
                    out.deliveries[(i, j, int(m))] = None
        for k in range(1, schedule.n_channels + 1):
            co = np.array(schedule.co_channel(i, k), dtype=np.int64)
            if co.size == 0:
                continue
            rho = state.rho(i, k)
            p_all = np.array([schedule.power(j, k, i) for j in co])
            for m in range(scenario.n_users):
                if m in tx_set:
                    continue
                near = (d[co, m] <= r) & (co != m)
                if not near.any():
                    continue
                ids, p, g = co[near], p_all[near], rho[co[near], m]
                if sic:
                    order, rates = sic_rates(p, g, ids)
                    ok_prefix = np.cumprod(rates[order] >= rate_threshold).astype(bool)
                    decoded = np.empty(len(ids), dtype=bool)
                    decoded[order] = ok_prefix
                else:
                    rx = p * g
                    rates = np.log2(1.0 + rx / (1.0 + rx.sum() - rx))
                    decoded = rates >= rate_threshold
                for a, j in enumerate(ids):
                    out.links.append(Link(i, k, m, int(j), float(rates[a]), bool(decoded[a])))
                    if decoded[a]:
                        key = (i, int(j), m)
                        prev = out.deliveries.get(key)
                        out.deliveries[key] = float(rates[a]) if prev is None else max(prev, float(rates[a]))
    return out


def packet_reception_probability(outcome: PeriodOutcome) -> float | None:
    """Timely decoded deliveries over intended deliveries."""
    if outcome.intended == 0:
        return None
    return outcome.timely_deliveries() / outcome.intended


def latency_satisfaction_ratio(outcome: PeriodOutcome) -> float | None:
    decoded = outcome.decoded_deliveries()
    if decoded == 0:
        return None
    return outcome.timely_deliveries() / decoded


def latency_required_rate(packet_bits: float, slot_duration: float, bandwidth: float,
                          control_fraction: float = 0.0) -> float:
    """Spectral efficiency needed to push one packet through the data portion of one slot."""
    if not 0 <= control_fraction < 1:
        raise ValueError("control fraction must lie in [0, 1)")
    return packet_bits / ((1.0 - control_fraction) * slot_duration * bandwidth)


def rotation_count_cdf(counts: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF: sorted distinct counts and ``Pr(Y <= y)`` at each."""
    counts = np.sort(np.asarray(list(counts), dtype=int))
    if counts.size == 0:
        raise ValueError("no rotation counts")
    values, idx = np.unique(counts, return_index=False, return_counts=True)
    return values, np.cumsum(idx) / counts.size


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, int]:
    """Mean and half-width of the Student-t confidence interval."""
    from scipy import stats

    x = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if x.size == 0:
        return math.nan, math.nan, 0
    if x.size == 1:
        return float(x[0]), math.nan, 1
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return float(x.mean()), half, int(x.size)
