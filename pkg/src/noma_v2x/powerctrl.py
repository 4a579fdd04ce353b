"""Control portion of a slot: Tx/Rx block exchange and per-Tx minimum power.

Rates are noise-normalised as in :mod:`noma_v2x.channel`; a feedback row
carries the receiver's measured SNR-per-watt of the Tx link alongside the
interference item, which is what the Tx needs to invert the rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class PowerConfig:
    w: float = 0.9
    p0_fraction: float = 0.5
    t_c: int = 3
    tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.w <= 1:
            raise ValueError("w must lie in (0, 1]")
        if not 0 < self.p0_fraction <= 1:
            raise ValueError("p0 must lie in (0, P]")
        if self.t_c < 1 or self.tol <= 0:
            raise ValueError("t_c must be >= 1 and tol > 0")


@dataclass(frozen=True)
class FeedbackRow:
    rx: int
    tx: int
    channel: int
    interference: float  # sum of p * rho over weaker co-channel signals
    gain: float          # rho of the tx -> rx link

    def __post_init__(self):
        if self.interference < 0:
            raise ValueError("interference item must be non-negative")


@dataclass
class FeedbackMatrix:
    rows: list[FeedbackRow] = field(default_factory=list)

    def add(self, row: FeedbackRow):
        self.rows.append(row)

    def for_tx(self, j: int, k: int) -> list[FeedbackRow]:
        return [row for row in self.rows if row.tx == j and row.channel == k]

    def grouped(self) -> dict[tuple[int, int], list[FeedbackRow]]:
        out: dict[tuple[int, int], list[FeedbackRow]] = {}
        for row in self.rows:
            out.setdefault((row.tx, row.channel), []).append(row)
        return out

    def __len__(self):
        return len(self.rows)


def threshold_powers(rows: Sequence[FeedbackRow], rate_threshold: float) -> np.ndarray:
    """Per-receiver power at which the link rate reaches the threshold exactly."""
    snr = 2.0 ** rate_threshold - 1.0
    return np.array([snr * (1.0 + r.interference) / r.gain if r.gain > 0 else np.inf for r in rows])


def required_count(w: float, n: int) -> int:
    return max(1, math.ceil(w * n - 1e-9))


def satisfied_count(p: float, rows: Sequence[FeedbackRow], rate_threshold: float) -> int:
    """Receivers in ``rows`` whose rate at power ``p`` clears the threshold."""
    if p < 0:
        return 0
    return sum(1 for r in rows if math.log2(1.0 + p * r.gain / (1.0 + r.interference)) >= rate_threshold)


def solve_power(rows: Sequence[FeedbackRow], w: float, rate_threshold: float, p_max: float,
                tol: float = 1e-6) -> tuple[float, bool]:
    """Bisection for the smallest power meeting the decode fraction ``w``.

    Returns ``(power, satisfied)``; when even ``p_max`` falls short the
    answer is ``(p_max, False)``.
    """
    if not rows:
        raise ValueError("empty feedback set")
    need = required_count(w, len(rows))
    if satisfied_count(p_max, rows, rate_threshold) < need:
        return p_max, False
    lo, hi = 0.0, p_max
    if satisfied_count(lo, rows, rate_threshold) >= need:
        return 0.0, True
    while hi - lo > tol * p_max:
        mid = 0.5 * (lo + hi)
        if satisfied_count(mid, rows, rate_threshold) >= need:
            hi = mid
        else:
            lo = mid
    return hi, True


def closed_form_power(rows: Sequence[FeedbackRow], w: float, rate_threshold: float, p_max: float) -> tuple[float, bool]:
    """Order-statistic answer: the ``ceil(w|B|)``-th smallest threshold power."""
    thr = np.sort(threshold_powers(rows, rate_threshold))
    p = float(thr[required_count(w, len(rows)) - 1])
    return (p, True) if p <= p_max else (p_max, False)


def decode_eligibility(j: int, powers: Mapping[int, float], rho: Mapping[int, float], rate_threshold: float) -> bool:
    """Whether an Rx reports on Tx ``j``.

    Either it expects to decode ``j`` itself, or it expects to decode every
    co-channel signal ranked strictly above ``j`` in its SIC order.
    """
    order = sorted(powers, key=lambda t: (-rho[t], t))
    pos = order.index(j)
    rx = [powers[t] * rho[t] for t in order]
    rates = [math.log2(1.0 + rx[a] / (1.0 + sum(rx[a + 1:]))) for a in range(len(order))]
    if all(rate >= rate_threshold for rate in rates[: pos + 1]):
        return True
    return all(rate >= rate_threshold for rate in rates[:pos])


@dataclass
class PowerResult:
    powers: dict[tuple[int, int], float]
    trajectory: list[dict[tuple[int, int], float]]
    unsatisfied: set[tuple[int, int]]
    feedback: list[FeedbackMatrix]


def rx_block(txs_on: Mapping[int, Sequence[int]], powers: Mapping[tuple[int, int], float],
             rho_of, in_range: np.ndarray, receivers: Iterable[int], rate_threshold: float) -> FeedbackMatrix:
    """Every receiver evaluates the announced powers and fills its rows of F.

    ``rho_of(k)`` returns the full-CSI (N, N) SNR-per-watt matrix of channel ``k``.
    """
    F = FeedbackMatrix()
    receivers = list(receivers)
    for k, txs in txs_on.items():
        if not txs:
            continue
        rho = rho_of(k)
        txs = np.asarray(txs)
        for m in receivers:
            near = txs[in_range[txs, m]]
            if near.size == 0:
                continue
            g = {int(j): float(rho[j, m]) for j in near}
            p = {int(j): powers[(int(j), k)] for j in near}
            order = sorted(p, key=lambda t: (-g[t], t))
            for a, j in enumerate(order):
                if decode_eligibility(j, p, g, rate_threshold):
                    interference = sum(p[t] * g[t] for t in order[a + 1:])
                    F.add(FeedbackRow(m, j, k, interference, g[j]))
    return F


def run_control_portion(i: int, channels: Mapping[int, Sequence[int]], state, scenario, radio,
                        config: PowerConfig, r: float | None = None) -> PowerResult:
    """Simulate the ``T_c`` Tx/Rx block pairs of slot ``i``.

    ``channels[j]`` are the sub-channels of Tx ``j``; ``state`` is the
    :class:`~noma_v2x.channel.ChannelState` of the period (receivers measure
    full CSI). Interference items stay frozen between blocks.
    """
    r = scenario.config.comm_range if r is None else r
    P = radio.max_power
    keys = [(j, k) for j in sorted(channels) for k in sorted(channels[j])]
    txs_on: dict[int, list[int]] = {}
    for j, k in keys:
        txs_on.setdefault(k, []).append(j)
    d = scenario.distances(i)
    in_range = (d <= r) & ~np.eye(scenario.n_users, dtype=bool)
    tx_set = set(channels)
    receivers = [m for m in range(scenario.n_users) if m not in tx_set]

    powers = {key: config.p0_fraction * P for key in keys}
    trajectory = [dict(powers)]
    unsatisfied: set = set()
    history: list[FeedbackMatrix] = []
    for t in range(1, config.t_c + 1):
        if t > 1:
            rows = history[-1].grouped()
            new = dict(powers)
            unsatisfied = set()
            for key in keys:
                if key in rows:
                    p, ok = solve_power(rows[key], config.w, radio.rate_threshold, P, config.tol)
                    new[key] = p
                    if not ok:
                        unsatisfied.add(key)
            powers = new
            trajectory.append(dict(powers))
        history.append(rx_block(txs_on, powers, lambda k: state.rho(i, k), in_range, receivers,
                                radio.rate_threshold))
    return PowerResult(powers, trajectory, unsatisfied, history)
