"""Path loss, SIC decoding order, achievable rates and decode probabilities.

All rate arithmetic is noise-normalised: ``rho = |H|^2 / sigma_n^2`` so the
signal-to-interference-plus-noise ratio of a link reads
``p * rho / (1 + sum(p' * rho'))``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)


def dbm_to_watt(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def umi_intercept_beta(carrier_hz: float) -> float:
    """Linear intercept of the 2 GHz-class UMi NLOS law ``22.7 + 26 log10(fc/GHz)`` dB."""
    return 10 ** (-(22.7 + 26 * math.log10(carrier_hz / 1e9)) / 10)


@dataclass(frozen=True)
class RadioConfig:
    tx_power_dbm: float = 23.0
    noise_psd_dbm_hz: float = -174.0
    subchannel_bandwidth: float = 2e6
    carrier: float = 2e9
    alpha: float = 3.67
    beta: float | None = None
    rate_threshold: float = 2.0
    eta: float = 4.0
    d_min: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.rate_threshold <= 0 or self.eta <= 0:
            raise ValueError("alpha, rate_threshold and eta must be positive")
        if self.subchannel_bandwidth <= 0:
            raise ValueError("subchannel bandwidth must be positive")

    @property
    def max_power(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watt(self.noise_psd_dbm_hz) * self.subchannel_bandwidth

    @property
    def pathloss_beta(self) -> float:
        return umi_intercept_beta(self.carrier) if self.beta is None else self.beta

    def replace(self, **changes) -> "RadioConfig":
        from dataclasses import replace

        return replace(self, **changes)


def pathloss(d, alpha: float, beta: float, d_min: float = 1.0):
    """``beta * d**-alpha``; distances below ``d_min`` (including 0) are clamped."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("negative distance")
    if np.any(d < d_min):
        log.warning("distance below %.3g m clamped to d_min", d_min)
        d = np.maximum(d, d_min)
    g = beta * d ** (-alpha)
    return float(g) if g.ndim == 0 else g


PathlossModel = Callable[[np.ndarray], np.ndarray]


def power_law(radio: RadioConfig) -> PathlossModel:
    beta = radio.pathloss_beta

    def model(d):
        return pathloss(d, radio.alpha, beta, radio.d_min)

    return model


# -- SIC ---------------------------------------------------------------------

def sic_order(txs: Mapping[int, float] | list[int], gains: Mapping[int, float]) -> list[int]:
    """Decoding order at one receiver: strongest channel gain first.

    Equal gains are resolved by ascending user id.
    """
    ids = list(txs)
    return sorted(ids, key=lambda j: (-gains[j], j))


def interferer_sets(order: list[int]) -> dict[int, set[int]]:
    """Users still undecoded (weaker) when each user in ``order`` is decoded."""
    return {j: set(order[pos + 1:]) for pos, j in enumerate(order)}


def sic_rates(powers: np.ndarray, rho: np.ndarray, ids: np.ndarray | None = None):
    """Post-cancellation rates of co-channel transmitters at one receiver.

    Returns ``(order, rates)`` where ``order`` indexes the inputs strongest
    first and ``rates[order[t]]`` is the rate of the t-th decoded signal.
    """
    powers = np.asarray(powers, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(powers < 0):
        raise ValueError("negative transmit power")
    ids = np.arange(len(powers)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, -rho))
    rx = powers[order] * rho[order]
    # interference seen by position t is everything decoded after it
    tail = np.concatenate((np.cumsum(rx[::-1])[::-1][1:], [0.0]))
    rates = np.empty_like(rx)
    rates[order] = np.log2(1.0 + rx / (1.0 + tail))
    return order, rates


def achievable_rate(j: int, powers: Mapping[int, float], rho: Mapping[int, float]) -> float:
    """Rate of ``j`` at a receiver after cancelling every stronger signal."""
    if any(p < 0 for p in powers.values()):
        raise ValueError("negative transmit power")
    order = sic_order(powers, rho)
    weaker = interferer_sets(order)[j]
    interference = sum(powers[k] * rho[k] for k in weaker)
    return math.log2(1.0 + powers[j] * rho[j] / (1.0 + interference))


def decode_success(j: int, powers: Mapping[int, float], rho: Mapping[int, float], rate_threshold: float) -> bool:
    """Both SIC criteria: every signal decoded up to and including ``j`` clears the threshold."""
    order = sic_order(powers, rho)
    for k in order:
        if achievable_rate(k, powers, rho) < rate_threshold:
            return False
        if k == j:
            return True
    raise KeyError(j)


def logistic(x, eta: float):
    return expit(eta * np.asarray(x, dtype=float))


def decode_probability(
    j: int,
    powers: Mapping[int, float],
    rho: Mapping[int, float],
    rate_threshold: float,
    eta: float,
    rx_transmits: bool = False,
) -> float:
    """Logistic relaxation of :func:`decode_success`.

    ``powers`` lists the transmitters active on the sub-channel within range of
    the receiver; a transmitter missing from it is idle and scores 0.
    """
    if rx_transmits or j not in powers or powers[j] <= 0:
        return 0.0
    order = sic_order(powers, rho)
    prob = 1.0
    for k in order:
        prob *= float(logistic(achievable_rate(k, powers, rho) - rate_threshold, eta))
        if k == j:
            break
    return prob


def count_decoded(outcome) -> int:
    """Number of (slot, channel, Rx, Tx) signals decoded in a simulated period."""
    return int(sum(1 for link in outcome.links if link.decoded))


# -- per-period channel realisation --------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelState:
    """Path loss and Rayleigh fading for one period.

    ``gain[i][j, m]`` is the path-loss gain in slot ``i``; ``fading[i-1, k-1, j, m]``
    is the power ``|h|^2`` (unit mean) on sub-channel ``k``. Slots and
    sub-channels are 1-based. Noise is folded in, so :meth:`rho` returns SNR
    per watt.
    """

    gain: np.ndarray
    fading: np.ndarray
    noise_power: float

    @classmethod
    def draw(cls, scenario, radio: RadioConfig, n_channels: int, rng: np.random.Generator,
             model: PathlossModel | None = None) -> "ChannelState":
        model = power_law(radio) if model is None else model
        n, t = scenario.n_users, scenario.n_slots
        d = np.array([scenario.distances(i) for i in range(t + 1)])
        eye = np.broadcast_to(np.eye(n, dtype=bool), d.shape)
        g = model(np.where(eye, 1.0, np.maximum(d, radio.d_min)))
        g = np.where(eye, 0.0, g)
        h = (rng.standard_normal((t, n_channels, n, n)) + 1j * rng.standard_normal((t, n_channels, n, n))) / np.sqrt(2)
        return cls(g, np.abs(h) ** 2, radio.noise_power)

    @property
    def n_channels(self) -> int:
        return self.fading.shape[1]

    def rho(self, i: int, k: int | None = None, full_csi: bool = True) -> np.ndarray:
        """(N, N) SNR-per-watt matrix ``rho[j, m]`` for slot ``i`` on channel ``k``."""
        base = self.gain[i] / self.noise_power
        if not full_csi or k is None:
            return base
        return base * self.fading[i - 1, k - 1]
