"""Centralised scheduling: Tx/Rx selection with time slots (UTSA), sub-channels
(RMSA) and the two reference schemes (NOMA-GGA, OMA).

Slots and sub-channels are 1-based in every public structure. Only vehicles
transmit; pedestrians are receivers throughout.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _sweep
from .channel import RadioConfig, logistic
from .matching import DUMMY, Matching, improves
from .schedule import Schedule

log = logging.getLogger(__name__)

MCD, GGA, OMA = "NOMA-MCD", "NOMA-GGA", "OMA"
SCHEMES = (MCD, GGA, OMA)


class SchedulingError(RuntimeError):
    def __init__(self, message: str, user: int | None = None):
        super().__init__(message)
        self.user = user


@dataclass(frozen=True)
class SchedulerConfig:
    n_channels: int = 5
    k_max: int = 2
    t_max: int = 1
    k_u: int = 2
    q_max: int = 4
    epsilon: float = -0.05
    draws_per_player: int = 5
    max_redraws: int = 100
    tol: float = 1e-9

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("need at least one sub-channel")
        if not 1 <= self.k_max <= self.n_channels:
            raise ValueError("k_max must lie in [1, n_channels]")
        if self.t_max < 1 or self.k_u < 1:
            raise ValueError("t_max and k_u must be >= 1")
        if self.q_max < 2:
            raise ValueError("q_max must be >= 2")
        if not -0.1 < self.epsilon < 0:
            raise ValueError("epsilon must lie in (-0.1, 0)")
        if self.draws_per_player < 0 or self.max_redraws < 1:
            raise ValueError("draw counts must be non-negative")

    def replace(self, **changes) -> "SchedulerConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class RotationStep:
    """One executed rotation: ``players`` in subset order, the shift, and the
    network objective before and after."""

    players: tuple
    shift: int
    before: float
    after: float


# -- cross influence -------------------------------------------------------------

def cross_influence(d, r: float, epsilon: float = -0.05):
    """Squared overlap proxy ``(2r - d)^2`` of two disks, ``epsilon`` once they are disjoint."""
    d = np.asarray(d, dtype=float)
    out = np.where(d < 2 * r, (2 * r - d) ** 2, epsilon)
    return float(out) if out.ndim == 0 else out


def cross_influence_pair(scenario, j: int, jp: int, i: int, r: float | None = None,
                         epsilon: float = -0.05) -> float:
    r = scenario.config.comm_range if r is None else r
    return cross_influence(scenario.distances(i)[j, jp], r, epsilon)


def cross_influence_user(scenario, j: int, i: int, peers: Sequence[int], r: float | None = None,
                         epsilon: float = -0.05) -> float:
    """Average cross influence ``Q`` that ``j`` brings to slot ``i`` already holding ``peers``."""
    peers = [p for p in peers if p != j]
    if not peers:
        return epsilon
    r = scenario.config.comm_range if r is None else r
    d = scenario.distances(i)[j, peers]
    return float(np.sum(cross_influence(d, r, epsilon))) / (len(peers) + 1)


def set_influence(influence: np.ndarray, members: Sequence[int], epsilon: float) -> float:
    """Total cross influence of one slot (or channel) holding ``members``."""
    members = list(members)
    if not members:
        return 0.0
    if len(members) == 1:
        return epsilon
    sub = influence[np.ix_(members, members)]
    return float(np.sum(sub)) / len(members)


def total_cross_influence(scenario, slots: dict[int, int], r: float | None = None,
                          epsilon: float = -0.05) -> float:
    r = scenario.config.comm_range if r is None else r
    by_slot: dict[int, list] = {}
    for j, i in slots.items():
        by_slot.setdefault(i, []).append(j)
    total = 0.0
    for i, members in by_slot.items():
        infl = cross_influence(scenario.distances(i), r, epsilon)
        np.fill_diagonal(infl, 0.0)
        total += set_influence(infl, sorted(members), epsilon)
    return total


# -- feasibility -------------------------------------------------------------------

def peeling_order(adj: np.ndarray) -> tuple[list[int], int]:
    """Repeatedly strip a minimum-degree vertex (lowest id on ties).

    Returns the removal order and the degeneracy (largest degree seen at removal).
    """
    adj = np.asarray(adj, dtype=bool)
    alive = np.ones(len(adj), dtype=bool)
    deg = adj.sum(axis=1).astype(int)
    order, degeneracy = [], 0
    for _ in range(len(adj)):
        cand = np.flatnonzero(alive)
        v = int(cand[np.argmin(deg[cand])])
        degeneracy = max(degeneracy, int(deg[v]))
        order.append(v)
        alive[v] = False
        deg[adj[v] & alive] -= 1
    return order, degeneracy


def conflict_graph(scenario, i: int, users: Sequence[int], r: float | None = None) -> np.ndarray:
    r = scenario.config.comm_range if r is None else r
    users = list(users)
    adj = scenario.distances(i)[np.ix_(users, users)] <= r
    np.fill_diagonal(adj, False)
    return adj


def feasibility_bound(scenario, r: float | None = None, users: Sequence[int] | None = None) -> tuple[int, bool]:
    """Largest per-slot degeneracy plus one, and whether it fits in the period."""
    users = list(scenario.vehicles if users is None else users)
    if not users:
        return 0, True
    bound = max(peeling_order(conflict_graph(scenario, i, users, r))[1] + 1
                for i in range(1, scenario.n_slots + 1))
    return bound, bound <= scenario.n_slots


# -- UTSA --------------------------------------------------------------------------

@dataclass
class TimeGeometry:
    """Per-slot forbidden relation and pairwise influence among the vehicles."""

    users: np.ndarray
    forbidden: np.ndarray  # bool (T, n, n); slot index 0-based
    influence: np.ndarray  # float (T, n, n), zero diagonal

    @classmethod
    def build(cls, scenario, r: float, epsilon: float) -> "TimeGeometry":
        users = np.asarray(scenario.vehicles, dtype=np.int64)
        d = np.stack([scenario.distances(i)[np.ix_(users, users)] for i in range(1, scenario.n_slots + 1)])
        eye = np.eye(len(users), dtype=bool)[None]
        forb = (d <= r) & ~eye
        infl = np.where(eye, 0.0, cross_influence(d, r, epsilon))
        return cls(users, np.ascontiguousarray(forb), np.ascontiguousarray(infl))

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def n_slots(self) -> int:
        return self.forbidden.shape[0]


def _greedy_slots(geo: TimeGeometry, order: Sequence[int], epsilon: float) -> tuple[np.ndarray, int | None]:
    slot = np.full(geo.n, -1, dtype=np.int64)
    members: list[list[int]] = [[] for _ in range(geo.n_slots)]
    for u in order:
        avail = [x for x in range(geo.n_slots)
                 if members[x] and not geo.forbidden[x, u, members[x]].any()]
        if avail:
            q = [geo.influence[x, u, members[x]].sum() / (len(members[x]) + 1) for x in avail]
            x = avail[int(np.argmin(q))]
        else:
            empty = [x for x in range(geo.n_slots) if not members[x]]
            if not empty:
                return slot, int(u)
            x = empty[0]
        members[x].append(int(u))
        slot[u] = x
    return slot, None


def utsa_phase1(scenario, config: SchedulerConfig, r: float | None = None,
                geometry: TimeGeometry | None = None) -> dict[int, int]:
    """Greedy feasible time matching: each vehicle gets exactly one slot.

    Vehicles are visited in id order. If that order gets stuck, the visit
    order falls back to the reverse peeling order of the union conflict graph,
    which always succeeds when the degeneracy bound fits in the period.
    """
    r = scenario.config.comm_range if r is None else r
    geo = TimeGeometry.build(scenario, r, config.epsilon) if geometry is None else geometry
    if geo.n == 0:
        return {}
    slot, stuck = _greedy_slots(geo, range(geo.n), config.epsilon)
    if stuck is not None:
        order, _ = peeling_order(geo.forbidden.any(axis=0))
        slot, stuck2 = _greedy_slots(geo, order[::-1], config.epsilon)
        if stuck2 is not None:
            bound, _ = feasibility_bound(scenario, r)
            raise SchedulingError(
                f"no slot left for user {int(geo.users[stuck])}: every slot holds a forbidden partner "
                f"(degeneracy bound {bound} vs {geo.n_slots} slots)",
                user=int(geo.users[stuck]),
            )
    return {int(geo.users[u]): int(slot[u]) + 1 for u in range(geo.n)}


@dataclass
class UtsaResult:
    slots: dict[int, int]
    phase1: dict[int, int]
    trace: list[RotationStep] = field(default_factory=list)
    n_rotations: int = 0
    sweeps: int = 0
    total: float = 0.0
    phase1_total: float = 0.0


class _TimeState:
    """Kernel-side state of the time matching (players = vehicles + dummies)."""

    def __init__(self, geo: TimeGeometry, slot0: np.ndarray, n_dummies: int, trace_cap: int, q_max: int):
        self.geo = geo
        n = geo.n
        self.slot = np.concatenate([slot0.astype(np.int64), np.full(n_dummies, -1, np.int64)])
        self.refresh()
        self.tr = (np.zeros((trace_cap, q_max), np.int64), np.zeros(trace_cap, np.int64),
                   np.zeros(trace_cap, np.int64), np.zeros(trace_cap))
        self.n_tr = 0

    def refresh(self):
        g = self.geo
        self.cnt, self.ps, self.acc, self.fc = _sweep.build_state(self.slot, g.n, g.n_slots, g.forbidden, g.influence)
        _sweep.repark(self.slot, g.n, len(self.slot), self.cnt)

    def total(self, eps: float) -> float:
        return float(_sweep.total_value(self.cnt, self.ps, eps))

    def args(self):
        g = self.geo
        return (self.slot, g.n, g.forbidden, g.influence, self.cnt, self.ps, self.acc, self.fc)


def utsa(scenario, config: SchedulerConfig, rng: np.random.Generator | None = None,
         r: float | None = None, trace_cap: int = 200_000) -> UtsaResult:
    """Phase 1 greedy, then rotations until a full sweep finds no improvement.

    Phase 2 first tries randomly drawn subsets, then runs lexicographic
    sweeps. Dummy players (at most ``q_max - 1``) stand for the lowest-index
    empty slots, so a vehicle can rotate into an unused slot.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    r = scenario.config.comm_range if r is None else r
    eps = config.epsilon
    geo = TimeGeometry.build(scenario, r, eps)
    phase1 = utsa_phase1(scenario, config, r, geo)
    if geo.n == 0:
        return UtsaResult({}, {})
    pos = {int(u): a for a, u in enumerate(geo.users)}
    slot0 = np.array([phase1[int(u)] - 1 for u in geo.users], dtype=np.int64)
    n_dummies = min(config.q_max - 1, geo.n_slots)
    st = _TimeState(geo, slot0, n_dummies, trace_cap, config.q_max)
    start_total = st.total(eps)
    n_players = len(st.slot)
    scale = max(1.0, float(np.abs(geo.influence).max()))

    def tol():
        return config.tol * max(scale, abs(st.total(eps)))

    n_draws = config.draws_per_player * n_players
    if n_draws and n_players >= 2:
        top = min(config.q_max, n_players)
        sizes = rng.integers(2, top + 1, size=n_draws)
        subsets = np.full((n_draws, config.q_max), -1, np.int64)
        for s, L in enumerate(sizes):
            subsets[s, :L] = np.sort(rng.choice(n_players, size=L, replace=False))
        st.n_tr = _sweep.run_subsets(subsets, sizes.astype(np.int64), *st.args(), eps, tol(), *st.tr, st.n_tr)
    sweeps = 0
    while True:
        st.refresh()
        sweeps += 1
        st.n_tr, executed = _sweep.sweep(n_players, config.q_max, *st.args(), eps, tol(), *st.tr, st.n_tr)
        if executed == 0:
            break
    st.refresh()

    trace = []
    total = start_total
    members, size, shift, delta = st.tr
    for e in range(min(st.n_tr, trace_cap)):
        who = tuple(int(geo.users[m]) if m >= 0 else ("empty", int(-m)) for m in members[e, :size[e]])
        trace.append(RotationStep(who, int(shift[e]), total, total + float(delta[e])))
        total += float(delta[e])
    slots = {int(u): int(st.slot[pos[int(u)]]) + 1 for u in geo.users}
    return UtsaResult(slots, phase1, trace, st.n_tr, sweeps, st.total(eps), start_total)


def time_matching(slots: dict[int, int], scenario, config: SchedulerConfig, r: float | None = None) -> Matching:
    """Generic-engine view of a one-slot-per-user time matching, with canonical dummies."""
    r = scenario.config.comm_range if r is None else r
    fwd = {j: frozenset({i}) for j, i in slots.items()}
    used = set(slots.values())
    empty = [i for i in range(1, scenario.n_slots + 1) if i not in used][: config.q_max - 1]
    dummies = {("empty", i) for i in empty}
    fwd.update({("empty", i): frozenset({i}) for i in empty})

    def forbidden(a, b, i):
        return scenario.distances(i)[a, b] <= r

    return Matching(fwd, player_capacity=1, forbidden=forbidden, dummies=dummies)


def time_objective(scenario, config: SchedulerConfig, r: float | None = None):
    """Network total cross influence as a generic-engine objective."""
    r = scenario.config.comm_range if r is None else r
    cache: dict[int, np.ndarray] = {}

    def influence(i):
        if i not in cache:
            m = cross_influence(scenario.distances(i), r, config.epsilon)
            np.fill_diagonal(m, 0.0)
            cache[i] = m
        return cache[i]

    def objective(matching: Matching) -> float:
        return sum(set_influence(influence(i), sorted(ps), config.epsilon)
                   for i, ps in matching.inverse().items() if ps)

    return objective


def _player_key(p):
    # vehicles (ints) first, then dummies, for a deterministic total order
    return (0, p, 0) if isinstance(p, (int, np.integer)) else (1, str(p[0]), p[1])


# -- RMSA ----------------------------------------------------------------------------

class ChannelUtility:
    """Memoised decode-probability utility of one co-channel Tx set.

    Uses path loss only (no fading) and uniform power, so the value does not
    depend on which sub-channel carries the set.
    """

    def __init__(self, rho: np.ndarray, in_range: np.ndarray, receivers: np.ndarray,
                 power: float, rate_threshold: float, eta: float):
        self.rho = rho
        self.in_range = in_range
        self.receivers = np.asarray(receivers, dtype=bool)
        self.power = power
        self.rate_threshold = rate_threshold
        self.eta = eta
        self._memo: dict[frozenset, float] = {}

    def link_utilities(self, txs: frozenset) -> dict[tuple[int, int], float]:
        """``U[j, m]`` for every Tx ``j`` in ``txs`` and in-range receiver ``m``."""
        out = {}
        tx = np.array(sorted(txs), dtype=np.int64)
        if len(tx) == 0:
            return out
        cover = self.in_range[tx] & self.receivers[None, :]
        for m in np.flatnonzero(cover.any(axis=0)):
            a = tx[cover[:, m]]
            g = self.rho[a, m]
            order = np.lexsort((a, -g))
            rx = self.power * g[order]
            tail = np.concatenate((np.cumsum(rx[::-1])[::-1][1:], [0.0]))
            rates = np.log2(1.0 + rx / (1.0 + tail))
            u = np.cumprod(logistic(rates - self.rate_threshold, self.eta))
            for t, j in enumerate(a[order]):
                out[(int(j), int(m))] = float(u[t])
        return out

    def __call__(self, txs: frozenset) -> float:
        txs = frozenset(txs)
        if txs not in self._memo:
            self._memo[txs] = sum(self.link_utilities(txs).values())
        return self._memo[txs]


def overlap_ok(in_range: np.ndarray, receivers: np.ndarray, txs, k_u: int) -> bool:
    """Receiver-overlap cap for one channel: no receiver covered by more than ``k_u`` of ``txs``."""
    if len(txs) <= k_u:
        return True
    cover = in_range[sorted(txs)][:, receivers]
    return bool(cover.sum(axis=0).max() <= k_u)


@dataclass
class RmsaResult:
    channels: dict[int, tuple[int, ...]]
    initial: dict[int, tuple[int, ...]]
    trace: list[RotationStep] = field(default_factory=list)
    sweeps: int = 0
    total: float = 0.0


class _ChannelState:
    """Ports and tokens for one slot.

    Every Tx owns ``k_max`` ports, each holding one channel (1..K) or nothing
    (0). Token ``k`` always holds channel ``k`` and the null token holds
    nothing, so rotating a port with a token moves it onto a free channel or
    releases its channel.
    """

    def __init__(self, txs: Sequence[int], config: SchedulerConfig, util: ChannelUtility):
        self.txs = list(txs)
        self.config = config
        self.util = util
        self.owner = [j for j in self.txs for _ in range(config.k_max)]
        self.n_ports = len(self.owner)
        self.hold = [0] * self.n_ports
        self.n_players = self.n_ports + config.n_channels + 1
        self.in_range = util.in_range
        self.receivers = util.receivers
        self._ok: dict[frozenset, bool] = {}

    def holding(self, p: int) -> int:
        return self.hold[p] if p < self.n_ports else p - self.n_ports

    def player_name(self, p: int):
        if p < self.n_ports:
            return (self.owner[p], p % self.config.k_max)
        return ("token", p - self.n_ports)

    def sets(self, hold=None) -> dict[int, frozenset]:
        hold = self.hold if hold is None else hold
        out: dict[int, set] = {k: set() for k in range(1, self.config.n_channels + 1)}
        for p, k in enumerate(hold):
            if k:
                out[k].add(self.owner[p])
        return {k: frozenset(v) for k, v in out.items()}

    def tx_channels(self, hold=None) -> dict[int, tuple[int, ...]]:
        hold = self.hold if hold is None else hold
        out: dict[int, list] = {j: [] for j in self.txs}
        for p, k in enumerate(hold):
            if k:
                out[self.owner[p]].append(k)
        return {j: tuple(sorted(v)) for j, v in out.items()}

    def total(self) -> float:
        return sum(self.util(s) for s in self.sets().values())

    def overlap_ok(self, txs: frozenset) -> bool:
        if txs not in self._ok:
            self._ok[txs] = overlap_ok(self.in_range, self.receivers, txs, self.config.k_u)
        return self._ok[txs]

    def valid(self, hold) -> bool:
        chans = self.tx_channels(hold)
        for ks in chans.values():
            if not ks or len(set(ks)) != len(ks):
                return False
        return all(self.overlap_ok(s) for s in self.sets(hold).values())

    def evaluate(self, members: Sequence[int], l: int):
        """``(changed, valid, delta)`` of shifting ``members`` by ``l``."""
        L = len(members)
        moves = {}
        for t, p in enumerate(members):
            if p < self.n_ports:
                k = self.holding(members[(t + l) % L])
                if k != self.hold[p]:
                    moves[p] = k
        if not moves:
            return False, True, 0.0
        owners = {self.owner[p] for p in moves}
        affected_k = {self.hold[p] for p in moves} | set(moves.values())
        affected_k.discard(0)
        new_sets = {}
        for k in affected_k:
            s = {j for p, j in enumerate(self.owner) if (moves.get(p, self.hold[p]) == k)}
            new_sets[k] = frozenset(s)
        # forbidden: two ports of one Tx on the same channel; each Tx keeps >= 1 channel
        for j in owners:
            ks = [moves.get(p, self.hold[p]) for p in range(self.n_ports) if self.owner[p] == j]
            ks = [k for k in ks if k]
            if not ks or len(set(ks)) != len(ks):
                return True, False, 0.0
        for k, s in new_sets.items():
            if not self.overlap_ok(s):
                return True, False, 0.0
        old_sets = self.sets()
        delta = sum(self.util(new_sets[k]) - self.util(old_sets[k]) for k in affected_k)
        return True, True, delta

    def apply(self, members: Sequence[int], l: int):
        L = len(members)
        new = [self.holding(members[(t + l) % L]) for t in range(L)]
        for t, p in enumerate(members):
            if p < self.n_ports:
                self.hold[p] = new[t]


def _random_initial(state: _ChannelState, rng: np.random.Generator, max_redraws: int, slot: int):
    cfg = state.config
    for _ in range(max_redraws):
        hold = [0] * state.n_ports
        for a, j in enumerate(state.txs):
            size = int(rng.integers(1, cfg.k_max + 1))
            chans = rng.choice(cfg.n_channels, size=size, replace=False) + 1
            for s, k in enumerate(sorted(chans)):
                hold[a * cfg.k_max + s] = int(k)
        if state.valid(hold):
            return hold
    raise SchedulingError(f"slot {slot}: no random channel draw met the overlap cap K_u={cfg.k_u} "
                          f"after {max_redraws} tries")


def slot_geometry(scenario, radio: RadioConfig, i: int, txs: Sequence[int], r: float | None = None):
    """Partial-CSI SNR-per-watt, in-range relation and receiver mask of slot ``i``."""
    r = scenario.config.comm_range if r is None else r
    d = scenario.distances(i)
    from .channel import pathloss

    eye = np.eye(scenario.n_users, dtype=bool)
    g = np.where(eye, 0.0, pathloss(np.where(eye, 1.0, np.maximum(d, radio.d_min)), radio.alpha,
                                    radio.pathloss_beta, radio.d_min))
    rho = g / radio.noise_power
    in_range = (d <= r) & ~eye
    receivers = np.ones(scenario.n_users, dtype=bool)
    receivers[list(txs)] = False
    return rho, in_range, receivers


def channel_utility(scenario, radio: RadioConfig, i: int, txs: Sequence[int], r: float | None = None) -> ChannelUtility:
    rho, in_range, receivers = slot_geometry(scenario, radio, i, txs, r)
    return ChannelUtility(rho, in_range, receivers, radio.max_power, radio.rate_threshold, radio.eta)


def rmsa(i: int, txs: Sequence[int], scenario, radio: RadioConfig, config: SchedulerConfig,
         rng: np.random.Generator | None = None, r: float | None = None,
         utility: ChannelUtility | None = None) -> RmsaResult:
    """Rotation matching of the slot-``i`` transmitters onto sub-channels."""
    rng = np.random.default_rng(0) if rng is None else rng
    txs = sorted(int(j) for j in txs)
    if not txs:
        return RmsaResult({}, {})
    util = channel_utility(scenario, radio, i, txs, r) if utility is None else utility
    st = _ChannelState(txs, config, util)
    st.hold = _random_initial(st, rng, config.max_redraws, i)
    initial = st.tx_channels()
    trace: list[RotationStep] = []
    total = st.total()
    top = min(config.q_max, st.n_players)

    def attempt(members) -> bool:
        nonlocal total
        if all(p >= st.n_ports for p in members):
            return False
        best_l, best_d = None, 0.0
        for l in range(1, len(members)):
            changed, ok, d = st.evaluate(members, l)
            if changed and ok and (best_l is None or d > best_d):
                best_l, best_d = l, d
        if best_l is None or not improves(total + best_d, total, minimize=False, tol=config.tol):
            return False
        st.apply(members, best_l)
        after = st.total()
        trace.append(RotationStep(tuple(st.player_name(p) for p in members), best_l, total, after))
        total = after
        return True

    for _ in range(config.draws_per_player * st.n_players):
        L = int(rng.integers(2, top + 1))
        attempt(sorted(int(p) for p in rng.choice(st.n_players, size=L, replace=False)))
    sweeps = 0
    while True:
        sweeps += 1
        executed = 0
        for L in range(2, top + 1):
            for members in itertools.combinations(range(st.n_players), L):
                executed += attempt(members)
        if not executed:
            break
    return RmsaResult(st.tx_channels(), initial, trace, sweeps, st.total())


def channel_matching(channels: dict[int, tuple[int, ...]], config: SchedulerConfig, util: ChannelUtility):
    """Generic-engine view of one slot's channel matching, plus objective and validator."""
    fwd = {}
    for j, ks in channels.items():
        ks = list(ks)
        for s in range(config.k_max):
            fwd[(j, s)] = frozenset({ks[s]}) if s < len(ks) else frozenset({DUMMY})
    tokens = {(-1, k) for k in range(config.n_channels + 1)}
    for (_, k) in tokens:
        fwd[(-1, k)] = frozenset({k}) if k else frozenset({DUMMY})

    def forbidden(a, b, k):
        return a[0] == b[0] and k != DUMMY

    matching = Matching(fwd, player_capacity=1, forbidden=forbidden, dummies=tokens)

    def txsets(m: Matching):
        return {k: frozenset(p[0] for p in m.holders(k)) for k in range(1, config.n_channels + 1)}

    def objective(m: Matching) -> float:
        return sum(util(s) for s in txsets(m).values())

    def validator(m: Matching, rotation) -> bool:
        held: dict[int, int] = {}
        for p in m.real_players:
            held[p[0]] = held.get(p[0], 0) + len(m.match(p) - {DUMMY})
        if any(v == 0 for v in held.values()):
            return False
        return all(overlap_ok(util.in_range, util.receivers, s, config.k_u) for s in txsets(m).values())

    return matching, objective, validator


# -- schemes ----------------------------------------------------------------------------

@dataclass
class ScheduleResult:
    schedule: Schedule
    utsa: UtsaResult | None = None
    rmsa: dict[int, RmsaResult] = field(default_factory=dict)
    silent: list[tuple[int, int]] = field(default_factory=list)

    @property
    def rotations_utsa(self) -> int | None:
        return None if self.utsa is None else self.utsa.n_rotations

    @property
    def rotations_rmsa(self) -> int | None:
        return None if not self.rmsa else sum(len(res.trace) for res in self.rmsa.values())


def _by_slot(slots: dict[int, int]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for j, i in sorted(slots.items()):
        out.setdefault(i, []).append(j)
    return out


def noma_mcd(scenario, radio: RadioConfig, config: SchedulerConfig, rng: np.random.Generator | None = None,
             r: float | None = None) -> ScheduleResult:
    """UTSA for time, RMSA per slot for sub-channels. Powers are left to the controller."""
    rng = np.random.default_rng(0) if rng is None else rng
    t = utsa(scenario, config, rng, r)
    channels, per_slot = {}, {}
    for i, txs in _by_slot(t.slots).items():
        res = rmsa(i, txs, scenario, radio, config, rng, r)
        per_slot[i] = res
        channels.update({(i, j): ks for j, ks in res.channels.items()})
    sched = Schedule(MCD, scenario.n_users, scenario.n_slots, config.n_channels,
                     {j: (i,) for j, i in t.slots.items()}, channels)
    return ScheduleResult(sched, t, per_slot)


def greedy_geometric_channels(i: int, txs: Sequence[int], scenario, config: SchedulerConfig,
                              r: float | None = None) -> dict[int, tuple[int, ...]]:
    """Phase-1 style greedy on sub-channels: each Tx in id order fills up to
    ``k_max`` channels, each time taking the one with the smallest average
    cross influence that keeps the receiver-overlap cap."""
    r = scenario.config.comm_range if r is None else r
    d = scenario.distances(i)
    infl = cross_influence(d, r, config.epsilon)
    receivers = np.ones(scenario.n_users, dtype=bool)
    receivers[list(txs)] = False
    in_range = (d <= r) & ~np.eye(scenario.n_users, dtype=bool)
    on = {k: [] for k in range(1, config.n_channels + 1)}
    out: dict[int, tuple[int, ...]] = {}
    for j in sorted(txs):
        mine: list[int] = []
        for _ in range(config.k_max):
            best = None
            for k in range(1, config.n_channels + 1):
                if k in mine or not overlap_ok(in_range, receivers, on[k] + [j], config.k_u):
                    continue
                q = config.epsilon if not on[k] else float(infl[j, on[k]].sum()) / (len(on[k]) + 1)
                if best is None or q < best[0]:
                    best = (q, k)
            if best is None:
                break
            mine.append(best[1])
            on[best[1]].append(j)
        out[j] = tuple(sorted(mine))
    return out


def noma_gga(scenario, radio: RadioConfig, config: SchedulerConfig, rng: np.random.Generator | None = None,
             r: float | None = None) -> ScheduleResult:
    slots = utsa_phase1(scenario, config, r)
    channels = {}
    for i, txs in _by_slot(slots).items():
        channels.update({(i, j): ks for j, ks in greedy_geometric_channels(i, txs, scenario, config, r).items()})
    sched = Schedule(GGA, scenario.n_users, scenario.n_slots, config.n_channels,
                     {j: (i,) for j, i in slots.items()}, channels)
    return ScheduleResult(sched)


def oma_conflict_graph(i: int, txs: Sequence[int], scenario, radio: RadioConfig, r: float | None = None) -> np.ndarray:
    """Edge iff the two Txs are in range of each other, or some shared in-range
    receiver would see either one below the rate threshold with the other as noise."""
    rho, in_range, receivers = slot_geometry(scenario, radio, i, txs, r)
    txs = list(txs)
    P = radio.max_power
    adj = np.zeros((len(txs), len(txs)), dtype=bool)
    for a, b in itertools.combinations(range(len(txs)), 2):
        j, jp = txs[a], txs[b]
        if in_range[j, jp]:
            adj[a, b] = adj[b, a] = True
            continue
        shared = np.flatnonzero(in_range[j] & in_range[jp] & receivers)
        if shared.size == 0:
            continue
        rj = np.log2(1 + P * rho[j, shared] / (1 + P * rho[jp, shared]))
        rjp = np.log2(1 + P * rho[jp, shared] / (1 + P * rho[j, shared]))
        if np.any(rj < radio.rate_threshold) or np.any(rjp < radio.rate_threshold):
            adj[a, b] = adj[b, a] = True
    return adj


def color_channels(i: int, txs: Sequence[int], scenario, radio: RadioConfig, config: SchedulerConfig,
                   r: float | None = None) -> dict[int, tuple[int, ...]]:
    """Greedy colouring of the conflict graph, highest degree first.

    Each Tx takes the admissible colour adding the fewest conflicting
    receivers (receivers already covered by a Tx of that colour); a Tx with no
    admissible colour stays silent.
    """
    txs = sorted(txs)
    adj = oma_conflict_graph(i, txs, scenario, radio, r)
    _, in_range, receivers = slot_geometry(scenario, radio, i, txs, r)
    deg = adj.sum(axis=1)
    order = sorted(range(len(txs)), key=lambda a: (-deg[a], txs[a]))
    color = {}
    on = {k: [] for k in range(1, config.n_channels + 1)}
    for a in order:
        j = txs[a]
        best = None
        for k in range(1, config.n_channels + 1):
            if any(adj[a, b] and color.get(b) == k for b in range(len(txs))):
                continue
            if not overlap_ok(in_range, receivers, on[k] + [j], config.k_u):
                continue
            covered = in_range[on[k]].any(axis=0) if on[k] else np.zeros(scenario.n_users, dtype=bool)
            conflicts = int(np.sum(covered & in_range[j] & receivers))
            if best is None or conflicts < best[0]:
                best = (conflicts, k)
        if best is not None:
            color[a] = best[1]
            on[best[1]].append(j)
    return {j: ((color[a],) if a in color else ()) for a, j in enumerate(txs)}


def oma_baseline(scenario, radio: RadioConfig, config: SchedulerConfig, rng: np.random.Generator | None = None,
                 r: float | None = None) -> ScheduleResult:
    """Greedy slots, conflict-graph colouring on orthogonal channels, full power."""
    slots = utsa_phase1(scenario, config, r)
    channels, silent = {}, []
    for i, txs in _by_slot(slots).items():
        for j, ks in color_channels(i, txs, scenario, radio, config, r).items():
            channels[(i, j)] = ks
            if not ks:
                silent.append((i, j))
    powers = {(i, j, k): radio.max_power for (i, j), ks in channels.items() for k in ks}
    sched = Schedule(OMA, scenario.n_users, scenario.n_slots, config.n_channels,
                     {j: (i,) for j, i in slots.items()}, channels, powers)
    return ScheduleResult(sched, silent=silent)
