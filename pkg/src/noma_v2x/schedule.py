"""The schedule object, its flat-table form and the constraint checker."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

TX, RX = "tx", "rx"
CONSTRAINTS = ("half_duplex", "channel_cap", "tx_slots", "rx_overlap", "indices")
TABLE_COLUMNS = ("slot", "user", "role", "channels", "powers")


class ScheduleFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Schedule:
    """Time matching, per-slot channel matchings and (optionally) powers.

    ``tx_slots[j]`` lists the 1-based slots in which user ``j`` transmits.
    ``channels[(i, j)]`` lists the 1-based sub-channels of Tx ``j`` in slot
    ``i`` (empty for a scheduled but silent Tx). ``powers[(i, j, k)]`` is in
    watts.
    """

    scheme: str
    n_users: int
    n_slots: int
    n_channels: int
    tx_slots: Mapping[int, tuple[int, ...]]
    channels: Mapping[tuple[int, int], tuple[int, ...]]
    powers: Mapping[tuple[int, int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tx_slots", {int(j): tuple(sorted(s)) for j, s in self.tx_slots.items()})
        object.__setattr__(self, "channels", {(int(i), int(j)): tuple(sorted(c)) for (i, j), c in self.channels.items()})
        object.__setattr__(self, "powers", {tuple(map(int, key)): float(p) for key, p in self.powers.items()})

    def transmitters(self, i: int) -> list[int]:
        return sorted(j for j, slots in self.tx_slots.items() if i in slots)

    def channels_of(self, j: int, i: int) -> tuple[int, ...]:
        return self.channels.get((i, j), ())

    def gamma(self, j: int, k: int, i: int) -> int:
        return int(k in self.channels_of(j, i))

    def co_channel(self, i: int, k: int) -> list[int]:
        return [j for j in self.transmitters(i) if k in self.channels_of(j, i)]

    def power(self, j: int, k: int, i: int) -> float:
        return self.powers[(i, j, k)]

    def with_powers(self, powers: Mapping[tuple[int, int, int], float]) -> "Schedule":
        return Schedule(self.scheme, self.n_users, self.n_slots, self.n_channels,
                        self.tx_slots, self.channels, powers)

    # -- flat table ----------------------------------------------------------

    def to_rows(self) -> list[dict]:
        rows = []
        for i in range(1, self.n_slots + 1):
            txs = set(self.transmitters(i))
            for j in range(self.n_users):
                chans = self.channels_of(j, i) if j in txs else ()
                pw = [self.powers.get((i, j, k)) for k in chans]
                rows.append({
                    "slot": i,
                    "user": j,
                    "role": TX if j in txs else RX,
                    "channels": ";".join(map(str, chans)),
                    "powers": ";".join(repr(p) for p in pw) if pw and None not in pw else "",
                })
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.to_rows())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_users: int, n_slots: int, n_channels: int,
                 scheme: str = "imported") -> "Schedule":
        reader = csv.DictReader(io.StringIO(text))
        missing = set(TABLE_COLUMNS[:4]) - set(reader.fieldnames or ())
        if missing:
            raise ScheduleFormatError(f"missing columns {sorted(missing)}", line=1)
        tx_slots: dict[int, set] = {}
        channels: dict = {}
        powers: dict = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                i, j = int(row["slot"]), int(row["user"])
                role = row["role"].strip()
                chans = [int(c) for c in row["channels"].split(";") if c.strip()]
                pw = [float(p) for p in (row.get("powers") or "").split(";") if p.strip()]
            except (TypeError, ValueError, AttributeError) as exc:
                raise ScheduleFormatError(str(exc), line=lineno) from None
            if role not in (TX, RX):
                raise ScheduleFormatError(f"unknown role {role!r}", line=lineno)
            if role == RX:
                if chans:
                    raise ScheduleFormatError("an rx row cannot hold channels", line=lineno)
                continue
            if pw and len(pw) != len(chans):
                raise ScheduleFormatError("powers and channels differ in length", line=lineno)
            tx_slots.setdefault(j, set()).add(i)
            channels[(i, j)] = tuple(chans)
            powers.update({(i, j, k): p for k, p in zip(chans, pw)})
        return cls(scheme, n_users, n_slots, n_channels, tx_slots, channels, powers)


# -- constraint checking ---------------------------------------------------------

@dataclass
class ConstraintReport:
    violations: dict[str, list] = field(default_factory=lambda: {c: [] for c in CONSTRAINTS})

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def satisfied(self, name: str) -> bool:
        return not self.violations[name]

    def summary(self) -> dict[str, str]:
        return {c: "satisfied" if not v else f"violated ({len(v)})" for c, v in self.violations.items()}

    def lines(self) -> list[str]:
        out = []
        for c, v in self.violations.items():
            out.append(f"{c}: {'satisfied' if not v else 'VIOLATED'}")
            out.extend(f"    {w}" for w in v[:20])
            if len(v) > 20:
                out.append(f"    ... {len(v) - 20} more")
        return out


def check_constraints(schedule: Schedule, scenario, k_max: int, t_max: int, k_u: int,
                      comm_range: float | None = None) -> ConstraintReport:
    """Check every scheduling constraint; each violation carries a witness."""
    r = scenario.config.comm_range if comm_range is None else comm_range
    rep = ConstraintReport()
    v = rep.violations
    N, T, K = schedule.n_users, schedule.n_slots, schedule.n_channels

    # every user, slot and channel id must be in range before anything else is checked
    if N != scenario.n_users:
        v["indices"].append(f"schedule covers {N} users, scenario has {scenario.n_users}")
    for j, slots in schedule.tx_slots.items():
        if not 0 <= j < N:
            v["indices"].append(f"user {j} out of range")
        for i in slots:
            if not 1 <= i <= T:
                v["indices"].append(f"user {j}: slot {i} out of range")
    for (i, j), chans in schedule.channels.items():
        if i not in schedule.tx_slots.get(j, ()):
            v["indices"].append(f"slot {i}: user {j} holds channels without transmitting")
        if len(set(chans)) != len(chans):
            v["indices"].append(f"slot {i}: user {j} lists a channel twice")
        for k in chans:
            if not 1 <= k <= K:
                v["indices"].append(f"slot {i}: user {j} on channel {k} out of range")
    for (i, j, k), p in schedule.powers.items():
        if not np.isfinite(p) or p < 0:
            v["indices"].append(f"slot {i}: user {j} channel {k} has power {p!r}")
    if v["indices"]:
        return rep

    for i in range(1, T + 1):
        txs = schedule.transmitters(i)
        d = scenario.distances(i)
        # no two in-range Txs share a slot
        for a, j in enumerate(txs):
            for jp in txs[a + 1:]:
                if d[j, jp] <= r:
                    v["half_duplex"].append(f"slot {i}: users {j} and {jp} at {d[j, jp]:.1f} m <= r")
        for j in txs:
            n = len(schedule.channels_of(j, i))
            if n > k_max:
                v["channel_cap"].append(f"slot {i}: user {j} holds {n} > {k_max} channels")
        # cap on co-channel Txs covering one receiver
        tx_set = set(txs)
        rxs = [m for m in range(N) if m not in tx_set]
        for k in range(1, K + 1):
            co = schedule.co_channel(i, k)
            if len(co) <= k_u:
                continue
            cover = d[np.ix_(co, rxs)] <= r
            counts = cover.sum(axis=0)
            for col in np.flatnonzero(counts > k_u):
                m = rxs[col]
                who = [co[a] for a in np.flatnonzero(cover[:, col])]
                v["rx_overlap"].append(f"slot {i} channel {k}: rx {m} covered by {who} > {k_u}")
    # pedestrians never transmit; vehicles transmit in 1..t_max slots
    ped = scenario.is_pedestrian
    for j in range(N):
        n = len(schedule.tx_slots.get(j, ()))
        if ped[j]:
            if n:
                v["tx_slots"].append(f"pedestrian {j} scheduled to transmit")
        elif not 1 <= n <= t_max:
            v["tx_slots"].append(f"user {j} transmits in {n} slots, outside [1, {t_max}]")
    return rep
