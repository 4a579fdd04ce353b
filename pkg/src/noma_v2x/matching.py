"""Many-to-many stable-roommate matchings and rotation moves.

A :class:`Matching` maps players (users) to sets of resources (slots or
sub-channels). A rotation over an ordered player subset hands each member
the match of the member ``shift`` places ahead of it, cyclically. Dummy
players may join a rotation; they stand for free resources and carry no
preferences. ``DUMMY`` is the sentinel resource meaning "unmatched".
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

Player = Hashable
Resource = Hashable

DUMMY: Resource = "<dummy>"

Forbidden = Callable[[Player, Player, Resource], bool]
Objective = Callable[["Matching"], float]
Validator = Callable[["Matching", "RotationSequence"], bool]


class RotationError(ValueError):
    """A rotation produced a matching that breaks a capacity."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class RotationSequence:
    players: tuple
    shift: int

    def __post_init__(self):
        if not 1 <= self.shift <= len(self.players):
            raise ValueError("shift must lie in [1, L]")

    @property
    def size(self) -> int:
        return len(self.players)

    @property
    def is_identity(self) -> bool:
        return self.shift % self.size == 0

    def reassignment(self, matching: "Matching") -> dict[Player, frozenset]:
        L = self.size
        return {
            self.players[t]: matching.match(self.players[(t + self.shift) % L])
            for t in range(L)
        }


@dataclass(frozen=True, eq=False)
class Matching:
    forward: Mapping[Player, frozenset]
    player_capacity: int | None = None
    resource_capacity: int | Mapping[Resource, int] | None = None
    forbidden: Forbidden | None = None
    dummies: frozenset = frozenset()
    _inverse: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        fwd = {p: frozenset(m) for p, m in self.forward.items()}
        inv: dict = {}
        for p, res in fwd.items():
            for r in res:
                if r != DUMMY:
                    inv.setdefault(r, set()).add(p)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "dummies", frozenset(self.dummies))
        object.__setattr__(self, "_inverse", {r: frozenset(ps) for r, ps in inv.items()})

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Player, Resource]], players: Iterable[Player] = (), **kw) -> "Matching":
        fwd: dict = {p: set() for p in players}
        for p, r in pairs:
            fwd.setdefault(p, set()).add(r)
        return cls({p: frozenset(r) for p, r in fwd.items()}, **kw)

    @property
    def players(self) -> list:
        return list(self.forward)

    @property
    def real_players(self) -> list:
        return [p for p in self.forward if p not in self.dummies]

    def match(self, p: Player) -> frozenset:
        return self.forward[p]

    def holders(self, r: Resource) -> frozenset:
        """Real players holding resource ``r``."""
        return frozenset(p for p in self._inverse.get(r, ()) if p not in self.dummies)

    def inverse(self) -> dict:
        return {r: self.holders(r) for r in self._inverse}

    def peers(self, p: Player) -> set:
        out = set()
        for r in self.forward[p]:
            if r != DUMMY:
                out |= self.holders(r)
        out.discard(p)
        return out

    def with_assignment(self, changes: Mapping[Player, frozenset]) -> "Matching":
        fwd = dict(self.forward)
        fwd.update(changes)
        return Matching(fwd, self.player_capacity, self.resource_capacity, self.forbidden, self.dummies)

    def _resource_cap(self, r: Resource) -> int | None:
        if r == DUMMY or self.resource_capacity is None:
            return None
        if isinstance(self.resource_capacity, int):
            return self.resource_capacity
        return self.resource_capacity.get(r)

    def capacity_violations(self) -> list[str]:
        out = []
        if self.player_capacity is not None:
            for p in self.real_players:
                n = len(self.forward[p] - {DUMMY})
                if n > self.player_capacity:
                    out.append(f"player {p!r} holds {n} > {self.player_capacity} resources")
        for r in self._inverse:
            cap = self._resource_cap(r)
            n = len(self.holders(r))
            if cap is not None and n > cap:
                out.append(f"resource {r!r} holds {n} > {cap} players")
        return out

    def forbidden_pairs(self) -> list[tuple[Player, Player, Resource]]:
        if self.forbidden is None:
            return []
        out = []
        for r in sorted(self._inverse, key=repr):
            hs = sorted(self.holders(r), key=repr)
            for a, b in itertools.combinations(hs, 2):
                if self.forbidden(a, b, r):
                    out.append((a, b, r))
        return out

    def is_feasible(self) -> bool:
        return not self.capacity_violations() and not self.forbidden_pairs()

    def to_rows(self) -> list[tuple]:
        rows = []
        for p in self.real_players:
            res = sorted(self.forward[p], key=repr) or [DUMMY]
            rows.extend((p, r) for r in res)
        return rows


# -- rotations ---------------------------------------------------------------

def enumerate_rotations(players: Iterable[Player], q_max: int, min_size: int = 1,
                        include_identity: bool = True) -> Iterator[RotationSequence]:
    """Every (sorted subset, shift) pair with subset size ``min_size..q_max``.

    Each subset of size L yields its L-1 proper shifts followed by the
    identity shift ``l = L`` (kept so the status quo can be compared).
    """
    ordered = sorted(players)
    for L in range(max(min_size, 1), q_max + 1):
        for subset in itertools.combinations(ordered, L):
            for l in range(1, L + 1):
                if l == L and not include_identity:
                    continue
                yield RotationSequence(subset, l)


def apply_rotation(matching: Matching, rotation: RotationSequence) -> Matching:
    missing = [p for p in rotation.players if p not in matching.forward]
    if missing:
        raise KeyError(f"players {missing!r} are not in the matching")
    result = matching.with_assignment(rotation.reassignment(matching))
    violations = result.capacity_violations()
    if violations:
        raise RotationError(violations)
    return result


def is_valid(matching: Matching, rotation: RotationSequence, after: Matching | None = None) -> bool:
    """No rotated real player shares a resource with a forbidden partner afterwards."""
    if matching.forbidden is None:
        return True
    after = matching.with_assignment(rotation.reassignment(matching)) if after is None else after
    for j in rotation.players:
        if j in after.dummies:
            continue
        for r in after.match(j):
            if r == DUMMY:
                continue
            for peer in after.holders(r):
                if peer != j and matching.forbidden(j, peer, r):
                    return False
    return True


def _admissible(matching: Matching, rotation: RotationSequence, validator: Validator | None):
    after = matching.with_assignment(rotation.reassignment(matching))
    if after.capacity_violations():
        return None
    if not is_valid(matching, rotation, after):
        return None
    if validator is not None and not validator(after, rotation):
        return None
    return after


def shift_values(matching: Matching, subset: Sequence[Player], objective: Objective,
                 validator: Validator | None = None) -> dict[int, float]:
    """Objective of every admissible shift of ``subset`` (identity included)."""
    L = len(subset)
    values = {L: objective(matching)}
    for l in range(1, L):
        after = _admissible(matching, RotationSequence(tuple(subset), l), validator)
        if after is not None:
            values[l] = objective(after)
    return values


def improves(new: float, old: float, minimize: bool, tol: float = 1e-9) -> bool:
    scale = tol * max(1.0, abs(old))
    return new < old - scale if minimize else new > old + scale


def optimal_shift(matching: Matching, subset: Sequence[Player], objective: Objective,
                  minimize: bool = True, validator: Validator | None = None) -> int | None:
    """Best admissible proper shift, or ``None`` when the status quo is optimal."""
    values = shift_values(matching, subset, objective, validator)
    L = len(subset)
    status_quo = values[L]
    best = None
    for l in range(1, L):
        if l not in values:
            continue
        if best is None or improves(values[l], values[best], minimize, tol=0.0):
            best = l
    if best is not None and improves(values[best], status_quo, minimize):
        return best
    return None


def find_improving_rotation(matching: Matching, q_max: int, objective: Objective, minimize: bool = True,
                            validator: Validator | None = None,
                            players: Iterable[Player] | None = None) -> RotationSequence | None:
    """First improving rotation in lexicographic subset order, sizes ascending."""
    pool = sorted(matching.players if players is None else players)
    for L in range(2, q_max + 1):
        for subset in itertools.combinations(pool, L):
            l = optimal_shift(matching, subset, objective, minimize, validator)
            if l is not None:
                return RotationSequence(subset, l)
    return None


def is_q_exchange_stable(matching: Matching, q_max: int, objective: Objective, minimize: bool = True,
                         validator: Validator | None = None, players: Iterable[Player] | None = None) -> bool:
    """Exhaustive check that no admissible rotation of size <= q_max strictly improves."""
    return find_improving_rotation(matching, q_max, objective, minimize, validator, players) is None


# -- counting ----------------------------------------------------------------

def count_rotation_sequences(n: int, q_max: int, proper: bool = False) -> int:
    """``sum_{q=1}^{q_max} q * C(n, q)``; with ``proper`` the identity shifts are dropped."""
    if not 1 <= q_max <= n:
        raise ValueError("need 1 <= q_max <= n")
    per = (lambda q: q - 1) if proper else (lambda q: q)
    return sum(per(q) * math.comb(n, q) for q in range(1, q_max + 1))


def invalid_rotation_lower_bound(n: int, n_forbidden: int) -> Fraction:
    if n < 2 or n_forbidden < 0:
        raise ValueError("need n >= 2 and a non-negative forbidden-pair count")
    return n_forbidden * (Fraction(2) ** (n - 1) - 2 + Fraction(1, n // 2))


def valid_rotation_upper_bound(n: int, n_forbidden: int) -> Fraction:
    if n < 2 or n_forbidden < 0:
        raise ValueError("need n >= 2 and a non-negative forbidden-pair count")
    return (n - n_forbidden) * Fraction(2) ** (n - 1) + 2 * n_forbidden - Fraction(n_forbidden, n // 2)


def count_invalid_rotations(matching: Matching, q_max: int) -> int:
    """Proper rotations of size <= q_max that put a forbidden pair on a shared resource."""
    return sum(1 for rot in enumerate_rotations(matching.players, q_max, min_size=2, include_identity=False)
               if not is_valid(matching, rot))
