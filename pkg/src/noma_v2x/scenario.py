"""Urban road grid, user population and per-slot distance prediction."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

KMH = 1.0 / 3.6

KINEMATIC = "kinematic"
LITERAL = "literal"


class ScenarioError(ValueError):
    """Raised when a scenario cannot be generated from its config."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Road layout and population parameters.

    ``n_users`` counts vehicles and pedestrians together. When it is ``None``
    the lanes are filled end to end at the configured density, so the user
    count follows from the speed (a faster road is a sparser road).
    """

    n_users: int | None = 40
    n_slots: int = 40
    slot_duration: float = 1e-3
    speed: float = 30 * KMH
    speed_min: float | None = None
    speed_max: float | None = None
    spacing_time: float = 2.5
    min_gap: float = 5.0
    comm_range: float = 150.0
    road_width: float = 20.0
    lanes_per_direction: int = 2
    lane_width: float = 3.5
    grid_blocks: int = 1
    block_length: float = 250.0
    pedestrian_fraction: float = 0.1
    pedestrian_speed_max: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.n_users is not None and self.n_users < 1:
            raise ScenarioError("n_users must be >= 1")
        if self.n_slots < 1:
            raise ScenarioError("n_slots must be >= 1")
        if self.comm_range <= 0:
            raise ScenarioError("comm_range must be > 0")
        if self.spacing_time <= 0:
            raise ScenarioError("spacing_time must be > 0")
        if self.speed < 0 or self.slot_duration <= 0:
            raise ScenarioError("speed must be >= 0 and slot_duration > 0")
        if not 0.0 <= self.pedestrian_fraction < 1.0:
            raise ScenarioError("pedestrian_fraction must lie in [0, 1)")
        if self.pedestrian_speed_max > 3.0:
            raise ScenarioError("pedestrian speed is capped at 3 m/s")
        if self.grid_blocks < 1 or self.block_length <= 0:
            raise ScenarioError("grid needs at least one block of positive length")
        if 2 * self.lanes_per_direction * self.lane_width > self.road_width:
            raise ScenarioError("lanes do not fit in the road width")

    @property
    def mean_gap(self) -> float:
        return self.spacing_time * self.speed

    @property
    def lane_length(self) -> float:
        return self.grid_blocks * self.block_length

    def replace(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Lane:
    origin: tuple[float, float]
    direction: tuple[float, float]
    length: float


def road_lanes(config: ScenarioConfig) -> list[Lane]:
    """Lanes of a square Manhattan grid, ``grid_blocks`` blocks per side."""
    nb, length = config.grid_blocks, config.lane_length
    offsets = [(k + 0.5) * config.lane_width for k in range(config.lanes_per_direction)]
    lanes = []
    for r in range(nb + 1):
        c = r * config.block_length
        for off in offsets:
            # horizontal road at y = c, eastbound below the centre line
            lanes.append(Lane((0.0, c - off), (1.0, 0.0), length))
            lanes.append(Lane((length, c + off), (-1.0, 0.0), length))
            # vertical road at x = c
            lanes.append(Lane((c + off, 0.0), (0.0, 1.0), length))
            lanes.append(Lane((c - off, length), (0.0, -1.0), length))
    return lanes


def sidewalks(config: ScenarioConfig) -> list[Lane]:
    nb, length = config.grid_blocks, config.lane_length
    off = config.road_width / 2 - 1.5
    walks = []
    for r in range(nb + 1):
        c = r * config.block_length
        for s in (-1.0, 1.0):
            walks.append(Lane((0.0, c + s * off), (1.0, 0.0), length))
            walks.append(Lane((c + s * off, 0.0), (0.0, 1.0), length))
    return walks


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable snapshot of all users at the start of a transmission period.

    Slot ``i`` (1-based) sees user positions advanced by ``i * slot_duration``
    seconds of constant-velocity motion.
    """

    config: ScenarioConfig
    positions: np.ndarray
    velocities: np.ndarray
    is_pedestrian: np.ndarray
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        vel = np.array(self.velocities, dtype=float).reshape(-1, 2)
        ped = np.array(self.is_pedestrian, dtype=bool).reshape(-1)
        if not (len(pos) == len(vel) == len(ped)):
            raise ScenarioError("positions, velocities and roles differ in length")
        for arr in (pos, vel, ped):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "is_pedestrian", ped)
        steps = np.arange(self.config.n_slots + 1) * self.config.slot_duration
        at = pos[None, :, :] + steps[:, None, None] * vel[None, :, :]
        dist = np.linalg.norm(at[:, None, :, :] - at[:, :, None, :], axis=-1)
        dist.setflags(write=False)
        object.__setattr__(self, "_dist", dist)

    @property
    def n_users(self) -> int:
        return len(self.positions)

    @property
    def n_slots(self) -> int:
        return self.config.n_slots

    @property
    def vehicles(self) -> np.ndarray:
        return np.flatnonzero(~self.is_pedestrian)

    def positions_at(self, i: int) -> np.ndarray:
        return self.positions + i * self.config.slot_duration * self.velocities

    def distances(self, i: int) -> np.ndarray:
        """Kinematic (N, N) distance matrix for slot ``i`` (0 = period start)."""
        return self._dist[i]

    def predict_distance(self, j: int, m: int, i: int, mode: str = KINEMATIC) -> float:
        if i < 1:
            raise ValueError("slot index starts at 1")
        if j == m:
            raise ValueError("distance to self is undefined")
        if mode == KINEMATIC:
            dx = self.positions[m] - self.positions[j]
            dv = self.velocities[m] - self.velocities[j]
            return float(np.hypot(*(dx + i * self.config.slot_duration * dv)))
        if mode == LITERAL:
            dx = self.positions[m] - self.positions[j]
            norm = float(np.hypot(*dx))
            if norm == 0.0:
                raise ZeroDivisionError(f"users {j} and {m} coincide")
            dv = self.velocities[m] - self.velocities[j]
            return float(i * dv @ dx / norm)
        raise ValueError(f"unknown distance mode {mode!r}")

    def neighbors(self, m: int, i: int, r: float | None = None) -> set[int]:
        r = self.config.comm_range if r is None else r
        row = self._dist[i][m]
        return {int(j) for j in np.flatnonzero(row <= r) if j != m}

    def neighbor_matrix(self, i: int, r: float | None = None) -> np.ndarray:
        r = self.config.comm_range if r is None else r
        adj = self._dist[i] <= r
        np.fill_diagonal(adj, False)
        return adj

    def to_rows(self) -> list[dict]:
        rows = []
        for j in range(self.n_users):
            rows.append(
                {
                    "user": j,
                    "role": "pedestrian" if self.is_pedestrian[j] else "vehicle",
                    "x": float(self.positions[j, 0]),
                    "y": float(self.positions[j, 1]),
                    "vx": float(self.velocities[j, 0]),
                    "vy": float(self.velocities[j, 1]),
                }
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["user", "role", "x", "y", "vx", "vy"], lineterminator="\n")
        writer.writeheader()
        for row in self.to_rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    @classmethod
    def from_rows(cls, config: ScenarioConfig, rows: Iterable[dict]) -> "Scenario":
        rows = sorted(rows, key=lambda r: int(r["user"]))
        if [int(r["user"]) for r in rows] != list(range(len(rows))):
            raise ScenarioError("user ids must be 0..N-1 without gaps")
        pos = [(float(r["x"]), float(r["y"])) for r in rows]
        vel = [(float(r["vx"]), float(r["vy"])) for r in rows]
        ped = [r["role"] == "pedestrian" for r in rows]
        return cls(config, np.array(pos).reshape(-1, 2), np.array(vel).reshape(-1, 2), np.array(ped, dtype=bool))

    @classmethod
    def from_csv(cls, config: ScenarioConfig, text: str) -> "Scenario":
        reader = csv.DictReader(io.StringIO(text))
        missing = {"user", "role", "x", "y", "vx", "vy"} - set(reader.fieldnames or ())
        if missing:
            raise ScenarioError(f"scenario table lacks columns {sorted(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                float(row["x"]), float(row["y"]), float(row["vx"]), float(row["vy"]), int(row["user"])
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
            rows.append(row)
        return cls.from_rows(config, rows)


def _lane_gaps(rng: np.random.Generator, n: int, mean_gap: float, min_gap: float) -> np.ndarray:
    # min_gap + Exp(mean - min_gap) keeps the configured mean exactly
    if n <= 0:
        return np.zeros(0)
    if mean_gap <= min_gap:
        return np.full(n, min_gap)
    return min_gap + rng.exponential(mean_gap - min_gap, size=n)


def generate_urban_grid(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Scenario:
    """Drop vehicles on every lane of the grid and pedestrians on the sidewalks."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    lanes = road_lanes(config)
    walks = sidewalks(config)
    speed_lo = config.speed if config.speed_min is None else config.speed_min
    speed_hi = config.speed if config.speed_max is None else config.speed_max
    if not speed_lo <= config.speed <= speed_hi:
        raise ScenarioError("speed must lie within [speed_min, speed_max]")

    positions, velocities, roles = [], [], []

    def add_vehicle(lane: Lane, s: float):
        o, u = np.asarray(lane.origin), np.asarray(lane.direction)
        speed = rng.uniform(speed_lo, speed_hi) if speed_hi > speed_lo else config.speed
        positions.append(o + s * u)
        velocities.append(speed * u)
        roles.append(False)

    if config.n_users is None:
        # fill each lane at the configured density, starting at a random phase
        for lane in lanes:
            s = rng.uniform(0.0, max(config.mean_gap, config.min_gap))
            while s <= lane.length:
                add_vehicle(lane, s)
                s += _lane_gaps(rng, 1, config.mean_gap, config.min_gap)[0]
        n_vehicles = len(positions)
        if n_vehicles == 0:
            raise ScenarioError("grid too small: no lane holds a single vehicle")
        n_peds = int(round(config.pedestrian_fraction * n_vehicles / (1.0 - config.pedestrian_fraction)))
    else:
        n_peds = int(round(config.pedestrian_fraction * config.n_users))
        n_vehicles = config.n_users - n_peds
        if n_vehicles < 1:
            n_vehicles, n_peds = 1, config.n_users - 1
        per_lane = [n_vehicles // len(lanes) + (1 if k < n_vehicles % len(lanes) else 0) for k in range(len(lanes))]
        needed = (max(per_lane) - 1) * max(config.mean_gap, config.min_gap)
        if needed > config.lane_length:
            raise ScenarioError(
                f"lane length {config.lane_length:.1f} m cannot hold {max(per_lane)} vehicles "
                f"at mean gap {config.mean_gap:.1f} m; enlarge grid_blocks or block_length"
            )
        order = rng.permutation(len(lanes))
        for k, lane_idx in enumerate(order):
            n = per_lane[k]
            if n == 0:
                continue
            lane = lanes[lane_idx]
            for _ in range(100):
                gaps = _lane_gaps(rng, n - 1, config.mean_gap, config.min_gap)
                span = float(gaps.sum())
                if span <= lane.length:
                    break
            else:
                raise ScenarioError(
                    f"lane length {lane.length:.1f} m repeatedly too short for {n} vehicles"
                )
            start = rng.uniform(0.0, lane.length - span)
            for s in start + np.concatenate(([0.0], np.cumsum(gaps))):
                add_vehicle(lane, float(s))

    for _ in range(n_peds):
        walk = walks[rng.integers(len(walks))]
        s = rng.uniform(0.0, walk.length)
        u = np.asarray(walk.direction) * rng.choice([-1.0, 1.0])
        positions.append(np.asarray(walk.origin) + s * np.abs(u))
        velocities.append(rng.uniform(0.0, config.pedestrian_speed_max) * u)
        roles.append(True)

    return Scenario(config, np.array(positions), np.array(velocities), np.array(roles, dtype=bool))
